"""梯子几何到一维链的映射，以及各规范/极限下的哈密顿量构造。

链上的每一项都是 (系数, ((格点, 算符名), ...)) 的单项式，格点严格递增，
算符名由 clock.ClockAlgebra.operator 解析。ED 与 DMRG 共用同一个 TermList。

几何约定（1 起始）：
  腿链 (r, s) 位于顶点 (r, s) 的左侧；粗糙左边界带悬挂腿链 (1, s)，
  粗糙右边界带悬挂腿链 (L+1, s)；横档链 (r, rung) 连接 (r, up) 与 (r, down)。
元胞 r 内链序为 (上腿链, 横档链, 下腿链)，完整 Hilbert 空间模式下为
(上腿链, 上顶点, 横档链, 下顶点, 下腿链)。
"""

from __future__ import annotations

import hashlib
import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from clock import clock_matrices, dagger_name, monomial_exponents
from models import Couplings, LadderSpec, Leg

logger = logging.getLogger(__name__)

Key = tuple[str, int, str]
Factor = tuple[int, str]
KeyedFactor = tuple[Key, str]
KeyedTerm = tuple[complex, tuple[KeyedFactor, ...]]
LayoutMode = Literal["full", "unitary", "clock", "axial", "dual"]

LEGS: tuple[Leg, Leg] = ("up", "down")


def link(r: int, s: str) -> Key:
    return ("link", r, s)


def vertex(r: int, s: str) -> Key:
    return ("site", r, s)


# ---------- 项与项表 ----------


@dataclass(frozen=True)
class Term:
    """系数乘以局域算符之积，factors 按格点严格递增。"""

    coeff: complex
    factors: tuple[Factor, ...]

    def dagger(self) -> Term:
        return Term(
            complex(np.conj(self.coeff)),
            tuple((s, dagger_name(n)) for s, n in self.factors),
        )


@dataclass(frozen=True)
class TermList:
    """不可变的项表。chain_length 为链长，N 为局域维数。"""

    N: int
    chain_length: int
    terms: tuple[Term, ...] = ()

    def __post_init__(self) -> None:
        for t in self.terms:
            sites = [s for s, _ in t.factors]
            if any(b <= a for a, b in zip(sites, sites[1:])):
                raise ValueError(f"项内格点须严格递增: {t.factors}")
            if sites and (sites[0] < 0 or sites[-1] >= self.chain_length):
                raise ValueError(f"格点超出链长 {self.chain_length}: {t.factors}")

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[Term]:
        return iter(self.terms)

    def __add__(self, other: TermList) -> TermList:
        if (self.N, self.chain_length) != (other.N, other.chain_length):
            raise ValueError("只能合并同一条链上的项表")
        return TermList(self.N, self.chain_length, self.terms + other.terms)

    def scaled(self, c: complex) -> TermList:
        return TermList(
            self.N, self.chain_length, tuple(Term(c * t.coeff, t.factors) for t in self.terms)
        )

    @property
    def dim(self) -> int:
        return self.N**self.chain_length

    def check_hermitian(self, atol: float = 1e-12) -> tuple[bool, str]:
        """结构化检查：按算符串合并系数后，每一项的共轭都以共轭系数出现。

        返回 (是否通过, 错误信息)。
        """
        table: dict[tuple[Factor, ...], complex] = {}
        for t in self.terms:
            table[t.factors] = table.get(t.factors, 0) + t.coeff
        for factors, c in table.items():
            partner = tuple((s, dagger_name(n)) for s, n in factors)
            c_dag = table.get(partner, 0)
            if abs(c_dag - np.conj(c)) > atol:
                return False, f"{factors} 的共轭项系数 {c_dag} ≠ {np.conj(c)}"
        return True, ""

    def to_text(self) -> str:
        """每行一项: "coeff_re coeff_im site:name ..."，首行为注释头。"""
        lines = [f"# termlist N={self.N} chain_length={self.chain_length}"]
        for t in self.terms:
            c = complex(t.coeff)
            ops = " ".join(f"{s}:{n}" for s, n in t.factors)
            lines.append(f"{c.real:.17g} {c.imag:.17g} {ops}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> TermList:
        N = chain_length = None
        terms: list[Term] = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("N="):
                        N = int(tok[2:])
                    elif tok.startswith("chain_length="):
                        chain_length = int(tok[len("chain_length="):])
                continue
            parts = line.split()
            coeff = complex(float(parts[0]), float(parts[1]))
            factors = []
            for tok in parts[2:]:
                site, name = tok.split(":", 1)
                factors.append((int(site), name))
            terms.append(Term(coeff, tuple(factors)))
        if N is None or chain_length is None:
            raise ValueError("缺少头部注释 N= / chain_length=")
        return cls(N, chain_length, tuple(terms))


# ---------- 链布局 ----------


@dataclass(frozen=True, eq=False)
class ChainLayout:
    """梯子上的自由度到链格点的确定性双射。"""

    spec: LadderSpec
    mode: LayoutMode
    keys: tuple[Key, ...]
    _index: dict[Key, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(self.keys)})

    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def L(self) -> int:
        return self.spec.L

    @property
    def chain_length(self) -> int:
        return len(self.keys)

    def site(self, key: Key) -> int:
        try:
            return self._index[key]
        except KeyError:
            raise ValueError(f"{key} 不在 {self.mode} 布局中") from None

    def has(self, key: Key) -> bool:
        return key in self._index

    def link_keys(self) -> list[Key]:
        return [k for k in self.keys if k[0] in ("link", "dual")]

    def layout_hash(self) -> bytes:
        text = f"{self.mode}|{self.N}|{self.L}|{self.spec.boundary_left}|{self.spec.boundary_right}|"
        text += ";".join(f"{a},{b},{c}" for a, b, c in self.keys)
        return hashlib.sha256(text.encode()).digest()


def leg_link_exists(spec: LadderSpec, r: int) -> bool:
    if 2 <= r <= spec.L:
        return True
    if r == 1:
        return spec.boundary_left == "rough"
    if r == spec.L + 1:
        return spec.boundary_right == "rough"
    return False


def chain_layout(spec: LadderSpec, mode: LayoutMode = "unitary") -> ChainLayout:
    """按元胞顺序排列链格点，保证体内每一项最多跨 6 个相邻格点。"""
    keys: list[Key] = []
    for r in range(1, spec.L + 1):
        has_leg = leg_link_exists(spec, r)
        if mode == "unitary":
            if has_leg:
                keys.append(link(r, "up"))
            keys.append(link(r, "rung"))
            if has_leg:
                keys.append(link(r, "down"))
        elif mode == "full":
            if has_leg:
                keys.append(link(r, "up"))
            keys.append(vertex(r, "up"))
            keys.append(link(r, "rung"))
            keys.append(vertex(r, "down"))
            if has_leg:
                keys.append(link(r, "down"))
        elif mode == "clock":
            keys += [vertex(r, "up"), vertex(r, "down")]
        elif mode == "axial":
            keys.append(link(r, "rung"))
        elif mode == "dual":
            keys.append(("dual", r, "rung"))
        else:
            raise ValueError(f"未知布局模式: {mode}")
    if mode in ("unitary", "full") and leg_link_exists(spec, spec.L + 1):
        keys += [link(spec.L + 1, "up"), link(spec.L + 1, "down")]
    return ChainLayout(spec=spec, mode=mode, keys=tuple(keys))


def unit_cell_cuts(layout: ChainLayout) -> list[int]:
    """元胞边界处的键指标：第 ℓ 个元胞（ℓ = 1..L-1）最后一个格点之后的键。"""
    cuts = []
    for ell in range(1, layout.L):
        cuts.append(max(i for i, k in enumerate(layout.keys) if k[1] == ell))
    return cuts


# ---------- 工具函数 ----------


def _with_hc(coeff: complex, factors: Iterable[KeyedFactor]) -> list[KeyedTerm]:
    f = tuple(factors)
    return [
        (complex(coeff), f),
        (complex(np.conj(coeff)), tuple((k, dagger_name(n)) for k, n in f)),
    ]


def compile_terms(layout: ChainLayout, keyed: Iterable[KeyedTerm]) -> TermList:
    """把以几何键标注的项映射到链格点上。"""
    terms = []
    for coeff, factors in keyed:
        placed = sorted((layout.site(k), n) for k, n in factors)
        sites = [s for s, _ in placed]
        if len(set(sites)) != len(sites):
            raise ValueError(f"同一格点出现多个因子: {factors}")
        terms.append(Term(complex(coeff), tuple(placed)))
    return TermList(layout.N, layout.chain_length, tuple(terms))


def _require_g(couplings: Couplings) -> float:
    if couplings.g <= 0:
        raise ValueError("该模型需要 g > 0（1/g 项发散）")
    return couplings.g


def _plaquette_terms(spec: LadderSpec, g: float, g_b: float | None) -> list[KeyedTerm]:
    out: list[KeyedTerm] = []
    for r in range(1, spec.L):
        out += _with_hc(
            -1.0 / g,
            [
                (link(r, "rung"), "sigma"),
                (link(r + 1, "up"), "sigma"),
                (link(r + 1, "rung"), "sigma_dag"),
                (link(r + 1, "down"), "sigma_dag"),
            ],
        )
    if g_b is not None:
        if spec.boundary_left != "rough":
            raise ValueError("左边界 plaquette (g_b) 需要粗糙左边界")
        out += _with_hc(
            -1.0 / g_b,
            [(link(1, "up"), "sigma"), (link(1, "rung"), "sigma_dag"), (link(1, "down"), "sigma_dag")],
        )
    return out


def _electric_terms(layout: ChainLayout, g: float) -> list[KeyedTerm]:
    out: list[KeyedTerm] = []
    for k in layout.link_keys():
        out += _with_hc(-g, [(k, "tau")])
    return out


def _boundary_check(spec: LadderSpec, couplings: Couplings) -> None:
    if couplings.lam_b > 0 and spec.boundary_left != "rough":
        raise ValueError("边界物质项 λ_b 需要粗糙左边界")


# ---------- Gauss 约束 ----------


def gauss_keyed(spec: LadderSpec) -> list[tuple[tuple[int, Leg], tuple[KeyedFactor, ...]]]:
    """每个顶点一个生成元，顺序 (1,up), (1,down), (2,up), ..."""
    gens = []
    for r in range(1, spec.L + 1):
        for s in LEGS:
            f: list[KeyedFactor] = []
            if leg_link_exists(spec, r):
                f.append((link(r, s), "tau"))
            f.append((link(r, "rung"), "tau" if s == "up" else "tau_dag"))
            if leg_link_exists(spec, r + 1):
                f.append((link(r + 1, s), "tau_dag"))
            f.append((vertex(r, s), "eta"))
            gens.append(((r, s), tuple(f)))
    return gens


def gauss_operators(spec: LadderSpec) -> list[TermList]:
    """完整 Hilbert 空间布局下的 Gauss 生成元，每个是系数为 1 的单项式。"""
    lay = chain_layout(spec, "full")
    return [compile_terms(lay, [(1.0, f)]) for _, f in gauss_keyed(spec)]


def gauss_charges(spec: LadderSpec) -> list[int]:
    """与 gauss_operators 顺序一致的本征相位指数 q（G = ω^q）。"""
    return [spec.charge_at(r, s) % spec.N for (r, s), _ in gauss_keyed(spec)]


def _commutation_phase(factors: Iterable[KeyedFactor], gen: Iterable[KeyedFactor], N: int) -> int:
    # 生成元只含 τ/η 幂次，单项式 σ^a 与 τ^d 交换得到 ω^{a d}
    tau_power = {k: monomial_exponents(n, N)[1] for k, n in gen}
    phase = 0
    for k, n in factors:
        exps = monomial_exponents(n, N)
        a = exps[0] if exps is not None else 0
        phase += a * tau_power.get(k, 0)
    return phase % N


def gauge_violations(factors: Iterable[KeyedFactor], spec: LadderSpec) -> list[tuple[int, Leg]]:
    """与该算符串不对易的 Gauss 生成元所在顶点。"""
    f = tuple(factors)
    return [v for v, gen in gauss_keyed(spec) if _commutation_phase(f, gen, spec.N) != 0]


def assert_gauge_invariant(factors: Iterable[KeyedFactor], spec: LadderSpec) -> None:
    """规范不变性断言：算符串必须与所有 Gauss 生成元对易。"""
    f = tuple(factors)
    bad = gauge_violations(f, spec)
    if bad:
        raise AssertionError(f"算符 {f} 与顶点 {bad} 的 Gauss 生成元不对易")


def check_gauge_invariance(terms: TermList, spec: LadderSpec) -> tuple[bool, str]:
    """完整布局下的项表是否逐项规范不变。"""
    lay = chain_layout(spec, "full")
    if terms.chain_length != lay.chain_length:
        return False, "项表不在完整 Hilbert 空间布局上"
    for t in terms:
        keyed = [(lay.keys[s], n) for s, n in t.factors]
        bad = gauge_violations(keyed, spec)
        if bad:
            return False, f"{t.factors} 与顶点 {bad} 不对易"
    return True, ""


# ---------- 哈密顿量 ----------


def build_full(spec: LadderSpec, couplings: Couplings, *, pure_gauge: bool = False) -> TermList:
    """未固定规范的哈密顿量，作用在链 ⊗ 顶点上。

    pure_gauge=True 时只保留 plaquette 与电场项（λ = 0 的纯规范极限）。
    """
    g = _require_g(couplings)
    lay = chain_layout(spec, "full")
    keyed = _plaquette_terms(spec, g, couplings.g_b) + _electric_terms(lay, g)
    if pure_gauge:
        return compile_terms(lay, keyed)

    lam = couplings.lam
    if lam <= 0:
        raise ValueError("λ = 0 时质量项 1/λ 发散，请使用 pure_gauge=True 或 build_pure_axial")
    _boundary_check(spec, couplings)
    for r in range(1, spec.L + 1):
        for s in LEGS:
            keyed += _with_hc(-1.0 / lam, [(vertex(r, s), "eta")])
    for r in range(1, spec.L):
        for s in LEGS:
            keyed += _with_hc(
                -lam,
                [(vertex(r, s), "zeta_dag"), (link(r + 1, s), "sigma_dag"), (vertex(r + 1, s), "zeta")],
            )
    for r in range(1, spec.L + 1):
        keyed += _with_hc(
            -lam,
            [(vertex(r, "up"), "zeta_dag"), (link(r, "rung"), "sigma"), (vertex(r, "down"), "zeta")],
        )
    if couplings.lam_b > 0:
        for s in LEGS:
            keyed += _with_hc(-couplings.lam_b, [(link(1, s), "sigma_dag"), (vertex(1, s), "zeta")])
    return compile_terms(lay, keyed)


def eliminated_eta(spec: LadderSpec, r: int, s: Leg) -> tuple[complex, tuple[KeyedFactor, ...]]:
    """幺正规范下 η_{r,s} 的替换：ω^q 乘以 Gauss 生成元中链部分的逆。"""
    f: list[KeyedFactor] = []
    if leg_link_exists(spec, r + 1):
        f.append((link(r + 1, s), "tau"))
    f.append((link(r, "rung"), "tau_dag" if s == "up" else "tau"))
    if leg_link_exists(spec, r):
        f.append((link(r, s), "tau_dag"))
    q = spec.charge_at(r, s) % spec.N
    return np.exp(2j * np.pi * q / spec.N), tuple(f)


def build_unitary_gauge(spec: LadderSpec, couplings: Couplings) -> TermList:
    """幺正规范（ζ ≡ 1，η 由 Gauss 定律消去）下只含链自由度的哈密顿量。"""
    g = _require_g(couplings)
    lam = couplings.lam
    if lam <= 0:
        raise ValueError("幺正规范需要 λ > 0")
    _boundary_check(spec, couplings)
    lay = chain_layout(spec, "unitary")
    keyed = _plaquette_terms(spec, g, couplings.g_b) + _electric_terms(lay, g)
    for r in range(1, spec.L + 1):
        for s in LEGS:
            phase, f = eliminated_eta(spec, r, s)
            keyed += _with_hc(-phase / lam, f)
    for r in range(1, spec.L):
        for s in LEGS:
            keyed += _with_hc(-lam, [(link(r + 1, s), "sigma_dag")])
    for r in range(1, spec.L + 1):
        keyed += _with_hc(-lam, [(link(r, "rung"), "sigma")])
    if couplings.lam_b > 0:
        for s in LEGS:
            keyed += _with_hc(-couplings.lam_b, [(link(1, s), "sigma_dag")])
    return compile_terms(lay, keyed)


def _require_rough_smooth(spec: LadderSpec, what: str) -> None:
    if spec.boundary_left != "rough" or spec.boundary_right != "smooth":
        raise ValueError(f"{what} 只定义在左粗糙、右光滑的边界上")


def build_pure_axial(spec: LadderSpec, couplings: Couplings) -> TermList:
    """轴规范下的纯规范理论：横档链上的时钟模型加非局域 τ 串。

    腿链电场由 Gauss 定律写成 ∏_{j≥r} τ_j，静态电荷给串带上相位：
    系数 c_r = -g(ω^{Q↓_r} + ω^{-Q↑_r})，Q_{s,r} = Σ_{j≥r} q_{j,s}。
    """
    g = _require_g(couplings)
    _require_rough_smooth(spec, "轴规范模型")
    lay = chain_layout(spec, "axial")
    N, L = spec.N, spec.L
    omega = np.exp(2j * np.pi / N)
    keyed: list[KeyedTerm] = []
    for r in range(1, L):
        keyed += _with_hc(-1.0 / g, [(link(r, "rung"), "sigma"), (link(r + 1, "rung"), "sigma_dag")])
    keyed += _electric_terms(lay, g)
    for r in range(1, L + 1):
        q_up = sum(spec.charge_at(j, "up") for j in range(r, L + 1))
        q_down = sum(spec.charge_at(j, "down") for j in range(r, L + 1))
        c = -g * (omega**q_down + omega ** (-q_up))
        keyed += _with_hc(c, [(link(j, "rung"), "tau") for j in range(r, L + 1)])
    if couplings.g_b is not None:
        keyed += _with_hc(-1.0 / couplings.g_b, [(link(1, "rung"), "sigma")])
    return compile_terms(lay, keyed)


def build_pure_dual(spec: LadderSpec, couplings: Couplings) -> TermList:
    """轴规范模型的局域对偶：纵场中的 N 态时钟模型，相互作用范围 ≤ 2。

    σ̃_1 守恒（τ̃_1 不出现）。
    """
    g = _require_g(couplings)
    _require_rough_smooth(spec, "对偶模型")
    if spec.static_charges:
        raise ValueError("对偶模型不支持静态电荷")
    if couplings.g_b is not None:
        raise ValueError("对偶模型不支持 g_b")
    lay = chain_layout(spec, "dual")
    L = spec.L

    def d(i: int) -> Key:
        return ("dual", i, "rung")

    keyed: list[KeyedTerm] = []
    for i in range(2, L + 1):
        keyed += _with_hc(-1.0 / g, [(d(i), "tau")])
    for i in range(1, L):
        keyed += _with_hc(-g, [(d(i), "sigma_dag"), (d(i + 1), "sigma")])
    for i in range(1, L + 1):
        keyed += _with_hc(-2.0 * g, [(d(i), "sigma")])
    keyed += _with_hc(-g, [(d(L), "sigma")])
    return compile_terms(lay, keyed)


def build_clock_limit(spec: LadderSpec, couplings: Couplings) -> TermList:
    """g = 0 极限：2L 个物质顶点上的梯子时钟模型。"""
    lam = couplings.lam
    if lam <= 0:
        raise ValueError("时钟极限需要 λ > 0（质量项 1/λ 发散）")
    if spec.static_charges:
        raise ValueError("时钟极限不支持静态电荷")
    _boundary_check(spec, couplings)
    lay = chain_layout(spec, "clock")
    keyed: list[KeyedTerm] = []
    for r in range(1, spec.L):
        for s in LEGS:
            keyed += _with_hc(-lam, [(vertex(r, s), "zeta_dag"), (vertex(r + 1, s), "zeta")])
    for r in range(1, spec.L + 1):
        keyed += _with_hc(-lam, [(vertex(r, "up"), "zeta_dag"), (vertex(r, "down"), "zeta")])
        for s in LEGS:
            keyed += _with_hc(-1.0 / lam, [(vertex(r, s), "eta")])
    if couplings.lam_b > 0:
        for s in LEGS:
            keyed += _with_hc(-couplings.lam_b, [(vertex(1, s), "zeta")])
    return compile_terms(lay, keyed)


BUILDERS = {
    "full": build_full,
    "unitary": build_unitary_gauge,
    "pure_axial": build_pure_axial,
    "pure_dual": build_pure_dual,
    "clock": build_clock_limit,
}

LAYOUT_OF_MODEL: dict[str, LayoutMode] = {
    "full": "full",
    "unitary": "unitary",
    "pure_axial": "axial",
    "pure_dual": "dual",
    "clock": "clock",
}


def build_model(model: str, spec: LadderSpec, couplings: Couplings) -> TermList:
    try:
        builder = BUILDERS[model]
    except KeyError:
        raise ValueError(f"未知模型: {model}") from None
    return builder(spec, couplings)


# ---------- 磁化率所用的算符和 ----------


def electric_sum(layout: ChainLayout) -> TermList:
    """H_τ = Σ_links (τ + τ†)，系数为 1。"""
    return compile_terms(layout, _electric_terms(layout, -1.0))


def tunneling_sum(layout: ChainLayout) -> TermList:
    """H_tunnel：腿与横档隧穿算符之和（系数 1，不含边界项）。"""
    spec = layout.spec
    keyed: list[KeyedTerm] = []
    if layout.mode == "unitary":
        for r in range(1, spec.L):
            for s in LEGS:
                keyed += _with_hc(1.0, [(link(r + 1, s), "sigma_dag")])
        for r in range(1, spec.L + 1):
            keyed += _with_hc(1.0, [(link(r, "rung"), "sigma")])
    elif layout.mode == "full":
        for r in range(1, spec.L):
            for s in LEGS:
                keyed += _with_hc(
                    1.0,
                    [(vertex(r, s), "zeta_dag"), (link(r + 1, s), "sigma_dag"), (vertex(r + 1, s), "zeta")],
                )
        for r in range(1, spec.L + 1):
            keyed += _with_hc(
                1.0,
                [(vertex(r, "up"), "zeta_dag"), (link(r, "rung"), "sigma"), (vertex(r, "down"), "zeta")],
            )
    elif layout.mode == "clock":
        for r in range(1, spec.L):
            for s in LEGS:
                keyed += _with_hc(1.0, [(vertex(r, s), "zeta_dag"), (vertex(r + 1, s), "zeta")])
        for r in range(1, spec.L + 1):
            keyed += _with_hc(1.0, [(vertex(r, "up"), "zeta_dag"), (vertex(r, "down"), "zeta")])
    else:
        raise ValueError(f"{layout.mode} 布局没有隧穿项")
    return compile_terms(layout, keyed)


def local_matrices(terms: TermList | Sequence[Term], N: int) -> dict[str, np.ndarray]:
    """项表中出现的所有算符名到矩阵的映射。"""
    alg = clock_matrices(N)
    return {n: alg.operator(n) for t in terms for _, n in t.factors}
