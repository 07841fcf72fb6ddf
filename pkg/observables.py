"""规范不变观测量：序参量、介子串、't Hooft 串、横档关联、电场分布与磁化率。

每个串算符先按完整 Hilbert 空间写成几何键上的单项式，对所有 Gauss 生成元
做对易断言，再按布局约化：
  unitary  ζ ≡ 1，η 由 Gauss 定律替换为链上 τ 串（含静态电荷相位）
  clock    链自由度不存在，直接去掉链因子
  full     原样保留
同一格点上的多个因子按矩阵乘法合并，恒等因子丢弃。
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from typing import Literal, Protocol

import numpy as np

from clock import clock_matrices, dagger_name, electric_operator
from ed import DenseState, apply_terms
from hamiltonian import (
    LEGS,
    ChainLayout,
    Key,
    KeyedFactor,
    TermList,
    assert_gauge_invariant,
    build_model,
    chain_layout,
    eliminated_eta,
    electric_sum,
    leg_link_exists,
    link,
    tunneling_sum,
    unit_cell_cuts,
    vertex,
)
from models import Couplings, FidelityResult, LadderSpec, Leg, SusceptibilityResult
from mpo import compile_mpo
from mps import MPS, entropy_profile, overlap

logger = logging.getLogger(__name__)

MesonVariant = Literal["up", "down", "sigma", "rho"]

# 重叠低于该值视为能级交叉，χ_F 不再有意义
OVERLAP_FLOOR = 1e-6


class State(Protocol):
    def expect(self, ops: Sequence[tuple[int, np.ndarray]]) -> complex: ...


@dataclass
class StringOperator:
    """布局上的算符串：coeff · ∏ factors[key]。"""

    coeff: complex
    factors: dict[Key, np.ndarray]

    def evaluate(self, psi: State, layout: ChainLayout) -> complex:
        ops = sorted((layout.site(k), m) for k, m in self.factors.items())
        if not ops:
            return complex(self.coeff)
        return complex(self.coeff * psi.expect(ops))


# ---------- 约化 ----------


def reduce_to_layout(factors: Iterable[KeyedFactor], layout: ChainLayout) -> StringOperator:
    """把完整形式的单项式约化到给定布局。"""
    spec, alg = layout.spec, clock_matrices(layout.N)
    coeff = 1.0 + 0j
    mats: dict[Key, np.ndarray] = {}

    def put(key: Key, name: str) -> None:
        m = alg.operator(name)
        mats[key] = mats[key] @ m if key in mats else m

    for key, name in factors:
        if layout.mode == "full":
            put(key, name)
        elif layout.mode == "unitary":
            if key[0] == "link":
                put(key, name)
            elif name.startswith("eta"):
                r, s = key[1], key[2]
                phase, sub = eliminated_eta(spec, r, s)
                if name == "eta_dag":
                    phase, sub = np.conj(phase), tuple((k, dagger_name(n)) for k, n in sub)
                elif name != "eta":
                    raise ValueError(f"幺正规范下不支持 {name}")
                coeff *= phase
                for k, n in sub:
                    put(k, n)
            # ζ ≡ 1
        elif layout.mode == "clock":
            if key[0] == "site":
                put(key, name)
        else:
            raise ValueError(f"{layout.mode} 布局不支持规范不变串算符")

    eye = np.eye(layout.N)
    kept = {k: m for k, m in mats.items() if not np.allclose(m, eye)}
    return StringOperator(coeff, kept)


def _string(factors: list[KeyedFactor], layout: ChainLayout) -> StringOperator:
    if layout.mode != "clock":
        assert_gauge_invariant(factors, layout.spec)
    return reduce_to_layout(factors, layout)


def _conj_factors(factors: Iterable[KeyedFactor]) -> list[KeyedFactor]:
    return [(k, dagger_name(n)) for k, n in factors]


# ---------- 串算符 ----------


def order_parameter_operator(layout: ChainLayout, r: int, leg: Leg) -> StringOperator:
    """O_{r,s} = ∏_{j=1}^{r} σ†_{j,s} ζ_{r,s}，需要粗糙左边界。"""
    spec = layout.spec
    if not 1 <= r <= spec.L:
        raise ValueError(f"r={r} 超出 1..{spec.L}")
    if spec.boundary_left != "rough":
        raise ValueError("序参量需要粗糙左边界（悬挂链 (1, s)）")
    f: list[KeyedFactor] = [(link(j, leg), "sigma_dag") for j in range(1, r + 1)]
    f.append((vertex(r, leg), "zeta"))
    return _string(f, layout)


def order_parameter(psi: State, layout: ChainLayout, r: int, leg: Leg) -> complex:
    return order_parameter_operator(layout, r, leg).evaluate(psi, layout)


def averaged_order_parameter(
    psi: State, layout: ChainLayout, window: tuple[int, int] | None = None
) -> tuple[float, float]:
    """体内窗口与两条腿上的平均序参量，返回 (平均 |⟨O⟩|, 平均 Re⟨O⟩)。

    默认窗口为 ⌈L/4⌉..⌊3L/4⌋。
    """
    L = layout.L
    lo, hi = window or (max(1, -(-L // 4)), max(1, (3 * L) // 4))
    if not 1 <= lo <= hi <= L:
        raise ValueError(f"窗口 {lo}..{hi} 不在 1..{L} 内")
    values = [order_parameter(psi, layout, r, s) for r in range(lo, hi + 1) for s in LEGS]
    arr = np.asarray(values)
    return float(np.mean(np.abs(arr))), float(np.mean(arr.real))


def _leg_meson_factors(x: int, y: int, leg: Leg) -> list[KeyedFactor]:
    f: list[KeyedFactor] = [(vertex(x, leg), "zeta")]
    f += [(link(j, leg), "sigma") for j in range(x + 1, y + 1)]
    f.append((vertex(y, leg), "zeta_dag"))
    return f


def meson_operator(layout: ChainLayout, x: int, y: int, variant: MesonVariant = "up") -> StringOperator:
    """M_s(x,y) = ζ_{x,s} ∏_{j=x+1}^{y} σ_{j,s} ζ†_{y,s}；sigma = M↑M↓†，rho = M↑M↓。"""
    L = layout.L
    if not (1 <= x <= L and 1 <= y <= L):
        raise ValueError(f"介子端点 ({x}, {y}) 超出 1..{L}")
    if x > y:
        raise ValueError("介子要求 x ≤ y")
    if x == y:
        return StringOperator(1.0, {})
    if variant in LEGS:
        f = _leg_meson_factors(x, y, variant)
    elif variant == "sigma":
        f = _leg_meson_factors(x, y, "up") + _conj_factors(_leg_meson_factors(x, y, "down"))
    elif variant == "rho":
        f = _leg_meson_factors(x, y, "up") + _leg_meson_factors(x, y, "down")
    else:
        raise ValueError(f"未知介子类型: {variant}")
    return _string(f, layout)


def meson(psi: State, layout: ChainLayout, x: int, y: int, variant: MesonVariant = "up") -> complex:
    return meson_operator(layout, x, y, variant).evaluate(psi, layout)


def _leg_thooft_factors(r: int, L: int, leg: Leg) -> list[KeyedFactor]:
    return [(vertex(j, leg), "eta_dag") for j in range(r, L + 1)]


def thooft_operator(layout: ChainLayout, r: int, variant: MesonVariant = "rho") -> StringOperator:
    """'t Hooft 串 𝒢_s(r) = ∏_{j=r}^{L} η†_{j,s}；sigma = 𝒢↑𝒢↓†，rho = 𝒢↑𝒢↓。

    幺正规范下经 Gauss 定律化为 τ_{r,s} ∏_j τ_{j,0}^{±1}，𝒢_ρ 只剩 τ_{r,↑}τ_{r,↓}。
    """
    spec = layout.spec
    if spec.boundary_right != "smooth":
        raise ValueError("'t Hooft 串只定义在光滑右边界上")
    if not 1 <= r <= spec.L:
        raise ValueError(f"r={r} 超出 1..{spec.L}")
    L = spec.L
    if variant in LEGS:
        f = _leg_thooft_factors(r, L, variant)
    elif variant == "sigma":
        f = _leg_thooft_factors(r, L, "up") + _conj_factors(_leg_thooft_factors(r, L, "down"))
    elif variant == "rho":
        f = _leg_thooft_factors(r, L, "up") + _leg_thooft_factors(r, L, "down")
    else:
        raise ValueError(f"未知 't Hooft 串类型: {variant}")
    return _string(f, layout)


def thooft(psi: State, layout: ChainLayout, r: int, variant: MesonVariant = "rho") -> complex:
    return thooft_operator(layout, r, variant).evaluate(psi, layout)


def rung_correlator_operator(layout: ChainLayout, x: int, y: int) -> StringOperator:
    """R(x,y) = ζ†_{x↑} σ_{x,0} ζ_{x↓} · ζ_{y↑} σ†_{y,0} ζ†_{y↓}。"""
    L = layout.L
    if not (1 <= x <= L and 1 <= y <= L):
        raise ValueError(f"端点 ({x}, {y}) 超出 1..{L}")
    if x == y:
        return StringOperator(1.0, {})
    f: list[KeyedFactor] = [
        (vertex(x, "up"), "zeta_dag"),
        (link(x, "rung"), "sigma"),
        (vertex(x, "down"), "zeta"),
        (vertex(y, "up"), "zeta"),
        (link(y, "rung"), "sigma_dag"),
        (vertex(y, "down"), "zeta_dag"),
    ]
    return _string(f, layout)


def rung_correlator(psi: State, layout: ChainLayout, x: int, y: int) -> complex:
    return rung_correlator_operator(layout, x, y).evaluate(psi, layout)


def electric_profile(psi: State, layout: ChainLayout) -> dict[Key, float]:
    """布局中每条链上的 ⟨E⟩（对称分支）。"""
    if layout.mode in ("clock", "dual"):
        raise ValueError(f"{layout.mode} 布局没有规范链自由度")
    E = electric_operator(clock_matrices(layout.N))
    out: dict[Key, float] = {}
    for key in layout.link_keys():
        val = psi.expect([(layout.site(key), E)])
        if abs(val.imag) > 1e-8:
            logger.warning("链 %s 上 ⟨E⟩ 虚部 %.3e 偏大", key, val.imag)
        out[key] = float(val.real)
    return out


# ---------- 期望值与重叠 ----------


def expect_terms(psi: State, terms: TermList) -> complex:
    """项表（算符和）的期望值。"""
    if isinstance(psi, MPS):
        return compile_mpo(terms).expectation(psi)
    if isinstance(psi, DenseState):
        v = psi.vector
        return complex(np.vdot(v, apply_terms(terms, v)) / np.vdot(v, v))
    raise TypeError(f"不支持的态类型: {type(psi).__name__}")


def entanglement_profile(psi: State, layout: ChainLayout) -> list[float]:
    """元胞边界处的冯诺依曼熵 S_ℓ，ℓ = 1..L-1。"""
    cuts = unit_cell_cuts(layout)
    if isinstance(psi, MPS):
        return entropy_profile(psi, cuts)
    if isinstance(psi, DenseState):
        out = []
        for c in cuts:
            s = np.linalg.svd(psi.vector.reshape(psi.N ** (c + 1), -1), compute_uv=False)
            p = s**2 / np.sum(s**2)
            p = p[p > 1e-300]
            out.append(float(-np.sum(p * np.log(p))))
        return out
    raise TypeError(f"不支持的态类型: {type(psi).__name__}")


def state_overlap(a: State, b: State) -> complex:
    if isinstance(a, MPS) and isinstance(b, MPS):
        return overlap(a, b)
    if isinstance(a, DenseState) and isinstance(b, DenseState):
        return a.overlap(b)
    raise TypeError("两个态的类型必须一致")


# ---------- 磁化率 ----------


def _chi_from_overlap(F: float, step: float, volume: float) -> float:
    return -2.0 * np.log(min(F, 1.0)) / (step * step * volume)


def fidelity_susceptibility(
    solve: Callable[[float], State],
    param: float,
    step: float = 1e-3,
    *,
    volume: float,
) -> FidelityResult:
    """χ_F = -2 log|⟨ψ(Λ)|ψ(Λ+δ)⟩| / (δ² · volume)。

    solve(Λ) 返回参数 Λ 处的基态；另以 δ/2 重新计算给出收敛估计。
    重叠低于 OVERLAP_FLOOR 时标记为能级交叉，chi 置空。
    """
    if step <= 0:
        raise ValueError("步长必须为正")
    psi0 = solve(param)
    F = abs(state_overlap(psi0, solve(param + step)))
    F_half = abs(state_overlap(psi0, solve(param + step / 2)))
    flags: list[str] = []
    if F < OVERLAP_FLOOR or F_half < OVERLAP_FLOOR:
        logger.warning("Λ=%g 处基态重叠 %.3e 接近 0，可能发生能级交叉", param, F)
        flags.append("overlap_near_zero")
        return FidelityResult(
            param=param, step=step, chi=None, chi_half=None, rel_change=None, overlap=F, flags=flags
        )
    chi = _chi_from_overlap(F, step, volume)
    chi_half = _chi_from_overlap(F_half, step / 2, volume)
    rel = abs(chi - chi_half) / abs(chi) if chi != 0 else abs(chi_half)
    return FidelityResult(
        param=param, step=step, chi=chi, chi_half=chi_half, rel_change=rel, overlap=F, flags=flags
    )


def _central_difference(f: Callable[[float], float], x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2 * h)


def hamiltonian_susceptibilities(
    model: str,
    spec: LadderSpec,
    couplings: Couplings,
    *,
    solve: Callable[[TermList], State],
    step: float = 1e-2,
) -> SusceptibilityResult:
    """χ_τ = (1/3L) ∂⟨H_τ⟩/∂g，χ_σ = (1/3L) ∂⟨H_tunnel⟩/∂λ，中心差分。

    solve(terms) 返回给定哈密顿量的基态；半步长结果一并返回。
    """
    if model not in ("unitary", "full"):
        raise ValueError(f"磁化率只对 unitary/full 模型定义，收到 {model}")
    layout = chain_layout(spec, model)
    H_tau, H_tunnel = electric_sum(layout), tunneling_sum(layout)
    volume = 3 * spec.L

    def tau_at(g: float) -> float:
        c = couplings.model_copy(update={"g": g})
        return expect_terms(solve(build_model(model, spec, c)), H_tau).real

    def tunnel_at(lam: float) -> float:
        c = couplings.model_copy(update={"lam": lam})
        return expect_terms(solve(build_model(model, spec, c)), H_tunnel).real

    g, lam = couplings.g, couplings.lam
    if g - step <= 0 or lam - step <= 0:
        raise ValueError(f"步长 {step} 使 g 或 λ 越过 0")
    return SusceptibilityResult(
        chi_tau=_central_difference(tau_at, g, step) / volume,
        chi_sigma=_central_difference(tunnel_at, lam, step) / volume,
        chi_tau_half=_central_difference(tau_at, g, step / 2) / volume,
        chi_sigma_half=_central_difference(tunnel_at, lam, step / 2) / volume,
        step=step,
    )


def leg_links(spec: LadderSpec, leg: Leg) -> list[Key]:
    """按 r 递增排列的腿链键，供电场分布表格使用。"""
    return [link(r, leg) for r in range(1, spec.L + 2) if leg_link_exists(spec, r)]


