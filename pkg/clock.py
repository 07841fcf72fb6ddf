"""Z_N 时钟代数：σ、τ（物质格点上的别名 ζ、η）与电场算符 E。

基矢约定（全项目统一）：
  |k⟩, k = 0..N-1，ω = e^{i2π/N}
  σ|k⟩ = ω^k |k⟩
  τ|k⟩ = |k+1 mod N⟩
该方向下 στ = ωτσ 精确成立。τ 的本征矢 f_m（本征值 ω^m）按列存放在
ClockAlgebra.fourier 中，E 在该基下对角，本征值取以 0 为中心的分支。

算符按名字引用：id, sigma, tau, zeta, eta, E，可带 "_dag" 后缀与 "^k" 幂次，
例如 "tau_dag^2"。ζ、η 分别是 σ、τ 的别名。
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

_NAME_RE = re.compile(r"^(id|sigma|tau|zeta|eta|E)(_dag)?(?:\^(\d+))?$")

# 别名映射到底层矩阵
_BASE = {"sigma": "sigma", "zeta": "sigma", "tau": "tau", "eta": "tau"}


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def parse_name(name: str) -> tuple[str, bool, int]:
    """拆分算符名为 (基名, 是否取共轭, 幂次)。"""
    m = _NAME_RE.match(name)
    if m is None:
        raise ValueError(f"未知算符名: {name!r}")
    base, dag, power = m.group(1), m.group(2) is not None, m.group(3)
    return base, dag, int(power) if power is not None else 1


def dagger_name(name: str) -> str:
    """算符名的 Hermitian 共轭。E 与 id 自共轭。"""
    base, dag, power = parse_name(name)
    if base in ("E", "id"):
        return name
    suffix = "" if power == 1 else f"^{power}"
    return f"{base}{'' if dag else '_dag'}{suffix}"


def monomial_exponents(name: str, N: int) -> tuple[int, int] | None:
    """把算符写成 σ^a τ^b 时的指数 (a mod N, b mod N)；E 不是单项式，返回 None。

    ζ、η 与 σ、τ 共用指数，调用方按格点类型区分。
    """
    base, dag, power = parse_name(name)
    if base == "E":
        return None
    if base == "id":
        return 0, 0
    p = (-power if dag else power) % N
    if _BASE[base] == "sigma":
        return p, 0
    return 0, p


@dataclass(frozen=True, eq=False)
class ClockAlgebra:
    """N 维时钟矩阵。构造后不可变，可在线程间共享。"""

    N: int
    sigma: np.ndarray
    tau: np.ndarray
    E: np.ndarray
    fourier: np.ndarray
    _cache: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def omega(self) -> complex:
        return np.exp(2j * np.pi / self.N)

    @property
    def zeta(self) -> np.ndarray:
        return self.sigma

    @property
    def eta(self) -> np.ndarray:
        return self.tau

    @property
    def identity(self) -> np.ndarray:
        return self.operator("id")

    def operator(self, name: str) -> np.ndarray:
        """按名字取局域矩阵（只读，带缓存）。"""
        cached = self._cache.get(name)
        if cached is not None:
            return cached
        base, dag, power = parse_name(name)
        if base == "id":
            mat = np.eye(self.N, dtype=complex)
        elif base == "E":
            mat = np.linalg.matrix_power(self.E, power)
        else:
            mat = self.sigma if _BASE[base] == "sigma" else self.tau
            if dag:
                mat = mat.conj().T
            mat = np.linalg.matrix_power(mat, power)
        mat = _freeze(np.array(mat, dtype=complex))
        self._cache[name] = mat
        return mat

    def e_eigenvalues(self) -> np.ndarray:
        """E 在 fourier 基各列上的本征值（整数）。"""
        return np.array([_branch(m, self.N) for m in range(self.N)])

    def check(self, atol: float = 1e-12) -> tuple[bool, str]:
        """逐项验证代数关系，返回 (是否通过, 错误信息)。"""
        N = self.N
        eye = np.eye(N)
        s, t = self.sigma, self.tau
        checks = {
            "σ^N = 1": np.linalg.matrix_power(s, N) - eye,
            "τ^N = 1": np.linalg.matrix_power(t, N) - eye,
            "σσ† = 1": s @ s.conj().T - eye,
            "ττ† = 1": t @ t.conj().T - eye,
            "στ = ωτσ": s @ t - self.omega * t @ s,
            "E = E†": self.E - self.E.conj().T,
            "exp(i2πE/N) = τ": expm(2j * np.pi / N * self.E) - t,
        }
        for label, diff in checks.items():
            err = np.abs(diff).max()
            if err > atol:
                return False, f"{label} 误差 {err:.3e}"
        return True, ""


def _branch(m: int, N: int) -> int:
    # 偶数 N 多出的一个本征值取正
    return m if m <= N // 2 else m - N


def electric_operator(alg: ClockAlgebra) -> np.ndarray:
    """电场算符 E：在 τ 本征基下对角，本征值 -⌊(N-1)/2⌋..⌊N/2⌋，满足 τ = exp(i2πE/N)。"""
    F = alg.fourier
    e = np.array([_branch(m, alg.N) for m in range(alg.N)], dtype=float)
    E = F @ np.diag(e) @ F.conj().T
    # 数值上保持严格 Hermitian
    return (E + E.conj().T) / 2


@lru_cache(maxsize=None)
def clock_matrices(N: int) -> ClockAlgebra:
    """构造 N 维时钟代数，N ≥ 2。结果按 N 缓存。"""
    if N < 2:
        raise ValueError(f"N 必须 ≥ 2，当前为 {N}")
    k = np.arange(N)
    omega = np.exp(2j * np.pi / N)
    sigma = np.diag(omega**k).astype(complex)
    tau = np.zeros((N, N), dtype=complex)
    tau[(k + 1) % N, k] = 1.0
    # f_m[k] = ω^{-mk}/√N，τ f_m = ω^m f_m
    fourier = omega ** (-np.outer(k, k)) / np.sqrt(N)
    alg = ClockAlgebra(
        N=N,
        sigma=_freeze(sigma),
        tau=_freeze(tau),
        E=np.zeros((N, N), dtype=complex),
        fourier=_freeze(fourier),
    )
    E = _freeze(electric_operator(alg))
    return ClockAlgebra(N=N, sigma=alg.sigma, tau=alg.tau, E=E, fourier=alg.fourier)
