"""闭式微扰预言：弦张力、屏蔽半径、介子衰减长度。

所有函数都是纯函数，返回 Prediction，regime 字段记录所用的渐近区。
"""

from __future__ import annotations

import math

import numpy as np

from clock import clock_matrices
from models import Prediction


def _c(N: int, k: int = 1) -> float:
    return math.cos(2 * math.pi * k / N)


def _check_N(N: int) -> None:
    if N < 2:
        raise ValueError("N 至少为 2")


def crossover_g(N: int) -> float:
    """强、弱耦合弦张力领头项相等处 g× = sqrt(1 - cos 2π/N)。"""
    _check_N(N)
    return math.sqrt(1 - _c(N))


def string_tension_strong(N: int, g: float, leading_only: bool = False) -> Prediction:
    """𝒯 = 2g(1 - cos 2π/N) - 1/[2g³(3 - 2cos 2π/N - cos 4π/N)]，g ≳ 1。"""
    _check_N(N)
    if g <= 0:
        raise ValueError("强耦合弦张力需要 g > 0")
    value = 2 * g * (1 - _c(N))
    if not leading_only:
        value -= 1 / (2 * g**3 * (3 - 2 * _c(N) - _c(N, 2)))
    return Prediction(
        name="string_tension",
        formula="strong_coupling" + ("_leading" if leading_only else "_with_g^-3"),
        inputs={"N": N, "g": g},
        value=value,
        regime="strong",
        note=f"g× = {crossover_g(N):.6g}",
    )


def string_tension_weak(N: int, g: float) -> Prediction:
    """𝒯 = 2g³，与 N 无关（到该阶为止）。"""
    _check_N(N)
    if g < 0:
        raise ValueError("g 不能为负")
    return Prediction(
        name="string_tension",
        formula="weak_coupling_2g^3",
        inputs={"N": N, "g": g},
        value=2 * g**3,
        regime="weak",
        note=f"g× = {crossover_g(N):.6g}",
    )


def string_tension(N: int, g: float, leading_only: bool = False) -> Prediction:
    """按 g× 选择强/弱耦合形式。"""
    if g >= crossover_g(N):
        return string_tension_strong(N, g, leading_only)
    return string_tension_weak(N, g)


def charge_pair_mass(N: int, lam: float) -> float:
    """一对动力学电荷的质量 2m = 4(1 - cos 2π/N)/λ。"""
    if lam <= 0:
        raise ValueError("λ 必须为正")
    return 4 * (1 - _c(N)) / lam


def screening_radius(N: int, g: float, lam: float, leading_only: bool = True) -> Prediction:
    """R* = 2m(λ) / 𝒯(g)：弦能量等于产生一对电荷的代价时弦断裂。"""
    if g <= 0:
        raise ValueError("屏蔽半径需要 g > 0")
    tension = string_tension(N, g, leading_only)
    if tension.value <= 0:
        raise ValueError(f"g={g} 处弦张力非正，强耦合修正已失效")
    return Prediction(
        name="screening_radius",
        formula="2m/T",
        inputs={"N": N, "g": g, "lam": lam},
        value=charge_pair_mass(N, lam) / tension.value,
        regime=tension.regime,
        note=tension.formula,
    )


def quasiadiabatic_xi(N: int, g: float, lam: float) -> Prediction:
    """ξ_M ≈ (λg + 1)²(1 - cos 2π/N)/g⁴，g ≪ 1、λ ≳ 1 的 Higgs 区。

    原式针对 N = 5；一般 N 用 1 - cos 2π/N 替换属于外推。
    """
    _check_N(N)
    if g <= 0:
        raise ValueError("准绝热衰减长度需要 g > 0")
    return Prediction(
        name="meson_decay_length",
        formula="quasiadiabatic",
        inputs={"N": N, "g": g, "lam": lam},
        value=(lam * g + 1) ** 2 * (1 - _c(N)) / g**4,
        regime="small_g",
        note="" if N == 5 else "extrapolated from N=5",
    )


def single_link_sigma(N: int, g: float, lam: float) -> float:
    """单链问题 -λ(σ+σ†) - g(τ+τ†) 基态上的 ⟨σ⟩（实部）。"""
    _check_N(N)
    if g < 0 or lam < 0 or g + lam == 0:
        raise ValueError("需要 g, λ ≥ 0 且不同时为 0")
    alg = clock_matrices(N)
    h = -lam * (alg.sigma + alg.sigma.conj().T) - g * (alg.tau + alg.tau.conj().T)
    _, v = np.linalg.eigh(h)
    phi = v[:, 0]
    return float(np.vdot(phi, alg.sigma @ phi).real)


def product_state_meson_factor(N: int, g: float, lam: float) -> Prediction:
    """大 g、大 λ 下介子衰减长度的乘积态估计 ξ = -2 / log⟨σ⟩。

    ⟨σ⟩ 由单链问题精确对角化得到；g/λ 大时 ⟨σ⟩ 趋于 1.45λ/g（N = 5）。
    """
    s = single_link_sigma(N, g, lam)
    if s >= 1 - 1e-15:
        xi = math.inf
    elif s <= 0:
        raise ValueError(f"⟨σ⟩ = {s} 非正，乘积态估计无定义")
    else:
        xi = -2 / math.log(s)
    return Prediction(
        name="meson_decay_length",
        formula="product_state",
        inputs={"N": N, "g": g, "lam": lam},
        value=xi,
        regime="large_g_lam",
        note=f"<sigma> = {s:.6g}",
    )
