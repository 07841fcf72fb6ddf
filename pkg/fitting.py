"""拟合工具：Calabrese–Cardy 纠缠熵、关联衰减、截断误差外推、弦张力、峰值与平台。"""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks as _scipy_find_peaks

from models import FitResult

logger = logging.getLogger(__name__)

MIN_CARDY_POINTS = 4
MIN_DECAY_POINTS = 5
MIN_EXTRAPOLATION_POINTS = 3


# ---------- 弦距离 ----------


def chord_distance(r: float | np.ndarray, L: float) -> float | np.ndarray:
    """d(r|L) = (L/π)|sin(πr/L)|。"""
    return L / np.pi * np.abs(np.sin(np.pi * np.asarray(r) / L))


def modified_chord_distance(x: float, y: float, L: float) -> float:
    """两端光滑边界下介子关联使用的修正弦距离 d̃(x-y|2L)。"""
    num = chord_distance(x + y, 2 * L) * chord_distance(x - y, 2 * L)
    den = np.sqrt(chord_distance(2 * x, 2 * L) * chord_distance(2 * y, 2 * L))
    return float(num / den)


# ---------- 中心荷 ----------


def _cardy(X: np.ndarray, c: float, c_alpha: float) -> np.ndarray:
    return c / 6.0 * X + c_alpha / 2.0


def fit_central_charge(entropies: Sequence[float], L: int, window: int | None = None) -> FitResult:
    """按 S_ℓ = (c/6) log((2L/π) sin(πℓ/L)) + c_α/2 拟合中心荷。

    entropies[ℓ-1] 为第 ℓ 个元胞边界处的熵（ℓ = 1..L-1）；
    两端各排除 window 个元胞（默认 L/8）。
    """
    S = np.asarray(entropies, dtype=float)
    if len(S) != L - 1:
        raise ValueError(f"需要 L-1 = {L - 1} 个熵值，收到 {len(S)}")
    w = L // 8 if window is None else window
    ell = np.arange(1, L)
    mask = (ell > w) & (ell < L - w)
    if mask.sum() < MIN_CARDY_POINTS:
        raise ValueError(f"拟合窗口内只有 {int(mask.sum())} 个点，至少需要 {MIN_CARDY_POINTS} 个")
    X = np.log(2 * L / np.pi * np.sin(np.pi * ell[mask] / L))
    popt, _ = curve_fit(_cardy, X, S[mask], p0=(1.0, 0.0))
    residual = float(np.sqrt(np.mean((_cardy(X, *popt) - S[mask]) ** 2)))
    return FitResult(
        model="cardy_entropy",
        params={"c": float(popt[0]), "c_alpha": float(popt[1])},
        residual=residual,
        window=(float(ell[mask][0]), float(ell[mask][-1])),
        n_points=int(mask.sum()),
    )


# ---------- 衰减 ----------


def _windowed(x: Sequence[float], values: Sequence[float], window: tuple[float, float] | None):
    xs = np.asarray(x, dtype=float)
    vs = np.asarray(values, dtype=float)
    if xs.shape != vs.shape:
        raise ValueError("x 与 values 长度不一致")
    if window is not None:
        keep = (xs >= window[0]) & (xs <= window[1])
        xs, vs = xs[keep], vs[keep]
    if len(xs) < MIN_DECAY_POINTS:
        raise ValueError(f"拟合窗口内只有 {len(xs)} 个点，至少需要 {MIN_DECAY_POINTS} 个")
    return xs, vs


def fit_decay(
    x: Sequence[float],
    values: Sequence[float],
    model: str = "exponential",
    window: tuple[float, float] | None = None,
) -> FitResult:
    """在对数空间做线性拟合。

    exponential: log v = a - x/ξ，参数 xi（以元胞为单位）与 amplitude；
    power_law:   log v = a - p log x，参数 exponent 与 amplitude。
    x 可以是间距，也可以是（修正）弦距离。
    """
    xs, vs = _windowed(x, values, window)
    if np.any(vs <= 0):
        raise ValueError("拟合窗口内存在非正值，对数无定义")
    y = np.log(vs)
    flags: list[str] = []
    if model == "exponential":
        slope, intercept = np.polyfit(xs, y, 1)
        if slope >= 0:
            flags.append("non_decaying")
            xi = float("inf")
        else:
            xi = -1.0 / slope
        params = {"xi": xi, "amplitude": float(np.exp(intercept))}
        pred = intercept + slope * xs
    elif model == "power_law":
        if np.any(xs <= 0):
            raise ValueError("幂律拟合要求横坐标为正")
        lx = np.log(xs)
        slope, intercept = np.polyfit(lx, y, 1)
        params = {"exponent": float(-slope), "amplitude": float(np.exp(intercept))}
        pred = intercept + slope * lx
    else:
        raise ValueError(f"未知衰减模型: {model}")
    residual = float(np.sqrt(np.mean((pred - y) ** 2)))
    return FitResult(
        model=model,
        params=params,
        residual=residual,
        window=(float(xs[0]), float(xs[-1])),
        n_points=len(xs),
        flags=flags,
    )


def compare_decay_models(
    x: Sequence[float], values: Sequence[float], window: tuple[float, float] | None = None
) -> tuple[str, dict[str, FitResult]]:
    """同一窗口上比较指数与幂律拟合，返回残差较小者的名称与两个结果。"""
    fits = {m: fit_decay(x, values, m, window) for m in ("exponential", "power_law")}
    best = min(fits, key=lambda m: fits[m].residual)
    return best, fits


# ---------- 线性拟合 ----------


def extrapolate_truncation(values: Sequence[float], eps: Sequence[float]) -> FitResult:
    """value 对 √ε_trunc 线性外推，截距即 ε → 0 的外推值。

    输入按键维递增排列时 ε 应单调下降，否则标记 non_monotone_eps。
    """
    v = np.asarray(values, dtype=float)
    e = np.asarray(eps, dtype=float)
    if len(v) != len(e):
        raise ValueError("values 与 eps 长度不一致")
    if len(v) < MIN_EXTRAPOLATION_POINTS:
        raise ValueError(f"外推至少需要 {MIN_EXTRAPOLATION_POINTS} 个点")
    if np.any(e < 0):
        raise ValueError("截断误差不能为负")
    flags: list[str] = []
    d = np.diff(e)
    if not (np.all(d <= 0) or np.all(d >= 0)):
        logger.warning("截断误差序列不单调: %s", e.tolist())
        flags.append("non_monotone_eps")
    s = np.sqrt(e)
    slope, intercept = np.polyfit(s, v, 1)
    residual = float(np.sqrt(np.mean((intercept + slope * s - v) ** 2)))
    return FitResult(
        model="linear_in_sqrt_eps",
        params={"intercept": float(intercept), "slope": float(slope)},
        residual=residual,
        window=(float(s.min()), float(s.max())),
        n_points=len(v),
        flags=flags,
    )


def fit_string_tension(R: Sequence[float], dE: Sequence[float]) -> FitResult:
    """ΔE(R) = 𝒯 R + b。"""
    r = np.asarray(R, dtype=float)
    y = np.asarray(dE, dtype=float)
    if len(r) != len(y) or len(r) < 2:
        raise ValueError("弦张力拟合至少需要两个 (R, ΔE) 点")
    slope, intercept = np.polyfit(r, y, 1)
    residual = float(np.sqrt(np.mean((intercept + slope * r - y) ** 2)))
    return FitResult(
        model="linear",
        params={"tension": float(slope), "offset": float(intercept)},
        residual=residual,
        window=(float(r.min()), float(r.max())),
        n_points=len(r),
    )


# ---------- 峰与平台 ----------


def find_peaks(x: Sequence[float], y: Sequence[float]) -> list[tuple[float, float]]:
    """内部局部极大值，经过相邻三点抛物线插值细化，按 x 排序返回 (x*, y*)。"""
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    idx, _ = _scipy_find_peaks(ys)
    out = []
    for i in idx:
        x0, x1, x2 = xs[i - 1 : i + 2]
        y0, y1, y2 = ys[i - 1 : i + 2]
        a, b, c = np.polyfit([x0, x1, x2], [y0, y1, y2], 2)
        if a < 0:
            xp = -b / (2 * a)
            out.append((float(xp), float(a * xp * xp + b * xp + c)))
        else:
            out.append((float(x1), float(y1)))
    return out


def plateau_onset(
    x: Sequence[float], values: Sequence[float], rtol: float = 0.05, tail: int | None = None
) -> float | None:
    """序列进入平台的位置 ℓ*：此后所有点与尾部均值的相对偏差不超过 rtol。

    尾部默认取最后 max(3, n/4) 个点；尾部均值为 0 时返回 None。
    """
    xs = np.asarray(x, dtype=float)
    vs = np.abs(np.asarray(values, dtype=float))
    n = len(vs)
    k = tail or max(3, n // 4)
    if n < k:
        raise ValueError(f"序列长度 {n} 小于尾部长度 {k}")
    ref = vs[-k:].mean()
    if ref == 0:
        return None
    ok = np.abs(vs - ref) <= rtol * ref
    # 从尾部向前找到最后一个不满足的位置
    bad = np.flatnonzero(~ok)
    i = 0 if bad.size == 0 else int(bad[-1]) + 1
    return float(xs[i]) if i < n else None
