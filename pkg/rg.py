"""二阶 RG 流：裸耦合、流方程积分、终点分类与 (g, λ) 相图栅格。

单位 a = 1，速度 v = 4π/N 沿流不变。状态向量顺序：
  K_rho, K_sigma, K_0, T, G, P, Q, P0, Q0, C_rho, C_sigma, Cp_rho, Cp_sigma
g = 0 为时钟极限：0 扇区不存在，1/K_0 项按 0 处理，K_0 不流动。
σ–0 扇区混合项（∇θ_σ∇θ_0）与二阶生成的 θ 场相互作用不计入。
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv
from scipy.integrate import RK45, Radau

from models import PhaseLabel, RgThresholds

logger = logging.getLogger(__name__)

K_NAMES = ("K_rho", "K_sigma", "K_0")
INTERACTIONS = ("T", "G", "P", "Q", "P0", "Q0", "C_rho", "C_sigma", "Cp_rho", "Cp_sigma")
NAMES = K_NAMES + INTERACTIONS

# 每个相互作用变大时能打开能隙的扇区
SECTORS: dict[str, frozenset[str]] = {
    "T": frozenset({"sigma", "zero"}),
    "G": frozenset({"rho", "zero"}),
    "P": frozenset({"rho", "sigma"}),
    "Q": frozenset({"rho", "sigma"}),
    "P0": frozenset({"zero"}),
    "Q0": frozenset({"zero"}),
    "C_rho": frozenset({"rho"}),
    "C_sigma": frozenset({"sigma"}),
    "Cp_rho": frozenset({"rho"}),
    "Cp_sigma": frozenset({"sigma", "zero"}),
}
ALL_SECTORS = frozenset({"rho", "sigma", "zero"})
RHO_COUPLINGS = tuple(n for n in INTERACTIONS if "rho" in SECTORS[n])

# 各扇区中钉扎 θ 型与 φ 型场的相互作用
THETA_TYPE = {"sigma": ("T", "P"), "rho": ("P",), "zero": ("P0",)}
PHI_TYPE = {
    "sigma": ("Q", "C_sigma", "Cp_sigma"),
    "rho": ("Q", "C_rho", "Cp_rho", "G"),
    "zero": ("Q0", "G", "Cp_sigma"),
}

# K 方程对 λ 的近似只在 1 附近可信
RELIABLE_LAM = (0.2, 3.0)


def kink_constant(N: int) -> float:
    """N²(1 - cos 2π/N)² / 32。"""
    return N * N * (1 - math.cos(2 * math.pi / N)) ** 2 / 32


@dataclass
class RGState:
    N: int
    ell: float
    K_rho: float
    K_sigma: float
    K_0: float
    T: float
    G: float
    P: float
    Q: float
    P0: float
    Q0: float
    C_rho: float = 0.0
    C_sigma: float = 0.0
    Cp_rho: float = 0.0
    Cp_sigma: float = 0.0
    clock: bool = False

    @property
    def v(self) -> float:
        return 4 * math.pi / self.N

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in NAMES], dtype=float)

    def with_array(self, ell: float, y: np.ndarray) -> RGState:
        return RGState(N=self.N, ell=ell, clock=self.clock, **dict(zip(NAMES, map(float, y))))


def bare_state(N: int, g: float, lam: float, p0_convention: str = "inverse_g") -> RGState:
    """裸耦合：K_ρ = K_σ = 1/λ，K_0 = g，T = 2λ，G = 2g，P = λX，Q = X/λ，
    P0 = X/g（linear_g 约定下为 gX），Q0 = gX，X = N²(1-cos 2π/N)²/32。
    """
    if lam <= 0:
        raise ValueError("RG 需要 λ > 0")
    if g < 0:
        raise ValueError("g 不能为负")
    if N < 2:
        raise ValueError("N 至少为 2")
    X = kink_constant(N)
    clock = g == 0
    if clock:
        p0 = q0 = 0.0
    elif p0_convention == "inverse_g":
        p0, q0 = X / g, g * X
    elif p0_convention == "linear_g":
        p0, q0 = g * X, g * X
    else:
        raise ValueError(f"未知 P0 约定: {p0_convention}")
    return RGState(
        N=N, ell=0.0,
        K_rho=1 / lam, K_sigma=1 / lam, K_0=g,
        T=2 * lam, G=2 * g,
        P=lam * X, Q=X / lam, P0=p0, Q0=q0,
        clock=clock,
    )


def beta(y: np.ndarray, N: int, clock: bool) -> np.ndarray:
    """流方程右端 dy/dℓ。"""
    Kr, Ks, K0, T, G, P, Q, P0, Q0, Cr, Cs, Cpr, Cps = y
    v = 4 * math.pi / N
    pi, N2, v2 = math.pi, N * N, v * v
    ir, is_ = 1 / Kr, 1 / Ks
    i0 = 0.0 if clock else 1 / K0
    s_g = ir + is_ + 2 * i0
    d_g = s_g / (4 * N)
    mix_q = Q * Q / v * (N / 4) * (ir - is_)
    mix_g = G * G / (4 * N * v) * (ir - is_ - 2 * i0)

    dy = np.empty(13)
    dy[0] = (
        -pi * N2 * P * P * Kr * Kr * (Ks + Kr) / (4 * v2)
        + pi * N2 * Q * Q / (4 * v2) * (is_ + ir)
        + 8 * pi * N2 * Cr * Cr / (4 * v2) * ir
        + 2 * pi * Cpr * Cpr / (N2 * v2) * ir
        + pi * G * G / (4 * N2 * v2) * s_g
    )
    dy[1] = (
        -pi * N2 * P * P * Ks * Ks * (Ks + Kr) / (4 * v2)
        + pi * N2 * Q * Q / (4 * v2) * (is_ + ir)
        + 2 * pi * N2 * Cs * Cs / v2 * is_
        - 2 * pi * T * T * Ks * Ks / (N2 * v2) * (Ks + K0 / 2)
        + 2 * pi * Cps * Cps / (N2 * v2) * (is_ + i0)
        + pi * G * G / (4 * N2 * v2) * s_g
    )
    if clock:
        dy[2] = 0.0
    else:
        dy[2] = (
            pi * N2 * Q0 * Q0 / v2 * i0
            - pi * N2 * P0 * P0 * K0**3 / v2
            - pi * T * T * K0 * K0 / (N2 * v2) * (Ks + K0 / 2)
            + 2 * pi * Cps * Cps / (N2 * v2) * (is_ + 2 * i0)
            + pi * G * G / (2 * N2 * v2) * s_g
        )
    dy[3] = (2 - Ks / N - K0 / (2 * N)) * T
    dy[4] = (2 - d_g) * G - Cpr * G / (4 * N * Kr * v) - Cps * G / (4 * N * v) * (is_ + 2 * i0)
    dy[5] = (2 - N / 4 * (Kr + Ks)) * P
    dy[6] = (2 - N / 4 * (ir + is_)) * Q
    dy[7] = (2 - N * K0 / 2) * P0
    dy[8] = (2 - N * i0 / 2) * Q0
    dy[9] = (2 - 2 * N * ir) * Cr + mix_q
    dy[10] = (2 - 2 * N * is_) * Cs - mix_q
    dy[11] = (2 - ir / N) * Cpr + mix_g
    dy[12] = (2 - is_ / N - 2 * i0 / N) * Cps - mix_g
    return dy


# ---------- 积分 ----------


@dataclass
class Trajectory:
    N: int
    clock: bool
    ells: np.ndarray
    values: np.ndarray  # (步数, 13)
    stop_reason: str
    up_set: list[str]
    lower: float
    upper: float
    flags: list[str] = field(default_factory=list)

    @property
    def final(self) -> dict[str, float]:
        return dict(zip(NAMES, map(float, self.values[-1])))

    @property
    def stop_ell(self) -> float:
        return float(self.ells[-1])

    @property
    def min_K(self) -> float:
        cols = [0, 1] if self.clock else [0, 1, 2]
        return float(self.values[:, cols].min())


def _covered(up: set[str], clock: bool) -> set[str]:
    out: set[str] = {"zero"} if clock else set()
    for n in up:
        out |= SECTORS[n]
    return out


def _up_set(y: np.ndarray, upper: float) -> set[str]:
    return {n for n, val in zip(INTERACTIONS, y[3:]) if abs(val) >= upper}


def linear_rates(y: np.ndarray, N: int, clock: bool) -> dict[str, float]:
    """各相互作用在当前 K 下的线性增长率 2 - Δ（不含二阶源项）。"""
    Kr, Ks, K0 = y[:3]
    ir, is_ = 1 / Kr, 1 / Ks
    i0 = 0.0 if clock else 1 / K0
    v = 4 * math.pi / N
    vals = dict(zip(INTERACTIONS, y[3:]))
    return {
        "T": 2 - Ks / N - K0 / (2 * N),
        "G": (2 - (ir + is_ + 2 * i0) / (4 * N))
        - vals["Cp_rho"] / (4 * N * Kr * v)
        - vals["Cp_sigma"] / (4 * N * v) * (is_ + 2 * i0),
        "P": 2 - N / 4 * (Kr + Ks),
        "Q": 2 - N / 4 * (ir + is_),
        "P0": 2 - N * K0 / 2,
        "Q0": 2 - N * i0 / 2,
        "C_rho": 2 - 2 * N * ir,
        "C_sigma": 2 - 2 * N * is_,
        "Cp_rho": 2 - ir / N,
        "Cp_sigma": 2 - is_ / N - 2 * i0 / N,
    }


def _rho_settled(y: np.ndarray, N: int, clock: bool, lower: float) -> bool:
    """ρ 扇区的相互作用全部低于下阈值，且每个非零者都既不相关又在缩小。"""
    vals = dict(zip(INTERACTIONS, y[3:]))
    if any(abs(vals[n]) >= lower for n in RHO_COUPLINGS):
        return False
    rates = linear_rates(y, N, clock)
    dy = dict(zip(INTERACTIONS, beta(y, N, clock)[3:]))
    for n in RHO_COUPLINGS:
        if vals[n] == 0.0 and dy[n] == 0.0:
            continue
        if rates[n] > 0 or vals[n] * dy[n] > 0:
            return False
    return True


def _stop_decision(y: np.ndarray, N: int, clock: bool, lower: float, upper: float) -> str | None:
    up = _up_set(y, upper)
    covered = _covered(up, clock)
    if covered >= ALL_SECTORS:
        return "gapped"
    if {"sigma", "zero"} <= covered and _rho_settled(y, N, clock, lower):
        return "rho_gapless"
    return None


def _refine_stop(solver, t_old: float, decide, iterations: int = 48) -> tuple[float, np.ndarray]:
    """在上一步区间内用稠密输出二分出首次满足停止条件的 ℓ。"""
    dense = solver.dense_output()
    lo, hi = t_old, solver.t
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if decide(dense(mid)) is None:
            lo = mid
        else:
            hi = mid
    if hi == solver.t:
        return solver.t, solver.y.copy()
    return hi, np.asarray(dense(hi), dtype=float)


def stop_thresholds(state: RGState, thresholds: RgThresholds) -> tuple[float, float]:
    """(下阈值, 上阈值)。上阈值缺省为 max(50, 2 × 最大裸耦合)，必须高于所有裸耦合。"""
    bare_max = float(np.abs(state.as_array()[3:]).max())
    upper = thresholds.upper if thresholds.upper is not None else max(50.0, 2 * bare_max)
    if upper <= bare_max:
        raise ValueError(f"上阈值 {upper} 必须大于所有裸耦合（最大 {bare_max:.4g}）")
    if thresholds.lower >= upper:
        raise ValueError("下阈值必须小于上阈值")
    return thresholds.lower, upper


SOLVERS = {"Radau": Radau, "RK45": RK45}


def flow(state: RGState, thresholds: RgThresholds | None = None) -> Trajectory:
    """从裸耦合积分到停止条件。

    停止条件：越过上阈值的相互作用足以打开所有扇区的能隙（gapped）；
    或 σ、0 扇区已被打开，而所有作用于 ρ 扇区的相互作用都低于下阈值、
    不相关且正在缩小（rho_gapless）。停止点在最后一步内按稠密输出二分定位，
    定位精度与步长无关。步数超过 max_steps 时以 stiff 停止。
    """
    th = thresholds or RgThresholds()
    y0 = state.as_array()
    lower, upper = stop_thresholds(state, th)

    N, clock = state.N, state.clock

    def decide(y: np.ndarray) -> str | None:
        return _stop_decision(y, N, clock, lower, upper)

    solver = SOLVERS[th.method](
        lambda _l, y: beta(y, N, clock),
        state.ell, y0, t_bound=state.ell + th.l_max,
        max_step=th.dl_max, rtol=th.rtol, atol=th.atol,
    )
    ells, values = [state.ell], [y0]
    flags: list[str] = []
    reason = decide(y0)
    steps = 0
    while reason is None:
        if solver.status != "running":
            reason = "l_max"
            break
        if steps >= th.max_steps:
            logger.warning("RG 积分在 ℓ=%.3f 处超过 %d 步仍未停止，按刚性处理", solver.t, th.max_steps)
            flags.append("step_limit")
            reason = "stiff"
            break
        t_old = solver.t
        msg = solver.step()
        steps += 1
        if solver.status == "failed":
            logger.warning("RG 积分步长下溢: %s", msg)
            flags.append("step_underflow")
            reason = "step_failed"
            break
        y = solver.y.copy()
        if not np.all(np.isfinite(y)):
            ells.append(solver.t)
            values.append(y)
            flags.append("non_finite")
            reason = "step_failed"
            break
        Ks = y[:2] if clock else y[:3]
        if np.any(Ks <= 0):
            ells.append(solver.t)
            values.append(y)
            logger.warning("ℓ=%.3f 处 Luttinger 参数变为非正", solver.t)
            flags.append("nonpositive_K")
            reason = "nonpositive_K"
            break
        reason = decide(y)
        if reason is not None:
            t_stop, y = _refine_stop(solver, t_old, decide)
            reason = decide(y) or reason
            ells.append(t_stop)
        else:
            ells.append(solver.t)
        values.append(y)
    up = sorted(_up_set(values[-1], upper)) if np.all(np.isfinite(values[-1])) else []
    logger.debug("RG 停止于 ℓ=%.3f（%d 步），原因 %s，越过上阈值: %s", ells[-1], steps, reason, up)
    return Trajectory(
        N=N, clock=clock,
        ells=np.asarray(ells), values=np.vstack(values),
        stop_reason=reason, up_set=up,
        lower=lower, upper=upper, flags=flags,
    )


# ---------- 分类 ----------


def _sector_winner(sector: str, vals: dict[str, float], up: set[str], clock: bool) -> str | None:
    """扇区内越过上阈值的 θ 型与 φ 型相互作用中取绝对值较大者，返回 'theta' / 'phi'。"""
    if sector == "zero" and clock:
        return "theta"
    theta = [abs(vals[n]) for n in THETA_TYPE[sector] if n in up]
    phi = [abs(vals[n]) for n in PHI_TYPE[sector] if n in up]
    if sector == "zero" and not theta and not phi and "T" in up:
        return "theta"
    if not theta and not phi:
        return None
    return "theta" if max(theta, default=0.0) >= max(phi, default=0.0) else "phi"


def classify(traj: Trajectory) -> PhaseLabel:
    """按停止时越过上阈值的相互作用集合判定相。"""
    flags = list(traj.flags)
    winning = list(traj.up_set)
    if traj.stop_reason == "rho_gapless":
        return PhaseLabel(
            label="Coulomb", winning=winning, stop_ell=traj.stop_ell,
            stop_reason=traj.stop_reason, flags=flags,
        )
    label = "unclassified"
    if traj.stop_reason == "gapped":
        vals, up = traj.final, set(traj.up_set)
        sig = _sector_winner("sigma", vals, up, traj.clock)
        rho = _sector_winner("rho", vals, up, traj.clock)
        zero = _sector_winner("zero", vals, up, traj.clock)
        if sig == "theta" and rho == "theta":
            label = "Higgs"
        elif rho == "phi" and zero == "theta" and sig is not None:
            label = "Quadrupolar" if sig == "theta" else "Deconfined"
        elif rho == "phi" and zero == "phi" and sig is not None:
            label = "ConfinedRungDominated" if sig == "theta" or "T" in up else "FullyConfined"
    if label == "unclassified":
        flags.append("unmatched:" + ",".join(winning))
    return PhaseLabel(
        label=label, winning=winning, stop_ell=traj.stop_ell,
        stop_reason=traj.stop_reason, flags=flags,
    )


# ---------- 栅格 ----------


@dataclass
class RasterPoint:
    g: float
    lam: float
    phase: PhaseLabel


def classify_point(N: int, g: float, lam: float, thresholds: RgThresholds | None = None) -> PhaseLabel:
    th = thresholds or RgThresholds()
    label = classify(flow(bare_state(N, g, lam, th.p0_convention), th))
    if not RELIABLE_LAM[0] <= lam <= RELIABLE_LAM[1]:
        label.reliable = False
        label.flags.append("lambda_outside_reliable_range")
    return label


def _raster_task(args: tuple[int, float, float, RgThresholds]) -> PhaseLabel:
    return classify_point(*args)


def raster(
    N: int,
    g_grid: list[float],
    lam_grid: list[float],
    thresholds: RgThresholds | None = None,
    max_workers: int = 1,
) -> list[RasterPoint]:
    """在 g × λ 网格上逐点分类，各点相互独立。"""
    if not g_grid or not lam_grid:
        raise ValueError("g 与 λ 网格不能为空")
    th = thresholds or RgThresholds()
    points = [(g, lam) for g in g_grid for lam in lam_grid]
    outside = [lam for lam in lam_grid if not RELIABLE_LAM[0] <= lam <= RELIABLE_LAM[1]]
    if outside:
        logger.warning("λ = %s 超出可信区间 %s，结果标记为不可靠", outside, RELIABLE_LAM)
    tasks = [(N, g, lam, th) for g, lam in points]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            labels = list(pool.map(_raster_task, tasks))
    else:
        labels = [_raster_task(t) for t in tasks]
    return [RasterPoint(g, lam, lab) for (g, lam), lab in zip(points, labels)]


def phase_map_table(points: list[RasterPoint]) -> pa.Table:
    return pa.table({
        "g": [p.g for p in points],
        "lam": [p.lam for p in points],
        "label": [p.phase.label for p in points],
        "stop_ell": [p.phase.stop_ell for p in points],
        "winning_set": [";".join(p.phase.winning) for p in points],
        "reliable": [p.phase.reliable for p in points],
        "flags": [";".join(p.phase.flags) for p in points],
    })


def write_phase_map(points: list[RasterPoint], path: str | Path) -> None:
    pacsv.write_csv(phase_map_table(points), str(path))
