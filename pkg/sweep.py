"""参数网格扫描：每个 (g, λ) 网格点求基态、测量观测量并写入结果库。

网格点之间互相独立，交给进程池执行；asyncio 侧用信号量限制并发，
结果经 as_completed 回到唯一的追加协程，保证 records.jsonl 串行写入。
"""

from __future__ import annotations

import asyncio
import logging
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dmrg import dmrg_ground, energy_variance
from ed import (
    DenseState,
    MAX_SPARSE_DIM,
    apply_terms,
    dense_state,
    ground_degeneracy,
    ground_state,
    project_gauss,
    sector_state,
)
from errors import ConfigError, ConvergenceError, DimensionError, ZnLadderError
from fitting import fit_central_charge
from hamiltonian import (
    LAYOUT_OF_MODEL,
    LEGS,
    ChainLayout,
    TermList,
    build_model,
    chain_layout,
    gauss_charges,
    gauss_operators,
)
from models import Couplings, LadderSpec, ObservableRecord, RunConfig, RunMeta
from mpo import MPO, compile_mpo
from mps import MPS, load_mps, save_mps
from observables import (
    averaged_order_parameter,
    electric_profile,
    entanglement_profile,
    fidelity_susceptibility,
    hamiltonian_susceptibilities,
    meson,
    order_parameter,
    rung_correlator,
    thooft,
)
from store import ResultStore, run_key

logger = logging.getLogger(__name__)

KNOWN_OBSERVABLES = (
    "energy",
    "spectrum",
    "variance",
    "order_parameter",
    "meson_up",
    "meson_down",
    "meson_sigma",
    "meson_rho",
    "thooft_up",
    "thooft_down",
    "thooft_sigma",
    "thooft_rho",
    "rung_correlator",
    "electric_profile",
    "entropy",
    "fidelity",
    "susceptibility",
)

# 厄米观测量虚部超过该值时告警
IMAG_TOL = 1e-8


# ---------- 基态 ----------


@dataclass
class GroundState:
    state: DenseState | MPS
    energy: float
    eigenvalues: list[float] = field(default_factory=list)
    sweep_energies: list[float] = field(default_factory=list)
    truncation_errors: list[float] = field(default_factory=list)
    eps_trunc: float | None = None
    mpo: MPO | None = None


def hilbert_dim(cfg: RunConfig) -> int:
    layout = chain_layout(cfg.spec(), LAYOUT_OF_MODEL[cfg.model])
    return cfg.N**layout.chain_length


def ground_of_terms(
    cfg: RunConfig,
    task: str,
    spec: LadderSpec,
    terms: TermList,
    initial: MPS | None = None,
) -> GroundState:
    """按任务选择 ED 或 DMRG 求基态。full 模型的 ED 先投影到 Gauss 扇区。"""
    if task == "ed":
        if cfg.model == "full":
            sector = project_gauss(terms, gauss_operators(spec), gauss_charges(spec))
            res = ground_state(sector, cfg.ed_engine, k=cfg.k, seed=cfg.seed)
            psi = sector_state(sector, res.ground_vector)
        else:
            res = ground_state(terms, cfg.ed_engine, k=cfg.k, seed=cfg.seed)
            psi = dense_state(terms, res)
        return GroundState(psi, res.ground_energy, [float(w) for w in res.eigenvalues])
    if task == "dmrg":
        mpo = compile_mpo(terms)
        res = dmrg_ground(mpo, cfg.dmrg, seed=cfg.seed, initial=initial)
        return GroundState(
            res.mps,
            res.energy,
            [res.energy],
            res.energies,
            res.truncation_errors,
            res.eps_trunc,
            mpo,
        )
    raise ValueError(f"未知求解任务: {task}")


def solve_ground(
    cfg: RunConfig, task: str, couplings: Couplings, initial: MPS | None = None
) -> GroundState:
    spec = cfg.spec()
    return ground_of_terms(cfg, task, spec, build_model(cfg.model, spec, couplings), initial)


# ---------- 记录 ----------


def point_meta(cfg: RunConfig, g: float, lam: float, task: str) -> RunMeta:
    return RunMeta(
        model=cfg.model,
        N=cfg.N,
        L=cfg.L,
        g=g,
        lam=lam,
        lam_b=cfg.lam_b,
        g_b=cfg.g_b,
        boundary_left=cfg.boundary_left,
        boundary_right=cfg.boundary_right,
        static_charges=list(cfg.static_charges),
        m=cfg.dmrg.max_bond if task == "dmrg" else None,
        seed=cfg.seed,
    )


@dataclass
class PointContext:
    cfg: RunConfig
    task: str
    key: str
    meta: RunMeta
    spec: LadderSpec
    couplings: Couplings
    layout: ChainLayout
    terms: TermList
    ground: GroundState

    def record(
        self,
        name: str,
        value: complex | float | None,
        args: dict | None = None,
        data: dict | None = None,
        hermitian: bool = False,
    ) -> ObservableRecord:
        imag = 0.0
        if value is not None:
            z = complex(value)
            if hermitian and abs(z.imag) > IMAG_TOL:
                logger.warning("%s%s 虚部 %.3e 偏大", name, args or "", z.imag)
            value, imag = z.real, z.imag
        return ObservableRecord(
            key=self.key,
            task=self.task,
            name=name,
            args=args or {},
            value=value,
            imag=imag,
            data=data or {},
            meta=self.meta,
        )


def _failed(key: str, task: str, meta: RunMeta, name: str, exc: BaseException) -> ObservableRecord:
    message = f"{type(exc).__name__}: {exc}"
    if isinstance(exc, ConvergenceError) and exc.history:
        message += "；能量历史: " + ", ".join(f"{e:.10f}" for e in exc.history[-5:])
    return ObservableRecord(
        key=key,
        task=task,
        name=name,
        meta=meta,
        status="failed",
        message=message,
    )


def centered_pairs(L: int) -> list[tuple[int, int]]:
    """按间距 d = 1..L-1 取关于梯子中心对称的端点 (x, y)，远离两端边界。"""
    pairs = []
    for d in range(1, L):
        x = (L + 1 - d) // 2
        pairs.append((max(x, 1), max(x, 1) + d))
    return pairs


# ---------- 各观测量 ----------


def _energy(ctx: PointContext) -> list[ObservableRecord]:
    g = ctx.ground
    data: dict = {}
    if g.sweep_energies:
        data["sweep_energies"] = list(g.sweep_energies)
        data["truncation_errors"] = list(g.truncation_errors)
        data["eps_trunc"] = g.eps_trunc
    return [ctx.record("energy", g.energy, data=data, hermitian=True)]


def _spectrum(ctx: PointContext) -> list[ObservableRecord]:
    w = ctx.ground.eigenvalues
    if ctx.task != "ed":
        raise ValueError("spectrum 只在 ED 任务中可用")
    gap = w[1] - w[0] if len(w) > 1 else None
    data = {"eigenvalues": list(w), "degeneracy": float(ground_degeneracy(w))}
    return [ctx.record("spectrum", gap, data=data)]


def _variance(ctx: PointContext) -> list[ObservableRecord]:
    psi = ctx.ground.state
    if isinstance(psi, MPS):
        var = energy_variance(ctx.ground.mpo, psi)
    else:
        v = psi.vector / np.linalg.norm(psi.vector)
        hv = apply_terms(ctx.terms, v)
        var = float(np.vdot(hv, hv).real - np.vdot(v, hv).real ** 2)
    return [ctx.record("variance", var)]


def _order_parameter(ctx: PointContext) -> list[ObservableRecord]:
    psi, layout = ctx.ground.state, ctx.layout
    out = [
        ctx.record("order_parameter", order_parameter(psi, layout, r, s), {"r": r, "leg": s})
        for r in range(1, ctx.spec.L + 1)
        for s in LEGS
    ]
    mean_abs, mean_re = averaged_order_parameter(psi, layout)
    out.append(ctx.record("order_parameter_avg", mean_abs, data={"mean_re": mean_re}))
    return out


def _meson(variant: str) -> Callable[[PointContext], list[ObservableRecord]]:
    def measure(ctx: PointContext) -> list[ObservableRecord]:
        psi, layout = ctx.ground.state, ctx.layout
        return [
            ctx.record(
                f"meson_{variant}", meson(psi, layout, x, y, variant), {"x": x, "y": y, "d": y - x}
            )
            for x, y in centered_pairs(ctx.spec.L)
        ]

    return measure


def _thooft(variant: str) -> Callable[[PointContext], list[ObservableRecord]]:
    def measure(ctx: PointContext) -> list[ObservableRecord]:
        psi, layout = ctx.ground.state, ctx.layout
        return [
            ctx.record(f"thooft_{variant}", thooft(psi, layout, r, variant), {"r": r})
            for r in range(1, ctx.spec.L + 1)
        ]

    return measure


def _rung_correlator(ctx: PointContext) -> list[ObservableRecord]:
    psi, layout = ctx.ground.state, ctx.layout
    return [
        ctx.record("rung_correlator", rung_correlator(psi, layout, x, y), {"x": x, "y": y, "d": y - x})
        for x, y in centered_pairs(ctx.spec.L)
    ]


def _electric_profile(ctx: PointContext) -> list[ObservableRecord]:
    prof = electric_profile(ctx.ground.state, ctx.layout)
    return [ctx.record("electric", val, {"r": r, "link": s}) for (_, r, s), val in prof.items()]


def _entropy(ctx: PointContext) -> list[ObservableRecord]:
    S = entanglement_profile(ctx.ground.state, ctx.layout)
    mid = S[len(S) // 2] if S else None
    out = [ctx.record("entropy", mid, data={"S": S})]
    try:
        fit = fit_central_charge(S, ctx.spec.L, ctx.cfg.entropy_window)
    except ValueError as e:
        logger.info("L=%d 跳过中心荷拟合: %s", ctx.spec.L, e)
    else:
        data = {
            "c_alpha": fit.params["c_alpha"],
            "residual": fit.residual,
            "window_lo": fit.window[0],
            "window_hi": fit.window[1],
        }
        out.append(ctx.record("central_charge", fit.params["c"], data=data))
    return out


def _fidelity(ctx: PointContext) -> list[ObservableRecord]:
    cfg, param = ctx.cfg, ctx.cfg.fidelity_param
    initial = ctx.ground.state if isinstance(ctx.ground.state, MPS) else None

    def solve(x: float) -> DenseState | MPS:
        if x == getattr(ctx.couplings, param):
            return ctx.ground.state
        c = ctx.couplings.model_copy(update={param: x})
        return solve_ground(cfg, ctx.task, c, initial).state

    res = fidelity_susceptibility(
        solve, getattr(ctx.couplings, param), cfg.fidelity_step, volume=3 * ctx.spec.L
    )
    data = {
        "chi_half": res.chi_half,
        "rel_change": res.rel_change,
        "overlap": res.overlap,
        "step": res.step,
        "flags": ";".join(res.flags),
    }
    return [ctx.record("fidelity", res.chi, {"param": param}, data)]


def _susceptibility(ctx: PointContext) -> list[ObservableRecord]:
    cfg = ctx.cfg

    def solve(terms: TermList) -> DenseState | MPS:
        return ground_of_terms(cfg, ctx.task, ctx.spec, terms).state

    res = hamiltonian_susceptibilities(
        cfg.model, ctx.spec, ctx.couplings, solve=solve, step=cfg.susceptibility_step
    )
    return [
        ctx.record("chi_tau", res.chi_tau, data={"half": res.chi_tau_half, "step": res.step}),
        ctx.record("chi_sigma", res.chi_sigma, data={"half": res.chi_sigma_half, "step": res.step}),
    ]


MEASUREMENTS: dict[str, Callable[[PointContext], list[ObservableRecord]]] = {
    "energy": _energy,
    "spectrum": _spectrum,
    "variance": _variance,
    "order_parameter": _order_parameter,
    "rung_correlator": _rung_correlator,
    "electric_profile": _electric_profile,
    "entropy": _entropy,
    "fidelity": _fidelity,
    "susceptibility": _susceptibility,
}
for _v in ("up", "down", "sigma", "rho"):
    MEASUREMENTS[f"meson_{_v}"] = _meson(_v)
    MEASUREMENTS[f"thooft_{_v}"] = _thooft(_v)


def check_observables(names: list[str]) -> tuple[bool, str]:
    unknown = [n for n in names if n not in MEASUREMENTS]
    if unknown:
        return False, f"未知观测量: {', '.join(unknown)}；可选: {', '.join(KNOWN_OBSERVABLES)}"
    return True, ""


# ---------- 单个网格点 ----------


def _checkpoint_path(cfg: RunConfig, key: str) -> Path:
    return Path(cfg.output) / "checkpoints" / f"{key}.znmps"


def measure_point(cfg: RunConfig, g: float, lam: float, task: str) -> list[ObservableRecord]:
    """一个网格点的全部记录。数值失败转为 status=failed 的记录而不抛出。

    记录按成功在前、失败在后排列，ResultStore.completed_keys 依赖这个顺序。
    """
    meta = point_meta(cfg, g, lam, task)
    key = run_key(meta, task)
    spec = cfg.spec()
    couplings = cfg.couplings(g, lam)
    try:
        layout = chain_layout(spec, LAYOUT_OF_MODEL[cfg.model])
        terms = build_model(cfg.model, spec, couplings)
        initial = None
        ckpt = _checkpoint_path(cfg, key)
        if task == "dmrg" and cfg.checkpoint and ckpt.exists():
            try:
                initial = load_mps(ckpt, layout.layout_hash())
                logger.info("从检查点 %s 继续", ckpt)
            except ValueError as e:
                logger.warning("检查点不可用，重新开始: %s", e)
        ground = ground_of_terms(cfg, task, spec, terms, initial)
        if task == "dmrg" and cfg.checkpoint:
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            save_mps(ground.state, ckpt, layout.layout_hash())
    except (ZnLadderError, ValueError, np.linalg.LinAlgError, ArithmeticError) as e:
        logger.warning("g=%g λ=%g 基态求解失败: %s", g, lam, e)
        return [_failed(key, task, meta, "ground_state", e)]

    if ground.eps_trunc is not None:
        meta = meta.model_copy(update={"eps_trunc": ground.eps_trunc})
    ctx = PointContext(cfg, task, key, meta, spec, couplings, layout, terms, ground)
    ok: list[ObservableRecord] = []
    failed: list[ObservableRecord] = []
    for name in cfg.observables:
        try:
            ok += MEASUREMENTS[name](ctx)
        except (ZnLadderError, ValueError, np.linalg.LinAlgError, ArithmeticError) as e:
            logger.warning("g=%g λ=%g 观测量 %s 失败: %s", g, lam, name, e)
            failed.append(_failed(key, task, meta, name, e))
    return ok + failed


# ---------- 扫描 ----------


@dataclass
class SweepSummary:
    total: int = 0
    skipped: int = 0
    ok: int = 0
    failed: int = 0
    records: int = 0

    def line(self) -> str:
        return (
            f"网格点 {self.total}：完成 {self.ok}，失败 {self.failed}，跳过 {self.skipped}；"
            f"写入记录 {self.records} 条"
        )


def grid_points(cfg: RunConfig) -> list[tuple[float, float]]:
    gs = cfg.g_grid or [cfg.g]
    lams = cfg.lam_grid or [cfg.lam]
    return [(g, lam) for g in gs for lam in lams]


async def run_sweep(cfg: RunConfig, store: ResultStore, task: str | None = None) -> SweepSummary:
    """扫描整个网格。已完成的网格点只记一条 skipped 日志。"""
    task = task or (cfg.task if cfg.task in ("ed", "dmrg") else cfg.sweep_task)
    ok, msg = check_observables(cfg.observables)
    if not ok:
        raise ConfigError("observables", msg)
    if task == "ed":
        dim = hilbert_dim(cfg)
        if dim > MAX_SPARSE_DIM:
            raise DimensionError(dim, MAX_SPARSE_DIM, "ed")

    summary = SweepSummary()
    done = store.completed_keys()
    pending: list[tuple[float, float]] = []
    for g, lam in grid_points(cfg):
        summary.total += 1
        if run_key(point_meta(cfg, g, lam, task), task) in done:
            logger.info("skipped: g=%g λ=%g 已在结果库中", g, lam)
            summary.skipped += 1
            continue
        pending.append((g, lam))
    if not pending:
        return summary

    loop = asyncio.get_running_loop()
    semaphore = asyncio.Semaphore(cfg.max_workers)
    queue: asyncio.Queue[list[ObservableRecord] | None] = asyncio.Queue()

    async def appender() -> None:
        while (batch := await queue.get()) is not None:
            summary.records += store.append(batch)

    pool = ProcessPoolExecutor(max_workers=cfg.max_workers) if cfg.max_workers > 1 else None

    async def run_one(g: float, lam: float) -> tuple[float, float, list[ObservableRecord]]:
        async with semaphore:
            try:
                recs = await loop.run_in_executor(pool, measure_point, cfg, g, lam, task)
            except Exception as e:
                # 工作进程崩溃等意外情况，同样记为失败
                logger.error("g=%g λ=%g 工作进程异常: %s", g, lam, e)
                meta = point_meta(cfg, g, lam, task)
                recs = [_failed(run_key(meta, task), task, meta, "worker", e)]
            return g, lam, recs

    writer = asyncio.create_task(appender())
    try:
        tasks = [asyncio.create_task(run_one(g, lam)) for g, lam in pending]
        for coro in asyncio.as_completed(tasks):
            g, lam, recs = await coro
            if any(r.status == "failed" for r in recs):
                summary.failed += 1
            else:
                summary.ok += 1
            logger.info("完成 g=%g λ=%g（%d/%d）", g, lam, summary.ok + summary.failed, len(pending))
            await queue.put(recs)
    finally:
        await queue.put(None)
        await writer
        if pool is not None:
            pool.shutdown()
    return summary
