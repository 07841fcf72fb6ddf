"""zn-ladder 命令行入口。

用法示例：
    python main.py ed --N 3 --L 4 --g 0.5 --lam 1.0 --set observables=energy,spectrum --set k=4
    python main.py dmrg -c configs/clock_scan.conf --set lam_grid=0.4:1.2:17
    python main.py sweep -c configs/fidelity.conf -v
    python main.py rg --N 5 --set g_grid=0:1:40 --set lam_grid=0.2:3:40
    python main.py analytic --N 5 --set g_grid=0.02,0.1,1,10
    python main.py report --kind string-tension --output results

退出码：0 成功；1 配置错误；2 存在数值失败的网格点；3 报告缺少输入。
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

import analytics
from config import load_config, parse_overrides
from errors import ConfigError, DimensionError, MissingInputError, ZnLadderError
from hamiltonian import build_model
from models import ObservableRecord, Prediction, RunConfig
from report import REPORTS, generate_report, write_predictions
from rg import bare_state, raster, stop_thresholds, write_phase_map
from store import ResultStore, run_key
from sweep import grid_points, point_meta, run_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_MISSING = 3

# 专用命令行参数 -> 配置键
FLAG_KEYS = {
    "N": "N",
    "L": "L",
    "g": "g",
    "lam": "lam",
    "model": "model",
    "seed": "seed",
    "output": "output",
    "kind": "report_kind",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zn-ladder", description="两腿梯子上的 Z_N 格点规范理论")
    sub = parser.add_subparsers(dest="task", required=True)
    helps = {
        "ed": "精确对角化",
        "dmrg": "两格点 DMRG",
        "rg": "RG 流相图栅格",
        "sweep": "在 (g, λ) 网格上批量求基态并测量",
        "analytic": "闭式解析预言",
        "report": "从结果库生成作图数据",
    }
    for task, text in helps.items():
        p = sub.add_parser(task, help=text)
        p.add_argument("-c", "--config", default=None, help="key = value 配置文件")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="覆盖配置项，可重复")
        p.add_argument("--output", default=None, help="输出目录（结果库所在位置）")
        p.add_argument("-v", "--verbose", action="count", default=0, help="-v 为 INFO，-vv 为 DEBUG")
        p.add_argument("--N", type=int, default=None, help="Z_N 的 N")
        p.add_argument("--L", type=int, default=None, help="元胞数")
        p.add_argument("--g", type=float, default=None, help="规范耦合 g")
        p.add_argument("--lam", type=float, default=None, help="物质耦合 λ")
        p.add_argument("--model", default=None,
                       choices=["full", "unitary", "pure_axial", "pure_dual", "clock"], help="模型")
        p.add_argument("--seed", type=int, default=None, help="随机种子")
        if task == "report":
            p.add_argument("--kind", default=None, choices=sorted(REPORTS), help="报告类型")
    return parser


def collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    """--set 先合并，专用参数最后覆盖。"""
    overrides = parse_overrides(args.set)
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    overrides["task"] = args.task
    return overrides


# ---------- 各任务 ----------


def run_compute(cfg: RunConfig) -> int:
    store = ResultStore(cfg.output)
    summary = asyncio.run(run_sweep(cfg, store))
    print(summary.line())
    for rec in store.query("energy", cfg.task if cfg.task != "sweep" else None)[-5:]:
        print(f"  g={rec.meta.g:g} λ={rec.meta.lam:g}  E0 = {rec.value:.12f}")
    return EXIT_NUMERICAL if summary.failed else EXIT_OK


def run_rg(cfg: RunConfig) -> int:
    store = ResultStore(cfg.output)
    done = store.completed_keys()
    keys = {
        (g, lam): run_key(point_meta(cfg, g, lam, "rg"), "rg")
        for g in cfg.g_grid
        for lam in cfg.lam_grid
    }
    if all(k in done for k in keys.values()):
        logger.info("skipped: 全部 %d 个 RG 网格点已在结果库中", len(keys))
        print(f"RG 网格点 {len(keys)}：全部跳过")
        return EXIT_OK

    points = raster(cfg.N, cfg.g_grid, cfg.lam_grid, cfg.rg, cfg.max_workers)
    path = Path(cfg.output) / "phase_map.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_phase_map(points, path)
    records = []
    for p in points:
        key = keys[(p.g, p.lam)]
        if key in done:
            continue
        records.append(ObservableRecord(
            key=key,
            task="rg",
            name="phase",
            value=p.phase.stop_ell,
            data={
                "label": p.phase.label,
                "winning_set": ";".join(p.phase.winning),
                "stop_reason": p.phase.stop_reason,
                "reliable": float(p.phase.reliable),
                "flags": ";".join(p.phase.flags),
            },
            meta=point_meta(cfg, p.g, p.lam, "rg"),
        ))
    store.append(records)
    counts: dict[str, int] = {}
    for p in points:
        counts[p.phase.label] = counts.get(p.phase.label, 0) + 1
    print(f"相图已写入 {path}")
    for label, n in sorted(counts.items()):
        print(f"  {label}: {n}")
    return EXIT_OK


def analytic_predictions(cfg: RunConfig) -> list[Prediction]:
    preds: list[Prediction] = []
    for g in cfg.g_grid or [cfg.g]:
        for lam in cfg.lam_grid or [cfg.lam]:
            makers = [
                lambda: analytics.string_tension(cfg.N, g),
                lambda: analytics.string_tension_weak(cfg.N, g),
                lambda: analytics.string_tension_strong(cfg.N, g),
                lambda: analytics.screening_radius(cfg.N, g, lam),
                lambda: analytics.quasiadiabatic_xi(cfg.N, g, lam),
                lambda: analytics.product_state_meson_factor(cfg.N, g, lam),
            ]
            for make in makers:
                try:
                    preds.append(make())
                except ValueError as e:
                    logger.info("g=%g λ=%g 跳过一项预言: %s", g, lam, e)
    return preds


def run_analytic(cfg: RunConfig) -> int:
    preds = analytic_predictions(cfg)
    path = Path(cfg.output) / "analytic.csv"
    write_predictions(preds, path)
    print(f"解析预言 {len(preds)} 条已写入 {path}（g× = {analytics.crossover_g(cfg.N):.6g}）")
    return EXIT_OK


def run_report(cfg: RunConfig) -> int:
    store = ResultStore(cfg.output)
    output = generate_report(cfg.report_kind, store, Path(cfg.output) / "reports")
    if output.missing:
        raise MissingInputError(output.missing)
    print(f"报告 {cfg.report_kind} 已写入 {Path(cfg.output) / 'reports' / cfg.report_kind}")
    return EXIT_OK


def preflight(cfg: RunConfig) -> None:
    """计算开始前检查参数组合，参数错误统一转为 ConfigError。"""
    try:
        if cfg.task in ("ed", "dmrg", "sweep"):
            g, lam = grid_points(cfg)[0]
            build_model(cfg.model, cfg.spec(), cfg.couplings(g, lam))
        elif cfg.task == "rg":
            for g, lam in grid_points(cfg):
                stop_thresholds(bare_state(cfg.N, g, lam, cfg.rg.p0_convention), cfg.rg)
    except ValueError as e:
        raise ConfigError(cfg.task, str(e)) from e


def run(cfg: RunConfig) -> int:
    if cfg.task in ("ed", "dmrg", "sweep"):
        return run_compute(cfg)
    if cfg.task == "rg":
        return run_rg(cfg)
    if cfg.task == "analytic":
        return run_analytic(cfg)
    return run_report(cfg)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")

    try:
        cfg = load_config(args.config, collect_overrides(args))
        preflight(cfg)
        return run(cfg)
    except ConfigError as e:
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as e:
        print(f"配置错误: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionError as e:
        print(f"拒绝计算: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingInputError as e:
        print("报告缺少以下输入:", file=sys.stderr)
        for item in e.missing:
            print(f"  - {item}", file=sys.stderr)
        return EXIT_MISSING
    except (ZnLadderError, ValueError) as e:
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
