"""从结果库生成作图数据：每种报告一个目录，内含 CSV 表与一个 plot.py。

报告只读结果库。表中每个数值要么来自某条记录（带 key 列），
要么来自解析预言（带 formula 列）。缺失的输入逐条列出，已有部分照常输出。
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv

import analytics
from fitting import extrapolate_truncation, find_peaks, fit_decay, fit_string_tension
from models import ObservableRecord, Prediction, RunMeta
from store import ResultStore

logger = logging.getLogger(__name__)


@dataclass
class PlotSpec:
    table: str
    x: str
    y: str
    group: str | None = None
    logx: bool = False
    logy: bool = False
    title: str = ""


@dataclass
class ReportOutput:
    kind: str
    tables: dict[str, pa.Table] = field(default_factory=dict)
    plots: list[PlotSpec] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)


# ---------- 工具 ----------


def _charges_text(meta: RunMeta) -> str:
    return ";".join(f"{c.r}:{c.leg}:{c.q}" for c in meta.static_charges)


def _point_id(meta: RunMeta, exclude: frozenset[str] = frozenset({"static_charges"})) -> str:
    """网格点标识，不含 ε_trunc 与 exclude 中的字段。"""
    payload = meta.model_dump(mode="json", exclude={"eps_trunc", *exclude})
    return json.dumps(payload, sort_keys=True)


def _separation(meta: RunMeta) -> int | None:
    """两个相反静态电荷之间的元胞距离 R。"""
    cs = meta.static_charges
    if len(cs) != 2 or (cs[0].q + cs[1].q) % meta.N != 0:
        return None
    return abs(cs[0].r - cs[1].r)


def _table(rows: list[dict]) -> pa.Table:
    if not rows:
        return pa.table({})
    cols = list(rows[0])
    return pa.table({c: [r.get(c) for r in rows] for c in cols})


def _series(records: Iterable[ObservableRecord], arg: str) -> tuple[np.ndarray, np.ndarray]:
    pts = sorted((r.args[arg], abs(complex(r.value, r.imag))) for r in records if r.value is not None)
    return np.asarray([p[0] for p in pts], dtype=float), np.asarray([p[1] for p in pts])


def _prediction_row(p: Prediction, **extra) -> dict:
    return {**extra, "name": p.name, "formula": p.formula, "regime": p.regime, "value": p.value}


# ---------- 各报告 ----------


def _charge_energies(records: list[ObservableRecord], out: ReportOutput) -> list[dict]:
    """ΔE(R) = E(一对电荷相距 R) - E(无电荷)，同一网格点上配对。"""
    energies = [r for r in records if r.name == "energy"]
    base = {_point_id(r.meta): r for r in energies if not r.meta.static_charges}
    rows = []
    for r in energies:
        R = _separation(r.meta)
        if R is None:
            continue
        b = base.get(_point_id(r.meta))
        if b is None:
            out.missing.append(
                f"energy 无电荷基准: model={r.meta.model} N={r.meta.N} L={r.meta.L} "
                f"g={r.meta.g} lam={r.meta.lam}"
            )
            continue
        rows.append({
            "N": r.meta.N, "L": r.meta.L, "g": r.meta.g, "lam": r.meta.lam, "R": R,
            "dE": r.value - b.value, "key": r.key, "base_key": b.key,
        })
    if not rows and not out.missing:
        out.missing.append("energy 记录（一对相反静态电荷，不同间距 R）")
    rows.sort(key=lambda x: (x["N"], x["g"], x["lam"], x["R"]))
    return rows


def report_string_tension(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("string-tension")
    rows = _charge_energies(records, out)
    out.tables["delta_e"] = _table(rows)
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for row in rows:
        groups[(row["N"], row["L"], row["g"], row["lam"])].append(row)
    fits, overlays = [], []
    for (N, L, g, lam), pts in sorted(groups.items()):
        if len(pts) < 2:
            out.missing.append(f"N={N} L={L} g={g} lam={lam} 至少需要两个 R")
            continue
        fit = fit_string_tension([p["R"] for p in pts], [p["dE"] for p in pts])
        fits.append({
            "N": N, "L": L, "g": g, "lam": lam, "tension": fit.params["tension"],
            "offset": fit.params["offset"], "residual": fit.residual, "n_points": fit.n_points,
        })
        if g > 0:
            overlays.append(_prediction_row(analytics.string_tension_strong(N, g), N=N, g=g))
        overlays.append(_prediction_row(analytics.string_tension_weak(N, g), N=N, g=g))
    out.tables["tension_fit"] = _table(fits)
    out.tables["tension_analytic"] = _table(overlays)
    out.plots += [
        PlotSpec("delta_e", "R", "dE", "g", title="ΔE(R)"),
        PlotSpec("tension_fit", "g", "tension", "N", logx=True, logy=True, title="弦张力"),
        PlotSpec("tension_analytic", "g", "value", "formula", logx=True, logy=True, title="解析预言"),
    ]
    return out


def report_screening(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("screening")
    rows = _charge_energies(records, out)
    out.tables["delta_e"] = _table(rows)
    overlays = []
    for N, g, lam in sorted({(r["N"], r["g"], r["lam"]) for r in rows}):
        if g <= 0:
            continue
        try:
            overlays.append(_prediction_row(analytics.screening_radius(N, g, lam), N=N, g=g, lam=lam))
        except ValueError as e:
            logger.warning("N=%d g=%g λ=%g 无法给出屏蔽半径: %s", N, g, lam, e)
    out.tables["screening_radius"] = _table(overlays)
    out.plots.append(PlotSpec("delta_e", "R", "dE", "lam", title="ΔE(R) 与 R*"))
    return out


def report_electric_profile(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("electric-profile")
    rows = [
        {
            "N": r.meta.N, "L": r.meta.L, "g": r.meta.g, "lam": r.meta.lam,
            "charges": _charges_text(r.meta), "r": r.args["r"], "link": r.args["link"],
            "E": r.value, "key": r.key,
        }
        for r in records
        if r.name == "electric"
    ]
    if not rows:
        out.missing.append("electric 记录（observables 包含 electric_profile）")
    rows.sort(key=lambda x: (x["g"], x["lam"], x["charges"], x["link"], x["r"]))
    out.tables["electric"] = _table(rows)
    out.plots.append(PlotSpec("electric", "r", "E", "link", title="各链 ⟨E⟩"))
    return out


def report_order_parameter(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("order-parameter")
    rows = [
        {
            "N": r.meta.N, "L": r.meta.L, "g": r.meta.g, "lam": r.meta.lam, "lam_b": r.meta.lam_b,
            "m": r.meta.m, "eps_trunc": r.meta.eps_trunc,
            "mean_abs": r.value, "mean_re": r.data.get("mean_re"), "key": r.key,
        }
        for r in records
        if r.name == "order_parameter_avg"
    ]
    if not rows:
        out.missing.append("order_parameter_avg 记录（observables 包含 order_parameter）")
    rows.sort(key=lambda x: (x["N"], x["L"], x["g"], x["lam"]))
    out.tables["order_parameter"] = _table(rows)
    out.plots.append(PlotSpec("order_parameter", "lam", "mean_abs", "L", title="平均序参量"))
    return out


def report_phase_diagram(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("phase-diagram")
    rows = [
        {
            "N": r.meta.N, "g": r.meta.g, "lam": r.meta.lam, "label": r.data.get("label"),
            "stop_ell": r.value, "winning_set": r.data.get("winning_set"),
            "reliable": bool(r.data.get("reliable")), "flags": r.data.get("flags"), "key": r.key,
        }
        for r in records
        if r.name == "phase"
    ]
    if not rows:
        out.missing.append("phase 记录（先运行 rg 子命令）")
    rows.sort(key=lambda x: (x["N"], x["g"], x["lam"]))
    out.tables["phase_map"] = _table(rows)
    out.plots.append(PlotSpec("phase_map", "lam", "g", "label", title="RG 相图"))
    return out


def _peaks_by(rows: list[dict], group_keys: tuple[str, ...], x: str, y: str) -> list[dict]:
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for row in rows:
        if row[y] is not None:
            groups[tuple(row[k] for k in group_keys)].append(row)
    peaks = []
    for gk, pts in sorted(groups.items()):
        pts.sort(key=lambda p: p[x])
        for xp, yp in find_peaks([p[x] for p in pts], [p[y] for p in pts]):
            peaks.append({**dict(zip(group_keys, gk)), f"peak_{x}": xp, f"peak_{y}": yp})
    return peaks


def report_fidelity(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("fidelity")
    rows = []
    for r in records:
        if r.name != "fidelity":
            continue
        param = str(r.args.get("param", "lam"))
        rows.append({
            "N": r.meta.N, "L": r.meta.L, "g": r.meta.g, "lam": r.meta.lam, "param": param,
            "x": r.meta.lam if param == "lam" else r.meta.g,
            "chi": r.value, "chi_half": r.data.get("chi_half"),
            "rel_change": r.data.get("rel_change"), "flags": r.data.get("flags"), "key": r.key,
        })
    if not rows:
        out.missing.append("fidelity 记录（observables 包含 fidelity）")
    rows.sort(key=lambda x: (x["N"], x["L"], x["param"], x["x"]))
    out.tables["chi_f"] = _table(rows)
    # 固定另一个参数后，对每个 L 找峰
    for row in rows:
        row["fixed"] = row["g"] if row["param"] == "lam" else row["lam"]
    peaks = _peaks_by(rows, ("N", "param", "fixed", "L"), "x", "chi")
    for p in peaks:
        p["inv_log_L"] = 1.0 / math.log(p["L"]) if p["L"] > 1 else None
    out.tables["peaks"] = _table(peaks)
    out.plots += [
        PlotSpec("chi_f", "x", "chi", "L", title="χ_F"),
        PlotSpec("peaks", "inv_log_L", "peak_chi", "param", title="峰值 vs 1/log L"),
    ]
    return out


def report_central_charge(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("central-charge")
    profiles, fits = [], []
    for r in records:
        base = {"N": r.meta.N, "L": r.meta.L, "g": r.meta.g, "lam": r.meta.lam, "m": r.meta.m}
        if r.name == "entropy":
            for ell, s in enumerate(r.data.get("S") or [], start=1):
                profiles.append({**base, "ell": ell, "S": s, "key": r.key})
        elif r.name == "central_charge":
            fits.append({
                **base, "c": r.value, "c_alpha": r.data.get("c_alpha"),
                "residual": r.data.get("residual"), "key": r.key,
            })
    if not profiles:
        out.missing.append("entropy 记录（observables 包含 entropy）")
    if not fits:
        out.missing.append("central_charge 记录（L 足够大时 entropy 自动拟合）")
    out.tables["entropy"] = _table(profiles)
    out.tables["central_charge"] = _table(fits)
    out.plots.append(PlotSpec("entropy", "ell", "S", "lam", title="S_ℓ"))
    return out


def report_susceptibility(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("susceptibility")
    by_key: dict[str, dict] = {}
    for r in records:
        if r.name not in ("chi_tau", "chi_sigma"):
            continue
        row = by_key.setdefault(r.key, {
            "N": r.meta.N, "L": r.meta.L, "g": r.meta.g, "lam": r.meta.lam,
            "chi_tau": None, "chi_tau_half": None, "chi_sigma": None, "chi_sigma_half": None,
            "key": r.key,
        })
        row[r.name] = r.value
        row[f"{r.name}_half"] = r.data.get("half")
    rows = sorted(by_key.values(), key=lambda x: (x["N"], x["L"], x["lam"], x["g"]))
    if not rows:
        out.missing.append("chi_tau/chi_sigma 记录（observables 包含 susceptibility）")
    out.tables["susceptibility"] = _table(rows)
    out.tables["chi_tau_peaks"] = _table(_peaks_by(rows, ("N", "lam", "L"), "g", "chi_tau"))
    out.plots += [
        PlotSpec("susceptibility", "g", "chi_tau", "L", title="χ_τ"),
        PlotSpec("susceptibility", "g", "chi_sigma", "L", title="χ_σ"),
    ]
    return out


def report_meson_decay(records: list[ObservableRecord]) -> ReportOutput:
    out = ReportOutput("meson-decay")
    groups: dict[tuple, list[ObservableRecord]] = defaultdict(list)
    for r in records:
        if r.name.startswith("meson_"):
            groups[(r.key, r.name)].append(r)
    if not groups:
        out.missing.append("meson_* 记录（observables 包含 meson_sigma 等）")
    series, fits, overlays = [], [], []
    for (key, name), recs in sorted(groups.items()):
        meta = recs[0].meta
        base = {"N": meta.N, "L": meta.L, "g": meta.g, "lam": meta.lam, "variant": name}
        d, v = _series(recs, "d")
        series += [{**base, "d": float(x), "abs_M": float(y), "key": key} for x, y in zip(d, v)]
        try:
            fit = fit_decay(d[d > 0], v[d > 0], "exponential")
        except ValueError as e:
            logger.info("%s (key=%s) 无法拟合: %s", name, key, e)
            continue
        fits.append({**base, "xi": fit.params["xi"], "residual": fit.residual,
                     "flags": ";".join(fit.flags), "key": key})
    seen = set()
    for row in fits:
        N, g, lam = row["N"], row["g"], row["lam"]
        if (N, g, lam) in seen or g <= 0:
            continue
        seen.add((N, g, lam))
        overlays.append(_prediction_row(analytics.quasiadiabatic_xi(N, g, lam), N=N, g=g, lam=lam))
        overlays.append(_prediction_row(analytics.product_state_meson_factor(N, g, lam), N=N, g=g, lam=lam))
    out.tables["meson"] = _table(series)
    out.tables["xi_fit"] = _table(fits)
    out.tables["xi_analytic"] = _table(overlays)
    out.plots += [
        PlotSpec("meson", "d", "abs_M", "variant", logy=True, title="|M(d)|"),
        PlotSpec("xi_fit", "g", "xi", "variant", logx=True, logy=True, title="ξ_M vs g"),
    ]
    return out


def report_truncation(records: list[ObservableRecord]) -> ReportOutput:
    """同一观测量在不同键维下对 √ε_trunc 的线性外推。"""
    out = ReportOutput("truncation")
    groups: dict[tuple, list[ObservableRecord]] = defaultdict(list)
    for r in records:
        if r.task != "dmrg" or r.value is None or r.meta.eps_trunc is None:
            continue
        meta_id = _point_id(r.meta, frozenset({"m"}))
        groups[(r.name, json.dumps(r.args, sort_keys=True), meta_id)].append(r)
    rows, fits = [], []
    for (name, args, _), recs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        recs.sort(key=lambda r: r.meta.m or 0)
        meta = recs[0].meta
        base = {"name": name, "args": args, "N": meta.N, "L": meta.L, "g": meta.g, "lam": meta.lam}
        for r in recs:
            rows.append({**base, "m": r.meta.m, "sqrt_eps": math.sqrt(r.meta.eps_trunc),
                         "value": r.value, "key": r.key})
        if len({r.meta.m for r in recs}) < 3:
            continue
        fit = extrapolate_truncation([r.value for r in recs], [r.meta.eps_trunc for r in recs])
        fits.append({**base, "extrapolated": fit.params["intercept"], "slope": fit.params["slope"],
                     "residual": fit.residual, "flags": ";".join(fit.flags)})
    if not rows:
        out.missing.append("dmrg 记录（至少三个不同 dmrg.max_bond）")
    elif not fits:
        out.missing.append("同一观测量至少需要三个不同键维 m")
    out.tables["values"] = _table(rows)
    out.tables["extrapolation"] = _table(fits)
    out.plots.append(PlotSpec("values", "sqrt_eps", "value", "name", title="对 √ε 外推"))
    return out


REPORTS: dict[str, Callable[[list[ObservableRecord]], ReportOutput]] = {
    "string-tension": report_string_tension,
    "electric-profile": report_electric_profile,
    "order-parameter": report_order_parameter,
    "phase-diagram": report_phase_diagram,
    "fidelity": report_fidelity,
    "central-charge": report_central_charge,
    "susceptibility": report_susceptibility,
    "meson-decay": report_meson_decay,
    "screening": report_screening,
    "truncation": report_truncation,
}


# ---------- 输出 ----------


PLOT_TEMPLATE = '''"""由 zn-ladder report 生成。用法：python plot.py"""

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).parent
PLOTS = {plots}


def read(name):
    with open(HERE / f"{{name}}.csv", newline="") as f:
        return list(csv.DictReader(f))


def as_float(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return None


for i, p in enumerate(PLOTS):
    rows = read(p["table"])
    if not rows:
        continue
    series = defaultdict(list)
    for row in rows:
        x, y = as_float(row.get(p["x"])), as_float(row.get(p["y"]))
        if x is None or y is None:
            continue
        series[row.get(p["group"], "") if p["group"] else ""].append((x, y))
    fig, ax = plt.subplots()
    for label, pts in sorted(series.items()):
        pts.sort()
        ax.plot([a for a, _ in pts], [b for _, b in pts], "o-", label=f"{{p['group']}}={{label}}" if label else None)
    if p["logx"]:
        ax.set_xscale("log")
    if p["logy"]:
        ax.set_yscale("log")
    ax.set_xlabel(p["x"])
    ax.set_ylabel(p["y"])
    ax.set_title(p["title"])
    if len(series) > 1:
        ax.legend()
    fig.savefig(HERE / f"{{i:02d}}_{{p['table']}}_{{p['y']}}.png", dpi=150, bbox_inches="tight")
'''


def plot_script(plots: list[PlotSpec]) -> str:
    specs = [
        {"table": p.table, "x": p.x, "y": p.y, "group": p.group,
         "logx": p.logx, "logy": p.logy, "title": p.title}
        for p in plots
    ]
    return PLOT_TEMPLATE.format(plots=repr(specs))


def write_report(output: ReportOutput, outdir: str | Path) -> Path:
    d = Path(outdir) / output.kind
    d.mkdir(parents=True, exist_ok=True)
    for name, table in output.tables.items():
        if table.num_columns:
            pacsv.write_csv(table, str(d / f"{name}.csv"))
        else:
            (d / f"{name}.csv").write_text("", encoding="utf-8")
    (d / "plot.py").write_text(plot_script(output.plots), encoding="utf-8")
    if output.missing:
        (d / "MISSING.txt").write_text("\n".join(output.missing) + "\n", encoding="utf-8")
    return d


def generate_report(kind: str, store: ResultStore, outdir: str | Path) -> ReportOutput:
    """生成一种报告并写盘。缺失输入记录在 output.missing 中，由调用方决定退出码。"""
    try:
        builder = REPORTS[kind]
    except KeyError:
        raise ValueError(f"未知报告类型: {kind}；可选: {', '.join(REPORTS)}") from None
    output = builder(store.query())
    path = write_report(output, outdir)
    if output.missing:
        logger.warning("报告 %s 缺少 %d 项输入", kind, len(output.missing))
    logger.info("报告已写入 %s", path)
    return output


def predictions_table(predictions: list[Prediction]) -> pa.Table:
    return _table([
        {"name": p.name, "formula": p.formula, "regime": p.regime, "value": p.value,
         "inputs": json.dumps(p.inputs, sort_keys=True), "note": p.note}
        for p in predictions
    ])


def write_predictions(predictions: list[Prediction], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pacsv.write_csv(predictions_table(predictions), str(path))
