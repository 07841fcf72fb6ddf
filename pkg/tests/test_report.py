import json
import math

import numpy as np
import pyarrow.csv as pacsv
import pytest

from models import ObservableRecord, Prediction, RunMeta, StaticCharge
from report import (
    REPORTS,
    PlotSpec,
    generate_report,
    plot_script,
    predictions_table,
    report_central_charge,
    report_fidelity,
    report_meson_decay,
    report_string_tension,
    report_susceptibility,
    report_truncation,
    write_predictions,
)
from store import ResultStore, run_key


def rec(name, value, task="dmrg", args=None, data=None, **meta_fields):
    fields = {"model": "unitary", "N": 3, "L": 12, "g": 1.0, "lam": 1.0, **meta_fields}
    meta = RunMeta(**fields)
    return ObservableRecord(
        key=run_key(meta, task), task=task, name=name, value=value,
        args=args or {}, data=data or {}, meta=meta,
    )


def pair(r1, r2):
    return [StaticCharge(r=r1, leg="up", q=1), StaticCharge(r=r2, leg="up", q=-1)]


def tension_records(g, tension=0.5, offset=0.2):
    out = [rec("energy", -10.0, g=g)]
    for R in (1, 2, 3, 4):
        out.append(rec("energy", -10.0 + tension * R + offset, g=g, static_charges=pair(4, 4 + R)))
    return out


def test_string_tension_report():
    out = report_string_tension(tension_records(1.0) + tension_records(2.0, tension=1.5))
    assert not out.missing
    delta = out.tables["delta_e"].to_pylist()
    assert [row["R"] for row in delta if row["g"] == 1.0] == [1, 2, 3, 4]
    assert all(row["key"] and row["base_key"] for row in delta)
    fits = {row["g"]: row["tension"] for row in out.tables["tension_fit"].to_pylist()}
    assert fits[1.0] == pytest.approx(0.5)
    assert fits[2.0] == pytest.approx(1.5)
    formulas = set(out.tables["tension_analytic"].column("formula").to_pylist())
    assert "weak_coupling_2g^3" in formulas


def test_string_tension_without_baseline():
    records = [r for r in tension_records(1.0) if r.meta.static_charges]
    out = report_string_tension(records)
    assert out.missing
    assert all("无电荷基准" in m for m in out.missing)


def test_fidelity_peaks():
    lams = np.linspace(0.5, 1.5, 21)
    records = []
    for L in (8, 16):
        for lam in lams:
            chi = 1.0 / (1.0 + 50 * (lam - 1.02) ** 2) * L
            records.append(rec("fidelity", chi, args={"param": "lam"}, data={"chi_half": chi}, L=L, lam=lam))
    out = report_fidelity(records)
    peaks = out.tables["peaks"].to_pylist()
    assert [p["L"] for p in peaks] == [8, 16]
    assert all(p["peak_x"] == pytest.approx(1.02, abs=0.02) for p in peaks)
    assert peaks[0]["inv_log_L"] == pytest.approx(1 / math.log(8))


def test_truncation_extrapolation_report():
    records = []
    for m, eps in ((16, 1e-4), (32, 1e-6), (64, 1e-8)):
        records.append(rec("energy", -4.0 + 2.0 * math.sqrt(eps), m=m, eps_trunc=eps))
    out = report_truncation(records)
    assert not out.missing
    (fit,) = out.tables["extrapolation"].to_pylist()
    assert fit["extrapolated"] == pytest.approx(-4.0)
    assert len(out.tables["values"]) == 3


def test_truncation_needs_three_bond_dimensions():
    records = [rec("energy", -4.0, m=m, eps_trunc=e) for m, e in ((16, 1e-4), (32, 1e-6))]
    out = report_truncation(records)
    assert out.missing


def test_central_charge_report():
    records = [
        rec("entropy", 0.5, data={"S": [0.3, 0.45, 0.5, 0.45, 0.3]}, L=6),
        rec("central_charge", 1.01, data={"c_alpha": 0.7, "residual": 1e-3}, L=64),
    ]
    out = report_central_charge(records)
    assert not out.missing
    assert len(out.tables["entropy"]) == 5
    assert out.tables["central_charge"].column("c").to_pylist() == [1.01]


def test_susceptibility_rows_merge_per_point():
    records = []
    for g in (0.5, 1.0, 1.5, 2.0):
        chi = -((g - 1.1) ** 2)
        records.append(rec("chi_tau", chi, data={"half": chi}, g=g))
        records.append(rec("chi_sigma", 0.1 * g, data={"half": 0.1 * g}, g=g))
    out = report_susceptibility(records)
    rows = out.tables["susceptibility"].to_pylist()
    assert len(rows) == 4
    assert all(row["chi_tau"] is not None and row["chi_sigma"] is not None for row in rows)
    (peak,) = out.tables["chi_tau_peaks"].to_pylist()
    assert peak["peak_g"] == pytest.approx(1.1)


def test_meson_decay_report():
    records = [
        rec("meson_sigma", 0.8 * math.exp(-d / 3.0), args={"x": 1, "y": 1 + d, "d": d}, g=0.4, lam=1.5)
        for d in range(1, 9)
    ]
    out = report_meson_decay(records)
    (fit,) = out.tables["xi_fit"].to_pylist()
    assert fit["xi"] == pytest.approx(3.0)
    formulas = set(out.tables["xi_analytic"].column("formula").to_pylist())
    assert formulas == {"quasiadiabatic", "product_state"}


@pytest.mark.parametrize("kind", sorted(REPORTS))
def test_empty_store_lists_missing_inputs(kind, tmp_path):
    out = generate_report(kind, ResultStore(tmp_path / "store"), tmp_path / "reports")
    assert out.missing
    d = tmp_path / "reports" / kind
    assert (d / "plot.py").exists()
    assert (d / "MISSING.txt").read_text(encoding="utf-8").strip()


def test_generate_report_writes_csv(tmp_path):
    store = ResultStore(tmp_path / "store")
    store.append(tension_records(1.0))
    out = generate_report("string-tension", store, tmp_path / "reports")
    assert not out.missing
    table = pacsv.read_csv(str(tmp_path / "reports" / "string-tension" / "delta_e.csv"))
    assert table.num_rows == 4
    assert not (tmp_path / "reports" / "string-tension" / "MISSING.txt").exists()


def test_unknown_report_kind(tmp_path):
    with pytest.raises(ValueError):
        generate_report("nope", ResultStore(tmp_path), tmp_path)


def test_plot_script_embeds_specs():
    text = plot_script([PlotSpec("delta_e", "R", "dE", "g", title="ΔE")])
    assert "'table': 'delta_e'" in text
    assert "matplotlib" in text
    compile(text, "plot.py", "exec")


def test_predictions_csv(tmp_path):
    preds = [Prediction(name="string_tension", formula="weak_coupling_2g^3", inputs={"N": 3, "g": 0.1}, value=0.002)]
    (inputs,) = predictions_table(preds).column("inputs").to_pylist()
    assert json.loads(inputs) == {"N": 3, "g": 0.1}
    path = tmp_path / "a" / "analytic.csv"
    write_predictions(preds, path)
    assert pacsv.read_csv(str(path)).num_rows == 1
