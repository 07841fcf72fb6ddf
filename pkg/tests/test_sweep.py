import asyncio
import logging

import pytest

from ed import dense_spectrum
from errors import ConfigError, DimensionError
from hamiltonian import build_unitary_gauge
from models import DmrgParams
from store import ResultStore, run_key
from sweep import (
    KNOWN_OBSERVABLES,
    MEASUREMENTS,
    centered_pairs,
    check_observables,
    grid_points,
    hilbert_dim,
    measure_point,
    point_meta,
    run_sweep,
)


def by_name(records):
    out = {}
    for r in records:
        out.setdefault(r.name, []).append(r)
    return out


def test_every_known_observable_is_measurable():
    assert set(KNOWN_OBSERVABLES) == set(MEASUREMENTS)
    assert check_observables(["energy", "meson_rho"]) == (True, "")
    ok, msg = check_observables(["energy", "magnetisation"])
    assert not ok and "magnetisation" in msg


def test_centered_pairs():
    assert centered_pairs(2) == [(1, 2)]
    assert centered_pairs(6) == [(3, 4), (2, 4), (2, 5), (1, 5), (1, 6)]


def test_grid_points_default_to_single_point(ed_config):
    assert grid_points(ed_config()) == [(0.8, 1.1)]
    cfg = ed_config(g_grid=[0.5, 1.0], lam_grid=[2.0])
    assert grid_points(cfg) == [(0.5, 2.0), (1.0, 2.0)]


def test_hilbert_dim(ed_config):
    assert hilbert_dim(ed_config()) == 2**6
    assert hilbert_dim(ed_config(model="full")) == 2**10


def test_point_meta_bond_dimension(ed_config):
    cfg = ed_config(dmrg=DmrgParams(max_bond=48))
    assert point_meta(cfg, 0.8, 1.1, "ed").m is None
    assert point_meta(cfg, 0.8, 1.1, "dmrg").m == 48


def test_measure_point_ed(ed_config):
    cfg = ed_config(
        k=2,
        observables=[
            "energy", "spectrum", "variance", "order_parameter", "meson_up", "thooft_rho",
            "rung_correlator", "electric_profile", "entropy", "fidelity", "susceptibility",
        ],
    )
    records = measure_point(cfg, 0.8, 1.1, "ed")
    assert all(r.status == "ok" for r in records), [r.message for r in records]
    assert len({r.key for r in records}) == 1
    named = by_name(records)

    exact = dense_spectrum(build_unitary_gauge(cfg.spec(), cfg.couplings()), k=2).eigenvalues
    assert named["energy"][0].value == pytest.approx(exact[0], abs=1e-10)
    assert named["spectrum"][0].value == pytest.approx(exact[1] - exact[0], abs=1e-10)
    assert named["variance"][0].value == pytest.approx(0.0, abs=1e-9)
    assert len(named["order_parameter"]) == 2 * cfg.L
    assert "mean_re" in named["order_parameter_avg"][0].data
    assert named["meson_up"][0].args == {"x": 1, "y": 2, "d": 1}
    assert len(named["thooft_rho"]) == cfg.L
    assert len(named["electric"]) == 6
    assert "central_charge" not in named
    assert named["fidelity"][0].args == {"param": "lam"}
    assert {"chi_tau", "chi_sigma"} <= named.keys()


def test_measure_point_full_model_matches_unitary(ed_config):
    unitary = by_name(measure_point(ed_config(), 0.8, 1.1, "ed"))
    full = by_name(measure_point(ed_config(model="full"), 0.8, 1.1, "ed"))
    assert full["energy"][0].value == pytest.approx(unitary["energy"][0].value, abs=1e-10)


def test_measure_point_dmrg(ed_config):
    cfg = ed_config(task="dmrg", dmrg=DmrgParams(max_bond=16), observables=["energy", "variance"])
    records = by_name(measure_point(cfg, 0.8, 1.1, "dmrg"))
    exact = dense_spectrum(build_unitary_gauge(cfg.spec(), cfg.couplings()), k=1).ground_energy
    energy = records["energy"][0]
    assert energy.value == pytest.approx(exact, abs=1e-8)
    assert energy.meta.m == 16
    assert energy.meta.eps_trunc is not None
    assert len(energy.data["sweep_energies"]) == len(energy.data["truncation_errors"])


def test_observable_failure_becomes_record(ed_config):
    cfg = ed_config(task="dmrg", dmrg=DmrgParams(max_bond=16), observables=["spectrum", "energy"])
    records = measure_point(cfg, 0.8, 1.1, "dmrg")
    assert [r.status for r in records] == ["ok", "failed"]
    assert records[-1].name == "spectrum"
    assert "ValueError" in records[-1].message


def test_ground_state_failure_becomes_record(ed_config):
    cfg = ed_config(task="dmrg", dmrg=DmrgParams(max_bond=16, max_sweeps=1))
    records = measure_point(cfg, 0.8, 1.1, "dmrg")
    assert len(records) == 1
    assert records[0].status == "failed" and records[0].name == "ground_state"
    assert "能量历史" in records[0].message


def test_checkpoint_written_and_reused(ed_config, tmp_path, caplog):
    cfg = ed_config(task="dmrg", dmrg=DmrgParams(max_bond=16), checkpoint=True)
    key = run_key(point_meta(cfg, 0.8, 1.1, "dmrg"), "dmrg")
    measure_point(cfg, 0.8, 1.1, "dmrg")
    ckpt = tmp_path / "results" / "checkpoints" / f"{key}.znmps"
    assert ckpt.exists()
    with caplog.at_level(logging.INFO, logger="sweep"):
        records = measure_point(cfg, 0.8, 1.1, "dmrg")
    assert records[0].status == "ok"
    assert "检查点" in caplog.text


def test_run_sweep_skips_completed_points(ed_config, caplog):
    cfg = ed_config(task="sweep", sweep_task="ed", g_grid=[0.5, 0.9], lam_grid=[1.0])
    store = ResultStore(cfg.output)
    first = asyncio.run(run_sweep(cfg, store))
    assert (first.total, first.ok, first.failed, first.skipped) == (2, 2, 0, 0)
    assert first.records == 2
    assert len(store.completed_keys()) == 2

    with caplog.at_level(logging.INFO, logger="sweep"):
        second = asyncio.run(run_sweep(cfg, store))
    assert (second.skipped, second.records) == (2, 0)
    assert caplog.text.count("skipped:") == 2
    assert len(store.load()) == 2


def test_run_sweep_rejects_unknown_observable(ed_config, tmp_path):
    cfg = ed_config(observables=["energy", "magnetisation"])
    with pytest.raises(ConfigError) as info:
        asyncio.run(run_sweep(cfg, ResultStore(tmp_path)))
    assert info.value.key == "observables"


def test_run_sweep_refuses_huge_ed(ed_config, tmp_path):
    cfg = ed_config(N=5, L=5)
    with pytest.raises(DimensionError):
        asyncio.run(run_sweep(cfg, ResultStore(tmp_path)))
    assert not (tmp_path / "records.jsonl").exists()
