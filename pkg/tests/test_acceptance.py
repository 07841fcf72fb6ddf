"""较大尺寸的物理复现检查，默认不运行：pytest -m acceptance"""

import numpy as np
import pytest

from analytics import quasiadiabatic_xi, screening_radius, string_tension_strong, string_tension_weak
from dmrg import dmrg_ground
from ed import clock_two_copy_check, dense_state, ground_state
from fitting import compare_decay_models, find_peaks, fit_decay, fit_string_tension
from hamiltonian import build_pure_axial, build_unitary_gauge, chain_layout
from models import Couplings, DmrgParams, LadderSpec, RgThresholds, RunConfig, StaticCharge
from mpo import compile_mpo
from observables import averaged_order_parameter, electric_profile, entanglement_profile, meson
from rg import bare_state, classify_point, raster, stop_thresholds
from sweep import measure_point

pytestmark = pytest.mark.acceptance

LAMS = [round(x, 4) for x in np.linspace(0.1, 2.5, 49)]


def dmrg_records(cfg: RunConfig, g: float, lam: float) -> dict[str, list]:
    out: dict[str, list] = {}
    for rec in measure_point(cfg, g, lam, "dmrg"):
        assert rec.status == "ok", rec.message
        out.setdefault(rec.name, []).append(rec)
    return out


def coulomb_lams(N: int) -> list[float]:
    points = raster(N, [0.0], LAMS, max_workers=4)
    return [p.lam for p in points if p.phase.label == "Coulomb"]


@pytest.mark.parametrize("lam", [0.5, 1.0])
def test_clock_limit_two_copies_longer_ladder(lam):
    e4, e2 = clock_two_copy_check(LadderSpec(N=4, L=5), Couplings(g=0.0, lam=lam))
    assert e4 == pytest.approx(e2, abs=1e-7)


def test_dmrg_matches_sparse_diagonalization_n3():
    terms = build_unitary_gauge(LadderSpec(N=3, L=3), Couplings(g=0.9, lam=1.2))
    exact = ground_state(terms).ground_energy
    res = dmrg_ground(compile_mpo(terms), DmrgParams(max_bond=81), seed=7)
    assert res.converged
    assert res.energy == pytest.approx(exact, abs=1e-7)


def test_strong_coupling_string_tension():
    # 重物质（2m ≫ 4𝒯）下弦不断裂，ΔE(R) 的斜率即弦张力
    N, L, g, lam = 3, 5, 4.0, 0.05
    c = Couplings(g=g, lam=lam)
    base = LadderSpec(N=N, L=L, boundary_left="smooth", boundary_right="smooth")
    e0 = ground_state(build_unitary_gauge(base, c)).ground_energy
    R_values, dE = [], []
    for R in range(1, L):
        charges = (StaticCharge(r=1, leg="up", q=1), StaticCharge(r=1 + R, leg="up", q=-1))
        spec = base.model_copy(update={"static_charges": charges})
        R_values.append(R)
        dE.append(ground_state(build_unitary_gauge(spec, c)).ground_energy - e0)
    fit = fit_string_tension(R_values, dE)
    assert fit.params["tension"] == pytest.approx(string_tension_strong(N, g).value, rel=1e-2)


def test_pure_gauge_string_tension_strong_coupling():
    N, L, g = 5, 7, 10.0
    c = Couplings(g=g, lam=0.0)
    base = LadderSpec(N=N, L=L)
    e0 = ground_state(build_pure_axial(base, c)).ground_energy
    R_values, dE = [], []
    for R in range(1, L - 1):
        charges = (StaticCharge(r=2, leg="up", q=1), StaticCharge(r=2 + R, leg="up", q=-1))
        spec = base.model_copy(update={"static_charges": charges})
        R_values.append(R)
        dE.append(ground_state(build_pure_axial(spec, c)).ground_energy - e0)
    fit = fit_string_tension(R_values, dE)
    assert fit.residual < 1e-3 * fit.params["tension"]
    assert fit.params["tension"] == pytest.approx(string_tension_strong(N, g).value, rel=1e-2)


def test_dmrg_matches_exact_at_random_points():
    spec = LadderSpec(N=3, L=4)
    layout = chain_layout(spec, "unitary")
    rng = np.random.default_rng(20)
    for g, lam in rng.uniform(0.3, 2.0, size=(5, 2)):
        terms = build_unitary_gauge(spec, Couplings(g=g, lam=lam))
        exact = ground_state(terms, tol=1e-12)
        psi_ed = dense_state(terms, exact)
        res = dmrg_ground(compile_mpo(terms), DmrgParams(max_bond=200, max_sweeps=30), seed=1)
        assert res.energy == pytest.approx(exact.ground_energy, rel=1e-8)
        for a, b in (
            (averaged_order_parameter(res.mps, layout), averaged_order_parameter(psi_ed, layout)),
            (meson(res.mps, layout, 1, 3), meson(psi_ed, layout, 1, 3)),
        ):
            assert np.allclose(a, b, atol=1e-8)
        e_dmrg, e_ed = electric_profile(res.mps, layout), electric_profile(psi_ed, layout)
        assert all(e_dmrg[k] == pytest.approx(e_ed[k], abs=1e-8) for k in e_ed)
        assert np.allclose(entanglement_profile(res.mps, layout), entanglement_profile(psi_ed, layout), atol=1e-7)


def test_pure_gauge_string_tension_weak_coupling():
    N, L, g = 5, 8, 0.02
    c = Couplings(g=g, lam=0.0)
    base = LadderSpec(N=N, L=L)
    e0 = ground_state(build_pure_axial(base, c), tol=1e-13).ground_energy
    R_values, dE = [], []
    for R in range(1, L - 2):
        charges = (StaticCharge(r=2, leg="up", q=1), StaticCharge(r=2 + R, leg="up", q=-1))
        spec = base.model_copy(update={"static_charges": charges})
        R_values.append(R)
        dE.append(ground_state(build_pure_axial(spec, c), tol=1e-13).ground_energy - e0)
    fit = fit_string_tension(R_values, dE)
    assert fit.params["tension"] == pytest.approx(string_tension_weak(N, g).value, rel=0.1)


def test_clock_limit_transition_window():
    cfg = RunConfig(
        task="dmrg", model="clock", N=3, L=64, g=0.0, lam_b=0.1,
        dmrg=DmrgParams(max_bond=64, max_sweeps=30), observables=["order_parameter"],
    )
    lams = np.round(np.arange(0.5, 1.001, 0.05), 4)
    order = [dmrg_records(cfg, 0.0, lam)["order_parameter_avg"][0].value for lam in lams]
    slope = np.abs(np.diff(order) / np.diff(lams))
    i = int(np.argmax(slope))
    assert 0.65 <= 0.5 * (lams[i] + lams[i + 1]) <= 0.85
    assert order[-1] > order[0]


def test_coulomb_central_charge():
    cfg = RunConfig(
        task="dmrg", N=5, L=64, g=0.001, lam=0.75,
        dmrg=DmrgParams(max_bond=300, max_sweeps=40), observables=["entropy"],
    )
    (c,) = dmrg_records(cfg, 0.001, 0.75)["central_charge"]
    assert 0.9 <= c.value <= 1.15


def fidelity_scan(L: int, lams: np.ndarray) -> list[float]:
    cfg = RunConfig(
        task="dmrg", N=5, L=L, g=0.2,
        dmrg=DmrgParams(max_bond=100, max_sweeps=30), observables=["fidelity"], fidelity_param="lam",
    )
    return [dmrg_records(cfg, 0.2, lam)["fidelity"][0].value for lam in lams]


def test_bkt_fidelity_peaks():
    lams = np.round(np.arange(0.55, 0.951, 0.025), 4)
    small, large = fidelity_scan(32, lams), fidelity_scan(81, lams)
    peaks = find_peaks(lams, large)
    for target in (0.655, 0.83):
        near = [(x, y) for x, y in peaks if abs(x - target) <= 0.05]
        assert near, f"λ={target} 附近没有 χ_F 峰: {peaks}"
        x, y = max(near, key=lambda p: p[1])
        i = int(np.argmin(np.abs(lams - x)))
        assert small[i] < y < 2 * small[i]


def test_quasiadiabatic_meson_scaling():
    N, L, lam = 5, 81, 0.4
    gs = [0.05, 0.0707, 0.1]
    cfg = RunConfig(
        task="dmrg", N=N, L=L, lam=lam,
        dmrg=DmrgParams(max_bond=100, max_sweeps=30), observables=["meson_sigma"],
    )
    fits = []
    for g in gs:
        recs = dmrg_records(cfg, g, lam)["meson_sigma"]
        fits.append(fit_decay([r.args["d"] for r in recs], [abs(r.value) for r in recs]))
    xi = [f.params["xi"] for f in fits]
    stable = all(not f.flags and x < 10 * L for f, x in zip(fits, xi))
    if stable:
        slope = np.polyfit(np.log(gs), np.log(xi), 1)[0]
        assert slope == pytest.approx(-4.0, abs=0.5)
        for g, x in zip(gs, xi):
            ref = quasiadiabatic_xi(N, g, lam).value
            assert ref / 3 <= x <= 3 * ref
    else:
        # ξ ≫ L 时只检查比值
        assert 8 <= xi[0] / xi[-1] <= 32


def charge_pair(r: int, R: int) -> list[StaticCharge]:
    return [StaticCharge(r=r, leg="up", q=1), StaticCharge(r=r + R, leg="up", q=-1)]


def inter_charge_field(g: float, lam: float, L: int, x: int, R: int) -> tuple[list[int], list[float]]:
    """左电荷右侧、两电荷之间上腿链上的 |⟨E⟩|，按到左电荷的距离排列。"""
    cfg = RunConfig(
        task="dmrg", N=5, L=L, lam=lam, static_charges=charge_pair(x, R),
        dmrg=DmrgParams(max_bond=100, max_sweeps=30), observables=["electric_profile"],
    )
    recs = dmrg_records(cfg, g, lam)["electric"]
    field = {r.args["r"]: abs(r.value) for r in recs if r.args["link"] == "up"}
    d = list(range(1, R // 2 + 1))
    return d, [field[x + k] for k in d]


def test_coulomb_field_profile_is_algebraic():
    d, E = inter_charge_field(0.01, 0.75, 40, 10, 20)
    best, _ = compare_decay_models(d, E)
    assert best == "power_law"


def test_higgs_field_profile_is_exponential():
    d, E = inter_charge_field(0.2, 1.4, 40, 10, 20)
    best, _ = compare_decay_models(d, E)
    assert best == "exponential"


def delta_e(g: float, lam: float, L: int, x: int, Rs: list[int]) -> list[float]:
    params = DmrgParams(max_bond=100, max_sweeps=30)
    base = RunConfig(task="dmrg", N=5, L=L, lam=lam, dmrg=params)
    e0 = dmrg_records(base, g, lam)["energy"][0].value
    out = []
    for R in Rs:
        cfg = base.model_copy(update={"static_charges": charge_pair(x, R)})
        out.append(dmrg_records(cfg, g, lam)["energy"][0].value - e0)
    return out


def test_higgs_string_breaks_beyond_screening_radius():
    g, lam = 0.6, 1.4
    R_star = screening_radius(5, g, lam).value
    Rs = list(range(1, 13))
    dE = delta_e(g, lam, 24, 6, Rs)
    head = fit_string_tension(Rs[:3], dE[:3]).params["tension"]
    tail = [R for R in Rs if R > R_star + 2]
    assert len(tail) >= 3
    tail_slope = fit_string_tension(tail, [dE[R - 1] for R in tail]).params["tension"]
    assert head > 0
    assert abs(tail_slope) < 0.2 * head


def test_quadrupolar_string_stays_linear():
    g, lam = 0.2, 0.4
    assert screening_radius(5, g, lam).value > 8
    Rs = list(range(1, 9))
    dE = delta_e(g, lam, 24, 6, Rs)
    fit = fit_string_tension(Rs, dE)
    assert fit.params["tension"] > 0
    assert fit.residual < 0.1 * fit.params["tension"] * max(Rs)


# ---------- RG 相图 ----------


@pytest.mark.parametrize("N", [3, 4])
def test_no_coulomb_window_for_small_n(N):
    assert coulomb_lams(N) == []


def test_coulomb_window_widens_with_n():
    five = coulomb_lams(5)
    assert 0.75 in five
    assert len(coulomb_lams(8)) > len(five)
    assert len(coulomb_lams(15)) > len(five)


def test_n5_raster_has_all_phases():
    gs = list(np.linspace(0.01, 1.5, 40))
    lams = list(np.linspace(0.1, 2.5, 40))
    labels = {p.phase.label for p in raster(5, gs, lams, max_workers=4)}
    assert {
        "Deconfined", "Quadrupolar", "Coulomb", "Higgs", "FullyConfined", "ConfinedRungDominated",
    } <= labels


REFERENCE_GRID = [(g, lam) for g in (0.0, 0.05, 0.3, 0.8, 1.4) for lam in (0.3, 0.6, 0.75, 1.0, 1.5, 2.2)]


def test_step_halving_keeps_labels():
    half = RgThresholds(dl_max=0.025)
    for g, lam in REFERENCE_GRID:
        a, b = classify_point(5, g, lam), classify_point(5, g, lam, half)
        assert a.label == b.label, (g, lam)
        if a.stop_reason in ("gapped", "rho_gapless"):
            assert b.stop_ell == pytest.approx(a.stop_ell, rel=1e-2)


def test_doubling_upper_threshold_rarely_changes_labels():
    changed = 0
    for g, lam in REFERENCE_GRID:
        _, upper = stop_thresholds(bare_state(5, g, lam), RgThresholds())
        doubled = RgThresholds(upper=2 * upper)
        changed += classify_point(5, g, lam).label != classify_point(5, g, lam, doubled).label
    assert changed < 0.1 * len(REFERENCE_GRID)
