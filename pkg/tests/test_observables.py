import numpy as np
import pytest

from clock import clock_matrices
from dmrg import dmrg_ground
from ed import DenseState, dense_spectrum, dense_state, project_gauss, sector_state
from hamiltonian import (
    build_full,
    build_unitary_gauge,
    chain_layout,
    gauss_charges,
    gauss_operators,
    link,
)
from models import Couplings, DmrgParams, LadderSpec
from mpo import compile_mpo
from observables import (
    averaged_order_parameter,
    electric_profile,
    entanglement_profile,
    fidelity_susceptibility,
    hamiltonian_susceptibilities,
    leg_links,
    meson,
    meson_operator,
    order_parameter,
    rung_correlator,
    thooft,
    thooft_operator,
)

LADDER = LadderSpec(N=2, L=3)
COUPLINGS = Couplings(g=0.8, lam=1.1)


def exact_ground(terms):
    return dense_state(terms, dense_spectrum(terms, k=1))


@pytest.fixture(scope="module")
def unitary_ground():
    return exact_ground(build_unitary_gauge(LADDER, COUPLINGS))


@pytest.fixture(scope="module")
def layout():
    return chain_layout(LADDER, "unitary")


def test_strings_are_bounded(unitary_ground, layout):
    for r in range(1, LADDER.L + 1):
        for s in ("up", "down"):
            assert abs(order_parameter(unitary_ground, layout, r, s)) <= 1 + 1e-12
        for variant in ("up", "down", "sigma", "rho"):
            assert abs(thooft(unitary_ground, layout, r, variant)) <= 1 + 1e-12
    for variant in ("up", "down", "sigma", "rho"):
        assert abs(meson(unitary_ground, layout, 1, 3, variant)) <= 1 + 1e-12
    assert abs(rung_correlator(unitary_ground, layout, 1, 3)) <= 1 + 1e-12


def test_coincident_endpoints_give_one(unitary_ground, layout):
    assert meson(unitary_ground, layout, 2, 2) == 1
    assert rung_correlator(unitary_ground, layout, 2, 2) == 1


def test_meson_endpoint_checks(layout):
    with pytest.raises(ValueError):
        meson_operator(layout, 3, 1)
    with pytest.raises(ValueError):
        meson_operator(layout, 0, 2)


def test_thooft_rho_reduces_to_two_links():
    lay = chain_layout(LadderSpec(N=3, L=4), "unitary")
    op = thooft_operator(lay, 2, "rho")
    assert set(op.factors) == {link(2, "up"), link(2, "down")}
    assert op.coeff == pytest.approx(1.0)


def test_thooft_needs_smooth_right_boundary():
    lay = chain_layout(LadderSpec(N=3, L=3, boundary_right="rough"), "unitary")
    with pytest.raises(ValueError):
        thooft_operator(lay, 1)


def test_order_parameter_needs_rough_left_boundary():
    spec = LadderSpec(N=3, L=3, boundary_left="smooth")
    psi = DenseState(np.ones(3**7), 3, 7)
    with pytest.raises(ValueError):
        order_parameter(psi, chain_layout(spec, "unitary"), 1, "up")


def test_strings_rejected_on_axial_layout():
    lay = chain_layout(LadderSpec(N=3, L=3), "axial")
    with pytest.raises(ValueError):
        meson_operator(lay, 1, 3)


def test_unitary_and_full_gauge_agree():
    spec = LadderSpec(N=2, L=2)
    c = Couplings(g=0.9, lam=1.2)
    sector = project_gauss(build_full(spec, c), gauss_operators(spec), gauss_charges(spec))
    full_psi = sector_state(sector, dense_spectrum(sector, k=1).ground_vector)
    unitary_psi = exact_ground(build_unitary_gauge(spec, c))
    full_lay, unitary_lay = chain_layout(spec, "full"), chain_layout(spec, "unitary")

    for r in (1, 2):
        assert order_parameter(full_psi, full_lay, r, "up") == pytest.approx(
            order_parameter(unitary_psi, unitary_lay, r, "up"), abs=1e-8
        )
    assert meson(full_psi, full_lay, 1, 2, "rho") == pytest.approx(
        meson(unitary_psi, unitary_lay, 1, 2, "rho"), abs=1e-8
    )
    assert thooft(full_psi, full_lay, 1, "sigma") == pytest.approx(
        thooft(unitary_psi, unitary_lay, 1, "sigma"), abs=1e-8
    )
    assert rung_correlator(full_psi, full_lay, 1, 2) == pytest.approx(
        rung_correlator(unitary_psi, unitary_lay, 1, 2), abs=1e-8
    )
    full_e = electric_profile(full_psi, full_lay)
    unitary_e = electric_profile(unitary_psi, unitary_lay)
    assert full_e.keys() == unitary_e.keys()
    for key, value in unitary_e.items():
        assert full_e[key] == pytest.approx(value, abs=1e-8)


def test_exact_and_dmrg_observables_agree(unitary_ground, layout):
    terms = build_unitary_gauge(LADDER, COUPLINGS)
    mps = dmrg_ground(compile_mpo(terms), DmrgParams(max_bond=32), seed=5).mps
    assert order_parameter(mps, layout, 2, "down") == pytest.approx(
        order_parameter(unitary_ground, layout, 2, "down"), abs=1e-6
    )
    assert meson(mps, layout, 1, 3, "sigma") == pytest.approx(
        meson(unitary_ground, layout, 1, 3, "sigma"), abs=1e-6
    )
    assert np.allclose(
        entanglement_profile(mps, layout), entanglement_profile(unitary_ground, layout), atol=1e-6
    )


def test_averaged_order_parameter(unitary_ground, layout):
    mean_abs, mean_re = averaged_order_parameter(unitary_ground, layout)
    assert mean_abs >= abs(mean_re) - 1e-12
    with pytest.raises(ValueError):
        averaged_order_parameter(unitary_ground, layout, window=(2, 5))


def test_electric_profile_on_tau_eigenstate():
    spec = LadderSpec(N=3, L=2)
    lay = chain_layout(spec, "unitary")
    f1 = clock_matrices(3).fourier[:, 1]
    vec = f1
    for _ in range(lay.chain_length - 1):
        vec = np.kron(vec, f1)
    profile = electric_profile(DenseState(vec, 3, lay.chain_length), lay)
    assert len(profile) == lay.chain_length
    assert all(v == pytest.approx(1.0) for v in profile.values())


def test_leg_links_follow_boundaries():
    assert leg_links(LadderSpec(N=2, L=3), "up") == [link(1, "up"), link(2, "up"), link(3, "up")]
    assert leg_links(LadderSpec(N=2, L=3, boundary_left="smooth", boundary_right="rough"), "down") == [
        link(2, "down"),
        link(3, "down"),
        link(4, "down"),
    ]


def test_fidelity_of_parameter_independent_state(unitary_ground):
    res = fidelity_susceptibility(lambda _: unitary_ground, 1.0, 1e-3, volume=9)
    assert res.chi == pytest.approx(0.0, abs=1e-9)
    assert res.overlap == pytest.approx(1.0)
    assert not res.flags


def test_fidelity_susceptibility_is_positive():
    def solve(lam):
        return exact_ground(build_unitary_gauge(LADDER, Couplings(g=0.8, lam=lam)))

    res = fidelity_susceptibility(solve, 1.1, 1e-3, volume=3 * LADDER.L)
    assert res.chi > 0
    assert res.rel_change < 0.05


def test_fidelity_rejects_bad_step(unitary_ground):
    with pytest.raises(ValueError):
        fidelity_susceptibility(lambda _: unitary_ground, 1.0, 0.0, volume=1)


def test_fidelity_flags_orthogonal_states():
    a = DenseState(np.array([1.0, 0.0]), 2, 1)
    b = DenseState(np.array([0.0, 1.0]), 2, 1)
    res = fidelity_susceptibility(lambda lam: a if lam == 0.5 else b, 0.5, 0.1, volume=1)
    assert res.chi is None
    assert "overlap_near_zero" in res.flags


def test_hamiltonian_susceptibilities():
    res = hamiltonian_susceptibilities("unitary", LADDER, COUPLINGS, solve=exact_ground, step=1e-2)
    assert np.isfinite(res.chi_tau) and np.isfinite(res.chi_sigma)
    assert res.chi_tau == pytest.approx(res.chi_tau_half, rel=1e-2, abs=1e-6)
    assert res.chi_sigma == pytest.approx(res.chi_sigma_half, rel=1e-2, abs=1e-6)


def test_susceptibility_guards():
    with pytest.raises(ValueError):
        hamiltonian_susceptibilities("clock", LADDER, COUPLINGS, solve=exact_ground)
    with pytest.raises(ValueError):
        hamiltonian_susceptibilities(
            "unitary", LADDER, Couplings(g=0.005, lam=1.0), solve=exact_ground, step=1e-2
        )
