import numpy as np
import pytest

from clock import clock_matrices
from ed import (
    DenseState,
    apply_terms,
    clock_two_copy_check,
    dense_spectrum,
    ground_degeneracy,
    ground_state,
    product_state_energy,
    project_gauss,
    sector_state,
    sparse_ground,
    to_dense,
)
from errors import DimensionError, SectorError
from hamiltonian import (
    build_full,
    build_unitary_gauge,
    gauss_charges,
    gauss_operators,
)
from models import Couplings, LadderSpec, StaticCharge
from observables import expect_terms


def test_apply_terms_matches_matrix(rough_smooth, couplings, rng):
    terms = build_unitary_gauge(rough_smooth, couplings)
    v = rng.standard_normal(terms.dim) + 1j * rng.standard_normal(terms.dim)
    assert np.allclose(apply_terms(terms, v), to_dense(terms) @ v, atol=1e-12)


def test_sparse_agrees_with_dense():
    terms = build_unitary_gauge(LadderSpec(N=2, L=3), Couplings(g=0.6, lam=0.9))
    dense = dense_spectrum(terms, k=3)
    sparse = sparse_ground(terms, k=3, seed=7)
    assert np.allclose(sparse.eigenvalues, dense.eigenvalues, atol=1e-8)
    assert sparse.residual < 1e-6


def test_auto_engine_small_system_is_dense(rough_smooth, couplings):
    terms = build_unitary_gauge(rough_smooth, couplings)
    res = ground_state(terms, k=2)
    assert len(res.eigenvalues) == 2
    assert res.eigenvalues[0] <= res.eigenvalues[1]


def test_ground_degeneracy():
    assert ground_degeneracy([0.0, 0.0, 1e-12, 1.0]) == 3
    assert ground_degeneracy([-1.0, 0.5]) == 1


def test_dense_limit_raises():
    terms = build_unitary_gauge(LadderSpec(N=3, L=4), Couplings())
    with pytest.raises(DimensionError):
        to_dense(terms)


def test_sparse_rejects_too_many_states(rough_smooth, couplings):
    with pytest.raises(ValueError):
        sparse_ground(build_unitary_gauge(rough_smooth, couplings), k=11)


def test_sector_ground_state_satisfies_gauss_law():
    spec = LadderSpec(N=2, L=2)
    c = Couplings(g=0.9, lam=1.2)
    H = build_full(spec, c)
    gens, charges = gauss_operators(spec), gauss_charges(spec)
    sector = project_gauss(H, gens, charges)
    assert sector.dim == 2 ** (H.chain_length - 2 * spec.L)
    res = dense_spectrum(sector, k=1)
    psi = sector_state(sector, res.ground_vector)

    alg = clock_matrices(spec.N)
    for gen, q in zip(gens, charges):
        ops = [(s, alg.operator(n)) for s, n in gen.terms[0].factors]
        assert psi.expect(ops) == pytest.approx(alg.omega**q, abs=1e-10)
    assert expect_terms(psi, H).real == pytest.approx(res.ground_energy, abs=1e-10)


def test_charged_sector_ground_state():
    spec = LadderSpec(N=3, L=2, static_charges=(StaticCharge(r=2, leg="up", q=1),))
    c = Couplings(g=0.5, lam=0.8)
    gens, charges = gauss_operators(spec), gauss_charges(spec)
    sector = project_gauss(build_full(spec, c), gens, charges)
    assert "q=0,0,1,0" in sector.label
    full = dense_spectrum(sector, k=1).ground_energy
    unitary = dense_spectrum(build_unitary_gauge(spec, c), k=1).ground_energy
    assert full == pytest.approx(unitary, abs=1e-10)


def test_project_gauss_validates_inputs(rough_smooth, couplings):
    H = build_full(rough_smooth, couplings)
    gens = gauss_operators(rough_smooth)
    with pytest.raises(ValueError):
        project_gauss(H, gens, [0])


def test_empty_sector_raises():
    # 同一生成元被要求取两个不同的本征相位
    spec = LadderSpec(N=2, L=2)
    H = build_full(spec, Couplings())
    gen = gauss_operators(spec)[0]
    with pytest.raises(SectorError):
        project_gauss(H, [gen, gen], [0, 1])


@pytest.mark.parametrize("lam", [0.3, 0.75, 1.5])
def test_clock_limit_two_copies(lam):
    e4, e2 = clock_two_copy_check(LadderSpec(N=4, L=3), Couplings(g=0.0, lam=lam))
    assert e4 == pytest.approx(e2, abs=1e-8)


def test_product_state_energy_matches_dense_state(rough_smooth, couplings, rng):
    terms = build_unitary_gauge(rough_smooth, couplings)
    locals_ = [rng.standard_normal(3) + 1j * rng.standard_normal(3) for _ in range(terms.chain_length)]
    vec = locals_[0]
    for v in locals_[1:]:
        vec = np.kron(vec, v)
    psi = DenseState(vec, terms.N, terms.chain_length)
    assert product_state_energy(terms, locals_) == pytest.approx(expect_terms(psi, terms).real, abs=1e-10)


def test_dense_state_overlap_is_normalized(rng):
    a = DenseState(rng.standard_normal(8) * 3.0, 2, 3)
    assert abs(a.overlap(a)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        a.overlap(DenseState(np.ones(4), 2, 2))
