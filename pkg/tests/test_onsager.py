import math

import numpy as np
import pytest
from hypothesis import given, settings

import oracles as O
from strategies import seeds
from seaqt import composite as C
from seaqt import fixtures as fx
from seaqt import onsager as ON
from seaqt import single as S
from seaqt.opspace import (
    gell_mann_basis,
    project_orthogonal,
    random_density,
    random_hermitian,
    real_inner,
    spectral_decompose,
)

QD = spectral_decompose(fx.QUTRIT_D_RHO)
QD_GEN = S.GeneratorSet(fx.QUTRIT_D_H)
GM3 = ON.default_basis(3)
DIAG = (6, 7)  # positions of the two diagonal Gell-Mann matrices for dim 3

# 3x3 diagonal solve and weighted-residual covariances (tests/oracles.py), frozen
QD_F0 = 1.3040076684760487
QD_F_DIAG = np.array([-0.80471895621705, 0.3357727165747204])
QD_L_DIAG = np.array([[0.202247191011236, -0.11676747017318277],
                      [-0.11676747017318277, 0.06741573033707868]])
QD_DD = 0.20167217651265082


# ---------------------------------------------------------------- basis

def test_basis_validation():
    with pytest.raises(ON.BasisError):
        ON.ObservableBasis(())
    with pytest.raises(ON.BasisError):
        ON.ObservableBasis((np.array([[0, 1], [0, 0]]),))
    with pytest.raises(ON.BasisError):
        ON.ObservableBasis((fx.SIGMA_Z,), "weird")


def test_gell_mann_is_orthogonal_traceless():
    B = gell_mann_basis(4)
    assert len(B) == 15
    G = np.array([[np.trace(a @ b).real for b in B] for a in B])
    assert np.allclose(G, 2 * np.eye(15))
    assert all(abs(np.trace(b)) < 1e-15 for b in B)


# ---------------------------------------------------------------- affinities

def test_affinities_gibbs():
    beta = 0.8
    g = S.gibbs_state(QD_GEN, beta)
    basis = ON.ObservableBasis((fx.QUTRIT_D_H, np.diag([1.0, -1.0, 0.0])))
    aff = ON.affinities_from_state(g, basis)
    Z = np.sum(np.exp(-beta * np.array([0, 1, 2.0])))
    assert aff.f[0] == pytest.approx(beta, abs=1e-12)
    assert aff.f[1] == pytest.approx(0.0, abs=1e-12)
    assert aff.f0 == pytest.approx(math.log(Z), abs=1e-12)


def test_affinities_maximally_mixed():
    aff = ON.affinities_from_state(spectral_decompose(np.eye(3) / 3), GM3)
    assert np.allclose(aff.f, 0, atol=1e-13)
    assert aff.f0 == pytest.approx(math.log(3))


def test_affinities_qutrit_oracle():
    aff = ON.affinities_from_state(QD, GM3)
    assert aff.f0 == pytest.approx(QD_F0, abs=1e-12)
    assert np.allclose(aff.f[list(DIAG)], QD_F_DIAG, atol=1e-12)
    assert np.allclose(np.delete(aff.f, DIAG), 0, atol=1e-12)
    assert aff.residual < 1e-9


def test_affinity_entropy_identity():
    aff = ON.affinities_from_state(QD, GM3)
    assert ON.entropy_from_affinities(QD, GM3, aff) == pytest.approx(QD.entropy, abs=1e-12)


def test_affinity_differential(rng):
    # ds = k_B sum_j f_j dx_j along a one-parameter exponential family
    s = spectral_decompose(random_density(rng, 3, min_eig=0.05))
    aff = ON.affinities_from_state(s, GM3)
    h = 1e-6

    def fam(eps):
        f = aff.f.copy()
        f[2] += eps
        M = -sum(fk * Xk for fk, Xk in zip(f, GM3.X))
        w, V = np.linalg.eigh(M)
        r = (V * np.exp(w - w.max())) @ V.conj().T
        return r / np.trace(r).real

    r1, r2 = fam(h), fam(-h)
    dx = np.array([np.trace((r1 - r2) @ Xk).real for Xk in GM3.X])
    assert O.von_neumann(r1) - O.von_neumann(r2) == pytest.approx(float(aff.f @ dx), rel=1e-5)


def test_affinities_dependent_basis_error():
    with pytest.raises(ON.BasisError, match="dependent"):
        ON.affinities_from_state(QD, ON.ObservableBasis((*GM3.X, 2 * GM3.X[0])))


def test_affinities_incomplete_basis_error():
    with pytest.raises(ON.BasisError, match="span"):
        ON.affinities_from_state(QD, ON.ObservableBasis((GM3.X[0],)))


def test_affinities_rank_deficient_reports_nullity():
    s = spectral_decompose(fx.QUTRIT_RANK2_RHO)
    aff = ON.affinities_from_state(s, GM3)
    assert aff.nullity > 0 and aff.notes
    assert ON.entropy_from_affinities(s, GM3, aff) == pytest.approx(s.entropy, abs=1e-10)


# ---------------------------------------------------------------- conductivities

def test_conductivity_qutrit_oracle():
    L = ON.conductivity_matrix(QD, QD_GEN, GM3, S.ConstantTau(1)).L
    assert np.allclose(L[np.ix_(DIAG, DIAG)], QD_L_DIAG, atol=1e-12)


def test_conductivity_tau_scaling():
    L1 = ON.conductivity_matrix(QD, QD_GEN, GM3, S.ConstantTau(1)).L
    L3 = ON.conductivity_matrix(QD, QD_GEN, GM3, S.ConstantTau(3)).L
    assert np.allclose(L3, L1 / 3)


def test_conductivity_manifold_member_zero():
    basis = ON.ObservableBasis((fx.QUTRIT_D_H, GM3.X[0], GM3.X[7]))
    L = ON.conductivity_matrix(QD, QD_GEN, basis, S.ConstantTau(1)).L
    assert np.allclose(L[0], 0, atol=1e-13) and np.allclose(L[:, 0], 0, atol=1e-13)


def test_conductivity_forms_and_reciprocity_qutrit():
    cm = ON.conductivity_matrix(QD, QD_GEN, GM3, S.ConstantTau(1))
    assert cm.symmetry_error == 0.0
    assert cm.min_eigenvalue >= -1e-10
    assert cm.form_disagreement() < 1e-8


@settings(max_examples=100)
@given(seeds)
def test_conductivity_random_dim4(seed):
    rng = np.random.default_rng(seed)
    s = spectral_decompose(random_density(rng, 4, min_eig=1e-3))
    gen = S.GeneratorSet(random_hermitian(rng, 4))
    basis = ON.default_basis(4)
    pol = S.ConstantTau(0.6)
    cm = ON.conductivity_matrix(s, gen, basis, pol)
    assert cm.min_eigenvalue >= -1e-10
    assert cm.form_disagreement() < 1e-8
    # reciprocity from an independent per-entry evaluation
    d = S.dissipative_direction(s, gen)
    i, j = rng.integers(0, 15, size=2)
    pi = project_orthogonal(s.sqrt_rho @ basis.X[i], d.manifold_basis, orthonormal=True)
    pj = project_orthogonal(s.sqrt_rho @ basis.X[j], d.manifold_basis, orthonormal=True)
    assert real_inner(pj, pi) / 0.6 == pytest.approx(cm.L[i, j], abs=1e-12)
    # rates and entropy rate
    aff = ON.affinities_from_state(s, basis)
    rates = ON.dissipative_rates(s, gen, basis, pol)
    assert np.allclose(rates, cm.L @ aff.f, atol=1e-8)
    q = ON.entropy_rate_quadratic(s, gen, basis, pol)
    assert q.value == pytest.approx(q.direct, rel=1e-8, abs=1e-14)


def test_orthogonal_extension_fluctuation_dissipation():
    basis = ON.ObservableBasis.orthogonal_extension(QD, QD_GEN)
    assert basis.orthogonality_tag == "orthogonal_extension"
    rep = ON.onsager_report(QD, S.SingleSystem(QD_GEN, S.ConstantTau(2.0)), basis)
    assert rep["fluctuation_dissipation"]["max_error"] < 1e-12
    assert rep["checks"]["entropy_rate_relative_error"] < 1e-8


def test_orthogonal_extension_random(rng):
    s = spectral_decompose(random_density(rng, 4, min_eig=1e-2))
    gen = S.GeneratorSet(random_hermitian(rng, 4))
    basis = ON.ObservableBasis.orthogonal_extension(s, gen)
    rep = ON.onsager_report(s, S.SingleSystem(gen, S.MaxEPRTau()), basis)
    assert rep["fluctuation_dissipation"]["max_error"] < 1e-10


# ---------------------------------------------------------------- rates and entropy rate

def test_rates_energy_zero_and_gibbs():
    basis = ON.ObservableBasis((fx.QUTRIT_D_H, GM3.X[0]))
    r = ON.dissipative_rates(QD, QD_GEN, basis, S.ConstantTau(1))
    assert abs(r[0]) < 1e-14
    g = S.gibbs_state(QD_GEN, 0.4)
    assert np.allclose(ON.dissipative_rates(g, QD_GEN, GM3, S.ConstantTau(1)), 0, atol=1e-13)


def test_rates_qutrit_match_fL():
    aff = ON.affinities_from_state(QD, GM3)
    cm = ON.conductivity_matrix(QD, QD_GEN, GM3, S.ConstantTau(1))
    assert np.allclose(ON.dissipative_rates(QD, QD_GEN, GM3, S.ConstantTau(1)), cm.L @ aff.f, atol=1e-12)


def test_entropy_rate_quadratic_qutrit():
    q = ON.entropy_rate_quadratic(QD, QD_GEN, GM3, S.ConstantTau(1))
    assert q.value == pytest.approx(QD_DD, rel=1e-10)
    assert q.direct == pytest.approx(QD_DD, rel=1e-12)


def test_gibbs_conductivity_by_closure():
    g = S.gibbs_state(QD_GEN, 0.4)
    assert np.allclose(ON.conductivity_matrix(g, QD_GEN, GM3, S.MaxEPRTau()).L, 0)
    cm = ON.conductivity_matrix(g, QD_GEN, GM3, S.ConstantTau(1))
    aff = ON.affinities_from_state(g, GM3)
    assert np.max(np.abs(cm.L)) > 0.1
    assert np.allclose(cm.L @ aff.f, 0, atol=1e-12)


def test_entropy_rate_quadratic_gibbs():
    g = S.gibbs_state(QD_GEN, 0.4)
    q = ON.entropy_rate_quadratic(g, QD_GEN, GM3, S.ConstantTau(1))
    assert abs(q.value) < 1e-14
    assert q.inverse_form is None and q.notes


def test_inverse_quadratic_form_on_decoupled_block():
    # restrict to the diagonal block: L_b is 2x2 of rank 1 here, so the inverse form is skipped honestly
    basis = ON.ObservableBasis((GM3.X[6], GM3.X[7]))
    q = ON.entropy_rate_quadratic(QD, QD_GEN, basis, S.ConstantTau(1))
    assert q.inverse_form is None
    # a single diagonal observable outside the manifold gives an invertible 1x1 block
    basis = ON.ObservableBasis((GM3.X[6], fx.QUTRIT_D_H))
    q = ON.entropy_rate_quadratic(QD, QD_GEN, basis, S.ConstantTau(1))
    assert q.inverse_form == pytest.approx(q.value, rel=1e-9)
    assert q.value == pytest.approx(QD_DD, rel=1e-9)


def test_rank_deficient_single(rng):
    s = spectral_decompose(random_density(rng, 3, rank=2))
    gen = S.GeneratorSet(random_hermitian(rng, 3))
    rep = ON.onsager_report(s, S.SingleSystem(gen, S.ConstantTau(1)), GM3)
    assert rep["checks"]["rates_vs_L_f"] < 1e-8
    assert rep["checks"]["entropy_rate_relative_error"] < 1e-8


# ---------------------------------------------------------------- composite

QQ = C.CompositionStructure((2, 2))
QQ_GENS = C.CompositeGenerators(QQ, fx.two_qubit_local_hamiltonians())


def test_composite_gibbs_maxepr_zero():
    g = S.gibbs_state(QQ_GENS.generator_set, 0.5)
    cm = ON.composite_conductivities(g, QQ, QQ_GENS, ON.default_basis(4), S.MaxEPRTau())
    assert np.allclose(cm.L, 0, atol=1e-12)
    assert all(np.allclose(LJ, 0, atol=1e-12) for LJ in cm.per_subsystem)


def test_composite_gibbs_constant_tau_rates_vanish():
    # L stays finite near equilibrium; the affinities lie in the manifold so L f = 0
    g = S.gibbs_state(QQ_GENS.generator_set, 0.5)
    rep = ON.onsager_report(g, C.CompositeSystem(QQ, QQ_GENS))
    assert np.max(np.abs(rep["conductivity"]["L"])) > 0.1
    assert np.allclose(rep["rates"], 0, atol=1e-12)
    assert rep["checks"]["rates_vs_L_f"] < 1e-12


@pytest.mark.parametrize("rho", [fx.TWO_QUBIT_CORRELATED_RHO, fx.TWO_QUBIT_RHO])
def test_composite_report(rho):
    s = spectral_decompose(rho)
    sysm = C.CompositeSystem(QQ, QQ_GENS)
    rep = ON.onsager_report(s, sysm)
    chk = rep["checks"]
    assert chk["rates_vs_L_f"] < 1e-8
    assert chk["symmetry_error"] == 0.0
    assert chk["subsystem_min_eigenvalue"] >= -1e-10
    assert chk["entropy_rate_quadratic"] == pytest.approx(chk["entropy_rate_direct"], rel=1e-8, abs=1e-14)
    L = np.array(rep["conductivity"]["L"])
    assert np.allclose(L, sum(np.array(x) for x in rep["conductivity"]["per_subsystem"]))


def test_composite_per_subsystem_oracle():
    # L^A from explicit-loop perceptions and dense least squares
    rho = fx.TWO_QUBIT_CORRELATED_RHO
    s = spectral_decompose(rho)
    basis = ON.default_basis(4)
    cm = ON.composite_conductivities(s, QQ, QQ_GENS, basis, S.ConstantTau(1))
    H = QQ_GENS.H
    rA = O.ptrace_loops(rho, 2, 2, 0)
    sq = O.sqrtm_psd(rA)
    span = [sq, sq @ O.perception_loops(H, rho, 2, 2, 0)]
    ops = [np.eye(4)] + list(basis.X)
    perp = [O.lstsq_remainder(sq @ O.perception_loops(X, rho, 2, 2, 0), span)[0] for X in ops]
    LA = np.array([[np.sum((a.conj() * b).real) for b in perp] for a in perp])
    assert np.allclose(cm.per_subsystem[0], LA, atol=1e-10)


def test_composite_product_factorization(rng):
    # on a product state L^A only sees subsystem-A observables X x I
    rA, rB = random_density(rng, 2, min_eig=0.05), random_density(rng, 2, min_eig=0.05)
    s = spectral_decompose(np.kron(rA, rB))
    XA = [np.kron(x, np.eye(2)) for x in gell_mann_basis(2)]
    basis = ON.ObservableBasis(tuple(XA))
    cm = ON.composite_conductivities(s, QQ, QQ_GENS, basis, S.ConstantTau(1))
    single_cm = ON.conductivity_matrix(spectral_decompose(rA), S.GeneratorSet(fx.SIGMA_Z),
                                       ON.default_basis(2), S.ConstantTau(1))
    assert np.allclose(cm.per_subsystem[0][1:, 1:], single_cm.L, atol=1e-10)
    assert np.allclose(cm.per_subsystem[1], 0, atol=1e-10)


@given(seeds)
def test_composite_random_quadratic(seed):
    rng = np.random.default_rng(seed)
    s = spectral_decompose(random_density(rng, 4, min_eig=1e-3))
    g = C.CompositeGenerators(QQ, (random_hermitian(rng, 2), random_hermitian(rng, 2)), 0.3 * random_hermitian(rng, 4))
    rep = ON.onsager_report(s, C.CompositeSystem(QQ, g, S.MaxEPRTau()))
    assert rep["checks"]["rates_vs_L_f"] < 1e-8
    assert rep["checks"]["min_eigenvalue"] >= -1e-10
    chk = rep["checks"]
    assert chk["entropy_rate_quadratic"] == pytest.approx(chk["entropy_rate_direct"], rel=1e-8, abs=1e-14)


def test_composite_rank_deficient_uses_B_row(rng):
    s = spectral_decompose(random_density(rng, 4, rank=3))
    rep = ON.onsager_report(s, C.CompositeSystem(QQ, QQ_GENS))
    assert rep["conductivity"]["index"][0] == "B"
    assert rep["checks"]["rates_vs_L_f"] < 1e-8
