"""Acceptance suite: criteria 1-12, one printed PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""
import math
from functools import lru_cache

import numpy as np
import pytest

import oracles as O
from seaqt import composite as C
from seaqt import fixtures as fx
from seaqt import onsager as ON
from seaqt import single as S
from seaqt.criteria import run_criteria
from seaqt.integrator import IntegratorConfig, attractor_summary, bloch_reference, integrate, trace_distance
from seaqt.opspace import covariance, op_norm, random_density, random_hermitian, spectral_decompose

N_SAMPLES = 200
BASE_SEED = 7_000


def _report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nacceptance {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@lru_cache(maxsize=None)
def samples():
    """200 (seed, state, generators, policy); every fifth state is rank-deficient, every third has an extra."""
    out = []
    for k in range(N_SAMPLES):
        seed = BASE_SEED + k
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 9))
        if k % 5 == 4:
            rho = random_density(rng, n, rank=int(rng.integers(1, n)))
        else:
            rho = random_density(rng, n, min_eig=1e-3)
        H = random_hermitian(rng, n)
        extras = ()
        if k % 3 == 0 and n > 2:
            # a nonlinear function of H commutes with it and is generically independent
            extras = (0.3 * H @ H - 0.1 * H @ H @ H,)
        gen = S.GeneratorSet(H, extras)
        policy = S.MaxEPRTau() if k % 2 else S.ConstantTau(float(rng.uniform(0.2, 3.0)))
        out.append((seed, spectral_decompose(rho), gen, policy))
    return out


def full_rank_samples():
    return [x for x in samples() if x[1].full_rank]


# ---------------------------------------------------------------- 1

def test_acceptance_01_conservation(capsys):
    worst, where = 0.0, None
    for seed, s, gen, pol in samples():
        r = S.rhs(s, gen, pol)
        vals = [abs(np.trace(r)), *(abs(np.trace(r @ R)) for R in [gen.H, *gen.extras])]
        if max(vals) > worst:
            worst, where = float(max(vals)), seed
    _report(capsys, 1, worst < 1e-9, f"max |Tr(rhs)|, |Tr(rhs R)| = {worst:.2e} (seed {where}) over "
                                     f"{N_SAMPLES} states, seeds {BASE_SEED}..{BASE_SEED + N_SAMPLES - 1}")


# ---------------------------------------------------------------- 2

def test_acceptance_02_entropy_production(capsys):
    lowest, mismatch = math.inf, 0.0
    for seed, s, gen, pol in samples():
        ev = S.evaluate(s, gen, pol)
        rate = -float(np.real(np.trace(ev.total @ s.log_on_range)))
        lowest = min(lowest, rate)
        expect = 0.0 if ev.cut else ev.d_norm_sq / ev.tau
        mismatch = max(mismatch, abs(rate - expect) / max(1.0, abs(expect)))
    ok = lowest >= -1e-10 and mismatch < 1e-9
    _report(capsys, 2, ok, f"min entropy rate {lowest:.2e}; max |rate - (D|D)/tau| {mismatch:.2e}")


# ---------------------------------------------------------------- 3

def test_acceptance_03_steepest_ascent(capsys):
    excess = -math.inf
    for seed, s, gen, pol in samples():
        d = S.dissipative_direction(s, gen)
        if d.d_norm_sq < 1e-24:
            continue
        E = S.dissipative_E(s, d, 1.0)
        best = S.entropy_rate_of_E(s, E)
        norm = math.sqrt(float(np.real(np.vdot(E, E))))
        rng = np.random.default_rng(seed + 1_000_000)
        for _ in range(200):
            Z = S.admissible_direction(rng, s, d, norm)
            excess = max(excess, S.entropy_rate_of_E(s, Z) - best)
    _report(capsys, 3, excess <= 1e-9, f"largest excess over E_D across 200 x 200 directions {excess:.2e}")


# ---------------------------------------------------------------- 4

def test_acceptance_04_formula_equivalence(capsys):
    d_err, l_err, skipped = 0.0, 0.0, 0
    for seed, s, gen, pol in samples():
        d = S.dissipative_direction(s, gen)
        Dg = S.gram_direction(s, gen)
        d_err = max(d_err, np.linalg.norm(d.D - Dg) / max(np.linalg.norm(d.D), 1e-300)
                    if np.linalg.norm(d.D) > 1e-12 else np.linalg.norm(Dg))
        if not s.full_rank:
            continue
        cm = ON.conductivity_matrix(s, gen, ON.default_basis(s.dim), pol)
        if cm.forms.get("gram_ratio") is None:
            skipped += 1
        l_err = max(l_err, cm.form_disagreement())
    ok = d_err < 1e-8 and l_err < 1e-8
    _report(capsys, 4, ok, f"D projection vs Gram {d_err:.2e}; conductivity forms {l_err:.2e} "
                           f"(Gram-ratio form skipped on {skipped} states)")


# ---------------------------------------------------------------- 5

def test_acceptance_05_onsager(capsys):
    sym, mineig, quad, fd = 0.0, math.inf, 0.0, 0.0
    for seed, s, gen, pol in samples():
        basis = ON.default_basis(s.dim)
        cm = ON.conductivity_matrix(s, gen, basis, pol)
        sym = max(sym, cm.symmetry_error)
        scale = max(1.0, float(np.max(np.abs(cm.L))))
        mineig = min(mineig, cm.min_eigenvalue / scale)
        q = ON.entropy_rate_quadratic(s, gen, basis, pol)
        quad = max(quad, abs(q.value - q.direct) / max(abs(q.direct), 1e-12))
        if s.full_rank:
            ext = ON.ObservableBasis.orthogonal_extension(s, gen)
            rep = ON.onsager_report(s, S.SingleSystem(gen, pol), ext)
            fd = max(fd, rep["fluctuation_dissipation"]["max_error"])
    ok = sym < 1e-12 and mineig >= -1e-10 and quad < 1e-8 and fd < 1e-9
    _report(capsys, 5, ok, f"symmetry {sym:.1e}; min eigenvalue {mineig:.1e}; quadratic form {quad:.1e}; "
                           f"orthogonal-extension block {fd:.1e}")


# ---------------------------------------------------------------- 6

def test_acceptance_06_uncertainty(capsys):
    sat, bound_gap, scaled = 0.0, 0.0, -math.inf
    for seed, s, gen, pol in samples():
        d = S.dissipative_direction(s, gen)
        var = covariance(s, gen.H, gen.H)
        bound = S.entropy_rate_bound(s, gen, d)
        if d.d_norm_sq >= 1e-12 and var > 1e-12:
            chk = S.uncertainty_check(s, gen, S.MaxEPRTau())
            sat = max(sat, abs(chk.tau_D ** 2 * var - 0.25) / 0.25)
            rate = S.entropy_rate(s, gen, S.MaxEPRTau())
            bound_gap = max(bound_gap, abs(rate - bound) / bound)
        for tau in (0.1, 1.0, 5.0):
            tmin = S.tau_lower_bound(s, gen, d)
            rate = S.entropy_rate(s, gen, S.ConstantTau(tau))
            scaled = max(scaled, rate - bound * tmin / tau * (1 + 1e-12))
    ok = sat < 1e-9 and bound_gap < 1e-9 and scaled <= 1e-12
    _report(capsys, 6, ok, f"tau_D^2 var vs hbar^2/4 {sat:.1e}; MaxEPR rate vs bound {bound_gap:.1e}; "
                           f"largest excess over scaled bound {scaled:.1e}")


# ---------------------------------------------------------------- 7

def test_acceptance_07_attractor(capsys):
    H = np.array([0.0, 1.0, 2.0])
    gen = S.GeneratorSet(fx.QUTRIT_D_H)
    sys1 = S.SingleSystem(gen, S.ConstantTau(1))
    tr = integrate(fx.QUTRIT_D_RHO, sys1, IntegratorConfig(dt=0.01, t_end=30.0, sample_every=10))
    gibbs = np.diag(O.gibbs_probs(H, O.gibbs_beta(H, 0.9)))
    dist = trace_distance(tr.final.rho, gibbs)
    rep = attractor_summary(tr, gen)

    # rank-2 starts: the qutrit fixture and a coherent state on levels {0, 2} of a four-level ladder
    tr2 = integrate(fx.QUTRIT_RANK2_RHO, sys1, IntegratorConfig(dt=0.01, t_end=30.0, sample_every=50))
    rep2 = attractor_summary(tr2, gen)
    d2 = trace_distance(tr2.final.rho, np.diag([0.6, 0.4, 0.0]))
    H4 = np.diag([0.0, 1.0, 2.0, 3.0])
    g4 = S.GeneratorSet(H4)
    r4 = np.zeros((4, 4), dtype=complex)
    r4[0, 0], r4[2, 2], r4[0, 2], r4[2, 0] = 0.7, 0.3, 0.2 + 0.1j, 0.2 - 0.1j
    tr4 = integrate(r4, S.SingleSystem(g4, S.ConstantTau(1)), IntegratorConfig(dt=0.01, t_end=40.0, sample_every=50))
    rep4 = attractor_summary(tr4, g4)
    h = np.array([0.0, 2.0])
    p = O.gibbs_probs(h, O.gibbs_beta(h, 0.6))
    d4 = trace_distance(tr4.final.rho, np.diag([p[0], 0.0, p[1], 0.0]))

    ok = (dist < 1e-6 and tr.final.t <= 30.0 + 1e-9 and rep.entropy_monotone
          and d2 < 1e-6 and rep2.max_kernel_eigenvalue < 1e-8 and rep2.entropy_monotone
          and d4 < 1e-6 and rep4.max_kernel_eigenvalue < 1e-8 and rep4.entropy_monotone)
    _report(capsys, 7, ok, f"QUTRIT-D distance {dist:.1e} at t = {tr.final.t:.2f}; rank-2 distances "
                           f"{d2:.1e}, {d4:.1e}; kernel eigenvalues {rep2.max_kernel_eigenvalue:.1e}, "
                           f"{rep4.max_kernel_eigenvalue:.1e}")


# ---------------------------------------------------------------- 8

def test_acceptance_08_bloch(capsys):
    gen = S.GeneratorSet(fx.QUTRIT_D_H)
    sys1 = S.SingleSystem(gen, S.ConstantTau(1))
    g = S.gibbs_state(gen, 0.5)
    delta_op = np.diag([1.0, -2.0, 1.0]) / math.sqrt(6)
    devs = []
    for amp in (0.04, 0.02, 0.01):
        start = spectral_decompose(g.rho + amp * delta_op)
        tr = integrate(start, sys1, IntegratorConfig(dt=0.01, t_end=5.0, sample_every=5, stop_at_equilibrium=False))
        devs.append(max(float(np.max(np.abs(s.rho - bloch_reference(start, g, 1.0, fx.QUTRIT_D_H, s.t))))
                        for s in tr.samples))
    ratios = [devs[0] / devs[1], devs[1] / devs[2]]
    _report(capsys, 8, all(r >= 3.5 for r in ratios),
            f"sup deviations {', '.join(f'{d:.2e}' for d in devs)}; ratios {ratios[0]:.2f}, {ratios[1]:.2f}")


# ---------------------------------------------------------------- 9

def test_acceptance_09_separability(capsys):
    QQ = C.CompositionStructure((2, 2))
    gens = C.CompositeGenerators(QQ, fx.two_qubit_local_hamiltonians())
    rng = np.random.default_rng(9)
    states = [fx.TWO_QUBIT_RHO, fx.TWO_QUBIT_CORRELATED_RHO, *(random_density(rng, 4) for _ in range(4))]
    rep = C.separability_report(QQ, gens, ([0], [1]), states, rng=rng, n_replacements=3)

    m1 = 0.0
    for dim, H, rho in ((3, fx.QUTRIT_D_H, fx.QUTRIT_D_RHO), (2, fx.QUBIT_A_H, fx.QUBIT_A_RHO),
                        (4, random_hermitian(rng, 4), random_density(rng, 4))):
        comp = C.CompositionStructure((dim,))
        cg = C.CompositeGenerators(comp, (H,))
        s = spectral_decompose(rho)
        for pol in (S.ConstantTau(1), S.MaxEPRTau()):
            m1 = max(m1, float(np.max(np.abs(C.composite_rhs(s, comp, cg, pol) - S.rhs(s, S.GeneratorSet(H), pol)))))
    vals = {c.name: c.value for c in rep.checks}
    ok = rep.passed and m1 < 1e-12
    _report(capsys, 9, ok, f"factorization {vals['product_factorization']:.1e}; locality {vals['locality']:.1e}; "
                           f"subsystem energy {vals['separate_energy']:.1e}; min subsystem entropy rate "
                           f"{vals['separate_entropy']:.1e}; M=1 reduction {m1:.1e}")


# ---------------------------------------------------------------- 10

def test_acceptance_10_negative_control(capsys):
    QQ = C.CompositionStructure((2, 2))
    gens = C.CompositeGenerators(QQ, fx.two_qubit_local_hamiltonians())
    corr = spectral_decompose(fx.TWO_QUBIT_CORRELATED_RHO)
    rng = np.random.default_rng(10)
    glob = 0.0
    for rho in [fx.TWO_QUBIT_CORRELATED_RHO, *(random_density(rng, 4) for _ in range(20))]:
        R = C.flawed_variant_rhs(spectral_decompose(rho), QQ, gens, S.ConstantTau(1))
        glob = max(glob, abs(np.trace(R)), abs(np.trace(R @ gens.H)))
    R = C.flawed_evaluate(corr, QQ, gens, S.ConstantTau(1)).dissipator
    eA = abs(float(np.real(np.trace(np.kron(fx.SIGMA_Z, np.eye(2)) @ R))))
    flawed = C.CompositeSystem(QQ, gens, S.ConstantTau(1), "flawed")
    flagged = run_criteria(flawed, corr, np.random.default_rng(3), 6).flagged
    ok = glob < 1e-9 and eA > 1e-6 and flagged == [6]
    _report(capsys, 10, ok, f"global conservation {glob:.1e}; |Tr[(H_A x I) D]| = {eA:.2e}; "
                            f"check flags {flagged} (required exactly [6])")


# ---------------------------------------------------------------- 11

def test_acceptance_11_variational(capsys):
    worst_single = 0.0
    for seed, s, gen, pol in full_rank_samples():
        worst_single = max(worst_single, S.variational_residual(s, gen, S.dissipative_direction(s, gen), pol))
    worst_comp = 0.0
    for k in range(30):
        rng = np.random.default_rng(BASE_SEED + 500 + k)
        dims = ((2, 2), (2, 3), (3, 2), (2, 2, 2))[k % 4]
        comp = C.CompositionStructure(dims)
        local = tuple(random_hermitian(rng, d) for d in dims)
        V = 0.2 * random_hermitian(rng, comp.dim) if k % 2 else None
        g = C.CompositeGenerators(comp, local, V)
        s = spectral_decompose(random_density(rng, comp.dim, min_eig=1e-3))
        pol = S.MaxEPRTau() if k % 3 == 0 else S.ConstantTau(1.0)
        worst_comp = max(worst_comp, C.variational_residual(s, comp, g, pol))
    ok = worst_single < 1e-8 and worst_comp < 1e-8
    _report(capsys, 11, ok, f"max residual single {worst_single:.1e} ({len(full_rank_samples())} states); "
                            f"composite {worst_comp:.1e} (30 states)")


# ---------------------------------------------------------------- 12

def test_acceptance_12_integrator_order(capsys):
    H = np.array([0.0, 1.0, 2.0])
    sys1 = S.SingleSystem(S.GeneratorSet(fx.QUTRIT_D_H), S.ConstantTau(1))
    T = 2.0
    ref = O.diagonal_flow([0.5, 0.1, 0.4], H, 1.0, np.array([0.0, T]))[-1]
    errs = []
    for dt in (0.2, 0.1, 0.05, 0.025):
        tr = integrate(fx.QUTRIT_D_RHO, sys1, IntegratorConfig(dt=dt, t_end=T, projection_policy="none",
                                                               stop_at_equilibrium=False))
        errs.append(float(np.max(np.abs(np.diag(tr.final.rho).real - ref))))
    ratios = [errs[i] / errs[i + 1] for i in range(3)]
    _report(capsys, 12, all(12 <= r <= 20 for r in ratios),
            f"errors {', '.join(f'{e:.2e}' for e in errs)}; ratios {', '.join(f'{r:.2f}' for r in ratios)}")


@pytest.fixture(autouse=True, scope="module")
def _warm():
    samples()
    yield
