"""Steepest-entropy-ascent dynamics of a single indivisible constituent.

The equation of motion is

    drho/dt = -(i/hbar)[H, rho] - (1/2 tau) (sqrt(rho) D + D^dagger sqrt(rho)),

where D is the component of sqrt(rho) B ln(rho) orthogonal to the real span
of {sqrt(rho) I, sqrt(rho) H, sqrt(rho) G_i}.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .opspace import (
    DEFAULT_TOL,
    DEFAULT_UNITS,
    SpectralState,
    ToleranceSet,
    UnitSystem,
    anticommutator,
    as_operator,
    commutator,
    covariance,
    delta,
    gell_mann_basis,
    gram_det,
    gram_projection_residual,
    hermitize,
    is_hermitian,
    mean_value,
    op_norm,
    orthonormalize,
    project_onto,
    project_orthogonal,
    real_inner,
    real_vec,
    spectral_decompose,
)

log = logging.getLogger(__name__)


class UnsupportedStateError(ValueError):
    pass


# ----------------------------------------------------------------------
# generators and relaxation-time closures
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """Hamiltonian plus extra conserved generators G_i, each commuting with H."""

    H: np.ndarray
    extras: tuple = ()
    commutation_tolerance: float = 1e-9

    def __post_init__(self):
        H = as_operator(self.H)
        if not is_hermitian(H):
            raise ValueError("H is not Hermitian")
        extras = tuple(as_operator(G) for G in self.extras)
        for i, G in enumerate(extras):
            if G.shape != H.shape:
                raise ValueError(f"extra generator {i} has shape {G.shape}, H has {H.shape}")
            if not is_hermitian(G):
                raise ValueError(f"extra generator {i} is not Hermitian")
            c = op_norm(commutator(G, H))
            if c > self.commutation_tolerance:
                raise ValueError(f"extra generator {i} does not commute with H (|[G,H]| = {c:.3g})")
        object.__setattr__(self, "H", hermitize(H))
        object.__setattr__(self, "extras", tuple(hermitize(G) for G in extras))

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def operators(self) -> list[np.ndarray]:
        """[I, H, G_1, ...]."""
        return [np.eye(self.dim, dtype=complex), self.H, *self.extras]


class TauPolicy:
    """Relaxation-time closure evaluated from (D|D) and the energy dispersion."""

    #: zero the dissipator once (D|D) drops below the equilibrium threshold
    cutoff_at_equilibrium = False

    def __call__(self, d_norm_sq: float, h_variance: float, units: UnitSystem) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantTau(TauPolicy):
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"constant tau must be positive, got {self.value}")

    def __call__(self, d_norm_sq, h_variance, units):
        return float(self.value)


@dataclass(frozen=True)
class MaxEPRTau(TauPolicy):
    """tau = (hbar/2) sqrt((D|D) / <DH,DH>), the smallest value the
    time-energy uncertainty relation allows for the dissipative time."""

    fallback: float = 1.0
    variance_epsilon: float = 1e-12
    cutoff_at_equilibrium = True

    def __post_init__(self):
        if not (self.fallback > 0 and self.variance_epsilon > 0):
            raise ValueError("fallback and variance_epsilon must be positive")

    def __call__(self, d_norm_sq, h_variance, units):
        if h_variance < self.variance_epsilon:
            log.info("MaxEPR: energy dispersion %.3g below threshold, using fallback tau", h_variance)
            return float(self.fallback)
        if d_norm_sq <= 0.0:
            return float(self.fallback)
        return 0.5 * units.hbar * math.sqrt(d_norm_sq / h_variance)


@dataclass(frozen=True)
class CustomTau(TauPolicy):
    """User functional ``func(d_norm_sq, h_variance, units, **params)``."""

    tag: str
    func: Callable = field(compare=False)
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, d_norm_sq, h_variance, units):
        value = float(self.func(d_norm_sq, h_variance, units, **self.params))
        if not value > 0:
            raise ValueError(f"custom tau {self.tag!r} returned nonpositive value {value}")
        return value


# ----------------------------------------------------------------------
# dissipative direction
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DissipativeDirection:
    D: np.ndarray
    d_norm_sq: float
    manifold_basis: list
    multipliers: np.ndarray
    retained: list
    coefficients: np.ndarray  # manifold_basis[k] = sum_i coefficients[k, i] * sqrt(rho) R_i
    target: np.ndarray  # sqrt(rho) B ln(rho), or its perceived counterpart


def direction_from_vectors(target, vectors, tol: ToleranceSet = DEFAULT_TOL) -> DissipativeDirection:
    """Remainder of ``target`` after projecting out the real span of ``vectors``."""
    basis, kept, C = orthonormalize(vectors, tol, return_coefficients=True)
    P, c = project_onto(target, basis)
    D = target - P
    D = D - project_onto(D, basis)[0]
    return DissipativeDirection(
        D=D,
        d_norm_sq=real_inner(D, D),
        manifold_basis=basis,
        multipliers=c,
        retained=kept,
        coefficients=C,
        target=target,
    )


def direction_from(target, sqrt_rho, generators, tol: ToleranceSet = DEFAULT_TOL) -> DissipativeDirection:
    return direction_from_vectors(target, [sqrt_rho @ R for R in generators], tol)


def dissipative_direction(state: SpectralState, gen: GeneratorSet, tol: ToleranceSet = DEFAULT_TOL) -> DissipativeDirection:
    return direction_from(state.sqrt_log(), state.sqrt_rho, gen.operators, tol)


def gram_direction(state: SpectralState, gen: GeneratorSet) -> np.ndarray:
    """D from the Gram-determinant expansion; needs independent generators."""
    vectors = [state.sqrt_rho @ R for R in gen.operators]
    return gram_projection_residual(state.sqrt_log(), vectors)


def manifold_operators(direction: DissipativeDirection, generators) -> list[np.ndarray]:
    """The operators A_k with sqrt(rho) A_k equal to the orthonormal manifold basis."""
    gens = list(generators)
    return [sum(c * R for c, R in zip(row, gens)) for row in direction.coefficients]


# ----------------------------------------------------------------------
# equation of motion
# ----------------------------------------------------------------------

def hamiltonian_term(state: SpectralState, gen: GeneratorSet, units: UnitSystem = DEFAULT_UNITS) -> np.ndarray:
    """-(i/hbar)[H, rho]."""
    return -1j / units.hbar * commutator(gen.H, state.rho)


def hamiltonian_E(state: SpectralState, gen: GeneratorSet, units: UnitSystem = DEFAULT_UNITS) -> np.ndarray:
    """E_H = (i/hbar) sqrt(rho) Delta H."""
    return 1j / units.hbar * state.sqrt_rho @ delta(state, gen.H)


def rate_from_E(state: SpectralState, E: np.ndarray) -> np.ndarray:
    """sqrt(rho) E + E^dagger sqrt(rho)."""
    X = state.sqrt_rho @ E
    return X + X.conj().T


def tau_H(state: SpectralState, gen: GeneratorSet, units: UnitSystem = DEFAULT_UNITS) -> float:
    """hbar / (2 sqrt(<DH,DH>)); infinite for zero energy dispersion."""
    var = covariance(state, gen.H, gen.H)
    if var <= 0.0:
        return math.inf
    return units.hbar / (2.0 * math.sqrt(var))


def tau_value(policy: TauPolicy, state: SpectralState, gen: GeneratorSet, direction: DissipativeDirection,
              units: UnitSystem = DEFAULT_UNITS) -> float:
    return policy(direction.d_norm_sq, covariance(state, gen.H, gen.H), units)


def tau_lower_bound(state: SpectralState, gen: GeneratorSet, direction: DissipativeDirection,
                    units: UnitSystem = DEFAULT_UNITS) -> float:
    """Smallest tau compatible with tau_D^2 <DH,DH> >= hbar^2/4."""
    var = covariance(state, gen.H, gen.H)
    if var <= 0.0:
        return math.inf
    return 0.5 * units.hbar * math.sqrt(direction.d_norm_sq / var)


@dataclass(frozen=True, eq=False)
class SingleEvaluation:
    state: SpectralState
    hamiltonian: np.ndarray
    dissipator: np.ndarray
    direction: DissipativeDirection
    tau: float
    h_variance: float
    cut: bool = False

    @property
    def total(self) -> np.ndarray:
        return self.hamiltonian + self.dissipator

    @property
    def d_norm_sq(self) -> float:
        return 0.0 if self.cut else self.direction.d_norm_sq

    @property
    def entropy_rate(self) -> float:
        return self.state.units.k_B * self.d_norm_sq / self.tau

    @property
    def taus(self) -> list[float]:
        return [self.tau]


def evaluate(state: SpectralState, gen: GeneratorSet, policy: TauPolicy, units: UnitSystem = DEFAULT_UNITS,
             tol: ToleranceSet = DEFAULT_TOL) -> SingleEvaluation:
    direction = dissipative_direction(state, gen, tol)
    var = covariance(state, gen.H, gen.H)
    cut = policy.cutoff_at_equilibrium and direction.d_norm_sq < tol.equilibrium_epsilon
    tau = policy(0.0 if cut else direction.d_norm_sq, var, units)
    if cut:
        diss = np.zeros_like(state.rho)
    else:
        X = state.sqrt_rho @ direction.D
        diss = -(X + X.conj().T) / (2.0 * tau)
    return SingleEvaluation(state, hamiltonian_term(state, gen, units), diss, direction, tau, var, cut)


def rhs(state: SpectralState, gen: GeneratorSet, policy: TauPolicy, units: UnitSystem = DEFAULT_UNITS,
        tol: ToleranceSet = DEFAULT_TOL) -> np.ndarray:
    return evaluate(state, gen, policy, units, tol).total


def entropy_rate(state: SpectralState, gen: GeneratorSet, policy: TauPolicy, units: UnitSystem = DEFAULT_UNITS,
                 tol: ToleranceSet = DEFAULT_TOL) -> float:
    """k_B (D|D) / tau."""
    return evaluate(state, gen, policy, units, tol).entropy_rate


def entropy_rate_from_rhs(state: SpectralState, drho: np.ndarray) -> float:
    """-k_B Tr(drho B ln rho)."""
    return float(-state.units.k_B * np.real(np.trace(drho @ state.log_on_range)))


def entropy_rate_gram(state: SpectralState, gen: GeneratorSet, tau: float) -> float:
    """(k_B / tau) Gamma(sqrt(rho) ln rho, {sqrt(rho) R_i}) / Gamma({sqrt(rho) R_i})."""
    vectors = [state.sqrt_rho @ R for R in gen.operators]
    ratio = gram_det([state.sqrt_log()] + vectors) / gram_det(vectors)
    return state.units.k_B * ratio / tau


def entropy_rate_bound(state: SpectralState, gen: GeneratorSet, direction: DissipativeDirection,
                       units: UnitSystem = DEFAULT_UNITS) -> float:
    """(2 k_B / hbar) sqrt(<DH,DH> (D|D)), the largest rate the uncertainty relation allows."""
    var = covariance(state, gen.H, gen.H)
    return 2.0 * units.k_B / units.hbar * math.sqrt(max(var, 0.0) * direction.d_norm_sq)


def tau_D(state: SpectralState, direction: DissipativeDirection, policy: TauPolicy, gen: GeneratorSet,
          units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> float:
    """tau / sqrt((D|D)); infinite when D vanishes (no dissipative motion)."""
    if direction.d_norm_sq < tol.equilibrium_epsilon:
        return math.inf
    return tau_value(policy, state, gen, direction, units) / math.sqrt(direction.d_norm_sq)


@dataclass(frozen=True)
class UncertaintyCheck:
    tau: float
    tau_min: float
    tau_D: float
    tau_H: float
    satisfied: bool
    margin: float  # tau_D^2 <DH,DH> - hbar^2/4


def uncertainty_check(state: SpectralState, gen: GeneratorSet, policy: TauPolicy,
                      units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL,
                      rtol: float = 1e-9) -> UncertaintyCheck:
    direction = dissipative_direction(state, gen, tol)
    var = covariance(state, gen.H, gen.H)
    tau = policy(direction.d_norm_sq, var, units)
    tmin = tau_lower_bound(state, gen, direction, units)
    tD = tau_D(state, direction, policy, gen, units, tol)
    margin = tD ** 2 * var - units.hbar ** 2 / 4 if math.isfinite(tD) else math.inf
    ok = margin >= -rtol * units.hbar ** 2 / 4
    return UncertaintyCheck(tau, tmin, tD, tau_H(state, gen, units), bool(ok), margin)


@dataclass(frozen=True)
class CharacteristicTime:
    tau_F: float
    bound: float
    holds: bool


def characteristic_time_bound(state: SpectralState, F, which: str, gen: GeneratorSet,
                              policy: TauPolicy | None = None, units: UnitSystem = DEFAULT_UNITS,
                              tol: ToleranceSet = DEFAULT_TOL, rtol: float = 1e-9) -> CharacteristicTime:
    """tau_F = sqrt(<DF,DF>) / |df/dt| for the Hamiltonian or dissipative part.

    The result is compared against tau_H (resp. tau_D), its lower bound.
    """
    F = np.asarray(F, dtype=complex)
    var = covariance(state, F, F)
    if which == "hamiltonian":
        rate = float(np.real(np.trace(hamiltonian_term(state, gen, units) @ F)))
        bound = tau_H(state, gen, units)
    elif which == "dissipative":
        if policy is None:
            raise ValueError("dissipative characteristic time needs a tau policy")
        ev = evaluate(state, gen, policy, units, tol)
        rate = float(np.real(np.trace(ev.dissipator @ F)))
        bound = tau_D(state, ev.direction, policy, gen, units, tol)
    else:
        raise ValueError(f"which must be 'hamiltonian' or 'dissipative', got {which!r}")
    if var <= 0.0 or rate == 0.0:
        tau_F = math.inf
    else:
        tau_F = math.sqrt(var) / abs(rate)
    holds = (not math.isfinite(bound)) and not math.isfinite(tau_F) or tau_F >= bound * (1 - rtol)
    return CharacteristicTime(tau_F, bound, bool(holds))


# ----------------------------------------------------------------------
# entropy geometry
# ----------------------------------------------------------------------

def entropy_gradient(state: SpectralState) -> np.ndarray:
    """ds/d sqrt(rho) = -2 k_B (sqrt(rho) + sqrt(rho) ln rho)."""
    return -2.0 * state.units.k_B * (state.sqrt_rho + state.sqrt_log())


def entropy_rate_of_E(state: SpectralState, E: np.ndarray) -> float:
    """ds/dt for drho/dt = sqrt(rho) E + E^dagger sqrt(rho) (full-rank rho)."""
    return real_inner(E, entropy_gradient(state))


def dissipative_E(state: SpectralState, direction: DissipativeDirection, tau: float) -> np.ndarray:
    return -direction.D / (2.0 * tau)


def admissible_direction(rng: np.random.Generator, state: SpectralState, direction: DissipativeDirection,
                         target_norm: float) -> np.ndarray:
    """Random operator orthogonal to the constraint manifold, rescaled to ``target_norm``."""
    n = state.dim
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Z = project_orthogonal(Z, direction.manifold_basis, orthonormal=True)
    return Z * (target_norm / math.sqrt(real_inner(Z, Z)))


def variational_residual(state: SpectralState, gen: GeneratorSet, direction: DissipativeDirection,
                         policy: TauPolicy, units: UnitSystem = DEFAULT_UNITS) -> float:
    """|ds/dsqrt(rho) - 2 sum lambda_i sqrt(rho) R_i - lambda_0 E_D| at the best-fit multipliers."""
    grad = entropy_gradient(state)
    cols = [2.0 * state.sqrt_rho @ R for R in gen.operators]
    if direction.d_norm_sq > 0.0:
        tau = tau_value(policy, state, gen, direction, units)
        cols.append(dissipative_E(state, direction, tau))
    return _lstsq_residual(grad, cols)


def _lstsq_residual(target, cols) -> float:
    A = np.array([real_vec(c) for c in cols]).T
    b = real_vec(target)
    lam, *_ = np.linalg.lstsq(A, b, rcond=None)
    return float(np.linalg.norm(A @ lam - b))


# ----------------------------------------------------------------------
# nondissipative and equilibrium states
# ----------------------------------------------------------------------

def nondissipative_test(state: SpectralState, gen: GeneratorSet, tol: ToleranceSet = DEFAULT_TOL,
                        commutation_tol: float = 1e-8) -> tuple[bool, str]:
    """(is_nondissipative, 'equilibrium' | 'limit_cycle' | 'dissipative')."""
    direction = dissipative_direction(state, gen, tol)
    if direction.d_norm_sq >= tol.equilibrium_epsilon:
        return False, "dissipative"
    if op_norm(commutator(state.B, gen.H)) < commutation_tol:
        return True, "equilibrium"
    return True, "limit_cycle"


def _exp_normalized(C: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(hermitize(C))
    spread = w[-1] - w[0]
    if not np.all(np.isfinite(w)) or spread > 700.0:
        raise OverflowError(f"exponent spread {spread:.3g} too large for a full-rank Gibbs state")
    e = np.exp(w - w[-1])
    return (V * (e / e.sum())) @ V.conj().T


def gibbs_state(gen: GeneratorSet, beta: float, nus=(), units: UnitSystem = DEFAULT_UNITS,
                tol: ToleranceSet = DEFAULT_TOL) -> SpectralState:
    """exp(-beta H + sum nu_i G_i) / Tr(...)."""
    nus = list(nus)
    if len(nus) != len(gen.extras):
        raise ValueError(f"need one nu per extra generator ({len(gen.extras)}), got {len(nus)}")
    C = -beta * gen.H + sum((nu * G for nu, G in zip(nus, gen.extras)), np.zeros_like(gen.H))
    return spectral_decompose(_exp_normalized(C), units, tol)


def solve_beta(gen: GeneratorSet, energy: float, bracket: float = 200.0) -> float:
    """Inverse temperature of the Gibbs state exp(-beta H)/Z with Tr(rho H) = energy."""
    w = np.linalg.eigvalsh(gen.H)

    def mismatch(beta):
        x = -beta * (w - w.min()) if beta >= 0 else -beta * (w - w.max())
        p = np.exp(x - x.max())
        p /= p.sum()
        return float(p @ w) - energy

    if not (w.min() < energy < w.max()):
        raise ValueError(f"energy {energy} outside the open spectral range ({w.min()}, {w.max()})")
    return float(optimize.brentq(mismatch, -bracket, bracket, xtol=1e-15, rtol=1e-15, maxiter=500))


def max_entropy_state(gen: GeneratorSet, means, range_projector: np.ndarray | None = None,
                      units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> SpectralState:
    """Maximum-entropy state with Tr(rho H) and Tr(rho G_i) fixed to ``means``.

    With ``range_projector`` the search is restricted to states supported on
    that subspace (the B-restricted canonical form); B must commute with H.
    """
    means = np.asarray(means, dtype=float)
    ops = [gen.H, *gen.extras]
    if len(means) != len(ops):
        raise ValueError("need one mean per generator (H first, then extras)")
    n = gen.dim
    if range_projector is None:
        V = np.eye(n, dtype=complex)
    else:
        w, U = np.linalg.eigh(hermitize(range_projector))
        V = U[:, w > 0.5]
    red = [V.conj().T @ R @ V for R in ops]

    def state_of(lam):
        C = -sum(l * R for l, R in zip(lam, red))
        w, U = np.linalg.eigh(hermitize(C))
        p = np.exp(w - w.max())
        p /= p.sum()
        return (U * p) @ U.conj().T

    def dual(lam):
        C = -sum(l * R for l, R in zip(lam, red))
        w, U = np.linalg.eigh(hermitize(C))
        m = w.max()
        p = np.exp(w - m)
        Z = p.sum()
        p /= Z
        r = (U * p) @ U.conj().T
        grad = np.array([-np.real(np.trace(r @ R)) for R in red]) + means
        return math.log(Z) + m + float(lam @ means), grad

    if len(ops) == 1 and range_projector is None:
        lam = np.array([solve_beta(gen, float(means[0]))])
    else:
        res = optimize.minimize(dual, np.zeros(len(ops)), jac=True, method="BFGS",
                                options={"gtol": 1e-13, "maxiter": 2000})
        lam = res.x
        # polish with Newton steps on the moment equations
        for _ in range(20):
            r = state_of(lam)
            g = np.array([np.real(np.trace(r @ R)) for R in red]) - means
            if np.max(np.abs(g)) < 1e-14:
                break
            st = spectral_decompose(r, units, ToleranceSet(rank_epsilon=1e-300))
            J = -np.array([[covariance(st, Ri, Rj) for Rj in red] for Ri in red])
            lam = lam - np.linalg.lstsq(J, g, rcond=None)[0]
    rho = V @ state_of(lam) @ V.conj().T
    return spectral_decompose(hermitize(rho) / np.trace(rho).real, units, tol)


def equilibrium_target(state: SpectralState, gen: GeneratorSet, tol: ToleranceSet = DEFAULT_TOL,
                       commutation_tol: float = 1e-8) -> SpectralState:
    """The highest-entropy state with the same means (and, if rank-deficient, the same B)."""
    means = [mean_value(state, R) for R in [gen.H, *gen.extras]]
    B = None
    if not state.full_rank:
        if op_norm(commutator(state.B, gen.H)) > commutation_tol:
            raise UnsupportedStateError("[B, H] != 0: the trajectory approaches a limit cycle, not an equilibrium")
        B = state.B
    return max_entropy_state(gen, means, B, state.units, tol)


# ----------------------------------------------------------------------
# alternative forms
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpecialForm:
    rhs: np.ndarray
    affinities: np.ndarray  # f_j for the directions beyond the manifold
    X: list  # Hermitian operators X_j, j > a
    manifold_size: int
    tau: float
    entropy_rate: float


def orthogonal_extension(state: SpectralState, gen: GeneratorSet, tol: ToleranceSet = DEFAULT_TOL):
    """Hermitian X_j with {sqrt(rho) X_j} orthonormal, the first ``a`` spanning the manifold.

    Returns ``(X, a)``. Requires a full-rank state.
    """
    if not state.full_rank:
        raise UnsupportedStateError("orthogonal extension needs a full-rank state (B = I)")
    gens = gen.operators
    Y = gell_mann_basis(state.dim)
    ops = gens + Y
    basis, kept, C = orthonormalize([state.sqrt_rho @ R for R in ops], tol, return_coefficients=True)
    a = sum(1 for k in kept if k < len(gens))
    X = [hermitize(sum(c * R for c, R in zip(row, ops))) for row in C]
    return X, a


def special_form_rhs(state: SpectralState, gen: GeneratorSet, policy: TauPolicy, units: UnitSystem = DEFAULT_UNITS,
                     tol: ToleranceSet = DEFAULT_TOL) -> SpecialForm:
    """drho/dt = -(i/hbar)[H,rho] + (1/2tau) sum_{j>a} f_j {X_j, rho}."""
    X, a = orthogonal_extension(state, gen, tol)
    target = state.sqrt_log()
    f = np.array([-real_inner(target, state.sqrt_rho @ Xj) for Xj in X[a:]])
    d_norm_sq = float(f @ f)
    tau = policy(d_norm_sq, covariance(state, gen.H, gen.H), units)
    diss = sum((fj * anticommutator(Xj, state.rho) for fj, Xj in zip(f, X[a:])), np.zeros_like(state.rho))
    total = hamiltonian_term(state, gen, units) + diss / (2.0 * tau)
    return SpecialForm(total, f, X[a:], a, tau, units.k_B * d_norm_sq / tau)


def driven_direction(state: SpectralState, gen: GeneratorSet, imposed_rates, policy: TauPolicy,
                     units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> np.ndarray:
    """D extended with steepest-r_j-ascent terms so that Tr(drho_D/dt R_j) = imposed_rates[j].

    ``imposed_rates`` has one entry per non-identity generator (H, G_1, ...).
    """
    gens = gen.operators
    rates = list(imposed_rates)
    if len(rates) != len(gens) - 1:
        raise ValueError(f"need {len(gens) - 1} imposed rates, got {len(rates)}")
    vecs = [state.sqrt_rho @ R for R in gens]
    target = state.sqrt_log()
    g_all = gram_det([target] + vecs)
    if g_all <= 1e-14 * max(1.0, gram_det(vecs)):
        raise ValueError("degenerate Gram determinant: state is nondissipative or generators dependent")
    base = dissipative_direction(state, gen, tol)
    tau = tau_value(policy, state, gen, base, units)
    D = base.D.copy()
    for j, rate in enumerate(rates, start=1):
        if rate == 0.0:
            continue
        others = [target] + [v for i, v in enumerate(vecs) if i != j]
        g_without = gram_det(others)
        # sign chosen so that the mean of R_j changes at +rate under E_D = -D/(2 tau)
        alpha = -tau * rate * g_without / g_all
        D = D + alpha * project_orthogonal(vecs[j], others, tol)
    return D


def dissipator_from_D(state: SpectralState, D: np.ndarray, tau: float) -> np.ndarray:
    X = state.sqrt_rho @ D
    return -(X + X.conj().T) / (2.0 * tau)


# ----------------------------------------------------------------------
# system wrapper used by the integrator
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SingleSystem:
    gen: GeneratorSet
    policy: TauPolicy = field(default_factory=ConstantTau)
    dissipation: bool = True

    @property
    def H(self) -> np.ndarray:
        return self.gen.H

    @property
    def generators(self) -> GeneratorSet:
        return self.gen

    def evaluate(self, state: SpectralState, units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL):
        ev = evaluate(state, self.gen, self.policy, units, tol)
        if not self.dissipation:
            return SingleEvaluation(state, ev.hamiltonian, np.zeros_like(state.rho), ev.direction, ev.tau,
                                    ev.h_variance, cut=True)
        return ev

    def rhs(self, state: SpectralState, units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL):
        return self.evaluate(state, units, tol).total
