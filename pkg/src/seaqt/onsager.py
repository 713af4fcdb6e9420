"""Affinities, dissipative conductivities and reciprocity.

Any state can be written rho = B exp(-sum_j f_j X_j) / Tr(...), so
B ln rho = -f_0 B - sum_j f_j B X_j B. The dissipative rates of the mean
values x_i = Tr(rho X_i) are linear in the affinities f_j,

    Dx_i/Dt = sum_j L_ij f_j,

with a symmetric positive-semidefinite conductivity matrix L.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import composite as cmp
from . import single
from .opspace import (
    DEFAULT_TOL,
    DEFAULT_UNITS,
    SpectralState,
    ToleranceSet,
    UnitSystem,
    as_operator,
    covariance_matrix,
    gell_mann_basis,
    hermitize,
    is_hermitian,
    mean_value,
    project_orthogonal,
    real_inner,
    real_vec,
)


class BasisError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ObservableBasis:
    X: tuple
    orthogonality_tag: str = "generic"  # or "orthogonal_extension"
    manifold_size: int = 0  # leading members spanning the constraint manifold (orthogonal extension only)
    labels: tuple = ()

    def __post_init__(self):
        X = tuple(hermitize(as_operator(x)) for x in self.X)
        if not X:
            raise BasisError("observable basis is empty")
        for i, x in enumerate(self.X):
            if not is_hermitian(as_operator(x)):
                raise BasisError(f"basis operator {i} is not Hermitian")
        if self.orthogonality_tag not in ("generic", "orthogonal_extension"):
            raise BasisError(f"unknown orthogonality tag {self.orthogonality_tag!r}")
        object.__setattr__(self, "X", X)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"X{i + 1}" for i in range(len(X))))

    @property
    def dim(self) -> int:
        return self.X[0].shape[0]

    def __len__(self):
        return len(self.X)

    @classmethod
    def gell_mann(cls, dim: int) -> "ObservableBasis":
        return cls(tuple(gell_mann_basis(dim)), "generic", 0, tuple(f"lambda{i + 1}" for i in range(dim * dim - 1)))

    @classmethod
    def orthogonal_extension(cls, state: SpectralState, gen: single.GeneratorSet,
                             tol: ToleranceSet = DEFAULT_TOL) -> "ObservableBasis":
        """X_j with {sqrt(rho) X_j} orthonormal; the first members span the manifold (identity dropped)."""
        X, a = single.orthogonal_extension(state, gen, tol)
        # X[0] is the identity (sqrt(rho) I already has unit norm)
        return cls(tuple(X[1:]), "orthogonal_extension", a - 1)


def default_basis(dim: int) -> ObservableBasis:
    return ObservableBasis.gell_mann(dim)


# ----------------------------------------------------------------------
# affinities
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class AffinityVector:
    f0: float
    f: np.ndarray
    residual: float
    nullity: int = 0  # dimension of unidentifiable coefficient combinations (rank-deficient rho)
    notes: tuple = ()

    @property
    def extended(self) -> np.ndarray:
        """[f0, f_1, ...]."""
        return np.concatenate([[self.f0], self.f])


def range_restricted(state: SpectralState, X) -> np.ndarray:
    """B X B."""
    B = state.B
    return B @ X @ B


def affinities_from_state(state: SpectralState, basis: ObservableBasis, units: UnitSystem = DEFAULT_UNITS,
                          residual_tol: float = 1e-9) -> AffinityVector:
    """Least-squares solution of B ln rho = -f0 B - sum_j f_j B X_j B."""
    if basis.dim != state.dim:
        raise BasisError(f"basis dim {basis.dim} differs from state dim {state.dim}")
    cols = [state.B] + [range_restricted(state, X) for X in basis.X]
    A = np.array([real_vec(c) for c in cols]).T
    b = real_vec(-state.log_on_range)
    coef, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    resid = float(np.linalg.norm(A @ coef - b))
    notes = []
    nullity = A.shape[1] - int(rank)
    if resid > residual_tol * max(1.0, float(np.linalg.norm(b))):
        raise BasisError(f"basis does not span the range operators: residual {resid:.3g}")
    if nullity:
        if state.full_rank:
            raise BasisError(f"basis is linearly dependent: {nullity} redundant direction(s) among {A.shape[1]} columns")
        notes.append(f"{nullity} coefficient combination(s) act only on the kernel of rho and are unidentifiable; "
                     "minimum-norm values reported")
    return AffinityVector(float(coef[0]), coef[1:].copy(), resid, nullity, tuple(notes))


def entropy_from_affinities(state: SpectralState, basis: ObservableBasis, aff: AffinityVector) -> float:
    """k_B f0 + k_B sum_j f_j x_j, with x_j = Tr(rho X_j)."""
    x = np.array([mean_value(state, X) for X in basis.X])
    return state.units.k_B * (aff.f0 + float(aff.f @ x))


# ----------------------------------------------------------------------
# conductivities
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConductivityMatrix:
    L: np.ndarray
    tau: float | list
    per_subsystem: list | None = None
    forms: dict = field(default_factory=dict)  # alternative computations of L, by name
    notes: tuple = ()

    @property
    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.L - self.L.T))) if self.L.size else 0.0

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.L))) if self.L.size else 0.0

    def form_disagreement(self) -> float:
        """Largest relative deviation of any alternative form from L."""
        scale = max(float(np.max(np.abs(self.L))) if self.L.size else 0.0, 1e-300)
        worst = 0.0
        for M in self.forms.values():
            if M is not None:
                worst = max(worst, float(np.max(np.abs(M - self.L))) / scale)
        return worst


def _gram_of(vectors) -> np.ndarray:
    n = len(vectors)
    G = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            G[i, j] = G[j, i] = real_inner(vectors[i], vectors[j])
    return G


def _single_setup(state, gen, policy, units, tol):
    ev = single.evaluate(state, gen, policy, units, tol)
    return ev.direction, ev.tau, ev.cut


def conductivity_matrix(state: SpectralState, gen: single.GeneratorSet, basis: ObservableBasis,
                        policy: single.TauPolicy, units: UnitSystem = DEFAULT_UNITS,
                        tol: ToleranceSet = DEFAULT_TOL) -> ConductivityMatrix:
    """L_ij = (1/tau)([sqrt(rho) X_i]_perp | [sqrt(rho) X_j]_perp), plus three equivalent forms."""
    direction, tau, cut = _single_setup(state, gen, policy, units, tol)
    if cut:
        # the closure switched the dissipator off at equilibrium; every rate vanishes identically
        n = len(basis)
        zero = np.zeros((n, n))
        return ConductivityMatrix(zero, tau, None, {}, ("dissipator cut off at equilibrium",))
    sq = state.sqrt_rho
    Xt = [range_restricted(state, X) for X in basis.X]
    vecs = [sq @ X for X in Xt]
    perp = [project_orthogonal(v, direction.manifold_basis, orthonormal=True) for v in vecs]
    L = _gram_of(perp) / tau
    L = 0.5 * (L + L.T)

    forms = {}
    # inner products with the orthonormal manifold basis
    G = _gram_of(vecs)
    P = np.array([[real_inner(v, a) for a in direction.manifold_basis] for v in vecs])
    forms["inner_product"] = (G - P @ P.T) / tau

    # covariances: the identity direction drops out, A_k (k >= 2) are the remaining manifold operators
    A_ops = single.manifold_operators(direction, [np.eye(state.dim), gen.H, *gen.extras])
    C = covariance_matrix(state, Xt)
    CA = covariance_matrix(state, Xt, A_ops[1:])
    forms["covariance_sum"] = (C - CA @ CA.T) / tau

    # Gram-determinant ratio of covariances
    R = [gen.H, *gen.extras]
    CR = covariance_matrix(state, R)
    notes = []
    det_R = float(np.linalg.det(CR))
    if abs(det_R) > 1e-12 * max(1.0, float(np.max(np.abs(CR)))) ** len(R):
        XR = covariance_matrix(state, Xt, R)
        Lg = np.empty_like(L)
        for i in range(len(Xt)):
            for j in range(len(Xt)):
                top = np.concatenate([[C[i, j]], XR[j]])
                M = np.vstack([top, np.column_stack([XR[i], CR])])
                Lg[i, j] = np.linalg.det(M) / det_R / tau
        forms["gram_ratio"] = Lg
    else:
        forms["gram_ratio"] = None
        notes.append("generator covariances are singular; Gram-ratio form skipped")
    return ConductivityMatrix(L, tau, None, forms, tuple(notes))


def dissipative_rates(state: SpectralState, gen: single.GeneratorSet, basis: ObservableBasis,
                      policy: single.TauPolicy, units: UnitSystem = DEFAULT_UNITS,
                      tol: ToleranceSet = DEFAULT_TOL) -> np.ndarray:
    """Dx_i/Dt = Tr(dissipator B X_i B); B X_i B = X_i for full-rank rho."""
    ev = single.evaluate(state, gen, policy, units, tol)
    return np.array([float(np.real(np.trace(ev.dissipator @ range_restricted(state, X)))) for X in basis.X])


@dataclass(frozen=True)
class QuadraticEntropyRate:
    value: float  # k_B f^T L f
    direct: float  # k_B (D|D)/tau from the equation of motion
    inverse_form: float | None  # k_B r^T L^{-1} r on the invertible block
    inverse_block: tuple
    notes: tuple = ()


def _inverse_quadratic(L, rates, k_B, eps=1e-12):
    scale = max(float(np.max(np.abs(L))) if L.size else 0.0, 1e-300)
    block = [i for i in range(L.shape[0]) if L[i, i] > eps * scale]
    if not block:
        return None, (), "conductivity matrix vanishes; inverse form skipped"
    Lb = L[np.ix_(block, block)]
    if np.linalg.cond(Lb) > 1e10:
        return None, tuple(block), "conductivity block is singular; inverse form skipped"
    # rates outside the block are zero; inside it r = L_b f_b holds only if the block decouples
    off = [i for i in range(L.shape[0]) if i not in block]
    if off and np.max(np.abs(L[np.ix_(block, off)])) > eps * scale:
        return None, tuple(block), "block couples to the rest; inverse form skipped"
    r = rates[block]
    return k_B * float(r @ np.linalg.solve(Lb, r)), tuple(block), ""


def entropy_rate_quadratic(state: SpectralState, gen: single.GeneratorSet, basis: ObservableBasis,
                           policy: single.TauPolicy, units: UnitSystem = DEFAULT_UNITS,
                           tol: ToleranceSet = DEFAULT_TOL) -> QuadraticEntropyRate:
    aff = affinities_from_state(state, basis, units)
    cond = conductivity_matrix(state, gen, basis, policy, units, tol)
    value = units.k_B * float(aff.f @ cond.L @ aff.f)
    direct = single.entropy_rate(state, gen, policy, units, tol)
    rates = dissipative_rates(state, gen, basis, policy, units, tol)
    inv, block, note = _inverse_quadratic(cond.L, rates, units.k_B)
    return QuadraticEntropyRate(value, direct, inv, block, (note,) if note else ())


# ----------------------------------------------------------------------
# composite systems
# ----------------------------------------------------------------------

def composite_conductivities(state: SpectralState, comp: cmp.CompositionStructure, gens, basis: ObservableBasis,
                             policies, units: UnitSystem = DEFAULT_UNITS,
                             tol: ToleranceSet = DEFAULT_TOL) -> ConductivityMatrix:
    """L = sum_J L^J with L^J_ij = (1/tau_J)([sqrt(rho_J)(X_i)^J]_perp | [sqrt(rho_J)(X_j)^J]_perp)_J.

    The returned matrices are indexed by [B, X_1, X_2, ...]: for a rank-deficient
    rho the perceived range projector (B)^J need not lie in the local manifold,
    so f_0 contributes to the rates. For full-rank rho its row and column vanish.
    """
    ev = cmp.evaluate(state, comp, gens, policies, units, tol)
    ops = [state.B] + [range_restricted(state, X) for X in basis.X]
    parts = []
    for J, (fr, tau) in enumerate(zip(ev.frames, ev.taus)):
        sq = fr.rho_J.sqrt_rho
        vecs = [sq @ cmp.perception_operator(state, comp, J, X, fr.rho_Jbar) for X in ops]
        perp = [project_orthogonal(v, fr.local_manifold, orthonormal=True) for v in vecs]
        LJ = _gram_of(perp) / tau
        if ev.cut[J]:
            LJ = np.zeros_like(LJ)
        parts.append(0.5 * (LJ + LJ.T))
    L = sum(parts)
    return ConductivityMatrix(L, list(ev.taus), parts)


def composite_rates(state: SpectralState, comp: cmp.CompositionStructure, gens, basis: ObservableBasis, policies,
                    units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> np.ndarray:
    """Tr(dissipator X) for X in [B, X_1, ...]."""
    ev = cmp.evaluate(state, comp, gens, policies, units, tol)
    ops = [state.B] + [range_restricted(state, X) for X in basis.X]
    return np.array([float(np.real(np.trace(ev.dissipator @ X))) for X in ops])


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

def onsager_report(state: SpectralState, system, basis: ObservableBasis | None = None,
                   units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> dict:
    """Affinities, conductivities and their cross-checks as plain Python data."""
    basis = default_basis(state.dim) if basis is None else basis
    aff = affinities_from_state(state, basis, units)
    s_id = entropy_from_affinities(state, basis, aff)
    out = {
        "basis": {"kind": basis.orthogonality_tag, "labels": list(basis.labels), "manifold_size": basis.manifold_size},
        "affinities": {"f0": aff.f0, "f": aff.f.tolist(), "residual": aff.residual, "nullity": aff.nullity,
                       "notes": list(aff.notes)},
        "entropy_identity": {"from_affinities": s_id, "direct": state.entropy, "error": abs(s_id - state.entropy)},
    }
    if isinstance(system, cmp.CompositeSystem):
        cond = composite_conductivities(state, system.comp, system.gens, basis, system.policies, units, tol)
        rates = composite_rates(state, system.comp, system.gens, basis, system.policies, units, tol)
        f = aff.extended
        direct = cmp.evaluate(state, system.comp, system.gens, system.policies, units, tol).entropy_rate
        out["conductivity"] = {
            "index": ["B", *basis.labels],
            "L": cond.L.tolist(),
            "per_subsystem": [LJ.tolist() for LJ in cond.per_subsystem],
            "tau": cond.tau,
        }
        rate_err = float(np.max(np.abs(rates - cond.L @ f)))
        quad = units.k_B * float(f @ cond.L @ f)
        sub_sym = max(float(np.max(np.abs(LJ - LJ.T))) for LJ in cond.per_subsystem)
        sub_min = min(float(np.min(np.linalg.eigvalsh(LJ))) for LJ in cond.per_subsystem)
    else:
        gen, policy = system.gen, system.policy
        cond = conductivity_matrix(state, gen, basis, policy, units, tol)
        rates = dissipative_rates(state, gen, basis, policy, units, tol)
        quad_r = entropy_rate_quadratic(state, gen, basis, policy, units, tol)
        f = aff.f
        direct = quad_r.direct
        quad = quad_r.value
        rate_err = float(np.max(np.abs(rates - cond.L @ f)))
        sub_sym, sub_min = cond.symmetry_error, cond.min_eigenvalue
        out["conductivity"] = {
            "index": list(basis.labels),
            "L": cond.L.tolist(),
            "tau": cond.tau,
            "forms_max_relative_disagreement": cond.form_disagreement(),
            "notes": list(cond.notes),
        }
        out["inverse_form"] = {"value": quad_r.inverse_form, "block": list(quad_r.inverse_block),
                               "notes": list(quad_r.notes)}
        if basis.orthogonality_tag == "orthogonal_extension":
            a = basis.manifold_size
            ext = list(range(a, len(basis)))
            C = covariance_matrix(state, [basis.X[i] for i in ext])
            tau = cond.tau
            blk = cond.L[np.ix_(ext, ext)]
            out["fluctuation_dissipation"] = {
                "block_indices": ext,
                "max_error": float(np.max(np.abs(blk - C / tau))) if ext else 0.0,
            }
    out["rates"] = rates.tolist()
    out["checks"] = {
        "symmetry_error": cond.symmetry_error,
        "min_eigenvalue": cond.min_eigenvalue,
        "subsystem_symmetry_error": sub_sym,
        "subsystem_min_eigenvalue": sub_min,
        "rates_vs_L_f": rate_err,
        "entropy_rate_quadratic": quad,
        "entropy_rate_direct": direct,
        "entropy_rate_relative_error": abs(quad - direct) / max(abs(direct), 1e-300) if direct else abs(quad),
    }
    return out


__all__ = [
    "ObservableBasis", "AffinityVector", "ConductivityMatrix", "QuadraticEntropyRate", "BasisError",
    "default_basis", "affinities_from_state", "entropy_from_affinities", "conductivity_matrix",
    "dissipative_rates", "entropy_rate_quadratic", "composite_conductivities", "composite_rates",
    "onsager_report", "range_restricted",
]
