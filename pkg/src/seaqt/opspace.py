"""Operator-space kernel.

Dense complex matrices equipped with the real scalar product
``(F|G) = Re Tr(F^dagger G)``, spectral utilities for density operators,
covariances, Gram determinants and orthogonal projections.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_DIM = 64


class InvalidStateError(ValueError):
    """Raised when a matrix violates a density-operator invariant."""


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class UnitSystem:
    hbar: float = 1.0
    k_B: float = 1.0

    def __post_init__(self):
        if not (self.hbar > 0 and self.k_B > 0):
            raise ValueError(f"hbar and k_B must be positive, got {self.hbar}, {self.k_B}")


@dataclass(frozen=True)
class ToleranceSet:
    """Numerical thresholds.

    ``rank_epsilon=None`` means ``1e-12 * dim`` for the matrix at hand.
    ``equilibrium_epsilon`` is compared against squared norms such as (D|D).
    """

    rank_epsilon: float | None = None
    manifold_epsilon: float = 1e-10
    equilibrium_epsilon: float = 1e-16
    drift_epsilon: float = 1e-8

    def __post_init__(self):
        for name in ("manifold_epsilon", "equilibrium_epsilon", "drift_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rank_epsilon is not None and not self.rank_epsilon > 0:
            raise ValueError("rank_epsilon must be positive")

    def rank_eps(self, dim: int) -> float:
        return self.rank_epsilon if self.rank_epsilon is not None else 1e-12 * dim


DEFAULT_UNITS = UnitSystem()
DEFAULT_TOL = ToleranceSet()


# ----------------------------------------------------------------------
# elementary matrix helpers
# ----------------------------------------------------------------------

def as_operator(F) -> np.ndarray:
    F = np.asarray(F, dtype=complex)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {F.shape}")
    if F.shape[0] > MAX_DIM:
        raise DimensionError(f"dimension {F.shape[0]} exceeds the dense limit {MAX_DIM}")
    return F


def dag(F: np.ndarray) -> np.ndarray:
    return F.conj().T


def hermitize(F: np.ndarray) -> np.ndarray:
    return 0.5 * (F + F.conj().T)


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def anticommutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B + B @ A


def op_norm(F: np.ndarray) -> float:
    """Spectral (operator) norm."""
    if F.size == 0:
        return 0.0
    return float(np.linalg.norm(F, 2))


def is_hermitian(F: np.ndarray, atol: float = 1e-10) -> bool:
    F = np.asarray(F)
    scale = max(1.0, float(np.max(np.abs(F)))) if F.size else 1.0
    return bool(np.max(np.abs(F - F.conj().T), initial=0.0) <= atol * scale)


def _check_same_dim(*ops):
    shapes = {np.shape(op) for op in ops}
    if len(shapes) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(shapes)}")


def real_vec(F: np.ndarray) -> np.ndarray:
    """Real vectorization in which the Euclidean dot product equals ``real_inner``."""
    F = np.asarray(F, dtype=complex).ravel()
    return np.concatenate([F.real, F.imag])


def from_real_vec(v: np.ndarray, dim: int) -> np.ndarray:
    n = dim * dim
    return (v[:n] + 1j * v[n:]).reshape(dim, dim)


def real_inner(F, G) -> float:
    """(F|G) = 1/2 Tr(F^dagger G + G^dagger F)."""
    F = np.asarray(F)
    G = np.asarray(G)
    _check_same_dim(F, G)
    return float(np.vdot(F, G).real)


def norm(F) -> float:
    return float(np.sqrt(max(real_inner(F, F), 0.0)))


# ----------------------------------------------------------------------
# density operators
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralState:
    """A density operator with its cached spectral data.

    Eigenvalues are stored in descending order; the columns of
    ``eigenvectors`` match. Eigenvalues below ``rank_epsilon`` are treated as
    exact zeros when building ``sqrt_rho``, ``range_projector`` and
    ``log_on_range``.
    """

    rho: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sqrt_rho: np.ndarray
    range_projector: np.ndarray
    log_on_range: np.ndarray
    entropy_op: np.ndarray
    rank_epsilon: float
    units: UnitSystem = field(default=DEFAULT_UNITS)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.eigenvalues >= self.rank_epsilon))

    @property
    def full_rank(self) -> bool:
        return self.rank == self.dim

    @property
    def B(self) -> np.ndarray:
        return self.range_projector

    @property
    def entropy(self) -> float:
        """s = -k_B Tr(rho ln rho)."""
        p = self.eigenvalues[self.eigenvalues >= self.rank_epsilon]
        return float(-self.units.k_B * np.sum(p * np.log(p)))

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))

    def sqrt_log(self) -> np.ndarray:
        """sqrt(rho) B ln(rho)."""
        return self.sqrt_rho @ self.log_on_range


def spectral_decompose(rho, units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL,
                       *, strict: bool = True, max_rank: int | None = None) -> SpectralState:
    """Diagonalize a density operator and build sqrt(rho), B, B ln(rho) and S.

    With ``strict=False`` the trace and positivity checks are skipped and
    negative eigenvalues are clipped; this is used for intermediate
    Runge-Kutta stages, which need not be exact states. The logarithm is then
    taken of the clipped spectrum rescaled to unit sum, so a stage that
    slightly overshoots a pure state still has B ln(rho) = 0.

    ``max_rank`` caps the range at the largest ``max_rank`` eigenvalues; the
    integrator uses it to keep the initial nullity, which the exact flow
    preserves.
    """
    rho = as_operator(rho)
    dim = rho.shape[0]
    eps = tol.rank_eps(dim)
    if strict:
        if not is_hermitian(rho, 1e-10):
            raise InvalidStateError("rho is not Hermitian (|rho - rho^dagger| > 1e-10)")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > 1e-10:
            raise InvalidStateError(f"Tr(rho) = {tr!r} differs from 1 by more than 1e-10")
    rho = hermitize(rho)
    w, V = np.linalg.eigh(rho)
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    if strict and w[-1] < -eps:
        raise InvalidStateError(f"rho has eigenvalue {w[-1]!r} below -rank_epsilon ({-eps:g})")
    on_range = w >= eps
    if max_rank is not None:
        on_range[max_rank:] = False
    p = np.where(on_range, w, 0.0)
    sq = np.sqrt(p)
    logp = np.zeros_like(p)
    logp[on_range] = np.log(p[on_range] if strict else p[on_range] / p[on_range].sum())
    Vd = V.conj().T
    sqrt_rho = (V * sq) @ Vd
    B = (V * on_range.astype(float)) @ Vd
    log_on_range = (V * logp) @ Vd
    return SpectralState(
        rho=rho,
        eigenvalues=w,
        eigenvectors=V,
        sqrt_rho=sqrt_rho,
        range_projector=B,
        log_on_range=log_on_range,
        entropy_op=-units.k_B * log_on_range,
        rank_epsilon=eps,
        units=units,
    )


def ensure_state(rho_or_state, units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> SpectralState:
    if isinstance(rho_or_state, SpectralState):
        return rho_or_state
    return spectral_decompose(rho_or_state, units, tol)


def mean_value(state: SpectralState, F) -> float:
    """Tr(rho F)."""
    F = np.asarray(F)
    _check_same_dim(state.rho, F)
    return float(np.real(np.trace(state.rho @ F)))


def delta(state: SpectralState, F) -> np.ndarray:
    """F - Tr(rho F) I."""
    return F - mean_value(state, F) * np.eye(state.dim)


def covariance(state: SpectralState, F, G) -> float:
    """<Delta F, Delta G> = 1/2 Tr(rho {Delta F, Delta G})."""
    F = np.asarray(F)
    G = np.asarray(G)
    _check_same_dim(state.rho, F, G)
    dF = delta(state, F)
    dG = delta(state, G)
    return float(0.5 * np.real(np.trace(state.rho @ anticommutator(dF, dG))))


def covariance_matrix(state: SpectralState, Fs, Gs=None) -> np.ndarray:
    """Matrix of covariances <Delta F_i, Delta G_j>; ``Gs`` defaults to ``Fs``."""
    def cols(ops):
        ops = [np.asarray(F) for F in ops]
        _check_same_dim(state.rho, *ops)
        out = np.empty((len(ops), state.dim ** 2), dtype=complex)
        for k, F in enumerate(ops):
            out[k] = (delta(state, F) @ state.sqrt_rho).ravel()
        return out
    A = cols(Fs)
    B = A if Gs is None else cols(Gs)
    # Re Tr(rho dF dG) is the symmetrized expectation for Hermitian F, G
    return np.real(A.conj() @ B.T)


def entropy_of(rho, k_B: float = 1.0, eps: float = 0.0) -> float:
    """-k_B sum p ln p over the positive part of the spectrum."""
    w = np.linalg.eigvalsh(hermitize(np.asarray(rho, dtype=complex)))
    w = w[w > eps]
    return float(-k_B * np.sum(w * np.log(w)))


# ----------------------------------------------------------------------
# Gram determinants and projections
# ----------------------------------------------------------------------

def gram_matrix(vectors) -> np.ndarray:
    X = np.array([real_vec(v) for v in vectors])
    return X @ X.T


def gram_det(vectors) -> float:
    """Determinant of the matrix of pairwise real inner products."""
    vectors = list(vectors)
    if not vectors:
        raise ValueError("gram_det needs at least one operator")
    _check_same_dim(*vectors)
    return float(np.linalg.det(gram_matrix(vectors)))


def orthonormalize(vectors, tol: ToleranceSet = DEFAULT_TOL, *, return_coefficients: bool = False):
    """Rank-revealing modified Gram-Schmidt under ``real_inner``.

    A vector is dropped when its residual norm after projection is below
    ``tol.manifold_epsilon`` times ``max(1, |v|)``. Each kept vector has a
    positive component along the input it came from, so an orthonormal input
    is returned unchanged.

    Returns ``(basis, retained)`` and, with ``return_coefficients``, a real
    matrix ``C`` such that ``basis[k] = sum_i C[k, i] * vectors[i]``.
    """
    vectors = [np.asarray(v, dtype=complex) for v in vectors]
    if not vectors:
        raise ValueError("orthonormalize needs at least one operator")
    _check_same_dim(*vectors)
    shape = vectors[0].shape
    n = len(vectors)
    basis: list[np.ndarray] = []
    coeffs: list[np.ndarray] = []
    retained: list[int] = []
    for i, v in enumerate(vectors):
        r = v.copy()
        c = np.zeros(n)
        c[i] = 1.0
        # two passes keep orthogonality at machine precision
        for _ in range(2):
            for b, cb in zip(basis, coeffs):
                proj = real_inner(b, r)
                r = r - proj * b
                c = c - proj * cb
        rn = norm(r)
        if rn < tol.manifold_epsilon * max(1.0, norm(v)):
            continue
        basis.append(r / rn)
        coeffs.append(c / rn)
        retained.append(i)
    C = np.array(coeffs) if coeffs else np.zeros((0, n))
    if return_coefficients:
        return basis, retained, C
    return basis, retained


def project_onto(T, orthonormal_basis) -> tuple[np.ndarray, np.ndarray]:
    """Component of T inside the span of an orthonormal list, and its coefficients."""
    T = np.asarray(T, dtype=complex)
    c = np.array([real_inner(a, T) for a in orthonormal_basis])
    P = np.zeros_like(T)
    for ck, a in zip(c, orthonormal_basis):
        P = P + ck * a
    return P, c


def project_orthogonal(T, basis, tol: ToleranceSet = DEFAULT_TOL, *, orthonormal: bool = False) -> np.ndarray:
    """T minus its projection on the real span of ``basis``."""
    T = np.asarray(T, dtype=complex)
    if not basis:
        return T.copy()
    _check_same_dim(T, *basis)
    A = list(basis) if orthonormal else orthonormalize(basis, tol)[0]
    R = T - project_onto(T, A)[0]
    # second sweep removes rounding leftovers
    return R - project_onto(R, A)[0]


def gram_projection_residual(T, vectors) -> np.ndarray:
    """Orthogonal remainder of T computed by the Gram-determinant expansion.

    The numerator determinant has the operators ``[T, v_1, ..., v_n]`` in its
    first row; it is expanded along that row by cofactors and divided by
    ``Gamma(v_1..v_n)``. Needs a linearly independent ``vectors`` list.
    """
    T = np.asarray(T, dtype=complex)
    vectors = [np.asarray(v, dtype=complex) for v in vectors]
    ops = [T] + vectors
    n = len(vectors)
    G = gram_matrix(ops)  # G[a, b] = (ops[a]|ops[b])
    # rows k = 1..n hold ((ops[c] | v_k))_c
    lower = G[1:, :]
    denom = np.linalg.det(G[1:, 1:])
    out = np.zeros_like(T)
    for c in range(n + 1):
        minor = np.delete(lower, c, axis=1)
        cof = (-1) ** c * (np.linalg.det(minor) if n else 1.0)
        out = out + cof * ops[c]
    return out / denom


def gram_ratio(T, vectors) -> float:
    """Gamma(T, v...) / Gamma(v...), the squared distance of T from span(v)."""
    return gram_det([T] + list(vectors)) / gram_det(vectors)


# ----------------------------------------------------------------------
# bases and random sampling
# ----------------------------------------------------------------------

def gell_mann_basis(dim: int) -> list[np.ndarray]:
    """Generalized Gell-Mann matrices: dim**2 - 1 traceless Hermitian operators."""
    out = []
    for j in range(dim):
        for k in range(j + 1, dim):
            S = np.zeros((dim, dim), dtype=complex)
            S[j, k] = S[k, j] = 1.0
            out.append(S)
            A = np.zeros((dim, dim), dtype=complex)
            A[j, k] = -1j
            A[k, j] = 1j
            out.append(A)
    for l in range(1, dim):
        d = np.zeros(dim)
        d[:l] = 1.0
        d[l] = -l
        out.append(np.diag(d * np.sqrt(2.0 / (l * (l + 1)))).astype(complex))
    return out


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * hermitize(X)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    X = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    Q, R = np.linalg.qr(X)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None,
                   min_eig: float = 0.0) -> np.ndarray:
    """Random density operator of the given rank (Hilbert-Schmidt measure).

    ``min_eig`` mixes in the maximally mixed state so that every eigenvalue
    is at least that value (full-rank samples away from the boundary).
    """
    rank = dim if rank is None else rank
    G = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = G @ G.conj().T
    rho = rho / np.trace(rho).real
    if min_eig > 0:
        lam = min(1.0, min_eig * dim)
        rho = (1 - lam) * rho + lam * np.eye(dim) / dim
    return hermitize(rho)


def pure_state(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())
