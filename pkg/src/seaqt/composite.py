"""Steepest-entropy-ascent dynamics of a composite of M distinguishable subsystems.

Each subsystem J follows the steepest ascent of the overall entropy as it is
perceived locally, through the operators (F)^J = Tr_Jbar[(I_J x rho_Jbar) F].
The dissipator is

    -sum_J (1/2 tau_J) (sqrt(rho_J) D_J + D_J^dagger sqrt(rho_J)) x rho_Jbar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .opspace import (
    DEFAULT_TOL,
    DEFAULT_UNITS,
    SpectralState,
    ToleranceSet,
    UnitSystem,
    as_operator,
    commutator,
    covariance,
    entropy_of,
    gram_projection_residual,
    hermitize,
    is_hermitian,
    mean_value,
    op_norm,
    real_inner,
    spectral_decompose,
)
from .single import (
    ConstantTau,
    DissipativeDirection,
    GeneratorSet,
    MaxEPRTau,
    TauPolicy,
    _lstsq_residual,
    direction_from,
    direction_from_vectors,
)


class PartitionError(ValueError):
    pass


# ----------------------------------------------------------------------
# tensor structure
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CompositionStructure:
    dims: tuple
    labels: tuple = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"subsystem dims must be positive integers, got {self.dims}")
        labels = tuple(self.labels) or tuple(chr(ord("A") + i) if i < 26 else f"S{i}" for i in range(len(dims)))
        if len(labels) != len(dims):
            raise ValueError("one label per subsystem")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def M(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, J) -> int:
        if isinstance(J, str):
            return self.labels.index(J)
        if not 0 <= J < self.M:
            raise IndexError(f"subsystem index {J} out of range for M = {self.M}")
        return int(J)

    def indices(self, keep) -> list[int]:
        if isinstance(keep, (int, str)):
            keep = [keep]
        idx = sorted({self.index(k) for k in keep})
        return idx

    def complement(self, keep) -> list[int]:
        idx = set(self.indices(keep))
        return [j for j in range(self.M) if j not in idx]

    def sub_dim(self, keep) -> int:
        return int(np.prod([self.dims[j] for j in self.indices(keep)])) if self.indices(keep) else 1

    def _check(self, rho):
        rho = as_operator(rho)
        if rho.shape[0] != self.dim:
            raise ValueError(f"operator dim {rho.shape[0]} does not match composition {self.dims}")
        return rho

    def partial_trace(self, rho, keep) -> np.ndarray:
        """Tr over every factor not in ``keep``; kept factors stay in ascending order."""
        rho = self._check(rho)
        keep = self.indices(keep)
        M = self.M
        t = rho.reshape(self.dims + self.dims)
        letters = "abcdefghijklmnopqrstuvwxyz"
        if 2 * M > len(letters) + 26:
            raise ValueError("too many subsystems")
        pool = letters + letters.upper()
        row = [pool[j] for j in range(M)]
        col = [pool[M + j] if j in keep else pool[j] for j in range(M)]
        out = [pool[j] for j in keep] + [pool[M + j] for j in keep]
        r = np.einsum("".join(row) + "".join(col) + "->" + "".join(out), t)
        d = self.sub_dim(keep)
        return r.reshape(d, d)

    def place(self, parts) -> np.ndarray:
        """Tensor product of operators acting on disjoint factor groups, in natural order.

        ``parts`` is a list of ``(operator, indices)``; every factor must be
        covered exactly once and each operator's factors are in ascending order.
        """
        order: list[int] = []
        ops = []
        for op, idx in parts:
            idx = self.indices(idx) if len(list(np.atleast_1d(idx))) else []
            op = np.asarray(op, dtype=complex)
            d = int(np.prod([self.dims[j] for j in idx])) if idx else 1
            if op.shape != (d, d):
                raise ValueError(f"operator shape {op.shape} does not match factors {idx}")
            order += idx
            ops.append(op)
        if sorted(order) != list(range(self.M)):
            raise ValueError(f"factor groups {order} do not partition 0..{self.M - 1}")
        big = reduce(np.kron, ops)
        M = self.M
        dims_in_order = [self.dims[j] for j in order]
        t = big.reshape(dims_in_order + dims_in_order)
        # axis k of t holds factor order[k]
        perm = [order.index(j) for j in range(M)]
        t = t.transpose(perm + [M + p for p in perm])
        return t.reshape(self.dim, self.dim)

    def embed(self, op, J) -> np.ndarray:
        """op on factor group J, identity elsewhere."""
        J = self.indices(J)
        rest = self.complement(J)
        parts = [(op, J)]
        if rest:
            parts.append((np.eye(self.sub_dim(rest)), rest))
        return self.place(parts)

    def permute(self, rho, order) -> np.ndarray:
        """Reorder tensor factors: the result has factor ``order[k]`` in slot k."""
        rho = self._check(rho)
        order = [self.index(o) for o in order]
        if sorted(order) != list(range(self.M)):
            raise ValueError("order must be a permutation of the subsystems")
        t = rho.reshape(self.dims + self.dims)
        t = t.transpose(order + [self.M + o for o in order])
        return t.reshape(self.dim, self.dim)

    def substructure(self, keep) -> "CompositionStructure":
        idx = self.indices(keep)
        return CompositionStructure(tuple(self.dims[j] for j in idx), tuple(self.labels[j] for j in idx))


def partial_trace(rho, comp: CompositionStructure, keep) -> np.ndarray:
    return comp.partial_trace(rho, keep)


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CompositeGenerators:
    comp: CompositionStructure
    local_hamiltonians: tuple
    V: np.ndarray | None = None
    global_extras: tuple = ()
    commutation_tolerance: float = 1e-9

    def __post_init__(self):
        comp = self.comp
        hs = tuple(as_operator(h) for h in self.local_hamiltonians)
        if len(hs) != comp.M:
            raise ValueError(f"need {comp.M} local Hamiltonians, got {len(hs)}")
        for J, h in enumerate(hs):
            if h.shape[0] != comp.dims[J]:
                raise ValueError(f"H_{comp.labels[J]} has dim {h.shape[0]}, factor has {comp.dims[J]}")
            if not is_hermitian(h):
                raise ValueError(f"H_{comp.labels[J]} is not Hermitian")
        V = np.zeros((comp.dim, comp.dim), dtype=complex) if self.V is None else as_operator(self.V)
        if V.shape[0] != comp.dim or not is_hermitian(V):
            raise ValueError("interaction V must be Hermitian on the full space")
        object.__setattr__(self, "local_hamiltonians", tuple(hermitize(h) for h in hs))
        object.__setattr__(self, "V", hermitize(V))
        H = sum((comp.embed(h, J) for J, h in enumerate(self.local_hamiltonians)), np.zeros_like(self.V))
        object.__setattr__(self, "_H", H + self.V)
        gen = GeneratorSet(self._H, tuple(self.global_extras), self.commutation_tolerance)
        object.__setattr__(self, "global_extras", gen.extras)
        object.__setattr__(self, "_gen", gen)

    @property
    def H(self) -> np.ndarray:
        return self._H

    @property
    def generator_set(self) -> GeneratorSet:
        return self._gen

    @property
    def operators(self) -> list[np.ndarray]:
        return self._gen.operators

    @classmethod
    def from_total(cls, comp: CompositionStructure, H, extras=()):
        """Wrap a full-space Hamiltonian with no separated local part."""
        zeros = tuple(np.zeros((d, d)) for d in comp.dims)
        return cls(comp, zeros, H, tuple(extras))


def separated_extra(comp: CompositionStructure, local_ops) -> np.ndarray:
    """sum_J N_J x I_Jbar for one local operator per subsystem (None for zero)."""
    total = np.zeros((comp.dim, comp.dim), dtype=complex)
    for J, N in enumerate(local_ops):
        if N is not None:
            total = total + comp.embed(as_operator(N), J)
    return total


def as_generators(comp: CompositionStructure, gens) -> CompositeGenerators:
    if isinstance(gens, CompositeGenerators):
        return gens
    if isinstance(gens, GeneratorSet):
        return CompositeGenerators.from_total(comp, gens.H, gens.extras)
    raise TypeError(f"cannot interpret {type(gens).__name__} as composite generators")


def split_noninteracting(comp: CompositionStructure, gens: CompositeGenerators, A, tol: float = 1e-9):
    """Write H (and each extra) as X_A x I_B + I_A x X_B for the bipartition (A, complement).

    Returns ``(H_A, H_B, [(G_A, G_B), ...])`` with the operators on the A and B
    factor groups; raises PartitionError if some operator couples A and B.
    """
    A = comp.indices(A)
    B = comp.complement(A)
    if not A or not B:
        raise PartitionError("both sides of the bipartition must be nonempty")
    dA, dB = comp.sub_dim(A), comp.sub_dim(B)

    def split(X, what):
        XA = comp.partial_trace(X, A) / dB
        XB = comp.partial_trace(X, B) / dA
        c = np.trace(X).real / (dA * dB)
        XB = XB - c * np.eye(dB)
        rest = X - comp.place([(XA, A), (np.eye(dB), B)]) - comp.place([(np.eye(dA), A), (XB, B)])
        if op_norm(rest) > tol:
            raise PartitionError(f"{what} couples the two sides (residual {op_norm(rest):.3g})")
        return hermitize(XA), hermitize(XB)

    HA, HB = split(gens.H, "H")
    extras = [split(G, f"extra generator {i}") for i, G in enumerate(gens.global_extras)]
    return HA, HB, extras


# ----------------------------------------------------------------------
# local frames
# ----------------------------------------------------------------------

def _policy_list(policies, M) -> list:
    if isinstance(policies, TauPolicy):
        return [policies] * M
    policies = list(policies)
    if len(policies) != M:
        raise ValueError(f"need {M} tau policies, got {len(policies)}")
    return policies


def reduced_complement(state: SpectralState, comp: CompositionStructure, J) -> np.ndarray:
    return comp.partial_trace(state.rho, comp.complement(J))


def perception_operator(state: SpectralState, comp: CompositionStructure, J, F, rho_Jbar=None) -> np.ndarray:
    """(F)^J = Tr_Jbar[(I_J x rho_Jbar) F]."""
    J = comp.index(J)
    rest = comp.complement(J)
    if not rest:
        return as_operator(F).copy()
    if rho_Jbar is None:
        rho_Jbar = reduced_complement(state, comp, J)
    dJ, dR = comp.dims[J], comp.sub_dim(rest)
    Fp = comp.permute(F, [J, *rest]).reshape(dJ, dR, dJ, dR)
    return np.einsum("rt,atbr->ab", rho_Jbar, Fp)


def sqrt_perception(state: SpectralState, comp: CompositionStructure, J, X, sqrt_Jbar) -> np.ndarray:
    """Tr_Jbar[(I_J x sqrt(rho_Jbar)) X] for an operator X = sqrt(rho) F."""
    J = comp.index(J)
    rest = comp.complement(J)
    if not rest:
        return X.copy()
    dJ, dR = comp.dims[J], comp.sub_dim(rest)
    Xp = comp.permute(X, [J, *rest]).reshape(dJ, dR, dJ, dR)
    return np.einsum("rt,atbr->ab", sqrt_Jbar, Xp)


@dataclass(frozen=True, eq=False)
class LocalFrame:
    J: int
    rho_J: SpectralState
    rho_Jbar: np.ndarray
    perceived_H: np.ndarray
    perceived_S: np.ndarray
    perceived_extras: list
    local_manifold: list
    direction: DissipativeDirection

    @property
    def generators(self) -> list[np.ndarray]:
        return [np.eye(self.rho_J.dim, dtype=complex), self.perceived_H, *self.perceived_extras]

    @property
    def h_variance(self) -> float:
        """<H,H>^J, the locally perceived energy dispersion."""
        return covariance(self.rho_J, self.perceived_H, self.perceived_H)


def local_frame(state: SpectralState, comp: CompositionStructure, gens, J, tol: ToleranceSet = DEFAULT_TOL) -> LocalFrame:
    gens = as_generators(comp, gens)
    J = comp.index(J)
    rho_J = spectral_decompose(comp.partial_trace(state.rho, [J]), state.units, tol, strict=False)
    rho_Jbar = reduced_complement(state, comp, J)
    perceive = lambda F: hermitize(perception_operator(state, comp, J, F, rho_Jbar))  # noqa: E731
    pH = perceive(gens.H)
    pS = perceive(state.entropy_op)
    pG = [perceive(G) for G in gens.global_extras]
    pBlog = -pS / state.units.k_B
    generators = [np.eye(comp.dims[J], dtype=complex), pH, *pG]
    direction = direction_from(rho_J.sqrt_rho @ pBlog, rho_J.sqrt_rho, generators, tol)
    return LocalFrame(J, rho_J, rho_Jbar, pH, pS, pG, direction.manifold_basis, direction)


def local_dissipative_direction(state: SpectralState, comp: CompositionStructure, gens, J,
                                tol: ToleranceSet = DEFAULT_TOL) -> DissipativeDirection:
    return local_frame(state, comp, gens, J, tol).direction


def local_direction_gram(frame: LocalFrame) -> np.ndarray:
    """D_J by the Gram-determinant expansion (needs independent perceived generators)."""
    sq = frame.rho_J.sqrt_rho
    return gram_projection_residual(frame.direction.target, [sq @ R for R in frame.generators])


def local_covariance(state: SpectralState, comp: CompositionStructure, J, F, G) -> float:
    """<F,G>^J = (sqrt(rho_J)(Delta F)^J | sqrt(rho_J)(Delta G)^J), with Delta taken w.r.t. the global mean."""
    J = comp.index(J)
    rho_J = spectral_decompose(comp.partial_trace(state.rho, [J]), state.units, strict=False)
    pF = perception_operator(state, comp, J, F) - mean_value(state, F) * np.eye(comp.dims[J])
    pG = perception_operator(state, comp, J, G) - mean_value(state, G) * np.eye(comp.dims[J])
    return real_inner(rho_J.sqrt_rho @ pF, rho_J.sqrt_rho @ pG)


def tau_J_value(policy: TauPolicy, state: SpectralState, comp: CompositionStructure, gens, J,
                dir_J: DissipativeDirection | None = None, units: UnitSystem = DEFAULT_UNITS,
                tol: ToleranceSet = DEFAULT_TOL) -> float:
    frame = local_frame(state, comp, gens, J, tol)
    d = frame.direction.d_norm_sq if dir_J is None else dir_J.d_norm_sq
    return policy(d, frame.h_variance, units)


# ----------------------------------------------------------------------
# equation of motion
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CompositeEvaluation:
    state: SpectralState
    hamiltonian: np.ndarray
    dissipator: np.ndarray
    frames: list
    taus: list
    local_terms: list  # (sqrt(rho_J) D_J + h.c.) / (2 tau_J), on factor J
    cut: list

    @property
    def total(self) -> np.ndarray:
        return self.hamiltonian + self.dissipator

    @property
    def d_norms_sq(self) -> list[float]:
        return [0.0 if c else f.direction.d_norm_sq for f, c in zip(self.frames, self.cut)]

    @property
    def d_norm_sq(self) -> float:
        return float(sum(self.d_norms_sq))

    @property
    def entropy_rate(self) -> float:
        k = self.state.units.k_B
        return float(sum(k * d / t for d, t in zip(self.d_norms_sq, self.taus)))

    @property
    def entropy_rate_bound(self) -> float:
        """sum_J (2 k_B / hbar) sqrt(<H,H>^J (D_J|D_J))."""
        u = self.state.units
        return float(sum(2 * u.k_B / u.hbar * math.sqrt(max(f.h_variance, 0.0) * d)
                         for f, d in zip(self.frames, self.d_norms_sq)))


def evaluate(state: SpectralState, comp: CompositionStructure, gens, policies, units: UnitSystem = DEFAULT_UNITS,
             tol: ToleranceSet = DEFAULT_TOL, *, dissipation: bool = True) -> CompositeEvaluation:
    gens = as_generators(comp, gens)
    pols = _policy_list(policies, comp.M)
    ham = -1j / units.hbar * commutator(gens.H, state.rho)
    diss = np.zeros_like(state.rho)
    frames, taus, terms, cuts = [], [], [], []
    for J in range(comp.M):
        fr = local_frame(state, comp, gens, J, tol)
        d = fr.direction.d_norm_sq
        at_eq = pols[J].cutoff_at_equilibrium and d < tol.equilibrium_epsilon
        cut = (not dissipation) or at_eq
        tau = pols[J](0.0 if at_eq else d, fr.h_variance, units)
        X = fr.rho_J.sqrt_rho @ fr.direction.D
        term = (X + X.conj().T) / (2.0 * tau)
        if cut:
            term = np.zeros_like(term)
        else:
            rest = comp.complement(J)
            parts = [(term, [J])] + ([(fr.rho_Jbar, rest)] if rest else [])
            diss = diss - comp.place(parts)
        frames.append(fr)
        taus.append(tau)
        terms.append(term)
        cuts.append(cut)
    return CompositeEvaluation(state, ham, diss, frames, taus, terms, cuts)


def composite_rhs(state: SpectralState, comp: CompositionStructure, gens, policies,
                  units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> np.ndarray:
    return evaluate(state, comp, gens, policies, units, tol).total


def entropy_rate(state: SpectralState, comp: CompositionStructure, gens, policies,
                 units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> float:
    return evaluate(state, comp, gens, policies, units, tol).entropy_rate


def variational_residual(state: SpectralState, comp: CompositionStructure, gens, policies,
                         units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> float:
    """Largest per-subsystem Lagrange residual of the local steepest-ascent condition."""
    ev = evaluate(state, comp, gens, policies, units, tol)
    worst = 0.0
    for fr, tau in zip(ev.frames, ev.taus):
        sq = fr.rho_J.sqrt_rho
        grad = 2.0 * sq @ fr.perceived_S
        cols = [2.0 * sq @ R for R in fr.generators]
        if fr.direction.d_norm_sq > 0.0:
            cols.append(-fr.direction.D / (2.0 * tau))
        worst = max(worst, _lstsq_residual(grad, cols))
    return worst


def reduced_rhs(state: SpectralState, comp: CompositionStructure, gens, policies, A,
                units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> np.ndarray:
    """d rho_A / dt assembled from the local terms of the factors in A, for a noninteracting bipartition."""
    gens = as_generators(comp, gens)
    A = comp.indices(A)
    HA, _, _ = split_noninteracting(comp, gens, A)
    sub = comp.substructure(A)
    rho_A = comp.partial_trace(state.rho, A)
    out = -1j / units.hbar * commutator(HA, rho_A)
    ev = evaluate(state, comp, gens, policies, units, tol)
    for k, J in enumerate(A):
        rest = [i for i in range(len(A)) if i != k]
        term = ev.local_terms[J]
        if rest:
            rho_rest = sub.partial_trace(rho_A, rest)
            out = out - sub.place([(term, [k]), (rho_rest, rest)])
        else:
            out = out - term
    return out


# ----------------------------------------------------------------------
# flawed variant: perception through sqrt(rho_Jbar)
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlawedEvaluation:
    state: SpectralState
    hamiltonian: np.ndarray
    dissipator: np.ndarray
    directions: list
    taus: list

    @property
    def total(self) -> np.ndarray:
        return self.hamiltonian + self.dissipator

    @property
    def d_norm_sq(self) -> float:
        return float(sum(d.d_norm_sq for d in self.directions))

    @property
    def entropy_rate(self) -> float:
        k = self.state.units.k_B
        return float(sum(k * d.d_norm_sq / t for d, t in zip(self.directions, self.taus)))


def flawed_evaluate(state: SpectralState, comp: CompositionStructure, gens, policies,
                    units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> FlawedEvaluation:
    """E_D = -sum_J (1/2 tau_J) D'_J x sqrt(rho_Jbar), where D'_J is the remainder of
    (sqrt(rho) B ln rho)^J_sqrt off the span of {(sqrt(rho) R_i)^J_sqrt}."""
    gens = as_generators(comp, gens)
    pols = _policy_list(policies, comp.M)
    sq = state.sqrt_rho
    E = np.zeros_like(state.rho)
    dirs, taus = [], []
    for J in range(comp.M):
        rest = comp.complement(J)
        rho_Jbar = reduced_complement(state, comp, J)
        sq_Jbar = spectral_decompose(rho_Jbar, units, tol, strict=False).sqrt_rho if rest else np.eye(1)
        vecs = [sqrt_perception(state, comp, J, sq @ R, sq_Jbar) for R in gens.operators]
        target = sqrt_perception(state, comp, J, state.sqrt_log(), sq_Jbar)
        d = direction_from_vectors(target, vecs, tol)
        rho_J = spectral_decompose(comp.partial_trace(state.rho, [J]), units, tol, strict=False)
        pH = perception_operator(state, comp, J, gens.H, rho_Jbar)
        at_eq = pols[J].cutoff_at_equilibrium and d.d_norm_sq < tol.equilibrium_epsilon
        tau = pols[J](0.0 if at_eq else d.d_norm_sq, covariance(rho_J, pH, pH), units)
        if not at_eq:
            parts = [(d.D, [J])] + ([(sq_Jbar, rest)] if rest else [])
            E = E - comp.place(parts) / (2.0 * tau)
        dirs.append(d)
        taus.append(tau)
    X = sq @ E
    diss = X + X.conj().T
    ham = -1j / units.hbar * commutator(gens.H, state.rho)
    return FlawedEvaluation(state, ham, diss, dirs, taus)


def flawed_variant_rhs(state: SpectralState, comp: CompositionStructure, gens, policies,
                       units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL) -> np.ndarray:
    return flawed_evaluate(state, comp, gens, policies, units, tol).total


# ----------------------------------------------------------------------
# correlations
# ----------------------------------------------------------------------

def _bipartition(comp: CompositionStructure, partition):
    if partition is None:
        if comp.M < 2:
            raise PartitionError("correlations need at least two subsystems")
        A = [0]
    else:
        A = comp.indices(partition[0])
    B = comp.complement(A)
    if partition is not None and len(partition) > 1 and comp.indices(partition[1]) != B:
        raise PartitionError("the two sides of the partition must be complementary")
    if not A or not B:
        raise PartitionError("both sides of the partition must be nonempty")
    return A, B


def correlation_functional(rho, comp: CompositionStructure, partition=None) -> float:
    """sigma_AB = Tr(rho ln rho) - Tr(rho_A ln rho_A) - Tr(rho_B ln rho_B) (in units of k_B)."""
    r = rho.rho if isinstance(rho, SpectralState) else as_operator(rho)
    A, B = _bipartition(comp, partition)
    eps = 1e-12 * comp.dim
    return (entropy_of(comp.partial_trace(r, A), 1.0, eps) + entropy_of(comp.partial_trace(r, B), 1.0, eps)
            - entropy_of(r, 1.0, eps))


def _entropy_clipped(rho) -> float:
    w = np.linalg.eigvalsh(hermitize(rho))
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def _sigma_clipped(rho, comp, A, B) -> float:
    return (_entropy_clipped(comp.partial_trace(rho, A)) + _entropy_clipped(comp.partial_trace(rho, B))
            - _entropy_clipped(rho))


def correlation_derivative(state: SpectralState, comp: CompositionStructure, X, partition=None,
                           method: str = "auto", h: float = 1e-6) -> float:
    """Directional derivative of sigma_AB at rho along a traceless Hermitian X."""
    A, B = _bipartition(comp, partition)
    rho = state.rho
    rA = spectral_decompose(comp.partial_trace(rho, A), state.units, strict=False)
    rB = spectral_decompose(comp.partial_trace(rho, B), state.units, strict=False)
    full = state.full_rank and rA.full_rank and rB.full_rank
    if method == "analytic" or (method == "auto" and full):
        val = (np.trace(X @ state.log_on_range) - np.trace(comp.partial_trace(X, A) @ rA.log_on_range)
               - np.trace(comp.partial_trace(X, B) @ rB.log_on_range))
        return float(np.real(val))

    def central(step):
        return (_sigma_clipped(rho + step * X, comp, A, B) - _sigma_clipped(rho - step * X, comp, A, B)) / (2 * step)

    d1, d2 = central(h), central(h / 2)
    return (4.0 * d2 - d1) / 3.0


@dataclass(frozen=True)
class CorrelationRates:
    sigma: float
    sigma_dot_H: float
    sigma_dot_D: float  # positive when the dissipator destroys correlations

    @property
    def total(self) -> float:
        return self.sigma_dot_H - self.sigma_dot_D


def correlation_rate_split(state: SpectralState, comp: CompositionStructure, gens, policies, partition=None,
                           units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL,
                           method: str = "auto") -> CorrelationRates:
    """d sigma_AB / dt = sigma_dot_H - sigma_dot_D, each part the derivative along one rhs term.

    The sign of sigma_dot_D is reported as computed; nothing here assumes it.
    """
    ev = evaluate(state, comp, gens, policies, units, tol)
    sH = correlation_derivative(state, comp, ev.hamiltonian, partition, method)
    sD = -correlation_derivative(state, comp, ev.dissipator, partition, method)
    return CorrelationRates(correlation_functional(state, comp, partition), sH, sD)


# ----------------------------------------------------------------------
# separability checks
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True, eq=False)
class SeparabilityReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def by_name(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "value": c.value, "threshold": c.threshold, "detail": c.detail}
                for c in self.checks}


def commutant_random(rng: np.random.Generator, ops, dim: int) -> np.ndarray:
    """Random Hermitian operator commuting with every operator in ``ops``."""
    if not ops:
        X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        return hermitize(X)
    I = np.eye(dim)
    K = np.vstack([np.kron(I, G) - np.kron(G.T, I) for G in ops])
    _, s, Vh = np.linalg.svd(K)
    null = Vh[np.sum(s > 1e-10 * max(1.0, s[0])):].conj()
    c = rng.normal(size=null.shape[0]) + 1j * rng.normal(size=null.shape[0])
    X = (c @ null).reshape(dim, dim, order="F")
    return hermitize(X)


def _dissipator_fn(variant):
    if variant == "paper":
        return lambda st, comp, g, p, u, t: evaluate(st, comp, g, p, u, t).dissipator
    if variant == "flawed":
        return lambda st, comp, g, p, u, t: flawed_evaluate(st, comp, g, p, u, t).dissipator
    if callable(variant):
        return variant
    raise ValueError(f"unknown dynamics variant {variant!r}")


def _side_generators(comp, A, HX, extras_X):
    sub = comp.substructure(A)
    return sub, CompositeGenerators.from_total(sub, HX, extras_X)


def separability_report(comp: CompositionStructure, gens, partition, states, tol: ToleranceSet = DEFAULT_TOL,
                        policies=None, units: UnitSystem = DEFAULT_UNITS, variant="paper",
                        rng: np.random.Generator | None = None, n_replacements: int = 3,
                        atol: float = 1e-9, entropy_atol: float = 1e-10) -> SeparabilityReport:
    """Numerical audit of the strong-separability conditions on a noninteracting bipartition.

    ``states`` are arbitrary (possibly correlated) states; product states are
    formed from their marginals. ``variant`` is ``"paper"``, ``"flawed"`` or a
    callable returning the dissipator.
    """
    gens = as_generators(comp, gens)
    policies = ConstantTau(1.0) if policies is None else policies
    pols = _policy_list(policies, comp.M)
    rng = np.random.default_rng(0) if rng is None else rng
    A, B = _bipartition(comp, partition)
    HA, HB, extras = split_noninteracting(comp, gens, A)
    dA, dB = comp.sub_dim(A), comp.sub_dim(B)
    diss = _dissipator_fn(variant)
    subA, gA = _side_generators(comp, A, HA, [e[0] for e in extras])
    subB, gB = _side_generators(comp, B, HB, [e[1] for e in extras])
    polA = [pols[j] for j in A]
    polB = [pols[j] for j in B]
    states = [s if isinstance(s, SpectralState) else spectral_decompose(s, units, tol) for s in states]
    HA_full = comp.place([(HA, A), (np.eye(dB), B)])
    HB_full = comp.place([(np.eye(dA), A), (HB, B)])

    fact, local, energy, ent, tau_fact, tau_local = 0.0, 0.0, 0.0, math.inf, 0.0, 0.0
    for st in states:
        rA = comp.partial_trace(st.rho, A)
        rB = comp.partial_trace(st.rho, B)
        prod = spectral_decompose(comp.place([(rA, A), (rB, B)]), units, tol, strict=False)
        sA = spectral_decompose(rA, units, tol, strict=False)
        sB = spectral_decompose(rB, units, tol, strict=False)

        # factorization on product states
        full = diss(prod, comp, gens, pols, units, tol)
        DA = diss(sA, subA, gA, polA, units, tol)
        DB = diss(sB, subB, gB, polB, units, tol)
        expected = comp.place([(DA, A), (rB, B)]) + comp.place([(rA, A), (DB, B)])
        fact = max(fact, op_norm(full - expected))

        # separate entropy nondecrease on product states
        for side, s_side in ((A, sA), (B, sB)):
            dr = comp.partial_trace(full, side)
            ent = min(ent, -units.k_B * float(np.real(np.trace(dr @ s_side.log_on_range))))

        # tau factorization (MaxEPR or constant closures)
        if variant == "paper":
            evP = evaluate(prod, comp, gens, pols, units, tol)
            evA = evaluate(sA, subA, gA, polA, units, tol)
            evB = evaluate(sB, subB, gB, polB, units, tol)
            side_taus = dict(zip(A, evA.taus)) | dict(zip(B, evB.taus))
            for J, t in enumerate(evP.taus):
                if evP.frames[J].direction.d_norm_sq >= tol.equilibrium_epsilon:
                    tau_fact = max(tau_fact, abs(t - side_taus[J]) / max(abs(t), 1e-300))

        # separate energy conservation on the (possibly correlated) state
        Dst = diss(st, comp, gens, pols, units, tol)
        energy = max(energy, abs(float(np.real(np.trace(HA_full @ Dst)))),
                     abs(float(np.real(np.trace(HB_full @ Dst)))))

        # locality: Tr_B of the dissipator ignores H_B
        base = comp.partial_trace(Dst, A)
        base_taus = evaluate(st, comp, gens, pols, units, tol).taus if variant == "paper" else None
        for _ in range(n_replacements):
            HBn = commutant_random(rng, [e[1] for e in extras], dB)
            Hn = HA_full + comp.place([(np.eye(dA), A), (HBn, B)])
            gn = CompositeGenerators.from_total(comp, Hn, gens.global_extras)
            local = max(local, op_norm(comp.partial_trace(diss(st, comp, gn, pols, units, tol), A) - base))
            if base_taus is not None:
                new_taus = evaluate(st, comp, gn, pols, units, tol).taus
                for J in A:
                    tau_local = max(tau_local, abs(new_taus[J] - base_taus[J]) / max(abs(base_taus[J]), 1e-300))

    checks = [
        CheckResult("product_factorization", fact < atol, fact, atol,
                    "product state dissipator vs D_A x rho_B + rho_A x D_B"),
        CheckResult("locality", local < atol, local, atol,
                    f"Tr_B of dissipator under {n_replacements} replacements of H_B"),
        CheckResult("separate_energy", energy < atol, energy, atol, "Tr[(H_A x I) dissipator] and B counterpart"),
        CheckResult("separate_entropy", ent >= -entropy_atol, ent, -entropy_atol,
                    "subsystem entropy rates on product states (minimum)"),
    ]
    if variant == "paper":
        checks.append(CheckResult("tau_factorization", tau_fact < atol, tau_fact, atol,
                                  "tau_J on product state vs on the isolated side"))
        checks.append(CheckResult("tau_locality", tau_local < atol, tau_local, atol,
                                  "tau_J (J in A) under replacements of H_B"))
    return SeparabilityReport(checks)


# ----------------------------------------------------------------------
# system wrapper used by the integrator
# ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CompositeSystem:
    comp: CompositionStructure
    gens: CompositeGenerators
    policies: object = field(default_factory=ConstantTau)
    variant: str = "paper"  # "paper", "flawed" or "unitary"
    partition: tuple | None = None

    def __post_init__(self):
        if self.variant not in ("paper", "flawed", "unitary"):
            raise ValueError(f"unknown dynamics variant {self.variant!r}")
        _policy_list(self.policies, self.comp.M)

    @property
    def H(self) -> np.ndarray:
        return self.gens.H

    @property
    def generators(self) -> GeneratorSet:
        return self.gens.generator_set

    def evaluate(self, state: SpectralState, units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL):
        if self.variant == "flawed":
            return flawed_evaluate(state, self.comp, self.gens, self.policies, units, tol)
        return evaluate(state, self.comp, self.gens, self.policies, units, tol,
                        dissipation=self.variant == "paper")

    def rhs(self, state: SpectralState, units: UnitSystem = DEFAULT_UNITS, tol: ToleranceSet = DEFAULT_TOL):
        return self.evaluate(state, units, tol).total

    def correlation(self, state: SpectralState) -> float | None:
        if self.comp.M < 2:
            return None
        return correlation_functional(state, self.comp, self.partition)


__all__ = [
    "CompositionStructure", "CompositeGenerators", "LocalFrame", "CompositeEvaluation", "FlawedEvaluation",
    "CompositeSystem", "SeparabilityReport", "CheckResult", "CorrelationRates", "PartitionError",
    "partial_trace", "perception_operator", "local_frame", "local_dissipative_direction", "local_covariance",
    "tau_J_value", "evaluate", "composite_rhs", "entropy_rate", "variational_residual", "reduced_rhs",
    "flawed_evaluate", "flawed_variant_rhs", "correlation_functional", "correlation_derivative",
    "correlation_rate_split", "separability_report", "separated_extra", "split_noninteracting",
    "commutant_random",
]
