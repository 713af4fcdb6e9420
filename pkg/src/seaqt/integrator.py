"""Time integration of the nonlinear equation of motion with invariant monitoring."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .opspace import (
    DEFAULT_TOL,
    DEFAULT_UNITS,
    SpectralState,
    ToleranceSet,
    UnitSystem,
    as_operator,
    commutator,
    hermitize,
    op_norm,
    real_inner,
    spectral_decompose,
)
from . import single

METHODS = ("RK4", "adaptive_RK45")
PROJECTIONS = ("renormalize_trace", "psd_clip_then_renormalize", "none")


class IntegrationError(RuntimeError):
    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "RK4"
    dt: float = 0.01
    t_end: float = 1.0
    projection_policy: str = "psd_clip_then_renormalize"
    equilibrium_epsilon: float = 1e-16
    max_drift: float = 1e-6
    sample_every: int = 1
    stop_at_equilibrium: bool = True
    rtol: float = 1e-8
    atol: float = 1e-10
    min_dt: float = 1e-12
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.projection_policy not in PROJECTIONS:
            raise ValueError(f"projection_policy must be one of {PROJECTIONS}, got {self.projection_policy!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.sample_every < 1:
            raise ValueError("sample_every must be at least 1")
        if not (self.equilibrium_epsilon > 0 and self.max_drift > 0 and self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True, eq=False)
class Sample:
    t: float
    rho: np.ndarray
    entropy: float
    energy: float
    means: tuple  # Tr(rho G_i)
    eigenvalues: np.ndarray
    d_norm_sq: float
    entropy_rate: float
    taus: tuple
    sigma: float | None = None


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # equilibrium_reached | projection_applied | drift_warning
    detail: str = ""
    value: float | None = None


@dataclass(eq=False)
class Trajectory:
    samples: list = field(default_factory=list)
    events: list = field(default_factory=list)
    config: IntegratorConfig | None = None
    steps: int = 0
    rejected_steps: int = 0
    max_drift: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def entropies(self) -> np.ndarray:
        return np.array([s.entropy for s in self.samples])

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.samples])

    @property
    def initial(self) -> Sample:
        return self.samples[0]

    @property
    def final(self) -> Sample:
        return self.samples[-1]

    def state_at(self, k: int, units: UnitSystem = DEFAULT_UNITS) -> SpectralState:
        return spectral_decompose(self.samples[k].rho, units, strict=False)

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e.kind == kind]


# ----------------------------------------------------------------------
# stepping
# ----------------------------------------------------------------------

# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


def _field(system, units, tol, max_rank=None):
    def f(rho):
        st = spectral_decompose(rho, units, tol, strict=False, max_rank=max_rank)
        return system.evaluate(st, units, tol).total
    return f


def rk4_step(f, rho, dt):
    k1 = f(rho)
    k2 = f(rho + 0.5 * dt * k1)
    k3 = f(rho + 0.5 * dt * k2)
    k4 = f(rho + dt * k3)
    return rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def dp45_step(f, rho, dt):
    """One Dormand-Prince step; returns (5th-order solution, error estimate)."""
    k = []
    for i in range(7):
        y = rho
        for a, kj in zip(_DP_A[i], k):
            if a:
                y = y + dt * a * kj
        k.append(f(y))
    y5 = rho + dt * sum(b * kj for b, kj in zip(_DP_B5, k) if b)
    y4 = rho + dt * sum(b * kj for b, kj in zip(_DP_B4, k) if b)
    return y5, y5 - y4


def _project(rho, policy):
    """Apply the projection policy; returns (rho, largest clipped negative eigenvalue magnitude)."""
    rho = hermitize(rho)
    if policy == "none":
        return rho, 0.0
    clipped = 0.0
    if policy == "psd_clip_then_renormalize":
        w, V = np.linalg.eigh(rho)
        if w[0] < 0.0:
            clipped = float(-w[0])
            w = np.clip(w, 0.0, None)
            rho = hermitize((V * w) @ V.conj().T)
    return rho / np.trace(rho).real, clipped


# ----------------------------------------------------------------------
# driver
# ----------------------------------------------------------------------

def _sample(t, state, system, units, tol) -> Sample:
    ev = system.evaluate(state, units, tol)
    gen = system.generators
    energy = float(np.real(np.trace(state.rho @ gen.H)))
    means = tuple(float(np.real(np.trace(state.rho @ G))) for G in gen.extras)
    sigma = system.correlation(state) if hasattr(system, "correlation") else None
    return Sample(t, state.rho.copy(), state.entropy, energy, means, state.eigenvalues.copy(),
                  float(ev.d_norm_sq), float(ev.entropy_rate), tuple(float(x) for x in ev.taus), sigma)


def integrate(initial, system, config: IntegratorConfig | None = None, units: UnitSystem = DEFAULT_UNITS,
              tol: ToleranceSet = DEFAULT_TOL) -> Trajectory:
    """Integrate drho/dt = system.rhs(rho) from ``initial`` to ``config.t_end``.

    ``system`` is a ``SingleSystem`` or ``CompositeSystem``. Invariants are
    checked after every step; a drift above ``tol.drift_epsilon`` (or an
    entropy decrease above 1e-10) is recorded as an event, one above
    ``config.max_drift`` aborts with IntegrationError.
    """
    config = config or IntegratorConfig()
    state = initial if isinstance(initial, SpectralState) else spectral_decompose(initial, units, tol)
    # the exact flow preserves rank; stage states only pick up O(dt^k) spurious eigenvalues
    rank0 = state.rank if state.rank < state.dim else None
    f = _field(system, units, tol, rank0)
    gen = system.generators
    H = gen.H
    ops = [H, *gen.extras]
    ref = [float(np.real(np.trace(state.rho @ R))) for R in ops]
    scale = [max(abs(r), op_norm(R), 1e-300) for r, R in zip(ref, ops)]

    traj = Trajectory(config=config)
    traj.max_drift = {"trace": 0.0, "energy": 0.0, "extras": 0.0, "entropy_decrease": 0.0, "min_eigenvalue": 0.0,
                      "clipped": 0.0}
    traj.samples.append(_sample(0.0, state, system, units, tol))

    t = 0.0
    dt = min(config.dt, config.t_end)
    rho = state.rho
    s_prev = state.entropy
    steps_since_sample = 0
    drift_warned = set()

    def warn(kind_key, value, detail):
        if kind_key not in drift_warned:
            traj.events.append(Event(t, "drift_warning", detail, value))
            drift_warned.add(kind_key)

    while t < config.t_end * (1 - 1e-14):
        if traj.steps >= config.max_steps:
            raise IntegrationError("maximum number of steps exceeded", {"t": t, "steps": traj.steps})
        h = min(dt, config.t_end - t)
        if config.t_end - t - h <= 1e-9 * h:
            # fold a round-off remainder into this step instead of taking a sliver step later
            h = config.t_end - t
        if config.method == "RK4":
            new = rk4_step(f, rho, h)
            t_new = t + h
        else:
            while True:
                if h < config.min_dt:
                    raise IntegrationError(
                        f"step size underflow at t = {t:.6g} (dt = {h:.3g})",
                        {"t": t, "dt": h, "d_norm_sq": traj.samples[-1].d_norm_sq},
                    )
                new, err = dp45_step(f, rho, h)
                sc = config.atol + config.rtol * np.maximum(np.abs(rho), np.abs(new))
                en = float(np.sqrt(np.mean((np.abs(err) / sc) ** 2)))
                if en <= 1.0:
                    factor = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                    t_new = t + h
                    dt = h * factor
                    break
                traj.rejected_steps += 1
                h = h * max(0.2, 0.9 * en ** -0.25)
        new, clipped = _project(new, config.projection_policy)
        rho = new
        t = t_new
        traj.steps += 1
        state = spectral_decompose(rho, units, tol, strict=False, max_rank=rank0)

        # invariant audit
        md = traj.max_drift
        tr_err = abs(float(np.trace(rho).real) - 1.0)
        drifts = [abs(float(np.real(np.trace(rho @ R))) - r) / s for R, r, s in zip(ops, ref, scale)]
        e_drift = drifts[0]
        x_drift = max(drifts[1:], default=0.0)
        s_new = state.entropy
        decrease = max(s_prev - s_new, 0.0)
        min_eig = float(state.eigenvalues[-1])
        md["trace"] = max(md["trace"], tr_err)
        md["energy"] = max(md["energy"], e_drift)
        md["extras"] = max(md["extras"], x_drift)
        md["entropy_decrease"] = max(md["entropy_decrease"], decrease)
        md["min_eigenvalue"] = min(md["min_eigenvalue"], min_eig)
        md["clipped"] = max(md["clipped"], clipped)
        if clipped > 0.0:
            if clipped > 1e-9:
                warn("clip", clipped, f"projection clipped a negative eigenvalue of magnitude {clipped:.3g}")
            elif "clip_small" not in drift_warned:
                traj.events.append(Event(t, "projection_applied", "negative eigenvalue clipped", clipped))
                drift_warned.add("clip_small")
        if tr_err > 1e-9:
            warn("trace", tr_err, f"trace drift {tr_err:.3g}")
        if e_drift > tol.drift_epsilon:
            warn("energy", e_drift, f"relative energy drift {e_drift:.3g}")
        if x_drift > tol.drift_epsilon:
            warn("extras", x_drift, f"relative drift of conserved generators {x_drift:.3g}")
        if decrease > 1e-10:
            warn("entropy", decrease, f"entropy decreased by {decrease:.3g} in one step")
        if min_eig < -1e-9:
            warn("eig", min_eig, f"eigenvalue {min_eig:.3g} below -1e-9")
        worst = max(tr_err, e_drift, x_drift, decrease)
        if worst > config.max_drift or not np.all(np.isfinite(rho)):
            raise IntegrationError(
                f"invariant drift {worst:.3g} exceeds max_drift {config.max_drift:g} at t = {t:.6g}",
                {"t": t, "trace": tr_err, "energy": e_drift, "extras": x_drift, "entropy_decrease": decrease},
            )
        s_prev = s_new

        steps_since_sample += 1
        done = t >= config.t_end * (1 - 1e-14)
        need_eq_check = config.stop_at_equilibrium
        if steps_since_sample >= config.sample_every or done or need_eq_check:
            smp = _sample(t, state, system, units, tol)
            at_eq = (need_eq_check and smp.d_norm_sq < config.equilibrium_epsilon
                     and real_inner(commutator(H, rho), commutator(H, rho)) < config.equilibrium_epsilon)
            if steps_since_sample >= config.sample_every or done or at_eq:
                traj.samples.append(smp)
                steps_since_sample = 0
            if at_eq:
                traj.events.append(Event(t, "equilibrium_reached", "(D|D) and |[H,rho]|^2 below threshold",
                                         smp.d_norm_sq))
                break
    return traj


# ----------------------------------------------------------------------
# references and diagnostics
# ----------------------------------------------------------------------

def propagator(H, t: float, units: UnitSystem = DEFAULT_UNITS) -> np.ndarray:
    """exp(-i t H / hbar)."""
    w, V = np.linalg.eigh(hermitize(as_operator(H)))
    return (V * np.exp(-1j * t * w / units.hbar)) @ V.conj().T


def bloch_reference(rho0, rho_e, tau_e: float, H, t: float, units: UnitSystem = DEFAULT_UNITS) -> np.ndarray:
    """exp(-t/tau) U rho0 U^dagger + (1 - exp(-t/tau)) rho_e, U = exp(-itH/hbar)."""
    r0 = rho0.rho if isinstance(rho0, SpectralState) else as_operator(rho0)
    re = rho_e.rho if isinstance(rho_e, SpectralState) else as_operator(rho_e)
    U = propagator(H, t, units)
    decay = math.exp(-t / tau_e)
    return decay * (U @ r0 @ U.conj().T) + (1.0 - decay) * re


def trace_distance(a, b) -> float:
    """Tr|a - b|."""
    A = a.rho if isinstance(a, SpectralState) else as_operator(a)
    B = b.rho if isinstance(b, SpectralState) else as_operator(b)
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(A - B)))))


@dataclass(frozen=True, eq=False)
class AttractorReport:
    target: np.ndarray
    terminal_distance: float
    entropy_monotone: bool
    max_entropy_decrease: float
    initial_nullity: int
    max_kernel_eigenvalue: float
    rank_preserved: bool
    restricted: bool  # target restricted to the initial range

    def as_dict(self) -> dict:
        return {
            "terminal_distance": self.terminal_distance,
            "entropy_monotone": self.entropy_monotone,
            "max_entropy_decrease": self.max_entropy_decrease,
            "initial_nullity": self.initial_nullity,
            "max_kernel_eigenvalue": self.max_kernel_eigenvalue,
            "rank_preserved": self.rank_preserved,
            "target_restricted_to_initial_range": self.restricted,
            "target_eigenvalues": np.sort(np.linalg.eigvalsh(self.target))[::-1].tolist(),
        }


def attractor_summary(traj: Trajectory, gen: single.GeneratorSet, units: UnitSystem = DEFAULT_UNITS,
                      tol: ToleranceSet = DEFAULT_TOL, entropy_slack: float = 1e-10,
                      kernel_bound: float = 1e-8) -> AttractorReport:
    """Compare the end of a run with the maximum-entropy state compatible with its invariants.

    For a rank-deficient start with [B, H] = 0 the comparison state is the
    Gibbs-like state restricted to the initial range.
    """
    s0 = traj.state_at(0, units)
    restricted = not s0.full_rank
    target = single.equilibrium_target(s0, gen, tol)
    d = trace_distance(traj.final.rho, target.rho)
    S = traj.entropies
    dec = float(np.max(np.maximum(S[:-1] - S[1:], 0.0))) if len(S) > 1 else 0.0
    nullity = s0.dim - s0.rank
    kernel_max = 0.0
    if nullity:
        kernel_max = max(float(np.max(np.abs(smp.eigenvalues[-nullity:]))) for smp in traj.samples)
    return AttractorReport(target.rho, d, dec <= entropy_slack, dec, nullity, kernel_max,
                           kernel_max < kernel_bound, restricted)
