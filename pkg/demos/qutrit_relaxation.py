"""Relaxation of a diagonal qutrit toward its energy-matched Gibbs state.

The start is diag(0.5, 0.1, 0.4) with H = diag(0, 1, 2). Energy and trace
stay fixed while the entropy climbs to the largest value allowed at that
energy. The run stops once the dissipative direction has died out.

    python3 demos/qutrit_relaxation.py
"""
import numpy as np

from seaqt import fixtures as fx
from seaqt import onsager as ON
from seaqt import single as S
from seaqt.integrator import IntegratorConfig, attractor_summary, integrate, trace_distance
from seaqt.opspace import spectral_decompose

gen = S.GeneratorSet(fx.QUTRIT_D_H)
system = S.SingleSystem(gen, S.ConstantTau(1.0))
start = spectral_decompose(fx.QUTRIT_D_RHO)

traj = integrate(start, system, IntegratorConfig(dt=0.01, t_end=30.0, sample_every=100))
target = S.equilibrium_target(start, gen)

print("    t     entropy      energy    distance to Gibbs")
for s in traj.samples:
    print(f"{s.t:6.2f}  {s.entropy:.8f}  {s.energy:.10f}  {trace_distance(s.rho, target.rho):.3e}")

rep = attractor_summary(traj, gen)
beta = S.solve_beta(gen, 0.9)
print(f"\nstopped at t = {traj.final.t:.2f}: {traj.events_of('equilibrium_reached')[0].detail}")
print(f"matching inverse temperature beta = {beta:.6f}")
print(f"terminal populations {np.diag(traj.final.rho).real.round(8)}")
print(f"entropy monotone: {rep.entropy_monotone}, terminal distance {rep.terminal_distance:.2e}")

# near the start, linear response: affinities f and conductivities L reproduce the entropy production
basis = ON.default_basis(3)
q = ON.entropy_rate_quadratic(start, gen, basis, S.ConstantTau(1.0))
cm = ON.conductivity_matrix(start, gen, basis, S.ConstantTau(1.0))
print(f"\nentropy rate  f.L.f = {q.value:.12f}   (D|D)/tau = {q.direct:.12f}")
print(f"L symmetric to {cm.symmetry_error:.1e}; smallest eigenvalue {cm.min_eigenvalue:.2e}")
