"""The time-energy uncertainty relation and the maximal-entropy-production closure.

For any relaxation time tau the dissipative characteristic time tau_D obeys
tau_D^2 <DH,DH> >= hbar^2/4. Choosing tau as small as this allows (MaxEPR)
saturates the relation and the entropy production reaches its upper bound.

    python3 demos/uncertainty_closure.py
"""
import numpy as np

from seaqt import single as S
from seaqt.opspace import UnitSystem, covariance, random_density, random_hermitian, spectral_decompose

rng = np.random.default_rng(11)
units = UnitSystem(hbar=0.5, k_B=1.0)
state = spectral_decompose(random_density(rng, 4, min_eig=1e-2), units)
gen = S.GeneratorSet(random_hermitian(rng, 4))
d = S.dissipative_direction(state, gen)
var = covariance(state, gen.H, gen.H)
bound = S.entropy_rate_bound(state, gen, d, units)
tmin = S.tau_lower_bound(state, gen, d, units)

print(f"<DH,DH> = {var:.6f}, (D|D) = {d.d_norm_sq:.6f}, smallest admissible tau = {tmin:.6f}")
print(f"entropy-production bound = {bound:.6f}\n")
print("   policy          tau       tau_D^2 <DH,DH>   hbar^2/4   entropy rate")
for name, pol in [("constant 2.0", S.ConstantTau(2.0)), ("constant 0.5", S.ConstantTau(0.5)),
                  ("constant 0.05", S.ConstantTau(0.05)),
                  ("MaxEPR", S.MaxEPRTau())]:
    chk = S.uncertainty_check(state, gen, pol, units)
    rate = S.entropy_rate(state, gen, pol, units)
    flag = "" if chk.satisfied else "  <- violates the relation"
    print(f"{name:>14}  {chk.tau:9.6f}  {chk.tau_D ** 2 * var:14.8f}  {units.hbar ** 2 / 4:9.6f}  {rate:11.6f}{flag}")

# characteristic times of a few observables against their bounds
print("\nobservable         tau_F(dissipative)   lower bound")
for k in range(3):
    F = random_hermitian(rng, 4)
    ct = S.characteristic_time_bound(state, F, "dissipative", gen, S.MaxEPRTau(), units)
    print(f"random F #{k}        {ct.tau_F:12.6f}      {ct.bound:12.6f}   holds: {ct.holds}")
