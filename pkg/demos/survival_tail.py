"""
Waiting for the next photon
===========================

The probability that no photon arrives for a time t after an emission has a
fast part (ordinary scattering) and a slow exponential tail (shelving in r).
The tail rate is the slowest eigenvalue of the non-Hermitian no-jump
Hamiltonian.
"""

import numpy as np

from rydberg_jumps import LatticeSpec, get_preset, run_trajectory
from rydberg_jumps.analysis import empirical_survival, fit_tail, inter_emission_intervals, ks_distance
from rydberg_jumps.master import survival_probability
from rydberg_jumps.model import basis_state, build_effective_hamiltonian
from rydberg_jumps.rates import numeric_slow_mode, perturbative_slow_mode_1atom

lattice = LatticeSpec(1)

# weak shelving: perturbation theory is accurate
params = get_preset("fig2a")
h = build_effective_hamiltonian(params, lattice)
num = numeric_slow_mode(h, basis_state(1))
pert = perturbative_slow_mode_1atom(params)
print(f"slow eigenvalue: numeric {num.lam:.4e}, perturbative {pert.lam:.4e}")
print(f"dark-entry probability per photon: numeric {num.p:.4f}, perturbative {pert.p:.4f}")

# equal drives: no separate dark periods, but the tail is still there
params = get_preset("fig6")
num = numeric_slow_mode(build_effective_hamiltonian(params, lattice), basis_state(1))
t = np.linspace(0, 20 / num.decay_rate, 4001)
curve = survival_probability(params, lattice, basis_state(1), t)
amplitude, rate = fit_tail(curve, t[-1] / 2, t[-1])
print(f"\ntail fit p = {amplitude:.3f}, rate {rate:.4e} (slow eigenvalue {num.decay_rate:.4e})")

rec = run_trajectory(params, lattice, 1e5, seeds=3, dt=1.0)
gaps = inter_emission_intervals(rec)
empirical = empirical_survival(rec)
print(f"{gaps.size} intervals, KS distance to the analytic curve {ks_distance(gaps, curve):.4f}")
for s in (10, 50, 100, 200):
    print(f"  P0({s:3d}) analytic {curve(s):.4f}  empirical {empirical(s):.4f}")
