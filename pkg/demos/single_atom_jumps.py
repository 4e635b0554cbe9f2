"""
Bright and dark periods of one atom
===================================

A strongly driven transition g-e scatters photons; a weak drive g-r now and
then shelves the atom in r and the fluorescence stops. This script runs one
long trajectory, cuts it into bright and dark periods and compares the
switching rates with the closed forms.
"""

import numpy as np

from rydberg_jumps import LatticeSpec, get_preset, run_trajectory
from rydberg_jumps.analysis import classify_periods, dwell_time_histogram, estimate_single_rates
from rydberg_jumps.rates import gamma_b_to_d, gamma_d_to_b, gamma_short

params = get_preset("fig2a")
print(params)

# 5e5 / gamma_e is a few hundred switching events; dt only sets the step
# between jump checks, the jump times themselves are located exactly
rec = run_trajectory(params, LatticeSpec(1), 5e5, seeds=1, dt=1.0)
print(f"{rec.n_emissions} photons, mean rate {rec.n_emissions / rec.duration:.4f}"
      f" (bright-period rate {gamma_short(params):.4f})")

# an atom counts as dark while its Rydberg population exceeds 0.98
seg = classify_periods(rec)
rates = estimate_single_rates(seg)
print(f"D->B  {rates.d_to_b:.3e} +- {rates.d_to_b_err:.1e}   closed form {gamma_d_to_b(0.0, params):.3e}")
print(f"B->D  {rates.b_to_d:.3e} +- {rates.b_to_d_err:.1e}   closed form {gamma_b_to_d(0.0, params):.3e}")

# dark dwell times are exponential
hist = dwell_time_histogram(seg, "D", bins=12)
print(f"{hist.n} dark periods, fitted rate {hist.rate:.3e}, chi2/dof {hist.chi2_per_dof:.2f}")
for lo, hi, n in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
    print(f"  {lo:7.0f} - {hi:7.0f}  {'#' * int(n)}")

# the rate of leaving a dark period falls off quickly with detuning
for d in np.linspace(-0.1, 0.1, 5):
    print(f"delta_r = {d:+.2f}: D->B {gamma_d_to_b(d, params):.2e}, B->D {gamma_b_to_d(d, params):.2e}")
