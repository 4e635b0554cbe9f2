"""
Dark domains on a ring
======================

On a ring of atoms each site goes dark at a rate set by an effective
detuning, shifted by V for every dark neighbour. At delta_r = V a dark
domain grows from its edges (expansion) while two domains separated by one
bright site rarely merge.
"""

from rydberg_jumps import LatticeSpec, get_preset, run_trajectory
from rydberg_jumps.analysis import classify_periods, estimate_pattern_rates
from rydberg_jumps.rates import pattern_rate_predictions

lattice = LatticeSpec(5)
params = get_preset("fig2b")
print(params, lattice)

rec = run_trajectory(params, lattice, 5e4, seeds=4, dt=1.0)
seg = classify_periods(rec)

# one text row per 500 / gamma_e: '#' marks a dark atom
for k in range(0, seg.dark.shape[0], 500):
    print(f"{seg.sample_times[k]:8.0f}  " + "".join("#" if x else "." for x in seg.dark[k]))

counts = estimate_pattern_rates(seg, lattice)
predicted = pattern_rate_predictions(params.delta_r, params.v_nn, params)
for name in counts.events:
    print(f"{name}: {counts.events[name]:4d} events in {counts.time_at_risk[name]:9.0f},"
          f" rate {counts.rate(name):.2e} (predicted {predicted[name]:.2e},"
          f" z {counts.z_score(name, predicted[name]):+.1f})")
