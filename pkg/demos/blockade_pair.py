"""
Blockade and anti-blockade for two atoms
========================================

With the weak drive on resonance, an interaction V between two shelved atoms
blocks the second atom from going dark. Detuning the weak drive by V turns
this around: once one atom is dark the other follows easily.
"""

from rydberg_jumps import LatticeSpec, get_preset, run_trajectory
from rydberg_jumps.analysis import classify_periods, joint_dwell_times, joint_occupancy
from rydberg_jumps.rates import two_atom_rate_table

lattice = LatticeSpec(2)

for name in ("fig2a", "fig2b"):
    params = get_preset(name)
    table = two_atom_rate_table(params.delta_r, params.v_nn, params)
    print(f"\n{name}: delta_r = {params.delta_r}, V = {params.v_nn}")
    for key in ("BB->BD", "BD->BB", "BD->DD", "DD->BD"):
        print(f"  {key}  {table[key]:.3e}")

    rec = run_trajectory(params, lattice, 5e5, seeds=2, dt=1.0)
    seg = classify_periods(rec)
    # fraction of time in each joint state after the first 1e4 / gamma_e
    occupancy = joint_occupancy(seg, t_min=1e4)
    print("  occupancy:", {k: round(v, 3) for k, v in sorted(occupancy.items())})
    dwell = joint_dwell_times(seg)
    print("  mean dwell:", {k: round(float(v.mean())) for k, v in sorted(dwell.items()) if v.size})
