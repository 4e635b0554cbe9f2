import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydberg_jumps.analysis import (
    align_to_emissions,
    classify_periods,
    completed_durations,
    dwell_time_histogram,
    empirical_survival,
    estimate_gap_rates,
    estimate_pattern_rates,
    estimate_single_rates,
    fit_tail,
    joint_dwell_times,
    joint_occupancy,
    ks_distance,
    merge_pattern_counts,
)
from rydberg_jumps.errors import ConfigError, InsufficientDataError
from rydberg_jumps.model import LatticeSpec, SystemParams
from rydberg_jumps.rates import SurvivalCurve, gamma_d_to_b
from rydberg_jumps.trajectory import TrajectoryRecord


def fake_record(pops, emissions=(), atoms=None, dts=1.0):
    """Record with the given Rydberg populations on a grid starting at 0."""
    pops = np.asarray(pops, dtype=np.float64)
    if pops.ndim == 1:
        pops = pops[:, None]
    n_samples, n = pops.shape
    em = np.asarray(emissions, dtype=np.float64)
    atoms = np.zeros(em.size, dtype=np.int64) if atoms is None else np.asarray(atoms, dtype=np.int64)
    return TrajectoryRecord(
        params=SystemParams(),
        lattice=LatticeSpec(n),
        seed=0,
        trajectory_index=0,
        duration=(n_samples - 1) * dts,
        initial="g" * n,
        settings={"sample_interval": dts},
        emission_times=em,
        emission_atoms=atoms,
        emission_kinds=np.full(em.size, "e"),
        emission_norms=np.ones(em.size),
        emission_thresholds=np.ones(em.size),
        sample_times=np.arange(n_samples) * dts,
        populations=pops,
        sample_norms=np.ones(n_samples),
    )


def test_classify_synthetic_trace():
    seg = classify_periods(fake_record([0, 0, 1, 1, 1, 0]))
    assert seg.intervals[0] == [(0.0, 2.0, "B"), (2.0, 5.0, "D"), (5.0, 6.0, "B")]


def test_constant_trace_is_one_bright_interval():
    seg = classify_periods(fake_record(np.zeros(10)))
    assert seg.intervals[0] == [(0.0, 10.0, "B")]


def test_threshold_validation():
    with pytest.raises(ConfigError):
        classify_periods(fake_record(np.zeros(3)), threshold=1.0)


@settings(max_examples=100, deadline=None)
@given(bits=st.lists(st.booleans(), min_size=1, max_size=60), dts=st.sampled_from([0.5, 1.0, 2.0]))
def test_intervals_tile_the_record(bits, dts):
    seg = classify_periods(fake_record(np.array(bits, float), dts=dts))
    ivs = seg.intervals[0]
    assert ivs[0][0] == 0.0
    assert ivs[-1][1] == pytest.approx(len(bits) * dts)
    for (_, e, la), (s, _, lb) in zip(ivs, ivs[1:]):
        assert e == s and la != lb


def test_single_exit_rate():
    t = 7.0
    seg = classify_periods(fake_record([0] * 7 + [1]))
    rates = estimate_single_rates(seg)
    assert rates.b_to_d == pytest.approx(1 / t)
    assert rates.n_b_exits == 1
    assert np.isnan(rates.d_to_b)


def test_no_transitions_is_insufficient():
    with pytest.raises(InsufficientDataError):
        estimate_single_rates(classify_periods(fake_record(np.zeros(5))))


@settings(max_examples=50, deadline=None)
@given(traces=st.lists(st.lists(st.booleans(), min_size=2, max_size=40), min_size=1, max_size=5))
def test_pooling_is_concatenation_invariant(traces):
    segs = [classify_periods(fake_record(np.array(t, float))) for t in traces]
    exits = {"B": 0, "D": 0}
    time = {"B": 0.0, "D": 0.0}
    for s in segs:
        ivs = s.intervals[0]
        for k, (a, b, label) in enumerate(ivs):
            time[label] += b - a
            exits[label] += k + 1 < len(ivs)
    if exits["B"] + exits["D"] == 0:
        with pytest.raises(InsufficientDataError):
            estimate_single_rates(segs)
        return
    r = estimate_single_rates(segs)
    if exits["B"]:
        assert r.b_to_d == pytest.approx(exits["B"] / time["B"])
    if exits["D"]:
        assert r.d_to_b == pytest.approx(exits["D"] / time["D"])


def test_completed_durations_skip_boundaries():
    seg = classify_periods(fake_record([1, 0, 0, 1, 1, 1, 0, 1]))
    np.testing.assert_array_equal(completed_durations(seg, "D"), [3.0])
    np.testing.assert_array_equal(completed_durations(seg, "B"), [2.0, 1.0])


def test_alignment_uses_emissions_and_absorbs_flicker():
    # climbs over threshold at t=3 after an emission at 1.2, flickers at t=6,
    # and ends with an emission at 9.4
    pops = [0, 0, 0.5, 1, 1, 1, 0.9, 1, 1, 1, 0, 0]
    rec = fake_record(pops, emissions=[0.3, 1.2, 9.4, 10.5])
    seg = classify_periods(rec)
    assert [iv[2] for iv in seg.intervals[0]] == ["B", "D", "B", "D", "B"]
    al = align_to_emissions(seg, rec)
    assert al.aligned
    assert al.intervals[0] == [(0.0, 1.2, "B"), (1.2, 9.4, "D"), (9.4, 12.0, "B")]
    np.testing.assert_array_equal(al.dark[:, 0], [0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0])


def test_dwell_fit_on_exponential_sample():
    d = np.random.default_rng(0).exponential(100.0, 5000)
    h = dwell_time_histogram(d, bins=25)
    assert h.rate == pytest.approx(0.01, rel=0.05)
    assert not h.poor_fit
    assert h.counts.sum() == 5000


def test_equal_dwell_times_flagged_poor():
    h = dwell_time_histogram(np.full(200, 10.0))
    assert h.poor_fit


def test_dwell_histogram_edge_cases():
    with pytest.raises(InsufficientDataError):
        dwell_time_histogram(np.empty(0))
    h = dwell_time_histogram(np.ones(10))
    assert h.rate is None


def test_joint_states():
    pops = np.array([[0, 0], [1, 0], [1, 0], [1, 1], [0, 0], [0, 0]], float)
    seg = classify_periods(fake_record(pops))
    occ = joint_occupancy(seg)
    assert occ == pytest.approx({"BB": 0.5, "DB": 1 / 3, "DD": 1 / 6})
    assert sum(joint_occupancy(seg, t_min=2.0).values()) == pytest.approx(1.0)
    dwell = joint_dwell_times(seg)
    np.testing.assert_array_equal(dwell["DB"], [2.0])
    np.testing.assert_array_equal(dwell["DD"], [1.0])


def test_pattern_counts_on_ring():
    # atom 0 stays dark; atom 1 lights up next to it at t=2 -> DBB->DDB once
    dark = np.zeros((5, 4))
    dark[:, 0] = 1
    dark[2:, 1] = 1
    seg = classify_periods(fake_record(dark))
    c = estimate_pattern_rates(seg, LatticeSpec(4), ["DBB->DDB", "DDB->DBB", "DBD->DDD"])
    assert c.events["DBB->DDB"] == 1
    # before the flip sites 1 and 3 match, after it sites 2 and 3
    assert c.time_at_risk["DBB->DDB"] == 8.0
    assert c.events["DDB->DBB"] == 0
    assert c.time_at_risk["DDB->DBB"] == 4.0
    assert c.time_at_risk["DBD->DDD"] == 0.0
    assert c.rate("DBB->DDB") == pytest.approx(1 / 8)


def test_all_bright_has_no_dark_patterns():
    seg = classify_periods(fake_record(np.zeros((20, 5))))
    c = estimate_pattern_rates(seg, LatticeSpec(5))
    assert all(v == 0 for v in c.events.values())
    assert all(v == 0.0 for v in c.time_at_risk.values())
    assert np.isnan(c.rate("DBB->DDB"))


def test_open_chain_ends_not_at_risk():
    dark = np.zeros((3, 3))
    dark[:, 1] = 1
    seg = classify_periods(fake_record(dark))
    ring = estimate_pattern_rates(seg, LatticeSpec(3), ["DBB->DDB"])
    chain = estimate_pattern_rates(seg, LatticeSpec(3, boundary="open"), ["DBB->DDB"])
    assert ring.time_at_risk["DBB->DDB"] == 4.0
    assert chain.time_at_risk["DBB->DDB"] == 0.0


def test_pattern_validation():
    seg = classify_periods(fake_record(np.zeros((4, 3))))
    for bad in ("DBB", "DBB->DDD", "DXB->DDB", "DBB->DBB", "DB->DD"):
        with pytest.raises(ConfigError):
            estimate_pattern_rates(seg, LatticeSpec(3), [bad])
    with pytest.raises(ConfigError):
        estimate_pattern_rates(classify_periods(fake_record(np.zeros((4, 2)))), LatticeSpec(2))


def test_merge_pattern_counts():
    seg = classify_periods(fake_record(np.zeros((4, 3))))
    one = estimate_pattern_rates(seg, LatticeSpec(3), ["DBB->DDB", "BBB->BDB"])
    both = merge_pattern_counts([one, one])
    assert both.time_at_risk["BBB->BDB"] == 2 * one.time_at_risk["BBB->BDB"] == 18.0


def test_empirical_survival():
    rec = fake_record(np.zeros(2), emissions=np.arange(1, 201) * 0.5)
    curve = empirical_survival(rec)
    assert curve.values[0] == 1.0 and curve.t[0] == 0.0
    assert np.all(np.diff(curve.values) <= 0)
    with pytest.raises(InsufficientDataError):
        empirical_survival(rec, min_events=500)


def test_ks_and_tail_on_exponential():
    rate = 0.2
    t = np.linspace(0, 200, 4001)
    model = SurvivalCurve(t=t, values=np.exp(-rate * t))
    sample = np.random.default_rng(2).exponential(1 / rate, 10_000)
    assert ks_distance(sample, model) < 0.02
    p, fitted = fit_tail(model, 10.0, 50.0)
    assert fitted == pytest.approx(rate, rel=1e-9)
    assert p == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ConfigError):
        ks_distance([500.0], model)


def test_gap_rates_recover_switching():
    # telegraph emitter: bright periods emit at rate 1; dark periods last Exp(1/200)
    rng = np.random.default_rng(5)
    t, em, entry, exit_ = 0.0, [], 1e-3, 5e-3
    while t < 5e6:
        end = t + rng.exponential(1 / entry)
        while True:
            t += rng.exponential(1.0)
            if t >= end:
                break
            em.append(t)
        t = end + rng.exponential(1 / exit_)
    rec = fake_record(np.zeros(2), emissions=em)
    g = estimate_gap_rates(rec, gap_threshold=30.0)
    assert abs(g.exit_rate - exit_) < 3 * g.exit_rate_err
    assert abs(g.entry_rate - entry) < 3 * g.entry_rate_err
    with pytest.raises(InsufficientDataError):
        estimate_gap_rates(rec, gap_threshold=1e9)


def test_single_atom_dark_dwell(single_atom_long):
    h = dwell_time_histogram(classify_periods(single_atom_long), "D")
    assert h.n >= 500
    assert h.rate == pytest.approx(gamma_d_to_b(0.0, single_atom_long.params), rel=0.10)
