import math
from math import comb

import numpy as np
import pytest
from scipy import stats as sps

from nestcoal import (
    LineageMerger,
    SpeciesMerger,
    new_state,
    replicate_rng,
    run_average,
    run_until_species,
    simulate_records,
    step,
    yule_count_tail,
    yule_gamma_tail,
)
from nestcoal.coalescent import total_rate


def run_via_step(state, m, rng):
    """Independent route to the pre-merger record: drive the reference
    single-event step until a species merger fires at species count m."""
    while True:
        pre = state.counts.copy()
        event = step(state, rng)
        if isinstance(event, SpeciesMerger) and pre.size == m:
            return pre, state.time


# ----------------------------------------------------------- construction

def test_new_state_basic():
    state = new_state(2, [1, 1], 1.0)
    assert list(state.counts) == [1, 1]
    assert state.time == 0.0


def test_new_state_infinity_cap():
    state = new_state(3, [math.inf] * 3, 1.0, L_max=10_000)
    assert list(state.counts) == [10_000] * 3


def test_new_state_scalar_broadcast():
    assert list(new_state(4, 7, 2.0).counts) == [7] * 4


def test_new_state_rejects_bad_input():
    with pytest.raises(ValueError):
        new_state(1, [0], 1.0)
    with pytest.raises(ValueError):
        new_state(0, [], 1.0)
    with pytest.raises(ValueError):
        new_state(2, [1, 1], -1.0)


# ------------------------------------------------------------------ step

def test_step_rates_single_species():
    # n=3, c=1: lineage rate 3, species rate 1 -> P(lineage) = 3/4
    rng = replicate_rng(1, 0)
    hits = 0
    trials = 4000
    for _ in range(trials):
        state = new_state(1, [3], 1.0)
        if isinstance(step(state, rng), LineageMerger):
            hits += 1
    se = math.sqrt(0.75 * 0.25 / trials)
    assert abs(hits / trials - 0.75) <= 3 * se


def test_step_rates_two_species():
    # counts [2,2], c=1: Lambda = 1+1+2, P(species merger) = 1/2
    rng = replicate_rng(2, 0)
    state0 = new_state(2, [2, 2], 1.0)
    assert total_rate(state0) == pytest.approx(4.0)
    hits = 0
    trials = 4000
    for _ in range(trials):
        state = new_state(2, [2, 2], 1.0)
        if isinstance(step(state, rng), SpeciesMerger):
            hits += 1
    se = math.sqrt(0.25 / trials)
    assert abs(hits / trials - 0.5) <= 3 * se


def test_step_all_singletons_only_species_mergers():
    rng = replicate_rng(3, 0)
    for _ in range(200):
        state = new_state(5, 1, 1.0)
        assert isinstance(step(state, rng), SpeciesMerger)


def test_step_waiting_time_mean():
    # fixed state [3, 2], c=0.5: Lambda = 3 + 1 + 1 -> mean wait 1/5
    rng = replicate_rng(4, 0)
    lam = total_rate(new_state(2, [3, 2], 0.5))
    waits = np.empty(100_000)
    for k in range(waits.size):
        state = new_state(2, [3, 2], 0.5)
        step(state, rng)
        waits[k] = state.time
    se = waits.std(ddof=1) / math.sqrt(waits.size)
    assert abs(waits.mean() - 1 / lam) <= 3 * se


def test_step_conserves_lineages():
    rng = replicate_rng(5, 0)
    state = new_state(6, [4, 3, 5, 2, 6, 1], 1.0)
    total = state.total_lineages()
    while state.species_count > 1:
        event = step(state, rng)
        now = state.total_lineages()
        if isinstance(event, SpeciesMerger):
            assert now == total  # mass moves, never lost
        else:
            assert now == total - 1
        total = now


def test_step_terminal_death():
    rng = replicate_rng(6, 0)
    state = new_state(1, [1], 1.0)
    event = step(state, rng)
    assert event == SpeciesMerger(dying=0, absorbing=None)
    assert state.species_count == 0
    with pytest.raises(ValueError):
        step(state, rng)


# ------------------------------------------------------ run_until_species

def test_record_with_singleton_counts():
    state = new_state(2, [1, 1], 1.0)
    rec = run_until_species(state, 2, replicate_rng(7, 0))
    assert list(rec.counts_at_tau_minus) == [1, 1]
    assert rec.tau > 0


def test_record_m_equals_one():
    state = new_state(1, [4], 1.0)
    rec = run_until_species(state, 1, replicate_rng(8, 0))
    assert rec.m == 1
    assert rec.counts_at_tau_minus[0] >= 1


def test_record_target_validation():
    state = new_state(3, 2, 1.0)
    with pytest.raises(ValueError):
        run_until_species(state, 4, replicate_rng(9, 0))
    with pytest.raises(ValueError):
        run_until_species(state, 0, replicate_rng(9, 0))


def test_first_death_time_is_exponential():
    # tau at m = s is the first species death ~ Exp(s c)
    s, c, reps = 6, 1.0, 10_000
    taus = np.empty(reps)
    for rep in range(reps):
        state = new_state(s, 1, c)
        taus[rep] = run_until_species(state, s, replicate_rng(10, rep)).tau
    se = taus.std(ddof=1) / math.sqrt(reps)
    assert abs(taus.mean() - 1 / (s * c)) <= 3 * se


def test_records_deterministic_per_key():
    def once():
        state = new_state(20, 5, 1.0)
        return run_until_species(state, 3, replicate_rng(11, 4),
                                 replicate_id=4, seed=11)
    a, b = once(), once()
    assert np.array_equal(a.counts_at_tau_minus, b.counts_at_tau_minus)
    assert a.tau == b.tau


def test_engine_agrees_with_step_reference():
    # same model through two independent implementations: compiled engine
    # (Fenwick selection, swap-remove) vs the pure-python reference step
    reps = 3000
    tot_engine = np.empty(reps)
    tot_step = np.empty(reps)
    tau_engine = np.empty(reps)
    tau_step = np.empty(reps)
    for rep in range(reps):
        state = new_state(4, [3, 2, 4, 2], 1.0)
        rec = run_until_species(state, 2, replicate_rng(12, rep))
        tot_engine[rep] = rec.counts_at_tau_minus.sum()
        tau_engine[rep] = rec.tau
        state = new_state(4, [3, 2, 4, 2], 1.0)
        counts, tau = run_via_step(state, 2, replicate_rng(13, rep))
        tot_step[rep] = counts.sum()
        tau_step[rep] = tau
    for a, b in ((tot_engine, tot_step), (tau_engine, tau_step)):
        se = math.sqrt(a.var(ddof=1) / reps + b.var(ddof=1) / reps)
        assert abs(a.mean() - b.mean()) <= 4 * se


def test_run_average_degenerate_target():
    val = run_average(5, 3, 5, 1.0, replicate_rng(14, 0))
    assert val >= 1.0  # average of 5 counts, each at least 1
    assert val <= 3.0  # coalescence only removes lineages before tau


def test_simulate_records_threaded_matches_serial():
    serial = simulate_records(10, 3, 2, 1.0, reps=8, seed=21, threads=1)
    threaded = simulate_records(10, 3, 2, 1.0, reps=8, seed=21, threads=4)
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.counts_at_tau_minus, b.counts_at_tau_minus)
        assert a.tau == b.tau
        assert a.replicate_id == b.replicate_id


# --------------------------------------------------------- yule analytics

def test_gamma_tail_values():
    assert yule_gamma_tail(0, 2.0, 1.5) == pytest.approx(math.exp(-3.0))
    assert yule_gamma_tail(1, 1.0, 1.0) == pytest.approx(2 / math.e)


@pytest.mark.parametrize("d,c,u", [(0, 1.0, 0.3), (2, 0.5, 1.0), (5, 2.0, 4.0)])
def test_gamma_tail_matches_scipy(d, c, u):
    assert yule_gamma_tail(d, c, u) == pytest.approx(
        sps.gamma.sf(u, d + 1, scale=1 / c), rel=1e-12)


def test_count_tail_edges():
    assert yule_count_tail(3, 5, 1.0, 0.0) == 0.0
    assert yule_count_tail(2, 4, 1.0, 50.0) == pytest.approx(1.0, abs=1e-10)


def test_count_tail_single_ancestor_closed_form():
    for u in (0.2, 1.0, 3.0):
        for s in (1, 4, 9):
            expect = (1 - math.exp(-u)) ** s
            assert yule_count_tail(1, s, 1.0, u) == pytest.approx(expect,
                                                                  rel=1e-12)


@pytest.mark.parametrize("m,s,c,u", [(2, 6, 1.0, 0.8), (3, 10, 0.5, 2.0),
                                     (5, 12, 2.0, 0.4), (4, 40, 1.0, 1.5)])
def test_count_tail_matches_finite_complement(m, s, c, u):
    # independent oracle: P(exceeds s) = 1 - sum_{i=m..s} P(population = i)
    q = 1 - math.exp(-c * u)
    finite = sum(comb(i - 1, i - m) * math.exp(-c * m * u) * q ** (i - m)
                 for i in range(m, s + 1))
    assert yule_count_tail(m, s, c, u) == pytest.approx(1 - finite, abs=1e-12)


def test_count_tail_validation():
    with pytest.raises(ValueError):
        yule_count_tail(0, 3, 1.0, 1.0)
    with pytest.raises(ValueError):
        yule_count_tail(4, 3, 1.0, 1.0)
