"""Event-driven simulation of the nested Yule-Kingman coalescent.

State is the vector of per-species lineage counts: every quantity of
interest depends on counts only, so the labeled-partition chain is
projected down to them.  Two transition types compete:

  * lineage merger -- each within-species pair merges at rate 1, so species
    k fires at rate C(n_k, 2) and its count drops by one;
  * species merger -- each species dies at rate c; its lineages join a
    uniformly chosen survivor.  The last species' death removes everything.

``step`` is the readable single-event reference; ``run_until_species``
delegates to the compiled engine (same Gillespie construction, Fenwick-tree
event selection).  Replicates draw from counter-based Philox streams keyed
by (seed, replicate_id), so runs are reproducible and order-independent
under parallel execution.

Closed-form facts about the reversed species process (a Yule tree) are
provided as simulator self-tests: the Gamma tail of depth-d branch times
and the birth-count tail of a Yule population.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _engine
from .kernel import DEFAULT_L_MAX

COUNT_TAIL_RTOL = 1e-15
_COUNT_TAIL_MAX_TERMS = 10_000_000


@dataclass
class CoalescentState:
    """Mutable per-replicate state: surviving species' counts and the clock."""

    counts: np.ndarray
    time: float
    c: float

    @property
    def species_count(self) -> int:
        return self.counts.size

    def total_lineages(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class LineageMerger:
    species: int


@dataclass(frozen=True)
class SpeciesMerger:
    dying: int
    absorbing: int | None  # None for the terminal death of the last species


@dataclass(frozen=True)
class SimRecord:
    """Counts of the m survivors just before the m -> m-1 species merger."""

    m: int
    counts_at_tau_minus: np.ndarray
    tau: float
    replicate_id: int = 0
    seed: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts_at_tau_minus, dtype=np.int64)
        if counts.size != self.m:
            raise ValueError(f"expected {self.m} counts, got {counts.size}")
        if (counts < 1).any():
            raise ValueError("lineage counts must be >= 1")
        counts.setflags(write=False)
        object.__setattr__(self, "counts_at_tau_minus", counts)


def replicate_rng(seed: int, replicate_id: int) -> np.random.Generator:
    """Counter-based stream for one replicate; streams never collide."""
    key = (seed % 2**64) * 2**64 + replicate_id % 2**64
    return np.random.Generator(np.random.Philox(key=key))


def new_state(s: int, initial_counts, c: float,
              L_max: int = DEFAULT_L_MAX) -> CoalescentState:
    """Fresh state with s species; counts may be a scalar, list, or math.inf.

    Infinite entries are replaced by L_max (descent-time bias at most
    2/L_max; the limit law is insensitive to initial counts).
    """
    if s < 1:
        raise ValueError("species count must be >= 1")
    if c <= 0:
        raise ValueError("rate c must be positive")
    if L_max < 2:
        raise ValueError("L_max must be >= 2")
    if np.isscalar(initial_counts):
        initial_counts = [initial_counts] * s
    if len(initial_counts) != s:
        raise ValueError(f"expected {s} counts, got {len(initial_counts)}")
    counts = np.empty(s, dtype=np.int64)
    for k, n in enumerate(initial_counts):
        if n == math.inf:
            counts[k] = L_max
        else:
            n = int(n)
            if n < 1:
                raise ValueError(f"count {n} for species {k} must be >= 1")
            counts[k] = n
    return CoalescentState(counts=counts, time=0.0, c=float(c))


def total_rate(state: CoalescentState) -> float:
    """Lambda = sum_k C(n_k,2) + S*c for the current state."""
    n = state.counts
    return float((n * (n - 1) // 2).sum()) + state.species_count * state.c


def step(state: CoalescentState, rng: np.random.Generator):
    """Advance one Gillespie event in place and return it.

    Waiting time ~ Exp(Lambda); the event is chosen with probability
    proportional to its rate.  Reference implementation with O(S)
    selection; the batch paths use the compiled engine instead.
    """
    S = state.species_count
    if S == 0:
        raise ValueError("no species left to evolve")
    lin_rates = state.counts * (state.counts - 1) // 2
    r_lin = int(lin_rates.sum())
    lam = r_lin + S * state.c
    state.time += rng.exponential(1.0 / lam)
    if r_lin == 0 or rng.random() * lam < S * state.c:
        dying = int(rng.integers(0, S))
        if S == 1:
            state.counts = np.empty(0, dtype=np.int64)
            return SpeciesMerger(dying=dying, absorbing=None)
        absorbing = int(rng.integers(0, S - 1))
        if absorbing >= dying:
            absorbing += 1
        state.counts[absorbing] += state.counts[dying]
        state.counts = np.delete(state.counts, dying)
        return SpeciesMerger(dying=dying, absorbing=absorbing)
    target = int(rng.integers(0, r_lin))
    k = int(np.searchsorted(np.cumsum(lin_rates), target, side="right"))
    state.counts[k] -= 1
    return LineageMerger(species=k)


def run_until_species(state: CoalescentState, m: int,
                      rng: np.random.Generator,
                      replicate_id: int = 0, seed: int = 0) -> SimRecord:
    """Simulate until the merger that would drop the species count to m-1.

    Returns the m survivors' counts immediately before that merger and its
    time; the state is left at that pre-merger moment.  For m = 1 the
    record is taken just before the terminal death.
    """
    if not 1 <= m <= state.species_count:
        raise ValueError(
            f"target m={m} outside 1..{state.species_count}"
        )
    counts, tau = _engine.run_until_species(state.counts, state.c, m, rng)
    tau = float(tau) + state.time
    state.counts = counts.copy()
    state.time = tau
    return SimRecord(m=m, counts_at_tau_minus=counts, tau=tau,
                     replicate_id=replicate_id, seed=seed)


def run_average(s: int, n, m: int, c: float, rng: np.random.Generator,
                L_max: int = DEFAULT_L_MAX) -> float:
    """One replicate's (1/m) * sum of counts just before the m -> m-1 merger."""
    state = new_state(s, n, c, L_max)
    record = run_until_species(state, m, rng)
    return float(record.counts_at_tau_minus.sum()) / m


def simulate_records(s: int, n, m: int, c: float, reps: int, seed: int,
                     L_max: int = DEFAULT_L_MAX,
                     threads: int = 1) -> list[SimRecord]:
    """reps independent replicates, each on its own keyed stream.

    Output is ordered by replicate_id and identical for any thread count.
    """
    if reps < 1:
        raise ValueError("need at least one replicate")

    def one(rep: int) -> SimRecord:
        state = new_state(s, n, c, L_max)
        return run_until_species(state, m, replicate_rng(seed, rep),
                                 replicate_id=rep, seed=seed)

    if threads <= 1:
        return [one(rep) for rep in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(reps)))


def yule_gamma_tail(d: int, c: float, u: float) -> float:
    """P(sum of d+1 independent Exp(c) variables > u):
    the survival function of the depth-d branch time in a rate-c Yule tree,
    e^{-cu} sum_{i<=d} (cu)^i / i!.
    """
    if d < 0:
        raise ValueError("depth must be >= 0")
    if u < 0:
        raise ValueError("time must be >= 0")
    cu = c * u
    term = 1.0
    acc = 1.0
    for i in range(1, d + 1):
        term *= cu / i
        acc += term
    return math.exp(-cu) * acc


def _count_log_term(i: int, m: int, base: float, log_q: float) -> float:
    # log of C(i-1, i-m) e^{-cmu} q^{i-m}
    return (base + math.lgamma(i) - math.lgamma(m) - math.lgamma(i - m + 1)
            + (i - m) * log_q)


def yule_count_tail(m: int, s: int, c: float, u: float) -> float:
    """P(a rate-c Yule population started from m exceeds s by time u):

        e^{-cmu} sum_{i=s+1..inf} C(i-1, i-m) (1 - e^{-cu})^{i-m},

    summed until terms fall below 1e-15 relative (terms are unimodal in i,
    so the stop triggers only past the peak).  Log-space terms keep large
    binomials finite.

    The term ratio tends to q = 1 - e^{-cu}, so for large cu the series
    needs ~1/e^{-cu} terms; past ~10^6 estimated terms the complement
    finite sum over i = m..s is used instead.  In that regime the summed
    complement is far from 1 (it carries the e^{-cmu} factor), so the
    subtraction loses no precision.
    """
    if m < 1:
        raise ValueError("initial population must be >= 1")
    if s < m:
        raise ValueError("threshold s must be >= m")
    if u < 0:
        raise ValueError("time must be >= 0")
    if u == 0:
        return 0.0
    q = -math.expm1(-c * u)  # 1 - e^{-cu}
    log_q = math.log(q)
    base = -c * m * u
    peak = m + (m - 1) * q / max(1.0 - q, 1e-300)
    n_estimate = max(0.0, peak - s) + 40.0 / max(-log_q, 1e-300)
    if n_estimate > 1e6:
        finite = sum(math.exp(_count_log_term(i, m, base, log_q))
                     for i in range(m, s + 1))
        return min(max(1.0 - finite, 0.0), 1.0)
    acc = 0.0
    prev = math.inf
    i = s + 1
    while i - s <= _COUNT_TAIL_MAX_TERMS:
        term = math.exp(_count_log_term(i, m, base, log_q))
        acc += term
        if term < prev and term < COUNT_TAIL_RTOL * acc:
            return min(acc, 1.0)
        prev = term
        i += 1
    raise RuntimeError("count-tail series failed to converge")
