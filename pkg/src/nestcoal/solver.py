"""Fixed point of the lineage-count recursive distributional equation.

The map takes a distribution mu on {1,2,...}, forms the sum of two
independent copies (the two daughter branches meeting at a species-tree
node), and runs the within-species Kingman coalescent for an independent
Exp(c) span:  (map mu) = law of K_{W1+W2}(Y).  The lineage-count law is its
unique fixed point.

On truncated pmfs the map is a convolution followed by a kernel-row
mixture.  Iterating from the unit mass at 1 (truncation overflow semantics)
climbs to the fixed point from below; iterating from the unit mass at
infinity (infinity overflow semantics) descends from above.  The total
variation gap between the two terminal iterates certifies the combined
truncation + stopping error.

Everything here is pure over immutable inputs; the two bracket iterations
are independent and deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .dist import OverflowMode, TruncatedPMF, convolve, pmf_delta, total_variation
from .kernel import KernelTable, build_table


class Start(enum.Enum):
    FROM_DELTA_ONE = "from_delta_one"
    FROM_INFINITY = "from_infinity"


@dataclass(frozen=True)
class SolverConfig:
    c: float
    trunc_M: int = 500
    tol: float = 1e-12
    max_iters: int = 100_000
    kernel_tol: float = 1e-12

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("rate c must be positive")
        if self.trunc_M < 2:
            raise ValueError("truncation must be >= 2")
        if self.tol <= 0 or self.kernel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class SolverReport:
    fixed_point: TruncatedPMF
    lower: TruncatedPMF
    upper: TruncatedPMF
    sandwich_gap: float
    iterations: int
    recurrence_residual: float
    converged: bool

    def to_json_dict(self, cfg: Optional[SolverConfig] = None) -> dict:
        d = {
            "fixed_point": self.fixed_point.to_json_dict(),
            "lower": self.lower.to_json_dict(),
            "upper": self.upper.to_json_dict(),
            "sandwich_gap": self.sandwich_gap,
            "iterations": self.iterations,
            "recurrence_residual": self.recurrence_residual,
            "converged": self.converged,
        }
        if cfg is not None:
            d["config"] = {"c": cfg.c, "trunc_M": cfg.trunc_M, "tol": cfg.tol,
                           "max_iters": cfg.max_iters,
                           "kernel_tol": cfg.kernel_tol}
        return d


def apply_rde_map(mu: TruncatedPMF, table: KernelTable) -> TruncatedPMF:
    """One application of the map: self-convolve, then mix kernel rows.

    Convolution overflow is routed to the infinity row under AT_INFINITY
    semantics and to row 2M under AT_TRUNCATION semantics (keeping the
    upper/lower bracket readings intact), the result is re-truncated to M
    with the excess placed in overflow, and the output is renormalized to
    unit mass.  Renormalization is load-bearing: the self-convolution
    squares any mass deficit, so a ~1e-15 rounding loss would otherwise
    double every iteration and hollow out the pmf after ~50 steps.
    """
    if mu.trunc_M != table.trunc_M:
        raise ValueError(
            f"truncation mismatch: pmf {mu.trunc_M} vs table {table.trunc_M}"
        )
    M = mu.trunc_M
    J = 2 * M
    cv = convolve(mu, mu)
    res = cv.probs @ table.rows[1:J + 1, 1:J + 1]
    if mu.overflow_mode is OverflowMode.AT_INFINITY:
        res = res + cv.overflow_mass * table.infinity_row
        over = cv.overflow_mass * table.infinity_residual
    else:
        res = res + cv.overflow_mass * table.rows[J, 1:J + 1]
        over = 0.0
    probs = res[:M].copy()
    over += res[M:].sum()
    total = probs.sum() + over
    probs /= total
    over /= total
    return TruncatedPMF(probs, overflow_mass=over,
                        overflow_mode=mu.overflow_mode, trunc_M=M)


def _start_pmf(cfg: SolverConfig, start: Start) -> TruncatedPMF:
    if start is Start.FROM_DELTA_ONE:
        return pmf_delta(1, cfg.trunc_M)
    return pmf_delta(np.inf, cfg.trunc_M)


def map_iterates(cfg: SolverConfig, start: Start,
                 table: Optional[KernelTable] = None) -> Iterator[TruncatedPMF]:
    """Yield successive map iterates, starting with the initial pmf."""
    if table is None:
        table = build_table(cfg.c, cfg.trunc_M, cfg.kernel_tol)
    mu = _start_pmf(cfg, start)
    yield mu
    while True:
        mu = apply_rde_map(mu, table)
        yield mu


def iterate_fixed_point(cfg: SolverConfig, start: Start,
                        table: Optional[KernelTable] = None):
    """Iterate the map until successive iterates differ by < tol in TV.

    Returns (pmf, iterations).  Non-convergence within max_iters is not
    fatal; the last iterate is returned and callers can inspect the count.
    """
    it = map_iterates(cfg, start, table)
    prev = next(it)
    for n, mu in enumerate(it, start=1):
        if total_variation(mu, prev) < cfg.tol:
            return mu, n
        if n >= cfg.max_iters:
            return mu, n
        prev = mu
    raise AssertionError("unreachable")


_STALL_WINDOW = 25  # lockstep iterations without relative gap progress


def sandwich_solve(cfg: SolverConfig,
                   table: Optional[KernelTable] = None) -> SolverReport:
    """Run both bracket iterations in lockstep and certify the gap.

    The loop is driven by the certificate itself: it continues until the
    lower/upper gap is <= tol (stopping each branch at successive-TV < tol
    alone can leave the gap at ~1.5 tol).  A gap that stops improving while
    both branches are stable signals the truncation floor; the report then
    carries converged=False, suggesting a larger M.  The fixed point is
    reported from the lower branch (its errors are sub-probability, hence
    conservative); the upper branch is retained for the certificate.
    """
    if table is None:
        table = build_table(cfg.c, cfg.trunc_M, cfg.kernel_tol)
    lower = _start_pmf(cfg, Start.FROM_DELTA_ONE)
    upper = _start_pmf(cfg, Start.FROM_INFINITY)
    gap = total_variation(lower, upper)
    best_gap = gap
    stall = 0
    iterations = 0
    converged = False
    while iterations < cfg.max_iters:
        lower_next = apply_rde_map(lower, table)
        upper_next = apply_rde_map(upper, table)
        iterations += 1
        tv_lo = total_variation(lower_next, lower)
        tv_hi = total_variation(upper_next, upper)
        lower, upper = lower_next, upper_next
        gap = total_variation(lower, upper)
        if tv_lo < cfg.tol and tv_hi < cfg.tol:
            if gap <= cfg.tol:
                converged = True
                break
            if gap > best_gap * (1 - 1e-3):
                stall += 1
                if stall >= _STALL_WINDOW:
                    break
            else:
                stall = 0
        best_gap = min(best_gap, gap)
    residual = verify_recurrence(lower, cfg.c)
    converged = converged and residual <= 100 * cfg.tol
    return SolverReport(fixed_point=lower, lower=lower, upper=upper,
                        sandwich_gap=gap, iterations=iterations,
                        recurrence_residual=residual, converged=converged)


def verify_recurrence(mu: TruncatedPMF, c: float) -> float:
    """Max residual of the level recurrence the fixed point must satisfy:

        (i(i-1) + 2c) mu(i) = (i+1)i mu(i+1) + 2c (mu*mu)(i),

    checked for i <= M-1.  Meaningful only when overflow is negligible
    (< ~1e-8); a large value flags a non-fixed-point, e.g. the unit mass
    at 1.
    """
    M = mu.trunc_M
    cv = convolve(mu, mu)
    i = np.arange(1, M, dtype=np.float64)
    lhs = (i * (i - 1) + 2 * c) * mu.probs[:M - 1]
    rhs = (i + 1) * i * mu.probs[1:M] + 2 * c * cv.probs[:M - 1]
    return float(np.abs(lhs - rhs).max())


def closed_form_c1(M: int) -> TruncatedPMF:
    """The c = 1 lineage-count law: mass (2i-1)/3^i at i, exactly.

    The tail above M sums to (M+1) 3^{-M} and is stored as AT_TRUNCATION
    overflow; at M = 500 it is ~1e-236.
    """
    if M < 1:
        raise ValueError("truncation must be >= 1")
    i = np.arange(1, M + 1, dtype=np.float64)
    probs = (2 * i - 1) * 3.0 ** (-i)
    overflow = (M + 1) * 3.0 ** (-M)
    return TruncatedPMF(probs, overflow_mass=overflow,
                        overflow_mode=OverflowMode.AT_TRUNCATION, trunc_M=M)
