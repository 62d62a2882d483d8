"""Exact law of the Kingman block count run for an independent Exp(c) time.

With Y ~ Exp(c) and K_j the block-count process of a Kingman j-coalescent
(pairwise merge rate 1, so the holding rate at level l is C(l,2)), the
probability P(K_j(Y) = i) factors over levels by memorylessness:

    P(K_j(Y) = i) = c/(C(i,2)+c) * prod_{l=i+1..j} C(l,2)/(C(l,2)+c)   (i >= 2)
    P(K_j(Y) = 1) =                prod_{l=2..j}   C(l,2)/(C(l,2)+c)

Rows are computed by the numerically stable downward ratio recurrence

    P(j) = c/(C(j,2)+c),   P(i) = P(i+1) * C(i+1,2)/(C(i,2)+c),   P(1) = P(2)/c,

and the j = infinity row by accumulating log1p terms of the infinite
product with a closed-form telescoping tail.  Raw products of many factors
in (0,1) are kept only as a test oracle.

KernelTable is immutable after build and shareable across threads; the
samplers take a caller-owned random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine

ROW_SUM_TOL = 1e-12
DOMINANCE_TOL = 1e-12
DEFAULT_L_MAX = 10_000


def _comb2(l: float) -> float:
    return l * (l - 1) / 2.0


def kernel_row(j: int, c: float) -> np.ndarray:
    """P(K_j(Y) = i) for i = 1..j, by the downward ratio recurrence."""
    if j < 1:
        raise ValueError(f"lineage count {j} must be >= 1")
    if c <= 0:
        raise ValueError("rate c must be positive")
    if j == 1:
        return np.ones(1)
    p = np.empty(j + 1)
    p[j] = c / (_comb2(j) + c)
    if j > 2:
        # suffix product of the per-level ratios C(i+1,2)/(C(i,2)+c)
        i = np.arange(2, j, dtype=np.float64)
        ratios = (i + 1) * i / 2.0 / (i * (i - 1) / 2.0 + c)
        p[2:j] = p[j] * np.cumprod(ratios[::-1])[::-1]
    p[1] = p[2] / c
    return p[1:]


def _tail_cutoff(c: float, tol: float, min_level: int) -> int:
    # L such that the neglected second-order remainder of the log-product
    # tail, sum_{l>L} (x_l - log(1+x_l)) < 2c^2/(3(L-1)^3), is below tol.
    L = int(math.ceil((2.0 * c * c / (3.0 * tol)) ** (1.0 / 3.0))) + 2
    return max(min_level, L)


def kernel_row_infinite(c: float, max_i: int, tol: float):
    """P(K_inf(Y) = i) for i = 1..max_i, plus the residual tail mass.

    The infinite product Q(i) = prod_{l>i} C(l,2)/(C(l,2)+c) is evaluated as
    exp(-S(i)) with S(i) the sum of log(1 + 2c/(l(l-1))) terms up to a level
    L and the closed-form first-order tail 2c/L beyond it; L is sized so the
    construction error is below tol.  The residual 1 - sum(entries) is the
    genuine mass above max_i (roughly 2c/max_i), not a numerical defect.
    """
    if c <= 0:
        raise ValueError("rate c must be positive")
    if max_i < 1:
        raise ValueError("max_i must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    L = _tail_cutoff(c, tol, max_i + 1)
    ls = np.arange(2, L + 1, dtype=np.float64)
    logterms = np.log1p(2.0 * c / (ls * (ls - 1.0)))
    # suffix[l] = sum of logterms for levels l..L  (index shifted by 2)
    suffix = np.zeros(L + 2)
    suffix[2:L + 1] = np.cumsum(logterms[::-1])[::-1]
    tail = 2.0 * c / L
    i = np.arange(1, max_i + 1, dtype=np.float64)
    q = np.exp(-(suffix[2:max_i + 2] + tail))  # Q(i) for i = 1..max_i
    entries = c / (_comb2(i) + c) * q
    entries[0] = q[0]  # i = 1: the bare product, level 1 never merges
    return entries, 1.0 - entries.sum()


def kernel_entry(j, i: int, c: float) -> float:
    """P(K_j(Y) = i); j may be math.inf."""
    if i < 1:
        raise ValueError(f"lineage count {i} must be >= 1")
    if j == math.inf:
        entries, _ = kernel_row_infinite(c, i, 1e-14)
        return float(entries[i - 1])
    j = int(j)
    if i > j:
        raise ValueError(f"cannot end with {i} lineages starting from {j}")
    return float(kernel_row(j, c)[i - 1])


@dataclass(frozen=True)
class KernelTable:
    """Precomputed P(K_j(Y)=i) for j = 1..2M and j = infinity.

    ``rows[j, i]`` is P(K_j(Y)=i) (1-based on both axes; row/column 0 unused).
    ``infinity_row[i-1]`` covers i = 1..2M with ``infinity_residual`` the
    mass above 2M.
    """

    c: float
    trunc_M: int
    rows: np.ndarray
    infinity_row: np.ndarray
    infinity_residual: float
    product_tol: float

    def row(self, j: int) -> np.ndarray:
        """P(K_j(Y) = i) for i = 1..j."""
        return self.rows[j, 1:j + 1]


def build_table(c: float, M: int, tol: float = 1e-12) -> KernelTable:
    """Build all rows needed to push M-truncated pmfs through the kernel."""
    if M < 1:
        raise ValueError("truncation must be >= 1")
    J = 2 * M
    rows = np.zeros((J + 1, J + 1))
    for j in range(1, J + 1):
        rows[j, 1:j + 1] = kernel_row(j, c)
    inf_row, inf_resid = kernel_row_infinite(c, J, tol)
    rows.setflags(write=False)
    inf_row.setflags(write=False)
    table = KernelTable(c=float(c), trunc_M=M, rows=rows,
                        infinity_row=inf_row, infinity_residual=inf_resid,
                        product_tol=tol)
    _validate_table(table)
    return table


def _validate_table(table: KernelTable):
    J = 2 * table.trunc_M
    sums = table.rows[1:J + 1].sum(axis=1)
    worst = np.abs(sums - 1.0).max()
    if worst > ROW_SUM_TOL:
        raise AssertionError(f"kernel row sums off by {worst:.3e}")
    inf_total = table.infinity_row.sum() + table.infinity_residual
    if abs(inf_total - 1.0) > ROW_SUM_TOL:
        raise AssertionError(f"infinity row mass {inf_total!r}")
    # stochastic dominance in j: CCDFs nondecreasing row to row
    ccdf = np.cumsum(table.rows[1:J + 1, ::-1], axis=1)[:, ::-1]
    if (np.diff(ccdf, axis=0) < -DOMINANCE_TOL).any():
        raise AssertionError("kernel rows not stochastically increasing in j")
    ccdf_inf = (table.infinity_residual
                + np.cumsum(table.infinity_row[::-1])[::-1])
    if ((ccdf_inf - ccdf[-1, 1:]) < -DOMINANCE_TOL).any():
        raise AssertionError("infinity row does not dominate row 2M")
    if table.rows[1, 1] != 1.0:
        raise AssertionError("P(K_1(Y)=1) != 1")


def sample_count_at(n, t: float, rng: np.random.Generator,
                    L_max: int = DEFAULT_L_MAX) -> int:
    """Sample the Kingman block count at time t started from n lineages.

    Exact in distribution for finite n.  n = math.inf descends from L_max
    instead; the missed descent time from infinity to L_max has expectation
    at most 2/L_max, so the sample under-counts by that bias.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    if n == math.inf:
        if L_max < 2:
            raise ValueError("L_max must be >= 2 for infinite starts")
        n = L_max
    n = int(n)
    if n < 1:
        raise ValueError(f"lineage count {n} must be >= 1")
    return int(_engine.descend_count(n, t, rng))


def sample_kingman_exp(j, c: float, size: int, rng: np.random.Generator,
                       L_max: int = DEFAULT_L_MAX) -> np.ndarray:
    """size iid samples of K_j(Y), Y ~ Exp(c) drawn fresh per sample."""
    if j == math.inf:
        j = L_max
    return _engine.kingman_exp_batch(int(j), float(c), int(size), rng)
