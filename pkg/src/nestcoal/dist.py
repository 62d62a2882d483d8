"""Finite-support probability distributions on the positive integers.

Every distribution this package manipulates lives on {1, ..., M} plus an
explicit overflow bucket holding the mass above M.  The bucket carries a
mode telling downstream consumers how to interpret that mass:

  * ``AT_INFINITY``   -- the mass sits at infinity (stochastic upper reading);
  * ``AT_TRUNCATION`` -- the mass sits just above M (stochastic lower reading).

The two modes are what make certified two-sided truncation bounds possible:
an upper-bracket iteration keeps its tail at infinity, a lower-bracket
iteration keeps it at the truncation edge, and the order between them is
never silently violated by the numerics.

All values are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-12
ORDER_TOL = 1e-12


class OverflowMode(enum.Enum):
    AT_TRUNCATION = "at_truncation"
    AT_INFINITY = "at_infinity"


class StochasticOrder(enum.Enum):
    DOMINATES = "dominates"
    DOMINATED_BY = "dominated_by"
    EQUAL = "equal"
    INCOMPARABLE = "incomparable"


@dataclass(frozen=True, eq=False)
class TruncatedPMF:
    """Probability mass function on {1..trunc_M} with an overflow bucket.

    ``probs[i-1]`` is the mass at support value ``i``.  Invariants are
    checked at construction: nonnegative entries, total mass 1 within
    ``NORM_TOL``, and ``len(probs) == trunc_M >= 1``.
    """

    probs: np.ndarray
    overflow_mass: float = 0.0
    overflow_mode: OverflowMode = OverflowMode.AT_TRUNCATION
    trunc_M: int = field(default=0)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError("probs must be a 1-d array with at least one entry")
        if self.trunc_M == 0:
            object.__setattr__(self, "trunc_M", probs.size)
        if probs.size != self.trunc_M:
            raise ValueError(
                f"len(probs)={probs.size} does not match trunc_M={self.trunc_M}"
            )
        if (probs < 0).any() or self.overflow_mass < 0:
            raise ValueError("probabilities must be nonnegative")
        total = probs.sum() + self.overflow_mass
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"mass {total!r} is not 1 within {NORM_TOL}")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "overflow_mass", float(self.overflow_mass))

    def support(self) -> np.ndarray:
        return np.arange(1, self.trunc_M + 1)

    def prob(self, i: int) -> float:
        """Mass at support value i (1-based)."""
        if not 1 <= i <= self.trunc_M:
            raise ValueError(f"support value {i} outside 1..{self.trunc_M}")
        return float(self.probs[i - 1])

    def cdf(self) -> np.ndarray:
        """CDF evaluated at 1..trunc_M (excludes overflow)."""
        return np.cumsum(self.probs)

    def ccdf(self) -> np.ndarray:
        """P(X >= i) for i = 1..trunc_M, counting overflow as above M."""
        return self.overflow_mass + np.cumsum(self.probs[::-1])[::-1]

    def to_json_dict(self) -> dict:
        return {
            "trunc_M": self.trunc_M,
            "probs": [float(p) for p in self.probs],
            "overflow_mass": self.overflow_mass,
            "overflow_mode": self.overflow_mode.value,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "TruncatedPMF":
        try:
            return TruncatedPMF(
                probs=np.asarray(d["probs"], dtype=np.float64),
                overflow_mass=float(d["overflow_mass"]),
                overflow_mode=OverflowMode(d["overflow_mode"]),
                trunc_M=int(d["trunc_M"]),
            )
        except KeyError as exc:
            raise ValueError(f"pmf JSON missing field {exc.args[0]!r}") from exc


def pmf_delta(k, M: int) -> TruncatedPMF:
    """Unit mass at k, or at infinity when k is math.inf."""
    if M < 1:
        raise ValueError("truncation must be >= 1")
    probs = np.zeros(M)
    if k == math.inf:
        return TruncatedPMF(probs, overflow_mass=1.0,
                            overflow_mode=OverflowMode.AT_INFINITY, trunc_M=M)
    k = int(k)
    if not 1 <= k <= M:
        raise ValueError(f"support value {k} outside 1..{M}")
    probs[k - 1] = 1.0
    return TruncatedPMF(probs, trunc_M=M)


def _check_same_truncation(a: TruncatedPMF, b: TruncatedPMF):
    if a.trunc_M != b.trunc_M:
        raise ValueError(
            f"truncation mismatch: {a.trunc_M} vs {b.trunc_M}"
        )


def convolve(a: TruncatedPMF, b: TruncatedPMF) -> TruncatedPMF:
    """Distribution of the sum of independent draws from a and b.

    Result is truncated at 2M.  Any mass with an overflow operand lands in
    the result's overflow bucket (never redistributed downward, so the
    upper/lower bound semantics of the modes survive convolution).  The
    result is AT_INFINITY if either input is.
    """
    _check_same_truncation(a, b)
    M = a.trunc_M
    out = np.zeros(2 * M)
    out[1:] = np.convolve(a.probs, b.probs)  # sums 2..2M
    over = (a.overflow_mass * b.probs.sum()
            + b.overflow_mass * a.probs.sum()
            + a.overflow_mass * b.overflow_mass)
    if (a.overflow_mode is OverflowMode.AT_INFINITY
            or b.overflow_mode is OverflowMode.AT_INFINITY):
        mode = OverflowMode.AT_INFINITY
    else:
        mode = OverflowMode.AT_TRUNCATION
    return TruncatedPMF(out, overflow_mass=over, overflow_mode=mode,
                        trunc_M=2 * M)


def _extended_cdf(p: TruncatedPMF) -> np.ndarray:
    """CDF at 1..M plus a virtual point just above M.

    The virtual point includes AT_TRUNCATION overflow but not AT_INFINITY
    overflow, which is what ranks infinity-mass strictly above
    truncation-mass at equal overflow.
    """
    cdf = np.cumsum(p.probs)
    virt = cdf[-1]
    if p.overflow_mode is OverflowMode.AT_TRUNCATION:
        virt = virt + p.overflow_mass
    return np.concatenate([cdf, [virt]])


def compare_stochastic(a: TruncatedPMF, b: TruncatedPMF) -> StochasticOrder:
    """Usual stochastic order: a dominates b iff CDF(a) <= CDF(b) pointwise.

    Overflow counts as mass above M; AT_INFINITY ranks strictly above
    AT_TRUNCATION at equal overflow mass.
    """
    _check_same_truncation(a, b)
    diff = _extended_cdf(a) - _extended_cdf(b)
    if np.abs(diff).max() <= ORDER_TOL:
        return StochasticOrder.EQUAL
    below = (diff <= ORDER_TOL).all()
    above = (diff >= -ORDER_TOL).all()
    if below:
        return StochasticOrder.DOMINATES
    if above:
        return StochasticOrder.DOMINATED_BY
    return StochasticOrder.INCOMPARABLE


def total_variation(a: TruncatedPMF, b: TruncatedPMF) -> float:
    """Half the L1 distance between the pmfs, overflow bucket included."""
    _check_same_truncation(a, b)
    return float(0.5 * (np.abs(a.probs - b.probs).sum()
                        + abs(a.overflow_mass - b.overflow_mass)))


def mean(a: TruncatedPMF) -> float:
    """First moment.

    Overflow at infinity makes the mean infinite.  AT_TRUNCATION overflow is
    scored at M, so with nonzero overflow the returned value is a lower
    bound on the untruncated mean (recoverable from ``a.overflow_mass``).
    """
    if a.overflow_mass > 0 and a.overflow_mode is OverflowMode.AT_INFINITY:
        return math.inf
    m = float(np.dot(a.support(), a.probs))
    return m + a.trunc_M * a.overflow_mass
