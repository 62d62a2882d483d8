"""Probability generating functions of truncated pmfs and their ODE residuals.

The generating function R(x) = sum_i mu({i}) x^i of the fixed-point law
satisfies

    R(x) = R(x)^2 + x(1-x) R''(x) / (2c),    R(0) = 0, R(1) = 1,

and the transform g = -log(1 - R) satisfies

    g'' = (g')^2 + 2c (1 - e^{-g}) / (x (1-x)),    g(0) = 0.

Both residuals are checked pointwise on a grid; derivatives come from exact
coefficient manipulation (finite differences are only a test oracle).  Near
x = 1 the truncation tail dominates and g blows up, so residual grids stop
at 0.9.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .dist import TruncatedPMF


@dataclass(frozen=True)
class PGFSeries:
    """Power-series coefficients: coeffs[i-1] is the coefficient of x^i."""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("coeffs must be a 1-d array with >= 1 entry")
        if (coeffs < 0).any():
            raise ValueError("coefficients must be nonnegative")
        if coeffs.sum() > 1 + 1e-12:
            raise ValueError("coefficients sum exceeds 1")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @staticmethod
    def from_pmf(pmf: TruncatedPMF) -> "PGFSeries":
        """Series of the finite part; overflow mass is not representable."""
        return PGFSeries(pmf.probs)


def pgf_eval(series: PGFSeries, x: float, order: int = 0) -> float:
    """Evaluate the series or its first/second derivative at x in [0,1]."""
    if not 0 <= x <= 1:
        raise ValueError(f"x={x} outside [0, 1]")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    full = np.concatenate([[0.0], series.coeffs])  # coefficient of x^0 is 0
    return float(npoly.polyval(x, npoly.polyder(full, order)))


def ode_residual(series: PGFSeries, c: float, x: float) -> float:
    """|R - R^2 - x(1-x) R'' / (2c)| at x."""
    if not 0 < x < 1:
        raise ValueError(f"x={x} outside (0, 1)")
    r = pgf_eval(series, x)
    rpp = pgf_eval(series, x, order=2)
    return abs(r - r * r - x * (1 - x) * rpp / (2 * c))


def g_residual(series: PGFSeries, c: float, x: float) -> float:
    """Residual of the log-transform ODE at x; requires R(x) < 1."""
    if not 0 < x < 1:
        raise ValueError(f"x={x} outside (0, 1)")
    r = pgf_eval(series, x)
    if r >= 1:
        raise ValueError(f"R({x})={r} >= 1: log transform undefined")
    rp = pgf_eval(series, x, order=1)
    rpp = pgf_eval(series, x, order=2)
    g = -np.log1p(-r)
    gp = rp / (1 - r)
    gpp = gp * gp + rpp / (1 - r)
    return float(abs(gpp - gp * gp - 2 * c * (1 - np.exp(-g)) / (x * (1 - x))))


def g_prime(series: PGFSeries, x: float) -> float:
    """g'(x) = R'(x) / (1 - R(x)); bounded by 1/(1-x) for any pmf."""
    r = pgf_eval(series, x)
    if r >= 1:
        raise ValueError(f"R({x})={r} >= 1: log transform undefined")
    return pgf_eval(series, x, order=1) / (1 - r)
