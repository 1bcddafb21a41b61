"""Asymptotic constants and growth-rate diagnostics for the norming sequence.

For ``psi_j = (j + 1)**-d`` with ``1/p < d < 1``,
``W_n(p) ~ c * n**(1/p + 1 - d)`` where ``c**p = I1 + I2``,

    I1 = int_0^inf H(y)**p dy,   H(y) = ((1+y)**(1-d) - y**(1-d)) / (1-d),
    I2 = int_0^1 (u**(1-d) / (1-d))**p du = (1-d)**-p / (1 + p (1-d)).

``I1`` collects the innovations before time 1 and ``I2`` those inside the
sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import NumericalPrecisionError, SummabilityError, ValidationError
from .quadrature import block_integral
from .weights import WeightSequence, norming


@dataclass(frozen=True)
class LrdConstant:
    p: float
    d: float
    c_value: float
    quadrature_error: float
    I1: float
    I2: float

    @property
    def exponent(self):
        return 1.0 / self.p + 1.0 - self.d

    def predicted(self, n):
        return self.c_value * np.asarray(n, dtype=float) ** self.exponent


def i2_closed_form(p, d):
    return (1.0 - d) ** (-p) / (1.0 + p * (1.0 - d))


def i2_numeric(p, d):
    val, err = integrate.quad(lambda u: (u ** (1.0 - d) / (1.0 - d)) ** p, 0.0, 1.0,
                              epsabs=1e-13, epsrel=1e-13)
    return val, err


def lrd_constant(p: float, d: float, tol: float = 1e-10) -> LrdConstant:
    """Constant ``c`` in ``W_n(p) ~ c n^(1/p+1-d)``."""
    if not 1.0 < p < 2.0:
        raise ValidationError(f"p: need 1 < p < 2, got {p}")
    if not d < 1.0:
        raise ValidationError(f"d: need d < 1 for long memory, got {d}")
    if d * p <= 1.0:
        raise SummabilityError(f"integral diverges: need d*p > 1, got d*p = {d * p:g}")
    I1, err = block_integral(d, p, 0.0, tol=tol)
    I2 = i2_closed_form(p, d)
    cp = I1 + I2
    c = cp ** (1.0 / p)
    c_err = err / (p * cp ** (1.0 - 1.0 / p))
    if not c_err <= tol * max(1.0, c):
        raise NumericalPrecisionError(f"lrd constant error {c_err:.2e} exceeds tol {tol:g}")
    return LrdConstant(p, d, c, c_err, I1, I2)


# ---------------------------------------------------------------------------
# regression


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    residual: float

    def __iter__(self):
        return iter((self.slope, self.intercept, self.residual))


def exponent_fit(series, burn_in: int = 0) -> ExponentFit:
    """Least-squares fit of ``log value`` on ``log n``.

    ``series`` maps ``n`` to a value; the first ``burn_in`` points (in
    increasing ``n``) are discarded. ``residual`` is the RMS residual.
    """
    items = sorted((float(k), float(v)) for k, v in dict(series).items())[int(burn_in):]
    if len(items) < 4:
        raise ValidationError(f"series: need at least 4 points after burn-in, got {len(items)}")
    n, v = np.array(items).T
    if np.any(v <= 0) or np.any(n <= 0):
        raise ValidationError("series: values and n must be positive for a log-log fit")
    x, y = np.log(n), np.log(v)
    A = np.column_stack((x, np.ones_like(x)))
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return ExponentFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


def norming_series(ws: WeightSequence, p: float, n_grid, tail_budget: float = 1e-6) -> dict:
    return {int(n): norming(ws, int(n), p, tail_budget).norming for n in n_grid}


# ---------------------------------------------------------------------------
# ratio condition between two exponents


@dataclass
class RateConditionReport:
    p: float
    q: float
    ratios: dict = field(default_factory=dict)  # n -> W_n(q)/W_n(p) * n^(1/p - 1/q)
    sup: float = math.nan
    top_slope: float = math.nan
    bounded: bool = False

    def rows(self):
        return [(n, r) for n, r in sorted(self.ratios.items())]


TREND_TOLERANCE = 0.02


def rate_condition_check(ws: WeightSequence, p: float, q: float, n_grid) -> RateConditionReport:
    """Tabulate ``r_n = (W_n(q)/W_n(p)) n^(1/p - 1/q)`` over ``n_grid``.

    The envelope counts as bounded when a log-log fit over the top decile
    of the grid (at least three points) has slope at most 0.02.
    """
    if not 1.0 <= p < q <= 2.0:
        raise ValidationError(f"need 1 <= p < q <= 2, got p={p}, q={q}")
    grid = sorted({int(n) for n in n_grid})
    if len(grid) < 3:
        raise ValidationError("n_grid: need at least 3 distinct points")
    ratios = {}
    for n in grid:
        wq = norming(ws, n, q).norming
        wp = norming(ws, n, p).norming
        ratios[n] = wq / wp * n ** (1.0 / p - 1.0 / q)
    k = max(3, math.ceil(len(grid) / 10))
    top = grid[-k:]
    x = np.log(top)
    y = np.log([ratios[n] for n in top])
    slope = float(np.polyfit(x, y, 1)[0]) if np.ptp(y) > 0 else 0.0
    return RateConditionReport(p, q, ratios, max(ratios.values()), slope, slope <= TREND_TOLERANCE)
