"""Tail function of the symmetric alpha-stable law, 1 < alpha < 2.

Characteristic function ``exp(-|t|**alpha)``. Two evaluation routes:

* large ``x``: the asymptotic series
  ``P(|X| > x) ~ (2/pi) sum_k (-1)**(k+1) Gamma(k alpha)/k! sin(k pi alpha/2) x**(-k alpha)``
  truncated at its smallest term;
* otherwise Zolotarev's integral (Nolan's form with beta = 0)
  ``P(|X| > x) = (2/pi) int_0^{pi/2} exp(-x**(alpha/(alpha-1)) V(theta)) dtheta``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import NumericalPrecisionError

TAIL_TOL = 1e-10
_MAX_TERMS = 60


def _series_terms(alpha, kmax=_MAX_TERMS):
    k = np.arange(1, kmax + 1)
    sign = np.where(k % 2 == 1, 1.0, -1.0)
    logmag = gammaln(k * alpha) - gammaln(k + 1.0)
    return k, sign * np.sin(k * math.pi * alpha / 2.0), logmag


def asymptotic_tail(alpha, x, tol=TAIL_TOL, moment=None):
    """Return ``(value, error)`` from the truncated large-``x`` series.

    With ``moment = (m, upper)`` the series is integrated termwise:
    ``int_x^upper t**(m-1) P(|X| > t) dt`` (``upper`` may be ``inf``).
    """
    k, trig, logmag = _series_terms(alpha)
    logx = math.log(x)
    # |sin| <= 1 in the error bound; zeros of the sine must not end the series
    mags = np.exp(logmag - k * alpha * logx)
    stop = int(np.argmin(mags[1:]) + 1)
    coef = (2.0 / math.pi) * trig[:stop] * np.exp(logmag[:stop])
    expo = k[:stop] * alpha
    err_scale = (2.0 / math.pi) * mags[stop]
    if moment is None:
        value = float(np.sum(coef * x ** (-expo)))
        return value, float(err_scale)
    m, upper = moment
    powers = m - expo
    if np.any(powers >= 0) and not math.isfinite(upper):
        return math.inf, 0.0
    lo_part = x**powers
    up_part = 0.0 if not math.isfinite(upper) else upper**powers
    value = float(np.sum(coef * (up_part - lo_part) / powers))
    p_next = m - (stop + 1) * alpha
    err = err_scale * x**m / abs(p_next) if p_next < 0 else math.inf
    return value, float(err)


def _V(theta, alpha):
    a1 = alpha / (alpha - 1.0)
    c = math.cos(theta)
    with np.errstate(over="ignore", divide="ignore"):
        base = c / math.sin(alpha * theta)
        return np.float64(base) ** a1 * math.cos((alpha - 1.0) * theta) / c


def _integral_tail(alpha, x):
    if x == 0.0:
        return 1.0, 0.0
    scale = x ** (alpha / (alpha - 1.0))
    top = math.pi / 2.0

    def g(theta):
        return scale * _V(theta, alpha)

    # g decreases from +inf to 0; split where the exponent crosses fixed levels
    points = []
    for level in (50.0, 10.0, 1.0, 0.1, 1e-3):
        lo, hi = 1e-300, top - 1e-16
        if g(hi) > level or g(lo) < level:
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) > level:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15 * top:
                break
        points.append(0.5 * (lo + hi))
    edges = [0.0] + sorted(set(points)) + [top]
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        val, e = integrate.quad(
            lambda t: math.exp(-g(t)) if t > 0 else 0.0, a, b, epsabs=1e-14, epsrel=1e-12, limit=200
        )
        total += val
        err += e
    return 2.0 / math.pi * total, 2.0 / math.pi * err


def switch_point(alpha, tol=TAIL_TOL):
    """Smallest ``x`` on a coarse grid where the series meets ``tol``."""
    for x in np.geomspace(2.0, 1e6, 200):
        value, err = asymptotic_tail(alpha, x)
        if err <= tol * min(1.0, value) * 1e-2 and err <= tol:
            return float(x)
    return 1e6


_SWITCH_CACHE: dict = {}


def _switch(alpha):
    if alpha not in _SWITCH_CACHE:
        _SWITCH_CACHE[alpha] = switch_point(alpha)
    return _SWITCH_CACHE[alpha]


def stable_tail_scalar(alpha, x):
    x = abs(float(x))
    if x >= _switch(alpha):
        value, err = asymptotic_tail(alpha, x)
    else:
        value, err = _integral_tail(alpha, x)
    if err > TAIL_TOL:
        raise NumericalPrecisionError(f"stable tail at x={x:g}: error {err:.2e} exceeds {TAIL_TOL:g}")
    return min(max(value, 0.0), 1.0)


def stable_tail(alpha, x):
    x = np.asarray(x, dtype=float)
    out = np.array([stable_tail_scalar(alpha, v) for v in x.ravel()]).reshape(x.shape)
    return out if out.ndim else float(out)


@lru_cache(maxsize=4096)
def _head_moment(alpha, m, a, b):
    return integrate.quad(
        lambda t: t ** (m - 1.0) * stable_tail_scalar(alpha, t), a, b,
        epsabs=1e-12, epsrel=1e-11, limit=200,
    )


def tail_moment(alpha, m, a, b=math.inf):
    """``int_a^b t**(m-1) P(|X| > t) dt`` for ``m < alpha`` when ``b`` is infinite."""
    xs = _switch(alpha)
    total = 0.0
    err = 0.0
    if a < xs:
        val, e = _head_moment(alpha, m, a, min(b, xs))
        total += val
        err += e
    if b > xs:
        val, e = asymptotic_tail(alpha, max(a, xs), moment=(m, b))
        total += val
        err += e
    return total, err
