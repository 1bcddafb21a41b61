"""Integrals of the power-law block profile.

For weights ``psi_j = (j + 1)**-d`` a block of ``n`` consecutive weights
starting far from the origin behaves like ``n**(1-d) * H(t)`` with

    H(t) = integral_t^{t+1} x**-d dx.

Both the long-memory constant and the certified tail bracket of the norming
sequence reduce to ``integral_a^inf H(t)**s dt``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .errors import NumericalPrecisionError, SummabilityError

# Beyond this point the integrand is replaced by its two-term expansion.
_ASYMPTOTIC_START = 1e7


def block_profile(t, d):
    """Return ``H(t) = int_t^{t+1} x**-d dx`` for ``t >= 0`` (vectorised)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if d == 1.0:
            out = np.log1p(1.0 / t)
        else:
            a = 1.0 - d
            out = t**a * np.expm1(a * np.log1p(1.0 / t)) / a
        if d < 1.0:
            out = np.where(t == 0.0, 1.0 / (1.0 - d), out)
    return out


def _asymptotic_tail(d, s, T):
    # H(t)**s = t**(-ds) * (1 - s*d/(2t) + O(t**-2)); the O-term coefficient
    # is bounded by K for t >= 1e7 and s, d in the supported range.
    ds = d * s
    main = T ** (1.0 - ds) / (ds - 1.0) - 0.5 * s * d * T ** (-ds) / ds
    K = s * d * (d + 1.0) / 6.0 + s * abs(s - 1.0) * d * d / 8.0 + 1.0
    return main, K * T ** (-ds - 1.0) / (ds + 1.0)


def block_integral(d, s, lower=0.0, tol=1e-11):
    """Integrate ``H(t)**s`` over ``[lower, inf)``.

    Returns ``(value, error_bound)``. Requires ``d * s > 1``; ``lower`` may
    be zero only when ``d < 1`` (otherwise ``H`` is unbounded at the origin).
    """
    if d * s <= 1.0:
        raise SummabilityError(
            f"block integral diverges: need d*s > 1, got d*s = {d * s:g}"
        )
    if lower <= 0.0 and d >= 1.0:
        raise ValueError("lower limit must be positive when d >= 1")
    T = max(_ASYMPTOTIC_START, 1e3 * lower)
    total = 0.0
    err = 0.0

    def f_log(u):
        t = math.exp(u)
        return float(block_profile(t, d)) ** s * t

    start = lower
    if lower < 1.0:
        if lower <= 0.0:
            val, e = integrate.quad(
                lambda t: float(block_profile(t, d)) ** s, 0.0, 1.0,
                epsabs=tol * 1e-2, epsrel=1e-13, limit=400,
            )
            total += val
            err += e
            start = 1.0
    a = math.log(start)
    b = math.log(T)
    # Split the logarithmic range into unit panels; quad is more reliable
    # on short intervals with a smooth integrand.
    edges = np.linspace(a, b, max(2, int(math.ceil(b - a)) + 1))
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(f_log, lo, hi, epsabs=tol * 1e-3, epsrel=1e-13, limit=200)
        total += val
        err += e
    tail, tail_err = _asymptotic_tail(d, s, T)
    total += tail
    err += tail_err
    if not math.isfinite(total) or err > max(tol, 1e-12 * abs(total)) * 10:
        raise NumericalPrecisionError(
            f"block integral (d={d}, s={s}, lower={lower}) error {err:.3g} exceeds tolerance"
        )
    return total, err
