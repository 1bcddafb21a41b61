"""Coefficient sequences of a causal linear process and their norming sequence.

A linear process ``X_k = sum_{j>=0} psi_j eps_{k-j}`` has partial sums
``S_n = sum_{j<=n} w_{nj} eps_j`` with ``w_{nj} = sum_{k=1}^n psi_{k-j}``.
The norming sequence is ``W_n(p) = (sum_{j<=n} |w_{nj}|**p)**(1/p)``.

With the prefix sums ``Psi_m = psi_0 + ... + psi_m`` the weights factor as

    w_{nj} = Psi_{n-j} - Psi_{-j}   for j <= 0,
    w_{nj} = Psi_{n-j}              for 1 <= j <= n,

so a window ``j = -J..n`` costs one cumulative sum of length ``n + J + 1``.
Indices ``j < -J`` are never enumerated; each family supplies a certified
bracket on their contribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import zeta

from .errors import ResourceError, SummabilityError, ValidationError
from .quadrature import block_integral

DEFAULT_TAIL_BUDGET = 1e-6
MAX_WINDOW = 1 << 26


class WeightSequence:
    """Base class for coefficient families ``psi_j``, ``j >= 0``.

    Subclasses are immutable; ``psi`` is vectorised and returns 0 for
    negative indices.
    """

    family = "abstract"
    description = ""

    # -- evaluation -------------------------------------------------------
    def _psi_nonneg(self, j):
        raise NotImplementedError

    def psi(self, j):
        j = np.asarray(j)
        out = np.zeros(j.shape, dtype=float)
        mask = j >= 0
        if np.any(mask):
            out[mask] = self._psi_nonneg(j[mask].astype(np.int64))
        return out if out.ndim else float(out)

    # -- metadata ---------------------------------------------------------
    support = None  # last index that can be nonzero, None when infinite

    @property
    def abs_summable(self):
        return math.isfinite(self.abs_tail_from(0))

    def summability_margin(self, p):
        """How far ``sum |psi_j|**p`` is from diverging; ``inf`` if never."""
        return math.inf

    def p_summable(self, p):
        return self.summability_margin(p) > 0

    def abs_tail_from(self, m):
        """``sum_{k >= m} |psi_k|`` (exact or an upper bound, may be inf)."""
        raise NotImplementedError

    def p_tail_from(self, m, p):
        """``sum_{k >= m} |psi_k|**p`` (exact or an upper bound)."""
        raise NotImplementedError

    def initial_window(self, n):
        return max(int(n), 64)

    def omitted_bounds(self, n, J, s):
        """Bracket ``sum_{i > J} |w_{n,-i}|**s`` as ``(lower, upper)``."""
        raise NotImplementedError

    def omitted_sup_bound(self, n, J):
        """Upper bound on ``sup_{i > J} |w_{n,-i}|``."""
        raise NotImplementedError

    def scaled(self, lam):
        return Custom(
            evaluator=lambda j, f=self._psi_nonneg: lam * f(j),
            envelope=None,
            base=self,
            scale=lam,
            description=f"{lam:g} * ({self.description or self.family})",
        )

    def to_dict(self):
        raise ValidationError(f"weight family {self.family!r} is not serialisable")


def _check_summable(ws, p):
    margin = ws.summability_margin(p)
    if margin <= 0:
        raise SummabilityError(
            f"{ws.family} weights are not {p:g}-summable (sum |psi_j|^p must be "
            f"finite; summability margin {margin:g} <= 0)"
        )
    return margin


@dataclass(frozen=True)
class Delta(WeightSequence):
    """``psi_0 = 1`` and all other weights zero: ``X_k = eps_k``."""

    description: str = "i.i.d. innovations"
    family = "delta"
    support = 0

    def _psi_nonneg(self, j):
        return (j == 0).astype(float)

    def abs_tail_from(self, m):
        return 1.0 if m <= 0 else 0.0

    def p_tail_from(self, m, p):
        return 1.0 if m <= 0 else 0.0

    def initial_window(self, n):
        return 0

    def omitted_bounds(self, n, J, s):
        return 0.0, 0.0

    def omitted_sup_bound(self, n, J):
        return 0.0

    def to_dict(self):
        return {"family": "delta"}


@dataclass(frozen=True)
class FiniteSupport(WeightSequence):
    coefficients: tuple = ()
    description: str = ""
    family = "finite"

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if not coeffs:
            raise ValidationError("coefficients: at least one weight is required")
        if not all(math.isfinite(c) for c in coeffs):
            raise ValidationError("coefficients: weights must be finite")
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "_arr", np.array(coeffs))

    @property
    def support(self):
        return len(self.coefficients) - 1

    def _psi_nonneg(self, j):
        out = np.zeros(j.shape)
        inside = j <= self.support
        out[inside] = self._arr[j[inside]]
        return out

    def abs_tail_from(self, m):
        return float(np.abs(self._arr[max(m, 0):]).sum())

    def p_tail_from(self, m, p):
        return float((np.abs(self._arr[max(m, 0):]) ** p).sum())

    def initial_window(self, n):
        # w_{n,-i} vanishes once i + 1 exceeds the support
        return max(self.support - 1, 0)

    def omitted_bounds(self, n, J, s):
        if J >= self.support - 1:
            return 0.0, 0.0
        tail = sum(self.p_tail_from(i + 1, 1.0) ** s for i in range(J + 1, self.support))
        return 0.0, tail

    def omitted_sup_bound(self, n, J):
        return 0.0 if J >= self.support - 1 else self.abs_tail_from(J + 2)

    def to_dict(self):
        return {"family": "finite", "coefficients": list(self.coefficients)}


@dataclass(frozen=True)
class Geometric(WeightSequence):
    rho: float = 0.5
    description: str = ""
    family = "geometric"

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValidationError(f"rho: need |rho| < 1, got {self.rho}")

    def _psi_nonneg(self, j):
        return float(self.rho) ** j.astype(float)

    def abs_tail_from(self, m):
        r = abs(self.rho)
        return r ** max(m, 0) / (1.0 - r)

    def p_tail_from(self, m, p):
        r = abs(self.rho) ** p
        return r ** max(m, 0) / (1.0 - r)

    def initial_window(self, n):
        r = abs(self.rho)
        if r == 0.0:
            return 0
        # |rho|**J below double precision relative to the largest weight
        return int(min(MAX_WINDOW, math.ceil(40.0 / -math.log(r))))

    def _block(self, n):
        # w_{n,-i} = rho**(i+1) * (1 - rho**n) / (1 - rho) exactly
        return abs((1.0 - self.rho**n) / (1.0 - self.rho))

    def omitted_bounds(self, n, J, s):
        r = abs(self.rho)
        if r == 0.0:
            return 0.0, 0.0
        exact = self._block(n) ** s * r ** (s * (J + 2)) / (1.0 - r**s)
        return exact, exact

    def omitted_sup_bound(self, n, J):
        return self._block(n) * abs(self.rho) ** (J + 2)

    def to_dict(self):
        return {"family": "geometric", "rho": self.rho}


@dataclass(frozen=True)
class PowerLaw(WeightSequence):
    """``psi_j = (j + 1)**-d``; long memory when ``d <= 1``."""

    d: float = 0.75
    description: str = ""
    family = "power_law"

    def __post_init__(self):
        if not self.d > 0:
            raise ValidationError(f"d: need d > 0, got {self.d}")

    def _psi_nonneg(self, j):
        return (j.astype(float) + 1.0) ** (-self.d)

    def summability_margin(self, p):
        return self.d * p - 1.0

    def abs_tail_from(self, m):
        if self.d <= 1.0:
            return math.inf
        return float(zeta(self.d, max(m, 0) + 1))

    def p_tail_from(self, m, p):
        if self.d * p <= 1.0:
            return math.inf
        return float(zeta(self.d * p, max(m, 0) + 1))

    def omitted_bounds(self, n, J, s):
        # sum_{m=i+1}^{i+n} (m+1)^-d lies between h(i+2) and h(i+1) where
        # h(y) = int_y^{y+n} x^-d dx = n^(1-d) H(y/n); h is decreasing, so
        # the sum over i > J is bracketed by integrals of h^s.
        scale = float(n) ** (1.0 + s * (1.0 - self.d))
        lo, lo_err = block_integral(self.d, s, (J + 3) / n)
        hi, hi_err = block_integral(self.d, s, (J + 1) / n)
        return max(scale * (lo - lo_err), 0.0), scale * (hi + hi_err)

    def omitted_sup_bound(self, n, J):
        y = J + 2.0
        if self.d == 1.0:
            return math.log1p(n / y)
        a = 1.0 - self.d
        return y**a * math.expm1(a * math.log1p(n / y)) / a

    def to_dict(self):
        return {"family": "power_law", "d": self.d}


@dataclass(frozen=True)
class Custom(WeightSequence):
    """Weights from an arbitrary evaluator.

    ``envelope = (C, a)`` asserts ``|psi_j| <= C (j+1)**-a`` for all
    ``j >= 0``; it drives every tail bound. Without an envelope the family
    can only be used through an explicit window.
    """

    evaluator: Callable = None
    envelope: tuple | None = None
    description: str = ""
    base: WeightSequence | None = None
    scale: float = 1.0
    family = "custom"

    def __post_init__(self):
        if self.evaluator is None:
            raise ValidationError("evaluator: a callable is required")
        if self.envelope is not None:
            C, a = self.envelope
            if C <= 0 or a <= 0:
                raise ValidationError(f"envelope: need C > 0 and a > 0, got {self.envelope}")

    def _psi_nonneg(self, j):
        return np.asarray(self.evaluator(j), dtype=float)

    @property
    def support(self):
        return self.base.support if self.base is not None else None

    def summability_margin(self, p):
        if self.base is not None:
            return self.base.summability_margin(p)
        if self.envelope is None:
            return -math.inf
        return self.envelope[1] * p - 1.0

    def abs_tail_from(self, m):
        if self.base is not None:
            return abs(self.scale) * self.base.abs_tail_from(m)
        if self.envelope is None:
            return math.inf
        C, a = self.envelope
        return C * float(zeta(a, max(m, 0) + 1)) if a > 1 else math.inf

    def p_tail_from(self, m, p):
        if self.base is not None:
            return abs(self.scale) ** p * self.base.p_tail_from(m, p)
        if self.envelope is None:
            return math.inf
        C, a = self.envelope
        return C**p * float(zeta(a * p, max(m, 0) + 1)) if a * p > 1 else math.inf

    def initial_window(self, n):
        if self.base is not None:
            return self.base.initial_window(n)
        return super().initial_window(n)

    def omitted_bounds(self, n, J, s):
        if self.base is not None:
            lo, hi = self.base.omitted_bounds(n, J, s)
            f = abs(self.scale) ** s
            return f * lo, f * hi
        if self.envelope is None:
            return 0.0, math.inf
        C, a = self.envelope
        if a * s <= 1:
            return 0.0, math.inf
        # |w_{n,-i}| <= C n (i+2)^-a
        return 0.0, (C * n) ** s * float(zeta(a * s, J + 3))

    def omitted_sup_bound(self, n, J):
        if self.base is not None:
            return abs(self.scale) * self.base.omitted_sup_bound(n, J)
        if self.envelope is None:
            return math.inf
        C, a = self.envelope
        return C * n * (J + 3.0) ** (-a)


# ---------------------------------------------------------------------------
# construction and serialisation


def make_weights(spec) -> WeightSequence:
    """Build a weight sequence from a descriptor.

    ``spec`` is either a ``WeightSequence`` (returned unchanged), a family
    name, or a mapping with a ``family`` key and the family's parameters::

        {"family": "power_law", "d": 0.75}
        {"family": "finite", "coefficients": [1, -1]}
        {"family": "table", "path": "psi.txt"}
    """
    if isinstance(spec, WeightSequence):
        return spec
    if isinstance(spec, str):
        spec = {"family": spec}
    spec = dict(spec)
    family = str(spec.pop("family", "")).lower().replace("-", "_")
    description = spec.pop("description", "")
    try:
        if family == "delta":
            ws = Delta()
        elif family in ("finite", "finite_support"):
            ws = FiniteSupport(tuple(spec.pop("coefficients")), description)
        elif family == "geometric":
            ws = Geometric(float(spec.pop("rho")), description)
        elif family in ("power_law", "powerlaw"):
            ws = PowerLaw(float(spec.pop("d")), description)
        elif family == "table":
            ws = load_table(spec.pop("path"), description)
        else:
            raise ValidationError(f"family: unknown weight family {family!r}")
    except KeyError as exc:
        raise ValidationError(f"{exc.args[0]}: missing parameter for {family} weights") from None
    if spec:
        raise ValidationError(f"{sorted(spec)[0]}: unexpected key for {family} weights")
    return ws


def load_table(path, description="") -> FiniteSupport:
    """Read ``psi_0, psi_1, ...`` from a one-column text file."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"path: weight table {path} does not exist")
    values = np.loadtxt(path, ndmin=1)
    if values.ndim != 1:
        raise ValidationError(f"path: {path} must contain a single column")
    return FiniteSupport(tuple(values.tolist()), description or path.name)


def save_table(ws: FiniteSupport, path):
    np.savetxt(path, np.asarray(ws.coefficients), fmt="%.17g")


# ---------------------------------------------------------------------------
# cumulative weights


@dataclass(frozen=True)
class CumulativeWeights:
    prefix: np.ndarray
    absolute_prefix: np.ndarray
    M: int

    def w(self, n, j):
        """``w_{nj}`` for an array of ``j`` with ``-M + n <= -j`` ... ``j <= n``."""
        j = np.asarray(j)
        upper = n - j
        if np.any(upper > self.M):
            raise ValueError("index outside the cumulative table")
        out = np.where(upper >= 0, self.prefix[np.clip(upper, 0, self.M)], 0.0)
        lower = -j
        out = out - np.where(lower >= 0, self.prefix[np.clip(lower, 0, self.M)], 0.0)
        return out

    def window(self, n, J):
        """``w_{nj}`` for ``j = -J..n`` as an array (index ``j + J``)."""
        if n + J > self.M:
            raise ValueError("window outside the cumulative table")
        P = self.prefix
        # j <= 0 (i = -j = J..0): Psi_{n+i} - Psi_i;  j = 1..n: Psi_{n-j}
        neg = (P[n : n + J + 1] - P[: J + 1])[::-1]
        pos = P[:n][::-1]
        return np.concatenate((neg, pos))


def cumulative(ws: WeightSequence, M: int) -> CumulativeWeights:
    psi = ws.psi(np.arange(M + 1))
    return CumulativeWeights(np.cumsum(psi), np.cumsum(np.abs(psi)), M)


def weight_window(ws: WeightSequence, n: int, J: int) -> np.ndarray:
    """``w_{nj}`` for ``j = -J..n`` via prefix sums."""
    return cumulative(ws, n + J).window(n, J)


def w_coefficient(ws: WeightSequence, n: int, j: int, cw: CumulativeWeights | None = None) -> float:
    """``w_{nj} = sum_{k=1}^n psi_{k-j}``."""
    if n < 1:
        raise ValidationError(f"n: need n >= 1, got {n}")
    if j > n:
        return 0.0
    if cw is not None and n - j <= cw.M:
        return float(cw.w(n, np.array([j]))[0])
    idx = np.arange(max(1 - j, 0), n - j + 1)
    return float(np.sum(ws.psi(idx)))


# ---------------------------------------------------------------------------
# norming sequence


@dataclass(frozen=True)
class NormingEvaluation:
    n: int
    p: float
    J: int
    w: np.ndarray = field(repr=False)
    norming: float
    sup_abs_w: float
    tail_error_bound: float
    summability_margin: float = math.inf
    sup_certified: bool = True

    @property
    def indices(self):
        return np.arange(-self.J, self.n + 1)

    @property
    def w_values(self):
        return dict(zip(self.indices.tolist(), self.w.tolist()))

    def w_at(self, j):
        if j > self.n:
            return 0.0
        if j < -self.J:
            raise KeyError(j)
        return float(self.w[j + self.J])

    @property
    def upper(self):
        """Certified upper bound on the true norming value."""
        return (self.norming**self.p + self.tail_error_bound) ** (1.0 / self.p)


def norming(ws: WeightSequence, n: int, p: float, tail_budget: float = DEFAULT_TAIL_BUDGET) -> NormingEvaluation:
    """Evaluate ``W_n(p)`` on a window ``[-J, n]`` with a certified tail.

    The returned ``norming`` is a lower bound on the true value and
    ``norming**p + tail_error_bound`` an upper bound on its ``p``-th power;
    ``J`` grows until ``tail_error_bound <= tail_budget * norming**p``.
    Finite-support weights are enumerated exactly.
    """
    try:
        return _norming_cached(ws, int(n), float(p), float(tail_budget))
    except TypeError:  # unhashable custom evaluator
        return _norming(ws, n, p, tail_budget)


@lru_cache(maxsize=512)
def _norming_cached(ws, n, p, tail_budget):
    ev = _norming(ws, n, p, tail_budget)
    ev.w.setflags(write=False)
    return ev


def _norming(ws, n, p, tail_budget):
    n = int(n)
    if n < 1:
        raise ValidationError(f"n: need n >= 1, got {n}")
    if not 1.0 <= p <= 2.0:
        raise ValidationError(f"p: need 1 <= p <= 2, got {p}")
    if not tail_budget > 0:
        raise ValidationError(f"tail_budget: must be positive, got {tail_budget}")
    margin = _check_summable(ws, p)
    J = ws.initial_window(n)
    while True:
        w = weight_window(ws, n, J)
        aw = np.abs(w)
        head = float(np.sum(aw**p))
        lo, hi = ws.omitted_bounds(n, J, p)
        value_p = head + lo
        bound = float((hi - lo) + 4 * np.finfo(float).eps * lo)
        if bound <= tail_budget * value_p or (hi == 0.0):
            break
        if 2 * J + 1 > MAX_WINDOW:
            raise ResourceError(
                f"norming window J={2 * J + 1} exceeds {MAX_WINDOW} for {ws.family}", needed=2 * J + 1
            )
        J = 2 * J + 1
    sup_head = float(aw.max()) if aw.size else 0.0
    return NormingEvaluation(
        n=n,
        p=p,
        J=J,
        w=w,
        norming=value_p ** (1.0 / p),
        sup_abs_w=sup_head,
        tail_error_bound=bound,
        summability_margin=margin,
        sup_certified=ws.omitted_sup_bound(n, J) <= sup_head,
    )


def sup_w(ws: WeightSequence, n: int, tail_budget: float = DEFAULT_TAIL_BUDGET) -> float:
    """``sup_j |w_{nj}|``; the window widens until the omitted indices
    provably cannot exceed the enumerated maximum."""
    n = int(n)
    if n < 1:
        raise ValidationError(f"n: need n >= 1, got {n}")
    J = ws.initial_window(n)
    while True:
        top = float(np.max(np.abs(weight_window(ws, n, J))))
        omitted = ws.omitted_sup_bound(n, J)
        if omitted <= top or omitted <= tail_budget * top:
            return top
        if 2 * J + 1 > MAX_WINDOW:
            raise ResourceError(f"sup window exceeds {MAX_WINDOW} for {ws.family}", needed=2 * J + 1)
        J = 2 * J + 1


@dataclass
class BoundCheckReport:
    p: float
    n: list
    norming: list
    ratio: list
    envelope: list
    sup_ratio: float
    bounded: bool


def summable_bound_check(ws: WeightSequence, p: float, n_grid) -> BoundCheckReport:
    """Check ``W_n(p) = O(n**(1/p))`` for absolutely summable weights.

    Alongside the ratios ``W_n(p) / n**(1/p)`` this reports the explicit
    envelope ``((N-1) A**p / n + 1 + A**p)**(1/p)``, ``A = sum |psi_j|`` and
    ``N`` the first index with ``sum_{j >= N} |psi_j| <= 1``. The envelope is
    nonincreasing in ``n`` and every ratio must lie below it.
    """
    if not ws.abs_summable:
        raise ValidationError(
            f"{ws.family} weights are not absolutely summable; the O(n^(1/p)) bound does not apply"
        )
    A = ws.abs_tail_from(0)
    N = 0
    while ws.abs_tail_from(N) > 1.0:
        N += 1
    grid = sorted(int(n) for n in n_grid)
    values, ratios, env = [], [], []
    for n in grid:
        ev = norming(ws, n, p)
        values.append(ev.upper)
        ratios.append(ev.upper / n ** (1.0 / p))
        env.append((max(N - 1, 0) * A**p / n + 1.0 + A**p) ** (1.0 / p))
    bounded = all(r <= e * (1 + 1e-12) for r, e in zip(ratios, env))
    return BoundCheckReport(p, grid, values, ratios, env, max(ratios), bounded)
