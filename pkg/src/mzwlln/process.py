"""Linear-process paths, partial sums and the truncation split.

``X_k = sum_{i >= 0} psi_i eps_{k-i}`` is simulated on an innovation window
``[-J, n]``. Since every ``X_k`` then uses all innovations with index
``>= -J``, the path sum equals ``sum_{j=-J}^n w_{nj} eps_j`` exactly, which
is how :func:`simulate_partial_sum` computes it in ``O(n + J)``.

The window is the smallest one (found by doubling) whose certified omitted
weight mass ``(sum_{j < -J} |w_{nj}|^s)^(1/s)`` is at most ``budget`` times
the retained mass, with ``s = min(2, tail index)``. When that window is out
of reach (long memory) and the innovation law is closed under weighted sums
(Gaussian, symmetric stable), the omitted part is added as one exact draw
``kappa * eps`` with ``kappa^s = sum_{j < -J} |w_{nj}|^s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ResourceError, ValidationError
from .innovations import InnovationModel, weak_quasinorm
from .streams import InnovationStream
from .weights import WeightSequence, norming, weight_window

DEFAULT_BUDGET = 1e-4
MAX_PATH_WINDOW = 1 << 22
# window used with an aggregated remainder, as a multiple of n
REMAINDER_WINDOW_FACTOR = 4
_REMAINDER_TAG = 1
_DIRECT_CONVOLUTION_LIMIT = 5e7


@dataclass(frozen=True)
class WindowPlan:
    """How the infinite sum over ``j <= n`` is realised for one ``n``.

    ``relative_mass`` bounds ``(omitted s-mass / retained s-mass)^(1/s)``
    (before any remainder is added); ``remainder_scale`` is ``kappa`` or 0.
    """

    n: int
    J: int
    s: float
    relative_mass: float
    certified: bool
    remainder_scale: float = 0.0


def mass_exponent(model: InnovationModel) -> float:
    if model.aggregation_index is not None:
        return float(model.aggregation_index)
    return float(min(2.0, model.tail_index))


def _needed_window(J, hi, target, ws, n, s):
    # omitted mass decays like J^(1 - d s) for power laws; extrapolate from two doublings
    J2 = 2 * J + 1
    _, hi2 = ws.omitted_bounds(n, J2, s)
    if not (0 < hi2 < hi) or not math.isfinite(hi):
        return None
    rate = math.log(hi / hi2) / math.log(J2 / J)
    return int(min(J * (hi / target) ** (1.0 / rate), 1e300))


@lru_cache(maxsize=256)
def plan_window(ws: WeightSequence, model: InnovationModel, n: int, budget: float = DEFAULT_BUDGET,
                allow_remainder: bool = True) -> WindowPlan:
    """Choose the innovation window for ``S_n`` (see module docstring)."""
    n = int(n)
    if n < 1:
        raise ValidationError(f"n: need n >= 1, got {n}")
    if not budget > 0:
        raise ValidationError(f"budget: must be positive, got {budget}")
    s = mass_exponent(model)
    if ws.support is not None:
        return WindowPlan(n, ws.initial_window(n), s, 0.0, True)
    J = ws.initial_window(n)
    while True:
        head = float(np.sum(np.abs(weight_window(ws, n, J)) ** s))
        _, hi = ws.omitted_bounds(n, J, s)
        if hi <= budget**s * head:
            return WindowPlan(n, J, s, (hi / head) ** (1.0 / s) if head > 0 else 0.0, True)
        if 2 * J + 1 > MAX_PATH_WINDOW:
            break
        needed = _needed_window(J, hi, budget**s * head, ws, n, s)
        # stop early once the extrapolated window is far out of reach
        if J >= 1024 and (needed is None or needed > 64 * MAX_PATH_WINDOW):
            break
        J = 2 * J + 1
    if allow_remainder and model.aggregation_index is not None:
        return _remainder_plan(ws, n, s)
    needed = _needed_window(J, hi, budget**s * head, ws, n, s)
    what = f"about {needed:.3g}" if needed else "an unbounded window"
    raise ResourceError(
        f"innovation window for {ws.family} weights at n={n}: budget {budget:g} needs J = {what} "
        f"(limit {MAX_PATH_WINDOW}); {model.family} innovations admit no exact aggregated remainder",
        needed=needed,
    )


def _remainder_plan(ws, n, s):
    J = REMAINDER_WINDOW_FACTOR * n + 64
    head = float(np.sum(np.abs(weight_window(ws, n, J)) ** s))
    total = norming(ws, n, s, tail_budget=1e-9)
    omitted = max(total.norming**s - head, 0.0)
    return WindowPlan(n, J, s, (omitted / head) ** (1.0 / s), False, omitted ** (1.0 / s))


@dataclass
class PathRealization:
    n: int
    x_values: np.ndarray = field(repr=False)
    s_n: float
    innovation_window: tuple
    truncation_error_budget: float

    def save(self, path):
        """Two-column text file ``k, X_k``."""
        k = np.arange(1, self.n + 1)
        np.savetxt(Path(path), np.column_stack((k, self.x_values)), fmt=["%d", "%.17g"],
                   delimiter=",", header="k,X_k", comments="")


@dataclass(frozen=True)
class SplitSums:
    s_prime: float
    s_double: float
    thresholds: object
    remainder: float = 0.0

    @property
    def total(self):
        return self.s_prime + self.s_double


def _resolve(ws, model, n, budget, window, allow_remainder):
    if window is not None:
        window = int(window)
        if window < 0:
            raise ValidationError(f"window: must be >= 0, got {window}")
        return WindowPlan(int(n), window, mass_exponent(model), math.nan, False)
    return plan_window(ws, model, int(n), budget, allow_remainder)


def _remainder(model, stream, plan):
    if plan.remainder_scale == 0.0:
        return 0.0
    return plan.remainder_scale * float(stream.auxiliary(model, _REMAINDER_TAG)[0])


def simulate_path(ws: WeightSequence, model: InnovationModel, n: int, stream: InnovationStream,
                  budget: float = DEFAULT_BUDGET, window: int | None = None) -> PathRealization:
    """Simulate ``X_1..X_n`` with innovations ``eps_{-J}..eps_n`` from ``stream``.

    ``window`` fixes ``J`` and skips the budget search. Raises
    :class:`ResourceError` when no feasible window meets ``budget``.
    """
    plan = _resolve(ws, model, n, budget, window, allow_remainder=False)
    n, J = plan.n, plan.J
    eps = stream.innovations(model, -J, n)
    psi = ws.psi(np.arange(n + J + 1))
    # X_k = sum_{i=0}^{k+J} psi_i eps_{k-i}; eps[m] holds eps_{m-J}
    if float(n) * (n + J) <= _DIRECT_CONVOLUTION_LIMIT:
        full = np.convolve(psi, eps)
    else:
        full = signal.fftconvolve(psi, eps)
    x = full[J + 1 : J + n + 1]
    return PathRealization(n, x, float(np.sum(x)), (-J, n), plan.relative_mass)


def simulate_partial_sum(ws: WeightSequence, model: InnovationModel, n: int, stream: InnovationStream,
                         budget: float = DEFAULT_BUDGET, window: int | None = None,
                         plan: WindowPlan | None = None) -> float:
    """``S_n = sum_{j=-J}^n w_{nj} eps_j`` plus the aggregated remainder, if any."""
    if plan is None:
        plan = _resolve(ws, model, n, budget, window, allow_remainder=True)
    w = _weights(ws, plan.n, plan.J)
    eps = stream.innovations(model, -plan.J, plan.n)
    return float(np.sum(w * eps)) + _remainder(model, stream, plan)


@lru_cache(maxsize=64)
def _weights_cached(ws, n, J):
    w = weight_window(ws, n, J)
    w.setflags(write=False)
    return w


def _weights(ws, n, J):
    try:
        return _weights_cached(ws, n, J)
    except TypeError:  # unhashable custom evaluator
        return weight_window(ws, n, J)


# ---------------------------------------------------------------------------
# truncation split


@dataclass(frozen=True)
class Fixed:
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValidationError(f"r: need r > 0, got {self.r}")

    def thresholds(self, w, n, model):
        return np.full(w.shape, float(self.r))


@dataclass(frozen=True)
class UniformRule:
    """``r_{nj} = n^(1/p)`` for every ``j``."""

    p: float

    def thresholds(self, w, n, model):
        return np.full(w.shape, float(n) ** (1.0 / self.p))


@dataclass(frozen=True)
class ProofRule:
    """``r_{nj} = [tau delta^2 (2-p) / (8 K W)]^(1/(2-p)) * b_n / |w_{nj}|``.

    ``K = ||eps||_{p,inf}^p`` and ``W = sup_n W_n(p)/b_n``; ``b_n`` defaults
    to ``W_n(p)`` (then ``W = 1``). With a different norming, ``W`` should be
    the maximum of ``W_n(p)/b_n`` over the experiment grid.
    """

    tau: float
    delta: float
    p: float
    W: float = 1.0
    b_n: float | None = None

    def __post_init__(self):
        if not (0 < self.tau and 0 < self.delta and 1 < self.p < 2 and self.W > 0):
            raise ValidationError("ProofRule: need tau > 0, delta > 0, 1 < p < 2, W > 0")

    def scale(self, model):
        K = weak_quasinorm(model, self.p).power
        if not math.isfinite(K) or K <= 0:
            raise ValidationError(f"ProofRule: quasi-norm at p={self.p:g} must be finite and positive")
        return (self.tau * self.delta**2 * (2.0 - self.p) / (8.0 * K * self.W)) ** (1.0 / (2.0 - self.p))

    def thresholds(self, w, n, model, ws=None):
        b = self.b_n
        if b is None:
            b = norming(ws, n, self.p).norming
        aw = np.abs(w)
        with np.errstate(divide="ignore"):
            return np.where(aw > 0, self.scale(model) * b / aw, np.inf)


def truncated_sums(ws: WeightSequence, model: InnovationModel, n: int, threshold_rule,
                   stream: InnovationStream, budget: float = DEFAULT_BUDGET,
                   window: int | None = None, plan: WindowPlan | None = None) -> SplitSums:
    """Split ``S_n = S'_n + S''_n`` on the draws used by :func:`simulate_partial_sum`.

    ``eps' = eps 1{|eps| <= r} - mu'(r)`` and ``eps'' = eps 1{|eps| > r} - mu''(r)``
    with ``r = r_{nj}`` from ``threshold_rule``. Indices with ``w_{nj} = 0``
    contribute to neither sum. An aggregated remainder is assigned to ``S'_n``.
    """
    if not math.isfinite(model.mean):
        raise ValidationError(f"{model.family} innovations have no finite mean; the split is undefined")
    if plan is None:
        plan = _resolve(ws, model, n, budget, window, allow_remainder=True)
    w = _weights(ws, plan.n, plan.J)
    eps = stream.innovations(model, -plan.J, plan.n)
    if isinstance(threshold_rule, ProofRule):
        r = threshold_rule.thresholds(w, plan.n, model, ws)
    else:
        r = threshold_rule.thresholds(w, plan.n, model)
    live = (w != 0.0) & np.isfinite(r)
    big = np.abs(eps) > r
    if model.symmetric:
        mu1 = np.zeros(eps.shape)
    else:
        mu1 = np.zeros(eps.shape)
        if np.any(live):
            ur, inv = np.unique(r[live], return_inverse=True)
            mu1[live] = np.asarray(model.mu_prime(ur), dtype=float).reshape(-1)[inv.reshape(-1)]
    mu2 = model.mean - mu1
    e1 = np.where(big, 0.0, eps) - mu1
    e2 = np.where(big, eps, 0.0) - mu2
    # infinite thresholds keep the whole draw in the bounded part
    e1 = np.where(np.isfinite(r), e1, eps)
    e2 = np.where(np.isfinite(r), e2, 0.0)
    rem = _remainder(model, stream, plan)
    return SplitSums(float(np.sum(w * e1)) + rem, float(np.sum(w * e2)), threshold_rule, rem)
