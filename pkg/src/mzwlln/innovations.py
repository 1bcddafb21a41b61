"""Innovation distributions: sampling, tails, weak-L_p quasi-norms, truncation.

Every model maps a row of uniforms to one innovation (``from_uniforms``),
so draws are reproducible per index through :mod:`mzwlln.streams`. The
tail ``P(|eps| > x)`` is analytic for all families except the stable law,
which uses the series/integral hybrid in :mod:`mzwlln._stable`.

The truncation quantities at a threshold ``r`` are

    mu'  = E[eps 1{|eps| <= r}],      mu'' = E[eps 1{|eps| > r}],
    M''  = E[|eps| 1{|eps| > r}],     second' = E[eps^2 1{|eps| <= r}],

computed in closed form where possible and otherwise through

    E[|xi|^q 1{|xi| <= a}] = q int_0^a x^(q-1) P(|xi| > x) dx - a^q P(|xi| > a).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, optimize, special

from . import _stable
from .errors import NumericalPrecisionError, UnavailableError, ValidationError
from .streams import InnovationStream, uniforms_open

QUAD_TOL = 1e-9
GRID_POINTS = 400
GRID_RANGE = (1e-4, 1e8)


@dataclass(frozen=True)
class TruncationSplit:
    r: float
    mu_prime: float
    mu_double: float
    M_double: float
    second_moment_prime: float


class InnovationModel:
    """Base class. Subclasses are frozen dataclasses."""

    family = "abstract"
    n_uniforms = 1
    symmetric = True
    # stable index s: sum c_j eps_j has the law of (sum |c_j|^s)^(1/s) eps_0
    aggregation_index = None

    @property
    def tail_index(self):
        return math.inf

    @property
    def mean(self):
        return 0.0

    @property
    def centered(self):
        return self.mean == 0.0

    def from_uniforms(self, u):
        raise NotImplementedError

    def sample(self, rng=None, size=None):
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        u = uniforms_open(rng, shape + (self.n_uniforms,))
        out = self.from_uniforms(u.reshape(-1, self.n_uniforms)).reshape(shape)
        return float(out) if size is None else out

    def tail(self, x):
        raise NotImplementedError

    # closed forms; None means "use the numerical route"
    def weak_power_exact(self, p):
        return None

    def sup_weighted_tail_exact(self, p, a):
        return None

    def truncation_exact(self, r):
        return None

    def mu_prime(self, r):
        r = np.asarray(r, dtype=float)
        if self.symmetric:
            return np.zeros(r.shape)
        return np.vectorize(lambda v: truncate(self, v).mu_prime)(r)

    def second_moment_prime(self, r):
        r = np.asarray(r, dtype=float)
        return np.vectorize(lambda v: truncate(self, v).second_moment_prime)(r)

    def to_dict(self):
        raise ValidationError(f"{self.family} models are not serialisable")


def _vec(f):
    """Evaluate ``f`` on arrays, returning a float for scalar input."""

    def wrapper(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(f(self, x), dtype=float)
        return float(out) if out.ndim == 0 else out

    wrapper.__doc__ = f.__doc__
    return wrapper


@dataclass(frozen=True)
class SymmetricPareto(InnovationModel):
    """``P(|eps| > x) = min(1, x**-alpha)`` with a random sign."""

    alpha: float = 1.8
    family = "pareto"
    n_uniforms = 2

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValidationError(f"alpha: need alpha > 1 for a centred Pareto law, got {self.alpha}")

    @property
    def tail_index(self):
        return self.alpha

    def from_uniforms(self, u):
        mag = u[:, 0] ** (-1.0 / self.alpha)
        return np.where(u[:, 1] < 0.5, -mag, mag)

    @_vec
    def tail(self, x):
        with np.errstate(divide="ignore"):
            return np.minimum(1.0, np.abs(x) ** -self.alpha)

    def weak_power_exact(self, p):
        return 1.0 if p <= self.alpha else math.inf

    def sup_weighted_tail_exact(self, p, a):
        if p > self.alpha:
            return math.inf
        if p == self.alpha:
            return 1.0
        return 1.0 if a < 1.0 else a ** (p - self.alpha)

    def truncation_exact(self, r):
        a = self.alpha
        if r < 1.0:
            return TruncationSplit(r, 0.0, 0.0, a / (a - 1.0), 0.0)
        M = a / (a - 1.0) * r ** (1.0 - a)
        second = 2.0 * math.log(r) if a == 2.0 else a * (r ** (2.0 - a) - 1.0) / (2.0 - a)
        return TruncationSplit(r, 0.0, 0.0, M, second)

    def second_moment_prime(self, r):
        r = np.asarray(r, dtype=float)
        a = self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            if a == 2.0:
                val = 2.0 * np.log(r)
            else:
                val = a * (r ** (2.0 - a) - 1.0) / (2.0 - a)
        return np.where(r < 1.0, 0.0, val)

    def to_dict(self):
        return {"family": "pareto", "alpha": self.alpha}


@dataclass(frozen=True)
class StudentT(InnovationModel):
    nu: float = 3.0
    family = "student_t"
    n_uniforms = 2

    def __post_init__(self):
        if not self.nu > 1.0:
            raise ValidationError(f"nu: need nu > 1 for a finite mean, got {self.nu}")

    @property
    def tail_index(self):
        return self.nu

    def from_uniforms(self, u):
        # trigonometric form of Bailey's polar method, exact for any nu > 0
        nu = self.nu
        radius = np.sqrt(nu * np.expm1(-2.0 / nu * np.log(u[:, 0])))
        return radius * np.cos(2.0 * math.pi * u[:, 1])

    @_vec
    def tail(self, x):
        return 2.0 * special.stdtr(self.nu, -np.abs(x))

    def _density(self, x):
        nu = self.nu
        logc = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
        return np.exp(logc - (nu + 1) / 2 * np.log1p(np.asarray(x) ** 2 / nu))

    def second_moment_prime(self, r):
        r = np.asarray(r, dtype=float)
        nu = self.nu
        if nu > 2.0:
            # T^2/nu = B/(1-B) with B ~ Beta(1/2, nu/2)
            with np.errstate(over="ignore", divide="ignore"):
                b = 1.0 / (1.0 + nu / r**2)
            return nu / (nu - 2.0) * special.betainc(1.5, nu / 2.0 - 1.0, b)
        return super().second_moment_prime(r)

    def truncation_exact(self, r):
        nu = self.nu
        # int_r^inf x f(x) dx = (nu + r^2) f(r) / (nu - 1)
        M = 2.0 * (nu + r * r) * float(self._density(r)) / (nu - 1.0)
        if nu > 2.0:
            second = float(self.second_moment_prime(r))
        else:
            second, err = integrate.quad(lambda x: 2.0 * x * x * float(self._density(x)), 0.0, r,
                                         epsabs=1e-12, epsrel=1e-11, limit=200)
            _check_quad(err, second, "Student-t truncated second moment")
        return TruncationSplit(r, 0.0, 0.0, M, second)

    def to_dict(self):
        return {"family": "student_t", "nu": self.nu}


@dataclass(frozen=True)
class SymmetricAlphaStable(InnovationModel):
    """Characteristic function ``exp(-|t|**alpha)``, ``1 < alpha < 2``."""

    alpha: float = 1.8
    family = "stable"
    n_uniforms = 2

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValidationError(f"alpha: need 1 < alpha < 2, got {self.alpha}")

    @property
    def aggregation_index(self):
        return self.alpha

    @property
    def tail_index(self):
        return self.alpha

    def from_uniforms(self, u):
        # Chambers-Mallows-Stuck, beta = 0
        a = self.alpha
        v = math.pi * (u[:, 0] - 0.5)
        w = -np.log(u[:, 1])
        return np.sin(a * v) / np.cos(v) ** (1.0 / a) * (np.cos((1.0 - a) * v) / w) ** ((1.0 - a) / a)

    @_vec
    def tail(self, x):
        return _stable.stable_tail(self.alpha, x)

    def weak_power_exact(self, p):
        return math.inf if p > self.alpha else None

    def truncation_exact(self, r):
        a = self.alpha
        tr = float(self.tail(r))
        upper, e1 = _stable.tail_moment(a, 1.0, r)
        M = r * tr + upper
        inner, e2 = _stable.tail_moment(a, 2.0, 0.0, r)
        second = 2.0 * inner - r * r * tr
        _check_quad(e1, M, "stable truncated first moment")
        _check_quad(2 * e2, second, "stable truncated second moment")
        return TruncationSplit(r, 0.0, 0.0, M, second)

    def to_dict(self):
        return {"family": "stable", "alpha": self.alpha}


@dataclass(frozen=True)
class HalfCauchyRemark(InnovationModel):
    """Density ``(2/pi) / (1 + x**2)`` on ``x >= 0``; not centred (infinite mean)."""

    family = "half_cauchy"
    symmetric = False

    @property
    def tail_index(self):
        return 1.0

    @property
    def mean(self):
        return math.inf

    @property
    def centered(self):
        return False

    def from_uniforms(self, u):
        return np.tan(0.5 * math.pi * u[:, 0])

    @_vec
    def tail(self, x):
        with np.errstate(divide="ignore"):
            return np.where(x > 0, 2.0 / math.pi * np.arctan(1.0 / np.abs(x)), 1.0)

    def weak_power_exact(self, p):
        if p > 1.0:
            return math.inf
        if p == 1.0:
            # x * (2/pi) arctan(1/x) increases to 2/pi
            return 2.0 / math.pi
        return None

    def mu_prime(self, r):
        return np.log1p(np.asarray(r, dtype=float) ** 2) / math.pi

    def second_moment_prime(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 / math.pi * (r - np.arctan(r))

    def truncation_exact(self, r):
        return TruncationSplit(
            r, float(self.mu_prime(r)), math.inf, math.inf, float(self.second_moment_prime(r))
        )

    def to_dict(self):
        return {"family": "half_cauchy"}


@dataclass(frozen=True)
class GaussianControl(InnovationModel):
    sigma: float = 1.0
    family = "gaussian"
    aggregation_index = 2.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"sigma: need sigma > 0, got {self.sigma}")

    def from_uniforms(self, u):
        return self.sigma * special.ndtri(u[:, 0])

    @_vec
    def tail(self, x):
        return special.erfc(np.abs(x) / (self.sigma * math.sqrt(2.0)))

    def second_moment_prime(self, r):
        z = np.asarray(r, dtype=float) / self.sigma
        return self.sigma**2 * (special.erf(z / math.sqrt(2.0)) - 2.0 * z * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi))

    def truncation_exact(self, r):
        s = self.sigma
        z = r / s
        M = 2.0 * s * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        return TruncationSplit(r, 0.0, 0.0, M, float(self.second_moment_prime(r)))

    def to_dict(self):
        return {"family": "gaussian", "sigma": self.sigma}


@dataclass(frozen=True)
class CustomEmpirical(InnovationModel):
    """Resampling from a table of observations, centred by default."""

    values: tuple = ()
    center: bool = True
    source: str = ""
    family = "empirical"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2 or not np.all(np.isfinite(vals)):
            raise ValidationError("values: need at least two finite observations")
        object.__setattr__(self, "values", tuple(vals.tolist()))

    @cached_property
    def _data(self):
        vals = np.asarray(self.values)
        shift = -vals.mean() if self.center else 0.0
        data = vals + shift
        order = np.argsort(np.abs(data), kind="stable")
        sorted_data = data[order]
        return data, shift, np.abs(sorted_data), np.concatenate(([0.0], np.cumsum(sorted_data)))

    @property
    def symmetric(self):
        return False

    @property
    def centering_shift(self):
        return self._data[1]

    @property
    def mean(self):
        return 0.0 if self.center else float(np.mean(self.values))

    @property
    def centered(self):
        return self.center

    def from_uniforms(self, u):
        data = self._data[0]
        idx = np.minimum((u[:, 0] * data.size).astype(np.int64), data.size - 1)
        return data[idx]

    @_vec
    def tail(self, x):
        absd = self._data[2]
        return 1.0 - np.searchsorted(absd, np.abs(x), side="right") / absd.size

    def weak_power_exact(self, p):
        absd = self._data[2]
        N = absd.size
        # sup is approached just below each order statistic
        return float(np.max(absd**p * (N - np.arange(N)) / N))

    def mu_prime(self, r):
        absd, csum = self._data[2], self._data[3]
        k = np.searchsorted(absd, np.asarray(r, dtype=float), side="right")
        return csum[k] / absd.size

    def truncation_exact(self, r):
        raise UnavailableError(
            "empirical models provide sampling and empirical tails only; analytic truncated moments are unavailable"
        )

    def to_dict(self):
        if not self.source:
            raise ValidationError("empirical model without a source file is not serialisable")
        return {"family": "empirical", "path": self.source, "center": self.center}


@dataclass(frozen=True)
class Symmetrized(InnovationModel):
    """Law of ``eps - eps~`` for an independent copy ``eps~``."""

    base: InnovationModel = None
    family = "symmetrized"
    diagnostic_draws = 200_000

    @property
    def n_uniforms(self):
        return 2 * self.base.n_uniforms

    @property
    def tail_index(self):
        return self.base.tail_index

    def from_uniforms(self, u):
        k = self.base.n_uniforms
        return self.base.from_uniforms(u[:, :k]) - self.base.from_uniforms(u[:, k:])

    @cached_property
    def _sorted_abs(self):
        draws = self.sample(np.random.default_rng(0), self.diagnostic_draws)
        return np.sort(np.abs(draws))

    @_vec
    def tail(self, x):
        """Empirical tail from a fixed diagnostic sample."""
        s = self._sorted_abs
        return 1.0 - np.searchsorted(s, np.abs(x), side="right") / s.size

    def tail_bound(self, x):
        """``P(|eps - eps~| > x) <= 2 P(|eps| > x/2)``."""
        return np.minimum(1.0, 2.0 * np.asarray(self.base.tail(np.asarray(x) / 2.0)))

    def truncation_exact(self, r):
        raise UnavailableError("symmetrized models are diagnostic only")


# ---------------------------------------------------------------------------
# construction


def make_model(spec) -> InnovationModel:
    """Build a model from a descriptor such as ``{"family": "pareto", "alpha": 1.8}``."""
    if isinstance(spec, InnovationModel):
        return spec
    if isinstance(spec, str):
        spec = {"family": spec}
    spec = dict(spec)
    family = str(spec.pop("family", "")).lower().replace("-", "_")
    try:
        if family in ("pareto", "symmetric_pareto"):
            model = SymmetricPareto(float(spec.pop("alpha")))
        elif family in ("student_t", "t"):
            model = StudentT(float(spec.pop("nu")))
        elif family in ("stable", "symmetric_alpha_stable"):
            model = SymmetricAlphaStable(float(spec.pop("alpha")))
        elif family in ("half_cauchy", "half_cauchy_remark"):
            model = HalfCauchyRemark()
        elif family in ("gaussian", "normal", "gaussian_control"):
            model = GaussianControl(float(spec.pop("sigma", 1.0)))
        elif family == "empirical":
            model = load_empirical(spec.pop("path"), bool(spec.pop("center", True)))
        else:
            raise ValidationError(f"family: unknown innovation family {family!r}")
    except KeyError as exc:
        raise ValidationError(f"{exc.args[0]}: missing parameter for {family} innovations") from None
    if spec:
        raise ValidationError(f"{sorted(spec)[0]}: unexpected key for {family} innovations")
    return model


def load_empirical(path, center=True) -> CustomEmpirical:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"path: sample file {path} does not exist")
    values = np.loadtxt(path, ndmin=1)
    if values.ndim != 1:
        raise ValidationError(f"path: {path} must contain a single column")
    return CustomEmpirical(tuple(values.tolist()), center, str(path))


# ---------------------------------------------------------------------------
# operations


def sample(model: InnovationModel, stream: InnovationStream, index: int = 0, size: int | None = None):
    """Draw ``eps_index`` (or ``size`` consecutive draws) from ``stream``."""
    if size is None:
        return float(stream.innovations(model, index, index)[0])
    return stream.innovations(model, index, index + size - 1)


def tail(model: InnovationModel, x):
    """``P(|eps| > x)``."""
    return model.tail(x)


def _check_quad(err, value, what):
    if not err <= QUAD_TOL * max(1.0, abs(value)):
        raise NumericalPrecisionError(f"{what}: quadrature error {err:.2e} exceeds {QUAD_TOL:g}")


def _golden_max(f, lo, mid, hi):
    res = optimize.minimize_scalar(
        lambda u: -f(math.exp(u)), bracket=(math.log(lo), math.log(mid), math.log(hi)),
        method="golden", tol=1e-12,
    )
    return -res.fun, math.exp(res.x)


def sup_weighted_tail(model, p, lo, hi, points=GRID_POINTS):
    """``(sup, argmax, at_edge)`` of ``x**p P(|eps| > x)`` over ``[lo, hi]``.

    Log-spaced grid, then golden-section refinement around the best point.
    """
    xs = np.geomspace(lo, hi, points)
    vals = xs**p * np.asarray(model.tail(xs))
    i = int(np.argmax(vals))
    if 0 < i < points - 1 and vals[i] > vals[i - 1] and vals[i] > vals[i + 1]:
        best, where = _golden_max(lambda x: x**p * float(model.tail(x)), xs[i - 1], xs[i], xs[i + 1])
        if best >= vals[i]:
            return float(best), float(where), False
    return float(vals[i]), float(xs[i]), i in (0, points - 1)


@dataclass(frozen=True)
class QuasiNorm:
    """Weak-L_p quasi-norm ``(sup_x x^p P(|eps| > x))^(1/p)``."""

    p: float
    power: float  # sup_x x^p P(|eps| > x)
    argmax: float | None
    vanishing: bool  # x^p P(|eps| > x) -> 0
    method: str

    @property
    def value(self):
        return self.power ** (1.0 / self.p)

    @property
    def finite(self):
        return math.isfinite(self.power)


def weak_quasinorm(model: InnovationModel, p: float, points: int = GRID_POINTS) -> QuasiNorm:
    if not p > 0:
        raise ValidationError(f"p: need p > 0, got {p}")
    vanishing = p < model.tail_index
    exact = model.weak_power_exact(p)
    if exact is not None:
        return QuasiNorm(p, exact, None, vanishing and math.isfinite(exact), "analytic")
    if p > model.tail_index:
        return QuasiNorm(p, math.inf, None, False, "divergent")
    try:
        power, where = _grid_quasinorm(model, float(p), int(points))
    except TypeError:  # unhashable model
        power, where, _ = sup_weighted_tail(model, p, *GRID_RANGE, points=points)
    return QuasiNorm(p, power, where, vanishing, "grid+golden")


@lru_cache(maxsize=256)
def _grid_quasinorm(model, p, points):
    power, where, _ = sup_weighted_tail(model, p, *GRID_RANGE, points=points)
    return power, where


def is_usable(model: InnovationModel, p: float) -> bool:
    """``x^p P(|eps| > x) -> 0`` and ``E eps = 0``, decided from parameters."""
    return p < model.tail_index and model.centered


def truncate(model: InnovationModel, r: float) -> TruncationSplit:
    if not r > 0:
        raise ValidationError(f"r: need r > 0, got {r}")
    split = model.truncation_exact(float(r))
    if split is not None:
        return split
    # generic route through the truncated-moment identity
    tr = float(model.tail(r))
    upper, e1 = integrate.quad(lambda x: float(model.tail(x)), r, math.inf, epsabs=1e-12, limit=400)
    _check_quad(e1, upper, "truncated first moment")
    inner, e2 = integrate.quad(lambda x: x * float(model.tail(x)), 0.0, r, epsabs=1e-12, limit=400)
    _check_quad(e2, inner, "truncated second moment")
    return TruncationSplit(r, 0.0, 0.0, r * tr + upper, 2.0 * inner - r * r * tr)


def truncated_moment(model: InnovationModel, q: float, a: float) -> float:
    """``E[|eps|^q 1{|eps| <= a}] = q int_0^a x^(q-1) P(|eps| > x) dx - a^q P(|eps| > a)``."""
    if not (q > 0 and a > 0):
        raise ValidationError("need q > 0 and a > 0")
    val, err = integrate.quad(lambda x: x ** (q - 1.0) * float(model.tail(x)), 0.0, a,
                              epsabs=1e-13, epsrel=1e-11, limit=400)
    _check_quad(err, val, "truncated moment")
    return q * val - a**q * float(model.tail(a))


def truncated_tail_quasinorm_bound(model: InnovationModel, r: float, p: float) -> float:
    """Upper bound on ``||eps''||_{p,inf}^p`` for truncation at ``r``.

    ``max{(M'')^p, (M''+r)^p P(|eps| > r), sup_{x > M''+r} x^p P(|eps| > x)}``.
    """
    if not p > 1:
        raise ValidationError(f"p: need p > 1, got {p}")
    split = truncate(model, r)
    M = split.M_double
    a = M + r
    first = M**p
    second = a**p * float(model.tail(r))
    third = model.sup_weighted_tail_exact(p, a)
    if third is None:
        if p >= model.tail_index:
            third = math.inf if p > model.tail_index else weak_quasinorm(model, p).power
        else:
            third, _, _ = sup_weighted_tail(model, p, a, a * 1e8)
    return max(first, second, third)


# ---------------------------------------------------------------------------
# convergence of the defining series


@dataclass
class SeriesDiagnostics:
    name: str
    checkpoints: list  # (N, partial sum over j < N)
    bound: float | None
    condensed_slope: float | None
    convergent: bool
    within_bound: bool | None = None


@dataclass
class ThreeSeriesReport:
    p: float
    condition: str | None
    condition_holds: bool | None
    quasinorm_power: float
    series: dict = field(default_factory=dict)

    @property
    def all_convergent(self):
        return all(s.convergent for s in self.series.values())


def _classify_condensed(c):
    """Decide convergence of ``sum_k c_k`` (condensed terms ``2^k a_{2^k}``).

    Decay of the tail half faster than ``k^-1.25`` on a log-log fit counts as
    convergent (geometric decay gives a steep slope); ``k^-1``-type decay,
    as for ``a_j ~ 1/(j log j)``, counts as divergent.
    """
    c = np.abs(np.asarray(c, dtype=float))
    half = c[len(c) // 2 :]
    if not np.all(np.isfinite(half)):
        return False, None
    if np.all(half == 0.0):
        return True, None
    if np.any(half == 0.0):
        return True, None
    k = np.arange(len(c))[len(c) // 2 :].astype(float)
    slope = float(np.polyfit(np.log(k), np.log(half), 1)[0])
    return bool(slope < -1.25), slope


def _series_terms(model, psi):
    psi = np.asarray(psi, dtype=float)
    live = psi != 0.0
    with np.errstate(over="ignore"):
        r = 1.0 / np.abs(psi[live])
    out = [np.zeros(psi.shape) for _ in range(3)]
    mu = np.asarray(model.mu_prime(r), dtype=float)
    out[0][live] = np.asarray(model.tail(r), dtype=float)
    out[1][live] = psi[live] * mu
    out[2][live] = psi[live] ** 2 * (np.asarray(model.second_moment_prime(r), dtype=float) - mu**2)
    return out


def three_series_check(model: InnovationModel, ws, p: float, n_terms: int | None = None,
                       condensed_max: int = 60) -> ThreeSeriesReport:
    """Check the three series behind almost-sure convergence of ``sum psi_j eps_{k-j}``.

    With ``r_j = 1/|psi_j|``:
      first:  sum P(|eps| > r_j)
      second: sum psi_j E[eps 1{|eps| <= r_j}]
      third:  sum psi_j^2 Var[eps 1{|eps| <= r_j}]

    Partial sums are exact up to ``n_terms``; convergence is judged from the
    condensed terms ``2^k a_{2^k}`` and cross-checked against the explicit
    bounds in terms of ``||eps||_{p,inf}^p sum |psi_j|^p``.
    """
    qn = weak_quasinorm(model, p)
    if not qn.finite:
        raise ValidationError(f"model has infinite weak-L_{p:g} quasi-norm")
    K = qn.power
    if p == 1.0:
        condition = "ii"
    elif p == 2.0:
        condition = "iii"
    else:
        condition = "i"
    q = min(p, 2.0)
    psum = ws.p_tail_from(0, q)

    finite = ws.support is not None
    if n_terms is None:
        fast = model.family in ("pareto", "gaussian", "half_cauchy", "empirical") or (
            model.family == "student_t" and model.nu > 2
        )
        n_terms = (1 << 16) if fast else (1 << 7)
    N = ws.support + 1 if finite else int(n_terms)
    j = np.arange(N)
    psi = ws.psi(j)
    psi = psi[psi != 0.0]
    terms = _series_terms(model, psi)
    if finite:
        condensed = [np.zeros(1)] * 3
    else:
        jk = 2.0 ** np.arange(condensed_max + 1)
        psik = ws.psi(jk.astype(np.int64)) if condensed_max < 62 else None
        ck = _series_terms(model, psik)
        condensed = [jk * c for c in ck]

    # log-type condition sums for p = 1 or 2
    if condition in ("ii", "iii"):
        e = 1.0 if condition == "ii" else 2.0
        absk = np.abs(ws.psi(2 ** np.arange(condensed_max + 1))) if not finite else None
        if finite:
            cond_ok = True
        else:
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                logc = 2.0 ** np.arange(condensed_max + 1) * absk**e * np.log(1.0 / absk)
            logc = np.where(absk == 0.0, 0.0, logc)
            cond_ok, _ = _classify_condensed(logc)
    else:
        cond_ok = math.isfinite(psum)

    if math.isfinite(psum):
        bounds = [K * psum]
        bounds.append(K * (1.0 + 1.0 / (p - 1.0)) * psum if p > 1.0 and model.centered else None)
        bounds.append(2.0 * K / (2.0 - p) * psum if p < 2.0 else None)
    else:
        bounds = [None, None, None]

    report = ThreeSeriesReport(p, condition, bool(cond_ok), K)
    checkpoints = sorted({min(2**k, psi.size) for k in range(0, int(math.log2(max(psi.size, 1))) + 1)} | {psi.size})
    for name, t, c, b in zip(("first", "second", "third"), terms, condensed, bounds):
        partial = np.cumsum(t)
        abs_partial = np.cumsum(np.abs(t))
        cps = [(int(m), float(partial[m - 1])) for m in checkpoints if m > 0]
        convergent, slope = (True, None) if finite else _classify_condensed(c)
        within = None if b is None else bool(abs_partial[-1] <= b * (1 + 1e-12)) if abs_partial.size else True
        report.series[name] = SeriesDiagnostics(name, cps, b, slope, convergent, within)
    return report


def symmetrize(model: InnovationModel) -> InnovationModel:
    """Model of ``eps - eps~``; Gaussian stays in closed form."""
    if isinstance(model, GaussianControl):
        return GaussianControl(model.sigma * math.sqrt(2.0))
    return Symmetrized(model)
