"""Monte Carlo harness for exceedance probabilities ``P(|S_n / b_n| > delta)``.

Replication ``i`` at grid point ``n`` always uses the innovation stream
keyed ``(n, i)`` under the root seed, so results do not depend on how the
replications are spread over worker threads.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .errors import ValidationError
from .innovations import InnovationModel, is_usable, make_model
from .process import (
    DEFAULT_BUDGET,
    Fixed,
    ProofRule,
    UniformRule,
    plan_window,
    simulate_partial_sum,
    truncated_sums,
)
from .asymptotics import rate_condition_check
from .streams import InnovationStream
from .weights import FiniteSupport, PowerLaw, WeightSequence, make_weights, norming

DEFAULT_GRID = (100, 316, 1000, 3162, 10000)
DEFAULT_REPLICATIONS = 2000
DEFAULT_DELTA = 0.2
Z95 = float(stats.norm.ppf(0.975))
CHUNK = 64
NORMINGS = ("WnP", "NPowInvP", "NPowCustom")
CSV_HEADER = ("n", "b_n", "p_hat", "ci_lo", "ci_hi", "mean_abs")


class HypothesisWarning(UserWarning):
    """A run whose configuration falls outside the assumptions it illustrates."""


# ---------------------------------------------------------------------------
# configuration


def _rule_to_dict(rule):
    if rule is None:
        return None
    if isinstance(rule, Fixed):
        return {"rule": "fixed", "r": rule.r}
    if isinstance(rule, UniformRule):
        return {"rule": "uniform", "p": rule.p}
    return {"rule": "proof", "tau": rule.tau, "delta": rule.delta, "p": rule.p, "W": rule.W}


def make_rule(spec, p):
    if spec is None or isinstance(spec, (Fixed, UniformRule, ProofRule)):
        return spec
    spec = dict(spec)
    kind = spec.pop("rule", None)
    try:
        if kind == "fixed":
            rule = Fixed(float(spec.pop("r")))
        elif kind == "uniform":
            rule = UniformRule(float(spec.pop("p", p)))
        elif kind == "proof":
            rule = ProofRule(float(spec.pop("tau")), float(spec.pop("delta")), float(spec.pop("p", p)),
                             float(spec.pop("W", 1.0)))
        else:
            raise ValidationError(f"split.rule: unknown threshold rule {kind!r}")
    except KeyError as exc:
        raise ValidationError(f"split.{exc.args[0]}: missing parameter") from None
    if spec:
        raise ValidationError(f"split.{sorted(spec)[0]}: unexpected key")
    return rule


@dataclass(frozen=True)
class ExperimentConfig:
    ws: WeightSequence
    model: InnovationModel
    p: float = 1.5
    norming_choice: str = "WnP"
    norming_exponent: float | None = None
    delta: float = DEFAULT_DELTA
    n_grid: tuple = DEFAULT_GRID
    replications: int = DEFAULT_REPLICATIONS
    root_seed: int = 0
    tail_budget: float = DEFAULT_BUDGET
    split_rule: object = None
    name: str = ""

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValidationError(f"n_grid: must be strictly increasing positive integers, got {list(grid)}")
        if int(self.replications) < 100:
            raise ValidationError(f"replications: need at least 100, got {self.replications}")
        if not self.delta > 0:
            raise ValidationError(f"delta: must be positive, got {self.delta}")
        if not 1.0 < self.p < 2.0:
            raise ValidationError(f"p: need 1 < p < 2, got {self.p}")
        if self.norming_choice not in NORMINGS:
            raise ValidationError(f"norming: expected one of {NORMINGS}, got {self.norming_choice!r}")
        if self.norming_choice == "NPowCustom" and not (self.norming_exponent and self.norming_exponent > 0):
            raise ValidationError("norming_exponent: a positive exponent is required for NPowCustom")
        if not 0 <= int(self.root_seed) < 2**64:
            raise ValidationError(f"seed: must be an unsigned 64-bit integer, got {self.root_seed}")
        if not self.tail_budget > 0:
            raise ValidationError(f"tail_budget: must be positive, got {self.tail_budget}")

    def b_n(self, n):
        if self.norming_choice == "WnP":
            return norming(self.ws, n, self.p).norming
        if self.norming_choice == "NPowInvP":
            return float(n) ** (1.0 / self.p)
        return float(n) ** self.norming_exponent

    def with_(self, **changes):
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ExperimentConfig(**d)

    def to_dict(self):
        out = {
            "weights": self.ws.to_dict(),
            "innovations": self.model.to_dict(),
            "p": self.p,
            "norming": self.norming_choice,
            "delta": self.delta,
            "n_grid": list(self.n_grid),
            "replications": int(self.replications),
            "seed": int(self.root_seed),
            "tail_budget": self.tail_budget,
        }
        if self.norming_exponent is not None:
            out["norming_exponent"] = self.norming_exponent
        if self.split_rule is not None:
            out["split"] = _rule_to_dict(self.split_rule)
        if self.name:
            out["name"] = self.name
        return out

    @property
    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d, name=""):
        d = dict(d)
        for key in ("weights", "innovations"):
            if key not in d:
                raise ValidationError(f"{key}: required key missing")
        kwargs = {"ws": make_weights(d.pop("weights")), "model": make_model(d.pop("innovations"))}
        mapping = {
            "p": ("p", float),
            "norming": ("norming_choice", str),
            "norming_exponent": ("norming_exponent", float),
            "delta": ("delta", float),
            "n_grid": ("n_grid", lambda v: tuple(int(round(float(x))) for x in v)),
            "replications": ("replications", int),
            "seed": ("root_seed", int),
            "tail_budget": ("tail_budget", float),
            "name": ("name", str),
        }
        split = d.pop("split", None)
        for key, value in d.items():
            if key not in mapping:
                raise ValidationError(f"{key}: unknown configuration key")
            attr, conv = mapping[key]
            try:
                kwargs[attr] = conv(value)
            except (TypeError, ValueError):
                raise ValidationError(f"{key}: cannot interpret {value!r}") from None
        kwargs.setdefault("name", name)
        kwargs["split_rule"] = make_rule(split, kwargs.get("p", 1.5))
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# results


def wilson_interval(k, R, z=Z95):
    """Wilson score interval for ``k`` successes in ``R`` trials."""
    if R <= 0:
        raise ValidationError("R: need at least one trial")
    ph = k / R
    denom = 1.0 + z * z / R
    centre = (ph + z * z / (2 * R)) / denom
    half = z * math.sqrt(ph * (1 - ph) / R + z * z / (4 * R * R)) / denom
    # rounding can push an endpoint past ph when k is 0 or R
    return min(ph, max(0.0, centre - half)), max(ph, min(1.0, centre + half))


@dataclass(frozen=True)
class Row:
    n: int
    b_n: float
    p_hat: float
    ci_lo: float
    ci_hi: float
    mean_abs: float

    def as_tuple(self):
        return (self.n, self.b_n, self.p_hat, self.ci_lo, self.ci_hi, self.mean_abs)


@dataclass
class ExperimentResult:
    kind: str
    rows: list
    config: dict
    config_hash: str
    seed: int
    wall_time: float = 0.0
    warnings: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def p_hat(self):
        return np.array([r.p_hat for r in self.rows])

    def row(self, n):
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)

    def metadata(self):
        """Everything except timing, so sidecars are reproducible byte for byte."""
        return {
            "kind": self.kind,
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "warnings": self.warnings,
            "flags": self.flags,
            "extra": self.extra,
            "versions": versions(),
        }


def versions():
    import scipy

    return {"mzwlln": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def format_float(x):
    """Shortest round-trip text of ``x`` rounded to 15 significant digits."""
    return repr(float(f"{float(x):.15g}"))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format_float(x)


def write_csv(rows, path, header=CSV_HEADER):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_fmt(v) for v in (r.as_tuple() if hasattr(r, "as_tuple") else r)])


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


# ---------------------------------------------------------------------------
# replication engine


def _run_chunks(fn, R, threads):
    """Evaluate ``fn(i)`` for ``i < R``; the order of evaluation is irrelevant."""
    out = np.empty(R)

    def work(lo):
        for i in range(lo, min(lo + CHUNK, R)):
            out[i] = fn(i)

    starts = range(0, R, CHUNK)
    threads = max(1, int(threads))
    if threads == 1:
        for lo in starts:
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    return out


def replicate_sums(cfg: ExperimentConfig, n: int, threads: int = 1):
    """``S_n`` for every replication, plus ``(S'_n, S''_n)`` when a split rule is set."""
    root = InnovationStream(cfg.root_seed)
    plan = plan_window(cfg.ws, cfg.model, int(n), cfg.tail_budget)
    R = int(cfg.replications)
    if cfg.split_rule is None:
        return _run_chunks(
            lambda i: simulate_partial_sum(cfg.ws, cfg.model, n, root.child(n, i), plan=plan), R, threads
        ), None
    rule = cfg.split_rule
    if isinstance(rule, ProofRule) and rule.b_n is None and cfg.norming_choice != "WnP":
        rule = ProofRule(rule.tau, rule.delta, rule.p, rule.W, cfg.b_n(n))
    parts = np.empty((R, 2))

    def one(i):
        sp = truncated_sums(cfg.ws, cfg.model, n, rule, root.child(n, i), plan=plan)
        parts[i] = (sp.s_prime, sp.s_double)
        return sp.total

    return _run_chunks(one, R, threads), parts


def _check_usable(cfg):
    if not is_usable(cfg.model, cfg.p):
        raise ValidationError(
            f"{cfg.model.family} innovations are not admissible at p={cfg.p:g}: the law must be centred "
            f"and x^p P(|eps| > x) -> 0, i.e. tail index {cfg.model.tail_index:g} > p"
        )


def _bounded_norming(ws):
    # finite support with sum psi_j = 0: w_nj = 0 away from the ends, so W_n(p) stays bounded
    return isinstance(ws, FiniteSupport) and abs(sum(ws.coefficients)) <= 1e-12 * max(
        1.0, sum(abs(c) for c in ws.coefficients)
    )


def _exceedance(cfg, threads, kind, warn_list, flags=None):
    t0 = time.perf_counter()
    rows = []
    split_means = {}
    for n in cfg.n_grid:
        b = cfg.b_n(n)
        sums, parts = replicate_sums(cfg, n, threads)
        ratio = np.abs(sums) / b
        k = int(np.count_nonzero(ratio > cfg.delta))
        R = ratio.size
        lo, hi = wilson_interval(k, R)
        rows.append(Row(int(n), float(b), k / R, lo, hi, float(np.mean(ratio))))
        if parts is not None:
            split_means[int(n)] = {
                "mean_abs_s_prime": float(np.mean(np.abs(parts[:, 0]) / b)),
                "mean_abs_s_double": float(np.mean(np.abs(parts[:, 1]) / b)),
                "p_hat_s_prime_half_delta": float(np.mean(np.abs(parts[:, 0]) / b > cfg.delta / 2)),
            }
    result = ExperimentResult(
        kind, rows, cfg.to_dict(), cfg.config_hash, int(cfg.root_seed),
        wall_time=time.perf_counter() - t0, warnings=list(warn_list), flags=dict(flags or {}),
    )
    if split_means:
        result.extra["split"] = split_means
    windows = {int(n): plan_window(cfg.ws, cfg.model, int(n), cfg.tail_budget) for n in cfg.n_grid}
    result.extra["window"] = {
        n: {"J": w.J, "relative_mass": w.relative_mass, "aggregated_remainder": w.remainder_scale}
        for n, w in windows.items()
    }
    return result


def wlln_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Exceedance frequencies of ``|S_n / b_n| > delta`` over the grid."""
    _check_usable(cfg)
    notes = []
    if cfg.norming_choice == "WnP" and _bounded_norming(cfg.ws):
        msg = "W_n(p) stays bounded for these weights (their sum is zero); exceedances need not decay"
        warnings.warn(msg, HypothesisWarning, stacklevel=2)
        notes.append(msg)
    return _exceedance(cfg, threads, "wlln", notes)


def counterexample_threshold(d):
    """Smallest ``p`` for which ``S_n / n^(1/p)`` fails to vanish under power-law weights."""
    return 1.0 / (1.5 - d)


def check_counterexample(cfg: ExperimentConfig):
    if not isinstance(cfg.ws, PowerLaw) or not cfg.ws.d < 1.0:
        raise ValidationError("weights: the counterexample needs power_law weights with d < 1")
    if cfg.model.tail_index <= 2.0:
        raise ValidationError(
            f"innovations: the counterexample needs finite variance, {cfg.model.family} has tail index "
            f"{cfg.model.tail_index:g}"
        )
    if not cfg.model.centered:
        raise ValidationError("innovations: the counterexample needs a centred law")
    thr = counterexample_threshold(cfg.ws.d)
    if cfg.p < thr - 1e-12:
        raise ValidationError(
            f"p: {cfg.p:g} is below 1/(3/2 - d) = {thr:.6g}, outside the non-convergence regime"
        )


def counterexample_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run with ``b_n = n^(1/p)`` (or the configured norming for contrast runs)."""
    check_counterexample(cfg)
    result = _exceedance(cfg, threads, "counterexample", [])
    ph = result.p_hat
    top = ph[len(ph) // 2 :]
    result.flags["non_vanishing"] = bool(ph[-1] > 0.05 and ph[-1] > 0.5 * ph[0] and top.min() > 0.05)
    return result


# ---------------------------------------------------------------------------
# rate series


@dataclass
class RateSeries:
    grid: list  # rows (n, p_hat, ci_lo, ci_hi)
    partial_sums: list  # rows (n, T_n)
    decade_increments: list  # rows (decade start, decade end, increment)
    decaying: bool
    interpolated: bool
    hypothesis_unverified: list
    config: dict
    config_hash: str
    seed: int
    wall_time: float = 0.0

    def metadata(self):
        return {
            "kind": "rate",
            "config": self.config,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "decaying": self.decaying,
            "interpolated": self.interpolated,
            "hypothesis_unverified": self.hypothesis_unverified,
            "decade_increments": self.decade_increments,
            "versions": versions(),
        }


def half_decade_grid(N_max):
    top = math.log10(N_max)
    pts = sorted({int(round(10 ** (k / 2))) for k in range(0, int(math.floor(2 * top + 1e-9)) + 1)} | {int(N_max)})
    return tuple(pts)


def _hypothesis_flags(cfg):
    flags = []
    if not cfg.model.tail_index > cfg.p:
        flags.append("E|eps|^p log(1+|eps|) may be infinite (tail index <= p)")
    if not cfg.model.centered:
        flags.append("innovations are not centred")
    if cfg.norming_choice != "WnP":
        flags.append(f"norming {cfg.norming_choice} differs from W_n(p)")
    try:
        check = rate_condition_check(cfg.ws, cfg.p, 2.0, [2**k for k in range(4, 17)])
        if not check.bounded:
            flags.append("W_n(2)/W_n(p) n^(1/p-1/2) shows an upward trend")
    except ValidationError as exc:
        flags.append(f"ratio condition not checkable: {exc}")
    return flags


def rate_series(cfg: ExperimentConfig, N_max: int = 10_000, threads: int = 1) -> RateSeries:
    """Estimate ``T_n = sum_{m <= n} p_m / m`` with ``p_m = P(|S_m / b_m| > delta)``.

    ``p_m`` is simulated on a half-decade grid from 1 to ``N_max`` and
    interpolated linearly in ``log m`` in between. The series counts as
    decaying when the increments over successive decades decrease and the
    last one is at most a quarter of the first.
    """
    t0 = time.perf_counter()
    N_max = int(N_max)
    if N_max < 100:
        raise ValidationError(f"N_max: need at least 100, got {N_max}")
    flags = _hypothesis_flags(cfg)
    grid = half_decade_grid(N_max)
    gcfg = cfg.with_(n_grid=grid)
    res = _exceedance(gcfg, threads, "rate", [])
    ns = np.array([r.n for r in res.rows], dtype=float)
    ph = np.array([r.p_hat for r in res.rows])
    m = np.arange(1, N_max + 1, dtype=float)
    p_interp = np.interp(np.log(m), np.log(ns), ph)
    T = np.cumsum(p_interp / m)
    checkpoints = sorted(set(grid))
    partial = [(int(n), float(T[n - 1])) for n in checkpoints]
    incs = []
    lo = 1
    while lo * 10 <= N_max:
        hi = lo * 10
        incs.append((lo, hi, float(T[hi - 1] - T[lo - 1])))
        lo = hi
    vals = [v for _, _, v in incs]
    decaying = bool(
        len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] * 4.0 <= vals[0]
    )
    return RateSeries(
        [(r.n, r.p_hat, r.ci_lo, r.ci_hi) for r in res.rows], partial, incs, decaying, True, flags,
        cfg.to_dict(), cfg.config_hash, int(cfg.root_seed), time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# tail equivalence


@dataclass
class TailTable:
    p: float
    rows: list  # (x, x^p tail_eps, se_eps, x^p tail_X, se_X, x^p analytic tail_eps)
    decreasing_eps: bool
    decreasing_x: bool
    R: int
    J: int
    config: dict = field(default_factory=dict)

    HEADER = ("x", "eps_weighted_tail", "eps_se", "x0_weighted_tail", "x0_se", "eps_analytic")

    def metadata(self):
        return {
            "kind": "tails",
            "p": self.p,
            "R": self.R,
            "J": self.J,
            "decreasing_eps": self.decreasing_eps,
            "decreasing_x": self.decreasing_x,
            "config": self.config,
            "versions": versions(),
        }


TAIL_CHUNK = 4096
_EPS_TAG = 2


def _decreasing_top_half(values):
    top = values[len(values) // 2 :]
    return bool(all(b < a for a, b in zip(top, top[1:])))


def tail_equivalence(ws: WeightSequence, model: InnovationModel, p: float, x_grid=(1, 3, 10, 30, 100),
                     R: int = 100_000, seed: int = 0, budget: float = DEFAULT_BUDGET,
                     threads: int = 1) -> TailTable:
    """Tabulate ``x^p P(|eps_0| > x)`` and ``x^p P(|X_0| > x)`` from ``R`` draws each.

    ``X_0`` is realised as ``S_1`` on the window chosen by the process module.
    """
    if not ws.p_summable(p):
        raise ValidationError(f"weights must be {p:g}-summable")
    if not model.centered:
        raise ValidationError("innovations must be centred")
    x_grid = np.asarray(sorted(float(x) for x in x_grid))
    if x_grid.size < 2 or x_grid[0] <= 0:
        raise ValidationError("x_grid: need at least two positive points")
    plan = plan_window(ws, model, 1, budget)
    L = plan.J + 2
    w = ws.psi(np.arange(L)[::-1])  # weights for eps_{-J}..eps_1 in S_1
    root = InnovationStream(seed, (1 << 20,))
    x0 = np.empty(R)
    e0 = np.empty(R)

    def work(c):
        lo, hi = c * TAIL_CHUNK, min((c + 1) * TAIL_CHUNK, R)
        m = hi - lo
        st = root.child(c)
        eps = st.innovations(model, 0, m * L - 1).reshape(m, L)
        vals = np.sum(eps * w, axis=1)
        if plan.remainder_scale:
            vals = vals + plan.remainder_scale * st.auxiliary(model, 1, m)
        x0[lo:hi] = vals
        e0[lo:hi] = st.auxiliary(model, _EPS_TAG, m)

    chunks = range(math.ceil(R / TAIL_CHUNK))
    if threads <= 1:
        for c in chunks:
            work(c)
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            list(pool.map(work, chunks))
    ae, ax = np.sort(np.abs(e0)), np.sort(np.abs(x0))
    rows = []
    for x in x_grid:
        te = int(R - np.searchsorted(ae, x, side="right")) / R
        tx = int(R - np.searchsorted(ax, x, side="right")) / R
        xp = float(x) ** p
        rows.append((float(x), xp * te, xp * math.sqrt(te * (1 - te) / R), xp * tx,
                     xp * math.sqrt(tx * (1 - tx) / R), xp * float(model.tail(x))))
    return TailTable(
        p, rows, _decreasing_top_half([r[1] for r in rows]), _decreasing_top_half([r[3] for r in rows]),
        int(R), plan.J,
        {"weights": _safe_dict(ws), "innovations": _safe_dict(model), "seed": int(seed), "budget": budget},
    )


def _safe_dict(obj):
    try:
        return obj.to_dict()
    except ValidationError:
        return {"family": obj.family}
