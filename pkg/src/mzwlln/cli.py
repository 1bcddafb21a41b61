"""Command-line front end.

Every subcommand reads a YAML config, writes ``manifest.json`` into the
output directory before anything else, then the result table
(``results.csv``) and a JSON sidecar (``results.json``). Timing and thread
counts go to stderr only, so result files are byte-identical across runs.

Exit codes: 0 success, 1 unexpected error, 2 usage error or missing
config file, 3 invalid parameters, 4 numerical precision failure,
5 resource limit, 130 interrupted.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import exponent_fit, lrd_constant, norming_series, rate_condition_check
from .config import load_config
from .errors import MZError, ValidationError
from .innovations import make_model
from .montecarlo import (
    ExperimentConfig,
    HypothesisWarning,
    counterexample_experiment,
    rate_series,
    tail_equivalence,
    versions,
    wlln_experiment,
    format_float,
    write_csv,
    write_json,
)
from .process import DEFAULT_BUDGET, simulate_path, simulate_partial_sum
from .streams import InnovationStream
from .weights import PowerLaw, make_weights, norming

log = logging.getLogger("mzwlln")

EXIT_USAGE = 2
EXIT_INTERRUPTED = 130


def _pop(cfg, key, conv, default=None, required=False):
    if key not in cfg:
        if required:
            raise ValidationError(f"{key}: required key missing")
        return default
    value = cfg.pop(key)
    try:
        return conv(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{key}: cannot interpret {value!r}") from None


def _grid(v):
    if isinstance(v, (int, float)):
        v = [v]
    return [int(round(float(x))) for x in v]


def _reject_rest(cfg):
    if cfg:
        raise ValidationError(f"{sorted(cfg)[0]}: unknown configuration key")


class Run:
    """Output directory handling shared by all subcommands."""

    def __init__(self, args, experiment, seed):
        self.args = args
        self.out = Path(args.out)
        self.manifest = {
            "subcommand": args.command,
            "config": str(args.config),
            "experiment": experiment,
            "output_dir": str(self.out),
            "seed": seed,
            "version": __version__,
            "status": "running",
        }
        self.tmp = None

    def __enter__(self):
        if self.out.exists():
            if not self.out.is_dir():
                raise ValidationError(f"out: {self.out} exists and is not a directory")
            self.dir = self.out
        else:
            self.out.parent.mkdir(parents=True, exist_ok=True)
            self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.out.name}.", dir=self.out.parent))
            self.dir = self.tmp
        self._write_manifest()
        return self

    def _write_manifest(self):
        write_json(self.manifest, self.dir / "manifest.json")

    def path(self, name):
        return self.dir / name

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.manifest["status"] = "complete"
        elif issubclass(exc_type, KeyboardInterrupt):
            self.manifest["status"] = "interrupted"
        else:
            self.manifest["status"] = "failed"
            self.manifest["error"] = str(exc)
        self._write_manifest()
        if self.tmp is not None:
            os.replace(self.tmp, self.out)
        return False


def _emit(args, header, rows, summary=()):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_cell(v) for v in r) + "\n")
    sys.stdout.write(buf.getvalue())
    if not args.quiet:
        for line in summary:
            sys.stdout.write(line + "\n")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


# ---------------------------------------------------------------------------
# subcommands


def cmd_norming(args, cfg, name):
    ws = make_weights(_pop(cfg, "weights", lambda v: v, required=True))
    ps = _pop(cfg, "p", lambda v: [float(x) for x in (v if isinstance(v, list) else [v])], required=True)
    grid = _pop(cfg, "n_grid", _grid, required=True)
    budget = _pop(cfg, "tail_budget", float, 1e-6)
    _pop(cfg, "seed", int)
    _reject_rest(cfg)
    header = ("n", "p", "W_n", "sup_abs_w", "ratio_to_n_pow_inv_p", "tail_error_bound", "J")
    rows = []
    for p in ps:
        for n in grid:
            ev = norming(ws, n, p, budget)
            rows.append((n, p, ev.norming, ev.sup_abs_w, ev.norming / n ** (1.0 / p), ev.tail_error_bound, ev.J))
    with Run(args, name, None) as run:
        write_csv(rows, run.path("results.csv"), header)
        write_json({"kind": "norming", "weights": ws.to_dict(), "tail_budget": budget, "versions": versions()},
                   run.path("results.json"))
    _emit(args, header, rows)


def _experiment_config(args, cfg, name):
    if args.seed is not None:
        cfg["seed"] = args.seed
    return ExperimentConfig.from_dict(cfg, name)


def _write_experiment(args, run, result):
    write_csv(result.rows, run.path("results.csv"))
    write_json(result.metadata(), run.path("results.json"))
    log.info("wall time %.2f s with %d thread(s)", result.wall_time, args.threads)


def _experiment_cmd(fn, kind):
    def cmd(args, cfg, name):
        ecfg = _experiment_config(args, cfg, name)
        with Run(args, name, ecfg.root_seed) as run:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", HypothesisWarning)
                result = fn(ecfg, threads=args.threads)
            for w in caught:
                log.warning("%s", w.message)
            _write_experiment(args, run, result)
        rows = [r.as_tuple() for r in result.rows]
        summary = [f"{k}: {v}" for k, v in sorted(result.flags.items())]
        _emit(args, ("n", "b_n", "p_hat", "ci_lo", "ci_hi", "mean_abs"), rows, summary)

    cmd.__name__ = f"cmd_{kind}"
    return cmd


cmd_wlln = _experiment_cmd(wlln_experiment, "wlln")
cmd_counterexample = _experiment_cmd(counterexample_experiment, "counterexample")


def cmd_rate(args, cfg, name):
    N_max = _pop(cfg, "N_max", int, 10_000)
    ecfg = _experiment_config(args, cfg, name)
    with Run(args, name, ecfg.root_seed) as run:
        rs = rate_series(ecfg, N_max, threads=args.threads)
        write_csv(rs.partial_sums, run.path("results.csv"), ("n", "T_n"))
        write_csv(rs.grid, run.path("grid.csv"), ("n", "p_hat", "ci_lo", "ci_hi"))
        write_json(rs.metadata(), run.path("results.json"))
        log.info("wall time %.2f s with %d thread(s)", rs.wall_time, args.threads)
    for flag in rs.hypothesis_unverified:
        log.warning("hypothesis-unverified: %s", flag)
    _emit(args, ("n", "T_n"), rs.partial_sums, [f"decaying: {str(rs.decaying).lower()}"])


def cmd_tails(args, cfg, name):
    ws = make_weights(_pop(cfg, "weights", lambda v: v, required=True))
    model = make_model(_pop(cfg, "innovations", lambda v: v, required=True))
    p = _pop(cfg, "p", float, required=True)
    x_grid = _pop(cfg, "x_grid", lambda v: [float(x) for x in v], [1, 3, 10, 30, 100])
    R = _pop(cfg, "R", int, 100_000)
    seed = _pop(cfg, "seed", int, 0)
    budget = _pop(cfg, "tail_budget", float, DEFAULT_BUDGET)
    _reject_rest(cfg)
    if args.seed is not None:
        seed = args.seed
    with Run(args, name, seed) as run:
        t0 = time.perf_counter()
        table = tail_equivalence(ws, model, p, x_grid, R, seed, budget, threads=args.threads)
        write_csv(table.rows, run.path("results.csv"), table.HEADER)
        write_json(table.metadata(), run.path("results.json"))
        log.info("wall time %.2f s with %d thread(s)", time.perf_counter() - t0, args.threads)
    _emit(args, table.HEADER, table.rows,
          [f"decreasing_eps: {str(table.decreasing_eps).lower()}",
           f"decreasing_x0: {str(table.decreasing_x).lower()}"])


def cmd_asymptotics(args, cfg, name):
    p = _pop(cfg, "p", float, required=True)
    d = _pop(cfg, "d", float, required=True)
    tol = _pop(cfg, "tol", float, 1e-10)
    grid = _pop(cfg, "n_grid", _grid, [2**k for k in range(10, 21, 2)])
    q = _pop(cfg, "q", float, None)
    _pop(cfg, "seed", int)
    _reject_rest(cfg)
    c = lrd_constant(p, d, tol)
    ws = PowerLaw(d)
    series = norming_series(ws, p, grid)
    header = ("n", "W_n", "c_n_pow", "ratio")
    rows = [(n, w, float(c.predicted(n)), w / float(c.predicted(n))) for n, w in sorted(series.items())]
    meta = {
        "kind": "asymptotics",
        "p": p,
        "d": d,
        "c_value": c.c_value,
        "quadrature_error": c.quadrature_error,
        "I1": c.I1,
        "I2": c.I2,
        "exponent": c.exponent,
        "versions": versions(),
    }
    if len(series) >= 4:
        fit = exponent_fit(series)
        meta["fitted_slope"] = fit.slope
        meta["fit_residual"] = fit.residual
    if q is not None:
        rc = rate_condition_check(ws, p, q, grid)
        meta["ratio_condition"] = {"q": q, "sup": rc.sup, "top_slope": rc.top_slope, "bounded": rc.bounded}
    with Run(args, name, None) as run:
        write_csv(rows, run.path("results.csv"), header)
        write_json(meta, run.path("results.json"))
    _emit(args, header, rows, [f"c_value: {c.c_value!r}", f"quadrature_error: {c.quadrature_error!r}"]
          + ([f"fitted_slope: {meta['fitted_slope']!r}"] if "fitted_slope" in meta else []))


def cmd_simulate(args, cfg, name):
    ws = make_weights(_pop(cfg, "weights", lambda v: v, required=True))
    model = make_model(_pop(cfg, "innovations", lambda v: v, required=True))
    n = _pop(cfg, "n", int, required=True)
    seed = _pop(cfg, "seed", int, 0)
    budget = _pop(cfg, "tail_budget", float, DEFAULT_BUDGET)
    window = _pop(cfg, "window", int, None)
    _reject_rest(cfg)
    if args.seed is not None:
        seed = args.seed
    stream = InnovationStream(seed)
    with Run(args, name, seed) as run:
        path = simulate_path(ws, model, n, stream, budget, window)
        path.save(run.path("results.csv"))
        s_w = simulate_partial_sum(ws, model, n, stream, budget, window)
        write_json({
            "kind": "simulate",
            "n": n,
            "s_n": path.s_n,
            "s_n_weighted": s_w,
            "innovation_window": list(path.innovation_window),
            "truncation_error_budget": path.truncation_error_budget,
            "seed": seed,
            "versions": versions(),
        }, run.path("results.json"))
    rows = list(zip(range(1, n + 1), path.x_values.tolist()))
    _emit(args, ("k", "X_k"), rows, [f"s_n: {path.s_n!r}"])


COMMANDS = {
    "norming": (cmd_norming, "norming sequence W_n(p) over an n grid"),
    "wlln": (cmd_wlln, "exceedance frequencies P(|S_n/b_n| > delta)"),
    "counterexample": (cmd_counterexample, "long-memory run normed by n^(1/p)"),
    "rate": (cmd_rate, "partial sums of the rate series"),
    "tails": (cmd_tails, "x^p tail tables for eps_0 and X_0"),
    "asymptotics": (cmd_asymptotics, "long-memory constant and growth exponent"),
    "simulate": (cmd_simulate, "one path X_1..X_n"),
}


def _seed(v):
    s = int(v, 0)
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return s


def _threads(v):
    t = int(v)
    if t < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return t


def build_parser():
    parser = argparse.ArgumentParser(prog="mzwlln", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="YAML configuration file")
    common.add_argument("--experiment", help="named experiment inside the config")
    common.add_argument("--seed", type=_seed, help="root seed, overrides the config")
    common.add_argument("--out", type=Path, help="output directory (default: mzwlln-results/<command>)")
    common.add_argument("--threads", type=_threads, default=1, help="worker threads (default 1)")
    common.add_argument("--quiet", action="store_true", help="print tables only")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out is None:
        args.out = Path("mzwlln-results") / args.command
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="mzwlln: %(message)s", stream=sys.stderr, force=True)
    fn = COMMANDS[args.command][0]
    try:
        cfg, name = load_config(args.config, args.experiment)
        fn(args, dict(cfg), name)
    except MZError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except KeyboardInterrupt:
        log.error("interrupted")
        return EXIT_INTERRUPTED
    return 0


if __name__ == "__main__":
    sys.exit(main())
