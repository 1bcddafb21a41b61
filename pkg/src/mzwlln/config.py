"""YAML configuration files.

A file is either one flat mapping or holds several named runs::

    defaults:            # optional, merged under every experiment
      seed: 7
    experiments:
      iid_pareto:
        weights: delta
        innovations: {family: pareto, alpha: 1.8}
        p: 1.5
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .errors import MZError, ValidationError


class ConfigNotFound(MZError):
    exit_code = 2


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path, experiment: str | None = None) -> tuple[dict, str]:
    """Return ``(mapping, experiment name)`` for one run described in ``path``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"config file {path} not found")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"config: {path} is not valid YAML ({exc})") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError(f"config: top level of {path} must be a mapping")
    if "experiments" not in data:
        if experiment is not None:
            raise ValidationError(f"experiment: {path} defines no named experiments")
        return data, path.stem
    runs = data["experiments"]
    if not isinstance(runs, dict) or not runs:
        raise ValidationError("experiments: must be a non-empty mapping of named runs")
    extra = set(data) - {"experiments", "defaults"}
    if extra:
        raise ValidationError(f"{sorted(extra)[0]}: unexpected top-level key next to 'experiments'")
    if experiment is None:
        if len(runs) != 1:
            raise ValidationError(f"experiment: choose one of {sorted(runs)} with --experiment")
        experiment = next(iter(runs))
    if experiment not in runs:
        raise ValidationError(f"experiment: {experiment!r} not found; available: {sorted(runs)}")
    run = runs[experiment] or {}
    if not isinstance(run, dict):
        raise ValidationError(f"experiments.{experiment}: must be a mapping")
    return _merge(data.get("defaults") or {}, run), str(experiment)


def dump_config(mapping, path):
    Path(path).write_text(yaml.safe_dump(mapping, sort_keys=True))
