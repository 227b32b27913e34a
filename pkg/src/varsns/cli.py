"""Command-line entry point: ``varsns <command> [options]``.

Every command writes UTF-8 text with LF line endings. With ``--out DIR`` the
results go to fixed file names inside ``DIR``; otherwise the main result is
printed. Exit codes: 0 success, 2 usage or configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .continuous import SamplerConfig, continuous_select
from .errors import ConfigError, ModelValidationError, NumericalError
from .estimation import ValidationReport, default_bounds, validation_csv_text, validation_run
from .greedy import brute_force_optimum, greedy_select
from .integrator import IrkConfig, propagate, simulate, trajectory_csv_text
from .metrics import Metric, check_properties
from .model import BUILTIN_NAMES, Model, builtin_model, bundled_fixture, load_model
from .variational import TransitionStack, sensor_contributions

METHODS = ("greedy", "continuous", "both")

# Built-in defaults; a config file overrides these and flags override both.
DEFAULTS = {
    "model": None,
    "x0": None,
    "dt": None,
    "steps": 1000,
    "metric": "logdet",
    "rank_tol": 1e-9,
    "eps": 1e-6,
    "r": None,
    "method": None,
    "samples": 64,
    "seed": 0,
    "trials": 20,
    "alpha_max": 0.2,
    "out": None,
    "threads": None,
    "exact_f": None,
}


@dataclass
class ExperimentConfig:
    model: Model
    model_name: str
    x0: np.ndarray
    dt: float
    steps: int
    metric: Metric
    r_grid: list
    method: str
    samples: int
    seed: int
    trials: int
    alpha_max: float
    out: Path | None
    threads: int
    exact_f: bool | None = None

    @property
    def irk(self) -> IrkConfig:
        return IrkConfig(self.dt)

    def echo(self) -> dict:
        """Settings that determine the results, for embedding in outputs."""
        return {
            "model": self.model_name,
            "dt": self.dt,
            "steps": self.steps,
            "metric": self.metric.describe(),
            "seed": self.seed,
        }


def resolve_model(name: str) -> Model:
    """A JSON path, a bundled fixture name, or a builtin name."""
    if name in BUILTIN_NAMES:
        return builtin_model(name)
    path = Path(name)
    if path.is_file():
        return load_model(path)
    bundled = bundled_fixture(name)
    if bundled is not None:
        return load_model(bundled)
    raise ConfigError(f"model file not found: {name}")


def _parse_floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()], dtype=float)
    except ValueError:
        raise ConfigError(f"cannot parse {what} {text!r} as numbers") from None


def _parse_x0(value, model: Model) -> np.ndarray:
    if value is None:
        if model.default_x0 is None:
            raise ConfigError("no initial state: pass --x0 or add \"x0\" to the model file")
        x0 = np.asarray(model.default_x0, dtype=float)
    else:
        text = str(value)
        path = Path(text)
        if path.suffix in (".json", ".txt", ".csv") or path.is_file():
            try:
                text = path.read_text(encoding="utf-8")
            except FileNotFoundError:
                raise ConfigError(f"initial state file not found: {path}") from None
            if path.suffix == ".json":
                text = " ".join(str(v) for v in json.loads(text))
        x0 = _parse_floats(text, "x0")
    if x0.shape != (model.dimension,):
        raise ConfigError(f"x0 has {x0.size} entries, model has {model.dimension} states")
    if not np.all(np.isfinite(x0)):
        raise ConfigError("x0 contains non-finite entries")
    return x0


def _parse_r_grid(value) -> list:
    if value is None:
        return []
    try:
        grid = [int(v) for v in str(value).replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse r {value!r} as integers") from None
    return grid


def _parse_bool(value) -> bool | None:
    if value is None or isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse {value!r} as a boolean")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; keys are option names with ``-`` or ``_``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    out = {}
    for key, raw in parser["config"].items():
        name = key.replace("-", "_")
        if name not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r} in config file {path}")
        out[name] = raw.strip().strip('"').strip("'")
    return out


def _number(value, kind, name):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be {kind.__name__}, got {value!r}") from None


def build_config(args: argparse.Namespace, default_method: str = "greedy") -> ExperimentConfig:
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val

    if settings["model"] is None:
        raise ConfigError("--model is required")
    model_name = str(settings["model"])
    model = resolve_model(model_name)
    dt = settings["dt"] if settings["dt"] is not None else model.default_dt
    if dt is None:
        raise ConfigError("no step size: pass --dt or add \"dt\" to the model file")
    dt = _number(dt, float, "dt")
    if not dt > 0 or not math.isfinite(dt):
        raise ConfigError(f"dt must be a positive number, got {dt!r}")
    steps = _number(settings["steps"], int, "steps")
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")

    metric = Metric(
        str(settings["metric"]),
        rank_tol=_number(settings["rank_tol"], float, "rank-tol"),
        epsilon=_number(settings["eps"], float, "eps"),
    )
    r_grid = _parse_r_grid(settings["r"])
    for r in r_grid:
        if not 1 <= r <= model.dimension:
            raise ConfigError(f"r = {r} outside 1..{model.dimension}")
    method = settings["method"] or default_method
    if method not in METHODS:
        raise ConfigError(f"method must be one of {', '.join(METHODS)}, got {method!r}")
    samples = _number(settings["samples"], int, "samples")
    if samples < 1:
        raise ConfigError(f"samples must be >= 1, got {samples}")
    seed = _number(settings["seed"], int, "seed")
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}")
    trials = _number(settings["trials"], int, "trials")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    alpha_max = _number(settings["alpha_max"], float, "alpha-max")
    if not alpha_max > 0:
        raise ConfigError(f"alpha-max must be > 0, got {alpha_max}")
    threads = settings["threads"]
    threads = (os.cpu_count() or 1) if threads is None else _number(threads, int, "threads")
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")

    return ExperimentConfig(
        model=model,
        model_name=model_name,
        x0=_parse_x0(settings["x0"], model),
        dt=dt,
        steps=steps,
        metric=metric,
        r_grid=r_grid,
        method=method,
        samples=samples,
        seed=seed,
        trials=trials,
        alpha_max=alpha_max,
        out=None if settings["out"] is None else Path(settings["out"]),
        threads=threads,
        exact_f=_parse_bool(settings["exact_f"]),
    )


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def _contributions(cfg: ExperimentConfig):
    _, phis = propagate(cfg.model, cfg.x0, cfg.irk, cfg.steps)
    return sensor_contributions(TransitionStack(phis))


def _require_r(cfg):
    if not cfg.r_grid:
        raise ConfigError("--r is required for this command")
    return cfg.r_grid


def _methods(cfg):
    return ["greedy", "continuous"] if cfg.method == "both" else [cfg.method]


def _select(cfg, contrib, r, method):
    if method == "greedy":
        res = greedy_select(cfg.metric, contrib, r)
    else:
        res = continuous_select(
            cfg.metric, contrib, r, SamplerConfig(cfg.samples, cfg.seed), exact_f=cfg.exact_f
        )
    res.audit["r"] = r
    return res


# Each command returns {file name: text}; the first entry is the main result.


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    traj = simulate(cfg.model, cfg.x0, cfg.irk, cfg.steps)
    return {"trajectory.csv": trajectory_csv_text(traj)}


def cmd_gramian(cfg: ExperimentConfig) -> dict:
    return {"contributions.json": _contributions(cfg).to_json()}


def cmd_select(cfg: ExperimentConfig) -> dict:
    contrib = _contributions(cfg)
    results = []
    for r in _require_r(cfg):
        for method in _methods(cfg):
            results.append(_select(cfg, contrib, r, method).to_dict())
    return {"selection.json": _dump({"config": cfg.echo(), "selections": results})}


def run_validation(cfg: ExperimentConfig, contrib=None) -> list[ValidationReport]:
    """Select per method and r, then estimate perturbed initial states.

    When two methods pick the same set at some r the trials are run once and
    shared, since they depend only on the set and the seed.
    """
    if contrib is None:
        contrib = _contributions(cfg)
    bounds = default_bounds(cfg.x0)
    cache: dict[tuple, ValidationReport] = {}
    reports = []
    for r in _require_r(cfg):
        for method in _methods(cfg):
            sel = _select(cfg, contrib, r, method)
            key = tuple(sorted(sel.selected))
            if key not in cache:
                cache[key] = validation_run(
                    cfg.model,
                    cfg.irk,
                    list(key),
                    cfg.x0,
                    cfg.steps,
                    trials=cfg.trials,
                    alpha_max=cfg.alpha_max,
                    bounds=bounds,
                    seed=cfg.seed,
                    threads=cfg.threads,
                )
            shared = cache[key]
            reports.append(ValidationReport(list(key), method, r, cfg.seed, cfg.alpha_max, shared.trials))
    return reports


def cmd_validate(cfg: ExperimentConfig) -> dict:
    reports = run_validation(cfg)
    doc = {"config": {**cfg.echo(), "trials": cfg.trials}, "reports": [rep.to_dict() for rep in reports]}
    return {"validation.json": _dump(doc), "validation.csv": validation_csv_text(reports)}


def cmd_check(cfg: ExperimentConfig) -> dict:
    contrib = _contributions(cfg)
    return {"properties.json": check_properties(cfg.metric, contrib).to_json()}


def cmd_compare(cfg: ExperimentConfig) -> dict:
    """Objective of each method per r, with the exhaustive optimum when affordable."""
    contrib = _contributions(cfg)
    rows = []
    for r in _require_r(cfg):
        row = {"r": r}
        for method in ("greedy", "continuous"):
            res = _select(cfg, contrib, r, method)
            row[method] = {"selected": [int(s) for s in res.selected], "objective": res.objective}
        try:
            best_set, best = brute_force_optimum(cfg.metric, contrib, r)
        except ConfigError:
            row["optimum"] = None
        else:
            row["optimum"] = {"selected": best_set, "objective": best}
            for method in ("greedy", "continuous"):
                row[method]["ratio"] = row[method]["objective"] / best if best > 0 else 1.0
        rows.append(row)
    return {"comparison.json": _dump({"config": cfg.echo(), "rows": rows})}


COMMANDS = {
    "simulate": (cmd_simulate, "simulate a trajectory and write it as CSV", "greedy"),
    "gramian": (cmd_gramian, "write per-sensor Gramian contributions", "greedy"),
    "select": (cmd_select, "select sensors for each r", "greedy"),
    "validate": (cmd_validate, "estimate perturbed initial states from selections", "both"),
    "check": (cmd_check, "verify normalization, monotonicity and submodularity", "greedy"),
    "compare": (cmd_compare, "compare greedy, continuous and exhaustive objectives", "both"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags take precedence")
    common.add_argument("--model", help="model JSON path, bundled fixture or builtin name")
    common.add_argument("--x0", help="initial state: comma-separated values or a file")
    common.add_argument("--dt", type=float, help="step size T")
    common.add_argument("--steps", type=int, help="number of states N (default 1000)")
    common.add_argument("--metric", choices=("trace", "rank", "logdet"))
    common.add_argument("--rank-tol", dest="rank_tol", type=float)
    common.add_argument("--eps", type=float, help="logdet regularization (default 1e-6)")
    common.add_argument("--r", help="cardinality or comma-separated grid")
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--samples", type=int, help="Monte Carlo samples K (default 64)")
    common.add_argument("--exact-f", dest="exact_f", action="store_const", const=True)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--alpha-max", dest="alpha_max", type=float)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int)

    parser = argparse.ArgumentParser(prog="varsns", description="Sensor selection for nonlinear networks.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text, _) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def write_outputs(outputs: dict, out_dir: Path | None, stream=None) -> None:
    if out_dir is None:
        stream = stream or sys.stdout
        stream.write(next(iter(outputs.values())))
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (out_dir / name).write_text(text, encoding="utf-8", newline="\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler, _, default_method = COMMANDS[args.command]
    try:
        cfg = build_config(args, default_method)
        write_outputs(handler(cfg), cfg.out)
    except (ConfigError, ModelValidationError) as exc:
        print(f"varsns: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"varsns: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
