"""Command-line pipeline: simulate -> fit -> evaluate -> curves, plus compare.

Settings resolve in order: command-line flag, then the matching section of
the ``--config`` INI file, then the built-in default. Every command writes
the resolved settings to ``effective_config.ini`` in its output directory.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .data_model import DataError
from .evaluation import default_grid, kaplan_meier
from .harness import (
    COMPARE_MODELS, compare, fit_model, group_curve_table, scenario_name, score, summarize_rows,
)
from .samplers import ConfigError, McmcConfig
from .simgen import SCENARIO_GRID, ScenarioConfig, SimulatedDataset, default_mixtures, \
    generate_dataset, separated_mixtures

log = logging.getLogger("bnpsurv")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_OUTPUT = 4

DESIGNS = {"default": default_mixtures, "separated": separated_mixtures}
MODEL_CHOICES = ("dp", "hdp", "ndp", "gfm")

# key -> (type, default); None default with required=True means it must be given
SETTINGS = {
    "simulate": {
        "groups": (int, 30), "group_size": (int, 20), "censoring": (float, 0.5),
        "seed": (int, None), "design": (str, "default"), "out": (str, None),
    },
    "fit": {
        "data": (str, None), "model": (str, None), "seed": (int, None),
        "iterations": (int, 4000), "burn_in": (int, 2000), "thin": (int, 2),
        "truncation_l": (int, None), "truncation_k": (int, 15),
        "grid_points": (int, 100), "level": (float, 0.95), "out": (str, None),
    },
    "evaluate": {
        "fit": (str, None), "data": (str, None), "truth": (str, None), "design": (str, None),
        "scenario": (str, "custom"), "replicate": (str, "0"), "truth_curve": (str, "group"),
        "level": (float, 0.95), "model": (str, None), "out": (str, None),
    },
    "curves": {
        "fit": (str, None), "data": (str, None), "grid_points": (int, 100),
        "t_max": (float, None), "level": (float, 0.95), "out": (str, None),
    },
    "compare": {
        "models": (str, ",".join(COMPARE_MODELS)), "replicates": (int, 3), "seed": (int, None),
        "iterations": (int, 4000), "burn_in": (int, 2000), "thin": (int, 2),
        "truncation_l": (int, 40), "truncation_k": (int, 15), "groups": (int, None),
        "group_size": (int, None), "censoring": (float, 0.5), "holdout": (str, "false"),
        "truth_curve": (str, "group"), "out": (str, None),
    },
}
REQUIRED = {
    "simulate": ("seed", "out"),
    "fit": ("data", "model", "seed", "out"),
    "evaluate": ("fit", "truth", "out"),
    "curves": ("fit", "out"),
    "compare": ("seed", "out"),
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnpsurv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text, argument_default=None)
        sp.add_argument("--config", help="INI file; keys of section [%s] set defaults" % name)
        return sp

    sp = add("simulate", "simulate grouped censored survival data")
    sp.add_argument("--groups", type=int)
    sp.add_argument("--group-size", type=int)
    sp.add_argument("--censoring", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--design", choices=sorted(DESIGNS))
    sp.add_argument("--out")

    sp = add("fit", "fit a model and write its trace and group curves")
    sp.add_argument("--data")
    sp.add_argument("--model", choices=MODEL_CHOICES)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--truncation-l", type=int)
    sp.add_argument("--truncation-k", type=int)
    sp.add_argument("--grid-points", type=int)
    sp.add_argument("--level", type=float)
    sp.add_argument("--out")

    sp = add("evaluate", "score a fit against the simulation truth")
    sp.add_argument("--fit", help="output directory of a previous fit")
    sp.add_argument("--data", help="dataset to score lppd on (default: the fitted data)")
    sp.add_argument("--truth", help="truth sidecar written by simulate")
    sp.add_argument("--design", choices=sorted(DESIGNS),
                    help="generating design (default: as recorded next to the truth file)")
    sp.add_argument("--scenario")
    sp.add_argument("--replicate")
    sp.add_argument("--truth-curve", choices=("group", "mixture"))
    sp.add_argument("--level", type=float)
    sp.add_argument("--model", choices=MODEL_CHOICES)
    sp.add_argument("--out")

    sp = add("curves", "posterior curve/band table (and Kaplan-Meier) from a fit")
    sp.add_argument("--fit")
    sp.add_argument("--data", help="also write Kaplan-Meier curves for this dataset")
    sp.add_argument("--grid-points", type=int)
    sp.add_argument("--t-max", type=float)
    sp.add_argument("--level", type=float)
    sp.add_argument("--out")

    sp = add("compare", "run all models over the scenario grid")
    sp.add_argument("--models")
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--thin", type=int)
    sp.add_argument("--truncation-l", type=int)
    sp.add_argument("--truncation-k", type=int)
    sp.add_argument("--groups", type=int, help="restrict to one scenario (with --group-size)")
    sp.add_argument("--group-size", type=int)
    sp.add_argument("--censoring", type=float)
    sp.add_argument("--holdout", choices=("true", "false"))
    sp.add_argument("--truth-curve", choices=("group", "mixture"))
    sp.add_argument("--out")
    return p


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge flags over config-file keys over defaults."""
    file_values = {}
    if args.config:
        try:
            cp = io.read_config(args.config)
        except (OSError, configparser.Error) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_CONFIG) from None
        if cp.has_section(command):
            file_values = dict(cp[command])
    spec = SETTINGS[command]
    unknown = set(file_values) - set(spec)
    if unknown:
        raise CliError(f"unknown key(s) in [{command}]: {', '.join(sorted(unknown))}", EXIT_CONFIG)
    out = {}
    for key, (typ, default) in spec.items():
        val = getattr(args, key, None)
        if val is None and key in file_values and file_values[key] != "":
            try:
                val = typ(file_values[key])
            except ValueError:
                raise CliError(f"bad value for {key}: {file_values[key]!r}", EXIT_CONFIG) from None
        out[key] = default if val is None else val
    missing = [k for k in REQUIRED[command] if out[k] is None]
    if missing:
        raise CliError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-") for k in missing),
                       EXIT_CONFIG)
    return out


def _outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_OUTPUT) from None
    return out


def _write(path: Path, text: str) -> None:
    try:
        io.atomic_write(path, text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_OUTPUT) from None


def _read(fn, path):
    try:
        return fn(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_INPUT) from None
    except DataError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INPUT) from None


def _mcmc(settings: dict, model: str) -> McmcConfig:
    L = settings["truncation_l"]
    kwargs = dict(iterations=settings["iterations"], burn_in=settings["burn_in"],
                  thin=settings["thin"], seed=settings["seed"], K=settings["truncation_k"])
    if L is not None:
        kwargs["L_ndp" if model == "ndp" else "L"] = L
    try:
        return McmcConfig(**kwargs)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def cmd_simulate(s: dict) -> None:
    try:
        config = ScenarioConfig(J=s["groups"], n_j=s["group_size"], target_censoring=s["censoring"],
                                seed=s["seed"])
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    sim = generate_dataset(config, DESIGNS[s["design"]]())
    out = _outdir(s["out"])
    data = sim.dataset
    _write(out / "data.csv", io.serialize_dataset(data))
    _write(out / "truth.csv", io.serialize_truth(data.labels, sim.true_mixture_per_group,
                                                 sim.true_frailty_per_group))
    _write(out / "effective_config.ini", io.serialize_config(
        "simulate", {**s, "censoring_rate": repr(sim.censoring_rate)}))
    log.info("wrote %d observations in %d groups (%.1f%% censored) to %s",
             len(data), data.group_count, 100 * data.censored_fraction, out)


def cmd_fit(s: dict) -> None:
    data = _read(io.read_dataset, s["data"])
    model = s["model"]
    if model not in MODEL_CHOICES:
        raise CliError(f"unknown model {model!r}", EXIT_CONFIG)
    config = _mcmc(s, model)
    out = _outdir(s["out"])
    if model == "gfm" and not data.events.any():
        raise CliError("the frailty model needs at least one event", EXIT_INPUT)
    trace = fit_model(model, data, config)
    grid = default_grid(data, s["grid_points"])
    _write(out / "trace.jsonl", io.serialize_trace(trace, data.labels))
    _write(out / "curves.csv", io.serialize_curves(
        (data.labels[j], *rest) for j, *rest in group_curve_table(trace, grid, s["level"])))
    effective = {**s, "data": str(Path(s["data"]).resolve()), "grid_max": repr(float(grid[-1]))}
    if model != "gfm":
        effective.update({"truncation_l": config.L_ndp if model == "ndp" else config.L,
                          "truncation_k": config.K})
        b = trace.base
        effective.update(base_m0=b.m0, base_kappa0=b.kappa0, base_a0=b.a0, base_b0=b.b0)
    _write(out / "effective_config.ini", io.serialize_config("fit", effective))
    log.info("%s fit: %d retained draws written to %s", model, len(trace), out)


def _fit_settings(fit_dir: Path) -> configparser.SectionProxy:
    cfg = _read(io.read_config, fit_dir / "effective_config.ini")
    if not cfg.has_section("fit"):
        raise CliError(f"{fit_dir} is not a fit directory", EXIT_INPUT)
    return cfg["fit"]


def _load_trace(fit_dir: Path):
    return _read(lambda p: io.parse_trace(Path(p).read_text(encoding="utf-8")), fit_dir / "trace.jsonl")


def _simulated_design(truth_path: Path) -> str:
    """Design recorded by the simulate run that wrote ``truth_path``, else the default."""
    sidecar = truth_path.parent / "effective_config.ini"
    if sidecar.exists():
        cfg = _read(io.read_config, sidecar)
        if cfg.has_section("simulate"):
            return cfg["simulate"].get("design", "default")
    return "default"


def cmd_evaluate(s: dict) -> None:
    fit_dir = Path(s["fit"])
    fs = _fit_settings(fit_dir)
    trace, labels = _load_trace(fit_dir)
    fitted = _read(io.read_dataset, fs["data"])
    scoring = fitted if s["data"] is None else _read(io.read_dataset, s["data"])
    truth = _read(lambda p: io.parse_truth(Path(p).read_text(encoding="utf-8")), s["truth"])
    missing = [lab for lab in fitted.labels if lab not in truth]
    if missing:
        raise CliError(f"truth file lacks group(s): {', '.join(missing[:5])}", EXIT_INPUT)
    if tuple(scoring.labels) != tuple(fitted.labels):
        raise CliError("scoring data must have the fitted groups in the same order", EXIT_INPUT)
    mixture = np.array([truth[lab][0] for lab in fitted.labels])
    frailty = np.array([truth[lab][1] for lab in fitted.labels])
    if s["design"] is None:
        s["design"] = _simulated_design(Path(s["truth"]))
    if s["design"] not in DESIGNS:
        raise CliError(f"unknown design {s['design']!r}", EXIT_CONFIG)
    specs = tuple(DESIGNS[s["design"]]())
    if mixture.max() >= len(specs):
        raise CliError("truth mixture index outside the chosen design", EXIT_INPUT)
    sim = SimulatedDataset(fitted, mixture, frailty, specs, float("nan"))
    grid = np.linspace(0.0, float(fs["grid_max"]), int(fs["grid_points"]))
    metrics = score(trace, sim, scoring, grid=grid, level=s["level"], truth=s["truth_curve"])
    row = {"model": s["model"] or trace.model, "scenario": s["scenario"], "replicate": s["replicate"],
           **metrics}
    out = _outdir(s["out"])
    _write(out / "metrics.csv", io.serialize_metrics([row]))
    _write(out / "effective_config.ini", io.serialize_config("evaluate", s))
    log.info("mean_lppd=%.4f mean_width=%.4f coverage=%.4f", row["mean_lppd"], row["mean_width"],
             row["coverage"])


def cmd_curves(s: dict) -> None:
    fit_dir = Path(s["fit"])
    fs = _fit_settings(fit_dir)
    trace, labels = _load_trace(fit_dir)
    t_max = s["t_max"] if s["t_max"] is not None else float(fs["grid_max"])
    if not t_max > 0 or s["grid_points"] < 2:
        raise CliError("need t_max > 0 and at least 2 grid points", EXIT_CONFIG)
    grid = np.linspace(0.0, t_max, s["grid_points"])
    out = _outdir(s["out"])
    _write(out / "curves.csv", io.serialize_curves(
        (labels[j], *rest) for j, *rest in group_curve_table(trace, grid, s["level"])))
    if s["data"]:
        data = _read(io.read_dataset, s["data"])
        rows = []
        for j, lab in enumerate(data.labels):
            km = kaplan_meier(data.group(j))
            rows.append((lab, km.grid, km.values, km.values, km.values))
        _write(out / "kaplan_meier.csv", io.serialize_curves(rows))
    _write(out / "effective_config.ini", io.serialize_config("curves", {**s, "t_max": t_max}))


def cmd_compare(s: dict) -> None:
    models = [m.strip() for m in s["models"].split(",") if m.strip()]
    bad = [m for m in models if m not in MODEL_CHOICES]
    if bad or not models:
        raise CliError(f"unknown model(s): {', '.join(bad) or '(none)'}", EXIT_CONFIG)
    if (s["groups"] is None) != (s["group_size"] is None):
        raise CliError("--groups and --group-size go together", EXIT_CONFIG)
    scenarios = SCENARIO_GRID if s["groups"] is None else ((s["groups"], s["group_size"]),)
    if s["holdout"] not in ("true", "false"):
        raise CliError("holdout must be true or false", EXIT_CONFIG)
    config = _mcmc(s, "dp")
    out = _outdir(s["out"])
    rows = compare(scenarios, models, s["replicates"], config, seed=s["seed"],
                   holdout=s["holdout"] == "true", target_censoring=s["censoring"],
                   truth=s["truth_curve"])
    _write(out / "metrics.csv", io.serialize_metrics(rows))
    _write(out / "summary.csv", io.serialize_metrics(summarize_rows(rows)))
    _write(out / "effective_config.ini", io.serialize_config("compare", s))
    log.info("%d metric rows over %d scenario(s) written to %s", len(rows), len(scenarios), out)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "evaluate": cmd_evaluate,
            "curves": cmd_curves, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args.command, args)
        COMMANDS[args.command](settings)
    except CliError as exc:
        print(f"bnpsurv {args.command}: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
