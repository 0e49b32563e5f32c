"""Reduced order models of Lorenz '96: generate data, train, forecast, evaluate.

Times on the command line are in days or hours; the library works in model
units (0.2 per day).  Exit codes: 0 success, 1 usage or I/O error,
2 numerical divergence.  Every output file is written to a temporary file
and renamed into place.
"""
from __future__ import annotations

import argparse
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dmd import fit_dmd_trajectories
from .dynamics import (UNITS_PER_DAY, DatasetConfig, TruthModel, generate_dataset,
                       generate_forecast_ensemble, load_trajectories, trajectories_to_csv)
from .errors import ChaosRomError, DivergenceError
from .evaluate import flow_export, kl_experiment, write_kl_reports
from .neural import L96_LLE, LOSS_COLUMNS, TrainConfig, train
from .nn import CyclicLrSchedule
from .persistence import atomic_write_text, load_model, save_model
from .quadratic import fit_quadratic_model

log = logging.getLogger("chaosrom")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this tool reserves 2 for divergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_dataset_flags(p):
    p.add_argument("--n-points", type=int, default=1000, help="total data points N (default: %(default)s)")
    p.add_argument("--rollout", type=int, default=1, help="roll-out K; trajectories hold K+1 points (default: %(default)s)")
    p.add_argument("--days-gap", type=float, default=30.0, help="days between trajectory starts (default: %(default)s)")
    p.add_argument("--spacing-hours", type=float, default=6.0, help="hours between points (default: %(default)s)")
    p.add_argument("--burn-in-days", type=float, default=360.0, help="spin-up before sampling (default: %(default)s)")
    p.add_argument("--forcing", type=float, default=8.0, help="Lorenz '96 forcing F (default: %(default)s)")
    p.add_argument("--dim", type=int, default=40, help="number of Lorenz '96 variables (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chaosrom", description=__doc__.split("\n")[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="flat 'key = value' file; command-line flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a Lorenz '96 trajectory CSV")
    _add_dataset_flags(g)
    g.add_argument("--out", required=True, help="output CSV path")

    t = sub.add_parser("train", help="fit a DMD, quadratic, AE or SyCo-AE model")
    t.add_argument("--method", required=True, choices=["dmd", "quad", "ae", "syco"])
    t.add_argument("--data", required=True, help="trajectory CSV from gen-data")
    t.add_argument("--r", type=int, default=28, help="latent dimension (default: %(default)s)")
    t.add_argument("--hidden", type=int, default=2000, help="hidden width H (default: %(default)s)")
    t.add_argument("--epochs", type=int, default=1000, help="(default: %(default)s)")
    t.add_argument("--lambda", dest="lam", type=float, default=L96_LLE,
                   help="Lyapunov weight in exp(-2 lambda t) (default: %(default)s)")
    t.add_argument("--omega", type=float, default=100.0, help="right-inverse weight (default: %(default)s)")
    t.add_argument("--upsilon", type=float, default=1.0, help="latent-loss weight (default: %(default)s)")
    t.add_argument("--rollout-substeps", type=int, default=5,
                   help="fixed trapezoidal substeps per data interval (default: %(default)s)")
    t.add_argument("--base-lr", type=float, default=1e-4, help="(default: %(default)s)")
    t.add_argument("--max-lr", type=float, default=1e-2, help="(default: %(default)s)")
    t.add_argument("--cycle-len", type=int, default=100, help="epochs per half cycle (default: %(default)s)")
    t.add_argument("--seed", type=int, default=0, help="(default: %(default)s)")
    t.add_argument("--out", required=True, help="model file path")
    t.add_argument("--loss-log", help="per-epoch loss CSV (default: <out>.loss.csv)")

    f = sub.add_parser("forecast", help="forecast one state and write a Hovmöller CSV")
    f.add_argument("--model", required=True, help="model file, or 'truth'")
    f.add_argument("--kind", choices=["dmd", "quad", "ae", "syco"],
                   help="refuse a model file of any other kind")
    f.add_argument("--init", default="0",
                   help="row index into --data, or comma-separated state (default: %(default)s)")
    f.add_argument("--data", help="trajectory CSV that --init indexes into")
    f.add_argument("--days", type=float, default=60.0, help="(default: %(default)s)")
    f.add_argument("--forcing", type=float, default=8.0, help="forcing for --model truth (default: %(default)s)")
    f.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", help="day-by-day KL divergence of ensemble forecasts")
    e.add_argument("--models", nargs="+", required=True, help="model files and/or 'truth'")
    e.add_argument("--days", default="1..10", help="'D' or 'A..B' (default: %(default)s)")
    e.add_argument("--samples", type=int, default=10000, help="ensemble size M (default: %(default)s)")
    _add_dataset_flags(e)
    e.add_argument("--out", required=True)
    return parser


# --- config file ------------------------------------------------------------

def read_config(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv, cfg: dict):
    """Install config values as subcommand defaults, converted by each flag's type."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((tok for tok in argv if tok in sub.choices), None)
    if command is None:
        return
    subparser = sub.choices[command]
    by_dest = {a.dest: a for a in subparser._actions}
    aliases = {"lambda": "lam"}
    defaults = {}
    for key, value in cfg.items():
        dest = aliases.get(key, key)
        action = by_dest.get(dest)
        if action is None or dest == "help":
            raise UsageError(f"unknown config key {key!r} for '{command}'")
        if action.nargs in ("+", "*"):
            value = value.split()
        elif action.type is not None:
            try:
                value = action.type(value)
            except ValueError:
                raise UsageError(f"bad value for {key!r}: {value!r}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"{key!r} must be one of {sorted(action.choices)}")
        action.required = False
        defaults[dest] = value
    subparser.set_defaults(**defaults)


def _dataset_config(args) -> DatasetConfig:
    return DatasetConfig(
        n_points=args.n_points, rollout=args.rollout,
        spacing=args.spacing_hours / 24.0 * UNITS_PER_DAY,
        trajectory_gap=args.days_gap * UNITS_PER_DAY,
        burn_in=args.burn_in_days * UNITS_PER_DAY,
        seed=args.seed, forcing=args.forcing, dim=args.dim)


# --- commands -----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _dataset_config(args)
    trajs = generate_dataset(cfg)
    atomic_write_text(args.out, trajectories_to_csv(trajs))
    print(f"wrote {len(trajs)} trajectories, {cfg.n_points} points to {args.out}")
    return EXIT_OK


def _write_loss_log(path, history):
    buf = io.StringIO()
    buf.write(",".join(LOSS_COLUMNS) + "\n")
    for row in history:
        buf.write(",".join(str(row["epoch"]) if c == "epoch" else "%.17g" % row[c]
                           for c in LOSS_COLUMNS) + "\n")
    atomic_write_text(path, buf.getvalue())


def cmd_train(args) -> int:
    trajs = load_trajectories(args.data)
    if not trajs:
        raise UsageError(f"{args.data} holds no trajectories")
    if args.method == "dmd":
        model = fit_dmd_trajectories(trajs, args.r)
        print(f"DMD rank {model.rank}: max Re(omega) = {model.Omega.real.max():.6g}")
    elif args.method == "quad":
        model = fit_quadratic_model(trajs, args.r)
        print(f"quadratic manifold rank {model.rank}")
    else:
        cfg = TrainConfig(epochs=args.epochs, rollout=len(trajs[0]) - 1,
                          substeps_per_interval=args.rollout_substeps,
                          schedule=CyclicLrSchedule(args.base_lr, args.max_lr, args.cycle_len),
                          seed=args.seed)
        model, history = train(trajs, cfg, args.r, args.hidden, args.method == "syco",
                               args.lam, args.omega, args.upsilon)
        _write_loss_log(args.loss_log or f"{args.out}.loss.csv", history)
        print(f"{args.method}: loss {history[0]['loss_total']:.6g} -> {history[-1]['loss_total']:.6g}")
    save_model(model, args.out)
    return EXIT_OK


def _load_any(spec, forcing=8.0, kind=None):
    if spec == "truth":
        return TruthModel(forcing)
    return load_model(spec, kind)


def _initial_state(args) -> np.ndarray:
    try:
        row = int(args.init)
    except ValueError:
        try:
            return np.array([float(v) for v in args.init.split(",")])
        except ValueError:
            raise UsageError(f"--init {args.init!r} is neither a row index nor a state") from None
    if not args.data:
        raise UsageError("--init as a row index needs --data")
    states = np.vstack([tr.states for tr in load_trajectories(args.data)])
    if not -len(states) <= row < len(states):
        raise UsageError(f"--init {row} is out of range for {len(states)} rows")
    return states[row]


def cmd_forecast(args) -> int:
    model = _load_any(args.model, args.forcing, args.kind)
    x0 = _initial_state(args)
    buf = io.StringIO()
    rows, diverged = flow_export(model, x0, args.days, buf)
    atomic_write_text(args.out, buf.getvalue())
    msg = f"wrote {rows} rows to {args.out}"
    if diverged is not None:
        msg += f" (diverged at day {diverged:.4g})"
    print(msg)
    return EXIT_OK


def parse_days(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = (int(v) for v in text.split(".."))
        else:
            a, b = 1, int(text)
    except ValueError:
        raise UsageError(f"--days {text!r}: expected 'D' or 'A..B'") from None
    if not 1 <= a <= b:
        raise UsageError("--days needs 1 <= A <= B")
    return list(range(a, b + 1))


def cmd_evaluate(args) -> int:
    days = parse_days(args.days)
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    cfg = _dataset_config(args)
    truth = TruthModel(args.forcing)
    models = {}
    for spec in args.models:
        model = truth if spec == "truth" else load_model(spec)
        name = model.kind
        if name in models:
            name = Path(spec).stem
        models[name] = model
    X0 = generate_forecast_ensemble(args.samples, cfg)
    reports = kl_experiment(models, X0, days, truth=truth)
    buf = io.StringIO()
    write_kl_reports(reports, buf)
    atomic_write_text(args.out, buf.getvalue())
    for rep in reports:
        if rep.error:
            print(f"day {rep.day} {rep.method}: {rep.error}", file=sys.stderr)
    evaluated = {rep.method for rep in reports if rep.error is None}
    print(f"wrote {len(reports)} rows to {args.out}")
    return EXIT_OK if evaluated else EXIT_USAGE


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train,
            "forecast": cmd_forecast, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config = _config_path(argv)
        if config:
            _apply_config(parser, argv, read_config(config))
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except DivergenceError as exc:
        print(f"chaosrom: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (UsageError, ChaosRomError, OSError) as exc:
        print(f"chaosrom: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
