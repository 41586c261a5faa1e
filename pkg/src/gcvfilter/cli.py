"""Command-line front end: ``gcvfilter <subcommand> ...``.

Exit codes: 0 success, 1 configuration or I/O error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import types
import typing
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .asymptotic import SolverError, model_stationary_gains
from .bank import FilterBank, ParamGrid, log_grid
from .checks import FD_RTOL, ORACLE_RTOL, bench, fd_suite, oracle_equivalence
from .experiments import (
    EXPERIMENTS,
    RNG_NAME,
    ConfigError,
    DemoRun,
    ExperimentConfig,
    fir_factory,
    run_experiment,
)
from .gcv import gcv_iter
from .statespace import StateSpaceModel, fir_regressors, make_spline_model

MODEL_SECTIONS = ("A", "C", "Q", "P0", "mu", "gamma")


class UsageError(Exception):
    """Bad input files or options; reported with exit code 1."""


# --- file formats -----------------------------------------------------------


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: str | Path | None, header: Sequence[str], rows, meta: dict | None = None) -> None:
    """Comma-separated table; optional ``# key=value`` lines precede the header."""
    if len(set(header)) != len(header):
        raise ValueError("duplicate column names")
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError("row length does not match the header")
            writer.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def read_table(path: str) -> np.ndarray:
    """Numeric CSV; a non-numeric first row is treated as a header, ``#`` lines skipped."""
    rows = []
    try:
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(line for line in fh if not line.lstrip().startswith("#"))):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError:
                    if rows or i > 0:
                        raise UsageError(f"{path}: non-numeric row {row}")
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise UsageError(f"{path}: expected a non-empty rectangular numeric table")
    return np.array(rows)


def read_model(path: str, gamma: float | None = None) -> StateSpaceModel:
    """Time-invariant model from a CSV with ``[A]``, ``[C]``, ``[Q]``, ``[P0]``,
    ``[mu]`` (optional, default 0) and ``[gamma]`` sections."""
    sections: dict[str, list[list[float]]] = {}
    current = None
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in MODEL_SECTIONS:
                raise UsageError(f"{path}: unknown section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise UsageError(f"{path}: data before the first section marker")
        try:
            sections[current].append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise UsageError(f"{path}: bad number in section [{current}]") from exc
    missing = [s for s in ("A", "C", "Q", "P0") if s not in sections]
    if gamma is None and "gamma" not in sections:
        missing.append("gamma")
    if missing:
        raise UsageError(f"{path}: missing sections {missing}")
    A = np.array(sections["A"])
    n = A.shape[0]
    mu = np.array(sections["mu"]).ravel() if "mu" in sections else np.zeros(n)
    g = gamma if gamma is not None else float(np.array(sections["gamma"]).ravel()[0])
    try:
        return StateSpaceModel(A, np.array(sections["C"]).ravel(), np.array(sections["Q"]), mu, np.array(sections["P0"]), g)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _convert(key: str, value: str) -> object:
    tp = typing.get_type_hints(ExperimentConfig)[key]
    is_union = typing.get_origin(tp) in (typing.Union, types.UnionType)
    options = typing.get_args(tp) if is_union else (tp,)
    if type(None) in options and value.lower() in ("none", ""):
        return None
    base = next(o for o in options if o is not type(None))
    if typing.get_origin(base) is tuple:
        return tuple(float(v) for v in value.split(","))
    return base(value)


def read_config(path: str, experiment: str | None = None) -> ExperimentConfig:
    """Flat ``key = value`` file; unknown keys are rejected."""
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values: dict[str, object] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    if experiment is not None:
        if values.setdefault("experiment", experiment) != experiment:
            raise UsageError(f"{path}: config is for {values['experiment']!r}, not {experiment!r}")
    if "seed" not in values:
        raise UsageError(f"{path}: 'seed' is required")
    try:
        return ExperimentConfig(**values)
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(",")
        return log_grid(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: expected lo,hi,count ({exc})") from exc


# --- subcommands --------------------------------------------------------------


def _load_series(args) -> tuple[StateSpaceModel, np.ndarray]:
    data = read_table(args.data)
    if args.spline_order:
        if data.shape[1] != 2:
            raise UsageError("spline models need a (timestamp, y) data file")
        model = make_spline_model(args.spline_order, data[:, 0], args.gamma or 1.0, args.prior_scale)
        return model, data[:, 1]
    if not args.model:
        raise UsageError("--model is required unless --spline-order is given")
    return read_model(args.model, args.gamma), data[:, -1]


def cmd_filter(args) -> int:
    model, y = _load_series(args)
    n = model.state_dim
    header = ["k", "gcv", "dof", "ssr"] + [f"x{i + 1}" for i in range(n)]
    rows = (
        [s.k, s.gcv, s.dof, s.ssr, *s.filtered_state(model.noise_var)] for s in gcv_iter(model, y)
    )
    write_csv(args.out, header, rows, {"gamma": fmt(model.noise_var)})
    return 0


def cmd_bank(args) -> int:
    gammas = parse_grid(args.gamma_grid)
    regressors = None
    if args.alpha_grid:
        alphas = [float(a) for a in args.alpha_grid.split(",")]
        data = read_table(args.data)
        if data.shape[1] != 2:
            raise UsageError("--alpha-grid needs a (u, y) data file")
        regressors = fir_regressors(data[:, 0], args.fir_length)
        y = data[:, 1]
        grid = ParamGrid.product(fir_factory(args.fir_length), gammas, alpha=alphas)
    else:
        base, y = _load_series(args)
        grid = ParamGrid.product(lambda p: base.with_noise_var(p["gamma"]), gammas)
    names = list(grid.points[0])
    header = ["k"] + [f"best_{name}" for name in names] + ["gcv", "dof", "ssr"]
    rows = []
    for state in FilterBank(grid).run(y, regressors):
        point = grid.points[state.best_index]
        best = state.states[state.best_index]
        rows.append([state.k, *(point[name] for name in names), best.gcv, best.dof, best.ssr])
    write_csv(args.out, header, rows)
    return 0


def _experiment_tables(config: ExperimentConfig, runs: list[DemoRun]):
    """(filename, header, rows) for the trajectory of run 0 and the per-run summary."""
    first = runs[0]
    if config.experiment == "sysid":
        s = first.series["gcv"]
        traj = [[t, g, a, f] for t, g, a, f in zip(s.times, s.params["gamma"], s.params["alpha"], s.fits)]
        fits = np.array([r.series["gcv"].fits for r in runs])
        summary = [[t, m, sd] for t, m, sd in zip(s.times, fits.mean(axis=0), fits.std(axis=0))]
        return [
            ("sysid.csv", ["t", "gamma", "alpha", "fit"], traj),
            ("sysid_summary.csv", ["t", "mean_fit", "std_fit"], summary),
        ]
    labels = list(first.series)
    ts = first.series["gcv"].times
    traj = []
    for i, t in enumerate(ts):
        row = [t]
        row += [first.series[lab].params["gamma"][i] for lab in labels if lab != "nominal"]
        row += [first.series[lab].fits[i] for lab in labels]
        traj.append(row)
    header = ["t"] + [f"gamma_{lab}" for lab in labels if lab != "nominal"] + [f"fit_{lab}" for lab in labels]
    summary = [[r.run] + [r.series[lab].final for lab in labels] for r in runs]
    name = config.experiment
    return [
        (f"{name}.csv", header, traj),
        (f"{name}_summary.csv", ["run"] + [f"fit_{lab}" for lab in labels], summary),
    ]


def cmd_experiment(args) -> int:
    config = read_config(args.config, args.command)
    out_dir = Path(args.out_dir or config.output or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = run_experiment(config)
    meta = {"experiment": config.experiment, "seed": config.seed, "rng": RNG_NAME, "runs": config.runs}
    for name, header, rows in _experiment_tables(config, runs):
        write_csv(out_dir / name, header, rows, meta)
        print(out_dir / name, file=sys.stderr)
    return 0


def cmd_asymptotic(args) -> int:
    model = read_model(args.model, args.gamma)
    sol = model_stationary_gains(model)
    np.set_printoptions(precision=12)
    print(f"Pbar =\n{sol.Pbar}")
    print(f"Sigmabar =\n{sol.Sigmabar}")
    print(f"Kbar = {sol.Kbar}")
    print(f"Gbar = {sol.Gbar}")
    print(f"spectral_radius = {fmt(sol.spectral_radius)}")
    print(f"smoothing_ratio = {fmt(sol.smoothing_ratio)}")
    return 0


def cmd_verify(args) -> int:
    orc = oracle_equivalence(args.trials, 50, args.seed)
    fd = fd_suite(max(1, min(args.trials, 20)), 20, args.seed + 1)
    print(f"oracle max rel err: gcv={orc.gcv:.3e} dof={orc.dof:.3e} ssr={orc.ssr:.3e} (tol {ORACLE_RTOL:g})")
    print("finite differences max rel err: " + " ".join(f"{k}={v:.3e}" for k, v in fd.items()) + f" (tol {FD_RTOL:g})")
    ok = orc.max() < ORACLE_RTOL and max(fd.values()) < FD_RTOL
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


def cmd_bench(args) -> int:
    res = bench(args.steps, args.seed)
    print(f"N={res.steps}: {res.ns_per_step:.0f} ns/step ({res.seconds:.3f} s)")
    print(f"2N={2 * res.steps}: {res.ns_per_step_double:.0f} ns/step ({res.seconds_double:.3f} s)")
    print(f"ratio time(2N)/time(N) = {res.ratio:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcvfilter", description="Recursive GCV filter tools")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def series_opts(p):
        p.add_argument("--model", help="model file with [A] [C] [Q] [P0] [mu] [gamma] sections")
        p.add_argument("--data", required=True, help="CSV of measurements (optionally timestamp,y)")
        p.add_argument("--spline-order", type=int, help="build an integrated Wiener model from timestamps")
        p.add_argument("--prior-scale", type=float, default=1.0, help="spline prior covariance scale")
        p.add_argument("--out", help="output CSV (default stdout)")

    p = sub.add_parser("filter", help="run one GCV filter over a measurement file")
    series_opts(p)
    p.add_argument("--gamma", type=float, help="noise variance (overrides the model file)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("bank", help="run a bank of GCV filters over a hyperparameter grid")
    series_opts(p)
    p.add_argument("--gamma", type=float, help=argparse.SUPPRESS)
    p.add_argument("--gamma-grid", required=True, help="lo,hi,count (log spaced, inclusive)")
    p.add_argument("--alpha-grid", help="comma-separated stable spline decay rates (FIR mode)")
    p.add_argument("--fir-length", type=int, default=200)
    p.set_defaults(func=cmd_bank)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir")
        p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("asymptotic", help="stationary gains and smoothing ratio")
    p.add_argument("--model", required=True)
    p.add_argument("--gamma", type=float)
    p.set_defaults(func=cmd_asymptotic)

    p = sub.add_parser("verify", help="oracle and finite-difference self-checks")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time gcv_step for N and 2N steps")
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
