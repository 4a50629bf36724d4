"""Command-line front end.

Every command reads a YAML run configuration (``--config``), applies flag
overrides and writes comma-separated tables into ``--out``.  Each table
starts with a ``#`` comment block holding the resolved configuration and
seed, and the file contents depend only on those, so repeated runs are
byte-identical.

Exit codes: 0 success, 2 configuration error, 3 numerical-guard abort,
4 sweep finished with failed points.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analytics import ForceScales, classicality_check, fit_diffusion, kappa_eff, shepelyansky_dinit
from .classical import ClassicalEnsemble, noisy_evolve
from .averaged import averaged_p2
from .config import ConfigError, RunConfig
from .core import TWO_PI, NumericalGuardError
from .ensemble import run_ensemble, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3
EXIT_PARTIAL = 4

log = logging.getLogger("kicklab")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


def write_table(path: Path, command: str, cfg: RunConfig, columns: list[str], rows) -> None:
    """Write a CSV table preceded by a commented provenance header.

    The header holds every config field that can affect results; worker
    count, chunking and the output directory are left out so they do not
    change the file.
    """
    header = {"command": command, "version": __version__, "seed": cfg.seed,
              "config": cfg.provenance()}
    buf = io.StringIO()
    for line in yaml.safe_dump(header, sort_keys=True).splitlines():
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    """Parse a table written by :func:`write_table`; returns (header, columns, data)."""
    lines = Path(path).read_text().splitlines()
    head = [ln[2:] for ln in lines if ln.startswith("# ")]
    body = [ln for ln in lines if not ln.startswith("#")]
    columns = body[0].split(",")
    data = np.array([[float(x) if x else np.nan for x in ln.split(",")] for ln in body[1:]])
    return yaml.safe_load("\n".join(head)), columns, data.reshape(-1, len(columns))


FIT_COLUMNS = ["d_p", "stderr", "stderr_traj", "t_lo", "t_hi", "intercept", "r2", "n_points"]


def _fit_row(fit) -> list:
    return [fit.d_p, fit.stderr, fit.stderr_traj, fit.window[0], fit.window[1],
            fit.intercept, fit.r2, fit.n_points]


# -- commands --------------------------------------------------------------------

def cmd_quantum(cfg: RunConfig) -> int:
    params = cfg.sim_params()
    series = run_ensemble(params, cfg.n_traj, cfg.seed, workers=cfg.workers,
                          chunk_size=cfg.chunk_size)
    out = Path(cfg.out)
    rows = zip(series.t, series.mean_p2, series.sem_p2, series.mean_q, series.var_q)
    write_table(out / "quantum.csv", "quantum", cfg,
                ["t", "mean_p2", "sem_p2", "mean_q", "var_q"], rows)
    fit = series.fit()
    write_table(out / "quantum_fit.csv", "quantum", cfg, FIT_COLUMNS, [_fit_row(fit)])
    print(f"D_p = {fit.d_p:.6g} +/- {fit.best_stderr:.3g} over t in {fit.window}")
    return EXIT_OK


def cmd_averaged(cfg: RunConfig) -> int:
    params = cfg.sim_params()
    if params.k <= 0:
        raise ConfigError("field 'd_env' must be > 0 for the averaged solver")
    series = averaged_p2(params)
    out = Path(cfg.out)
    write_table(out / "averaged.csv", "averaged", cfg, ["t", "mean_p2"],
                zip(series.t, series.mean_p2))
    fit = series.fit()
    write_table(out / "averaged_fit.csv", "averaged", cfg, FIT_COLUMNS, [_fit_row(fit)])
    print(f"D_p = {fit.d_p:.8g} (exact ensemble mean) over t in {fit.window}")
    return EXIT_OK


def cmd_classical(cfg: RunConfig) -> int:
    ens = ClassicalEnsemble.uniform(cfg.n_particles, cfg.kappa, cfg.d_env, seed=cfg.seed,
                                    p0=cfg.p0, partitions=cfg.partitions)
    p2 = noisy_evolve(ens, cfg.n_kicks)
    t = np.arange(cfg.n_kicks + 1, dtype=float)
    out = Path(cfg.out)
    write_table(out / "classical.csv", "classical", cfg, ["t", "mean_p2"], zip(t, p2))
    fit = fit_diffusion((t, p2), tuple(cfg.fit_window))
    write_table(out / "classical_fit.csv", "classical", cfg, FIT_COLUMNS, [_fit_row(fit)])
    print(f"D_cl = {fit.d_p:.6g} over t in {fit.window}")
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig, axis: str, name: str) -> int:
    cfg.require("values")
    out = Path(cfg.out) / name
    result = sweep(axis, cfg.values, cfg.sim_params(), cfg.n_traj, cfg.seed,
                   workers=cfg.workers, out_dir=out, chunk_size=cfg.chunk_size)
    rows = []
    for v, fit, err in zip(result.values, result.fits, result.errors):
        if fit is None:
            rows.append([v, None, None, None, None, 1])
        else:
            rows.append([v, fit.d_p, fit.stderr, fit.stderr_traj, fit.r2, 0])
    write_table(out / f"{name}.csv", name, cfg,
                [axis, "d_p", "stderr", "stderr_traj", "r2", "failed"], rows)
    for v, d, e in zip(result.values, result.d_p, result.stderr):
        print(f"{axis} = {v:.6g}: D_p = {d:.6g} +/- {e:.3g}")
    if result.failed:
        for i in result.failed:
            print(f"point {axis}={result.values[i]:g} failed: {result.errors[i]}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_sweep_kbar(cfg: RunConfig) -> int:
    return _cmd_sweep(cfg, "kbar", "sweep_kbar")


def cmd_sweep_denv(cfg: RunConfig) -> int:
    return _cmd_sweep(cfg, "d_env", "sweep_denv")


def analytic_grid(kbar_min: float, kbar_max: float, n_points: int) -> np.ndarray:
    """Evenly spaced kbar values plus every multiple of 2*pi inside the range."""
    if not 0 < kbar_min < kbar_max:
        raise ConfigError("fields 'kbar_min' and 'kbar_max' must satisfy 0 < kbar_min < kbar_max")
    if n_points < 2:
        raise ConfigError("field 'n_points' must be >= 2")
    base = np.linspace(kbar_min, kbar_max, n_points)
    zeros = TWO_PI * np.arange(1, math.floor(kbar_max / TWO_PI) + 1)
    zeros = zeros[zeros >= kbar_min]
    return np.unique(np.concatenate([base, zeros]))


def cmd_analytic(cfg: RunConfig) -> int:
    if cfg.shep_sign not in (-1, 1):
        raise ConfigError("field 'shep_sign' must be -1 or 1")
    kb = analytic_grid(cfg.kbar_min, cfg.kbar_max, cfg.n_points)
    ke = kappa_eff(cfg.kappa, kb)
    d_init = shepelyansky_dinit(cfg.kappa, kb, sign=cfg.shep_sign)
    d_cl = 0.5 * cfg.kappa**2
    write_table(Path(cfg.out) / "analytic.csv", "analytic", cfg,
                ["kbar", "kappa_eff", "d_init", "d_init_over_quasilinear"],
                zip(kb, ke, d_init, d_init / d_cl))
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    cfg.require("s")
    params = cfg.sim_params()
    forces = ForceScales(grad=cfg.kappa if cfg.force_grad is None else cfg.force_grad,
                         curvature=cfg.force_curvature, mass=cfg.mass)
    try:
        report = classicality_check(params.kbar, params.k, cfg.s, forces, eta=cfg.eta,
                                    margin=cfg.margin)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(yaml.safe_dump(report.as_dict(), sort_keys=True), end="")
    return EXIT_OK


COMMANDS = {
    "quantum": (cmd_quantum, "ensemble of measured quantum trajectories"),
    "averaged": (cmd_averaged, "exact ensemble-mean <p**2>(t) without trajectories"),
    "classical": (cmd_classical, "classical standard-map ensemble with momentum noise"),
    "sweep-kbar": (cmd_sweep_kbar, "diffusion rate versus kbar at fixed d_env"),
    "sweep-denv": (cmd_sweep_denv, "diffusion rate versus d_env at fixed kbar"),
    "analytic": (cmd_analytic, "table of kappa_eff and the early-time diffusion rate"),
    "check": (cmd_check, "classicality inequalities for the configured parameters"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kicklab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"kicklab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH", help="YAML run configuration")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--workers", type=int, metavar="N")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--traj", type=int, metavar="N", help="trajectories (sets n_traj)")
        p.add_argument("--grid", type=int, metavar="N", help="grid points (sets n_grid)")
        p.add_argument("--substeps", type=int, metavar="N", help="substeps per period (sets n_sub)")
        p.add_argument("--set", action="append", default=[], metavar="FIELD=VALUE",
                       help="override any config field (value parsed as YAML)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects FIELD=VALUE, got {item!r}")
        overrides[key.strip()] = yaml.safe_load(value)
    data = {**cfg.to_mapping(), **overrides}
    flags = {"seed": args.seed, "workers": args.workers, "out": args.out, "n_traj": args.traj,
             "n_grid": args.grid, "n_sub": args.substeps}
    data.update({k: v for k, v in flags.items() if v is not None})
    return RunConfig.from_mapping(data)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = COMMANDS[args.command][0]
    try:
        try:
            cfg = resolve_config(args)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalGuardError as exc:
        print(f"numerical guard abort: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())
