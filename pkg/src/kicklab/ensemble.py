"""Ensembles of measured trajectories and parameter sweeps.

Trajectory ``i`` of an ensemble always uses the noise stream derived from
``(base_seed, i)``.  Trajectories are evolved in fixed-size chunks, chunks may
run in worker processes, and per-trajectory results are reduced in index
order by pairwise summation, so the output does not depend on the number of
workers.
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import DiffusionFit, fit_diffusion
from .core import NumericalGuardError, SimParams, initial_state
from .propagator import MOMENT_KEYS, BatchState, NoiseStream, Propagator

log = logging.getLogger(__name__)

CHUNK_SIZE = 32
MAX_DENSITY_GRID = 128


@dataclass
class EnsembleSeries:
    t: np.ndarray
    mean_p2: np.ndarray
    sem_p2: np.ndarray
    n_traj: int
    base_seed: int
    params: SimParams
    mean_q: np.ndarray | None = None
    var_q: np.ndarray | None = None
    mean_p: np.ndarray | None = None
    p2_traj: np.ndarray | None = field(default=None, repr=False)
    rho: list[np.ndarray] | None = field(default=None, repr=False)

    def fit(self, window: tuple[float, float] | None = None) -> DiffusionFit:
        return fit_diffusion(self, window)

    def to_dict(self) -> dict:
        return {
            "t": self.t.tolist(), "mean_p2": self.mean_p2.tolist(), "sem_p2": self.sem_p2.tolist(),
            "mean_q": None if self.mean_q is None else self.mean_q.tolist(),
            "var_q": None if self.var_q is None else self.var_q.tolist(),
            "mean_p": None if self.mean_p is None else self.mean_p.tolist(),
            "n_traj": self.n_traj, "base_seed": self.base_seed, "params": self.params.to_dict(),
            "p2_traj": None if self.p2_traj is None else self.p2_traj.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSeries":
        def arr(key):
            return None if d.get(key) is None else np.asarray(d[key], dtype=float)

        params = SimParams(**{**d["params"], "fit_window": tuple(d["params"]["fit_window"])})
        return cls(t=arr("t"), mean_p2=arr("mean_p2"), sem_p2=arr("sem_p2"), n_traj=d["n_traj"],
                   base_seed=d["base_seed"], params=params, mean_q=arr("mean_q"),
                   var_q=arr("var_q"), mean_p=arr("mean_p"), p2_traj=arr("p2_traj"))


def pairwise_sum(rows: np.ndarray) -> np.ndarray:
    """Sum over axis 0 by a fixed binary tree over the row index."""
    n = rows.shape[0]
    if n <= 8:
        total = rows[0].copy()
        for r in rows[1:]:
            total += r
        return total
    mid = n // 2
    return pairwise_sum(rows[:mid]) + pairwise_sum(rows[mid:])


def _mean_sem(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = rows.shape[0]
    mean = pairwise_sum(rows) / n
    if n == 1:
        return mean, np.zeros_like(mean)
    dev = rows - mean
    var = pairwise_sum(dev * dev) / (n - 1)
    return mean, np.sqrt(var / n)


def _run_chunk(params: SimParams, base_seed: int, indices: list[int], noise_refine: int,
               collect_density: bool):
    prop = Propagator(params)
    psi = initial_state(params, prop.grid)
    noise = [NoiseStream.for_trajectory(base_seed, i, refine=noise_refine) for i in indices]
    state = BatchState.from_wavefunctions([psi] * len(indices), noise)
    rho_sums = None
    on_sample = None
    if collect_density:
        rho_sums = np.zeros((params.n_kicks + 1, prop.grid.n, prop.grid.n), dtype=complex)
        sq = np.sqrt(prop.grid.dq)

        def on_sample(t, st):
            v = st.amps * sq
            rho_sums[t] += v.T @ v.conj()

    try:
        out, _ = prop.run(state, on_sample=on_sample)
    except NumericalGuardError as exc:
        index = indices[state.seeds.index(exc.seed)] if exc.seed in state.seeds else None
        raise NumericalGuardError(f"{exc} [trajectory index {index}, base_seed {base_seed}]") from None
    return out, rho_sums


def run_ensemble(params: SimParams, n_traj: int, base_seed: int = 0, workers: int = 1,
                 chunk_size: int = CHUNK_SIZE, noise_refine: int = 1,
                 keep_trajectories: bool = True, collect_density: bool = False) -> EnsembleSeries:
    """Average ``n_traj`` measured trajectories.

    ``collect_density`` also returns the trajectory-averaged density matrix at
    every sample time (small grids only).
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    if collect_density and params.n_grid > MAX_DENSITY_GRID:
        raise ValueError(f"density collection limited to {MAX_DENSITY_GRID}-point grids")
    chunks = [list(range(i, min(i + chunk_size, n_traj))) for i in range(0, n_traj, chunk_size)]
    args = [(params, base_seed, c, noise_refine, collect_density) for c in chunks]
    if workers <= 1 or len(chunks) == 1:
        results = [_run_chunk(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
            results = list(pool.map(_run_chunk, *zip(*args)))

    per_traj = {key: np.concatenate([r[0][key] for r in results]) for key in MOMENT_KEYS}
    mean_p2, sem_p2 = _mean_sem(per_traj["mean_p2"])
    rho = None
    if collect_density:
        rho_total = pairwise_sum(np.stack([r[1] for r in results]))
        rho = list(rho_total / n_traj)
    return EnsembleSeries(
        t=np.arange(params.n_kicks + 1, dtype=float),
        mean_p2=mean_p2,
        sem_p2=sem_p2,
        n_traj=n_traj,
        base_seed=base_seed,
        params=params,
        mean_q=_mean_sem(per_traj["mean_q"])[0],
        var_q=_mean_sem(per_traj["var_q"])[0],
        mean_p=_mean_sem(per_traj["mean_p"])[0],
        p2_traj=per_traj["mean_p2"] if keep_trajectories else None,
        rho=rho,
    )


# -- sweeps ----------------------------------------------------------------------

SWEEP_AXES = ("kbar", "d_env", "kappa")


@dataclass
class SweepResult:
    axis: str
    values: list[float]
    fits: list[DiffusionFit | None]
    series: list[EnsembleSeries | None]
    errors: list[str | None]
    provenance: dict

    @property
    def d_p(self) -> np.ndarray:
        return np.array([np.nan if f is None else f.d_p for f in self.fits])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([np.nan if f is None else f.best_stderr for f in self.fits])

    @property
    def failed(self) -> list[int]:
        return [i for i, e in enumerate(self.errors) if e is not None]


def _fit_to_dict(fit: DiffusionFit) -> dict:
    return {"d_p": fit.d_p, "stderr": fit.stderr, "window": list(fit.window),
            "intercept": fit.intercept, "r2": fit.r2, "n_points": fit.n_points,
            "stderr_traj": fit.stderr_traj}


def _fit_from_dict(d: dict) -> DiffusionFit:
    return DiffusionFit(**{**d, "window": tuple(d["window"])})


def _point_key(params: SimParams, n_traj: int, base_seed: int) -> dict:
    return {"params": params.to_dict(), "n_traj": n_traj, "base_seed": base_seed}


def sweep(axis: str, values, params: SimParams, n_traj: int, base_seed: int = 0,
          workers: int = 1, out_dir: str | os.PathLike | None = None,
          chunk_size: int = CHUNK_SIZE, max_points: int | None = None) -> SweepResult:
    """Run one ensemble and diffusion fit per value of ``axis``.

    With ``out_dir`` every finished point is written as ``point_NNN.json``
    and ``manifest.json`` is refreshed; points whose file matches the
    requested parameters are loaded instead of recomputed.  Failed points are
    recorded and the sweep continues.  ``max_points`` stops after computing
    that many new points (used to exercise resume).
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    values = [float(v) for v in values]
    if not values:
        raise ValueError("sweep needs at least one value")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    fits, series, errors, timings = [], [], [], []
    computed = 0
    for i, v in enumerate(values):
        point_params = params.replace(**{axis: v})
        key = _point_key(point_params, n_traj, base_seed)
        path = out / f"point_{i:03d}.json" if out is not None else None
        if path is not None and path.exists():
            saved = json.loads(path.read_text())
            if saved.get("key") == key:
                errors.append(saved["error"])
                fits.append(None if saved["fit"] is None else _fit_from_dict(saved["fit"]))
                series.append(None if saved["series"] is None
                              else EnsembleSeries.from_dict(saved["series"]))
                timings.append(None)
                continue
        if max_points is not None and computed >= max_points:
            break
        start = time.perf_counter()
        try:
            s = run_ensemble(point_params, n_traj, base_seed, workers=workers, chunk_size=chunk_size)
            f = fit_diffusion(s)
            err = None
        except (NumericalGuardError, ValueError) as exc:
            log.warning("sweep point %s=%g failed: %s", axis, v, exc)
            s, f, err = None, None, f"{type(exc).__name__}: {exc}"
        computed += 1
        timings.append(time.perf_counter() - start)
        fits.append(f)
        series.append(s)
        errors.append(err)
        if path is not None:
            path.write_text(json.dumps({
                "key": key, "axis": axis, "value": v, "error": err,
                "fit": None if f is None else _fit_to_dict(f),
                "series": None if s is None else s.to_dict(),
            }, sort_keys=True))
            _write_manifest(out, axis, values, params, n_traj, base_seed, errors)
        log.info("%s=%g: %s", axis, v, "failed" if err else f"D_p={f.d_p:.4g}")
    provenance = {"base_seed": base_seed, "n_traj": n_traj, "version": __version__,
                  "timings": timings, "complete": len(fits) == len(values)}
    return SweepResult(axis=axis, values=values[: len(fits)], fits=fits, series=series,
                       errors=errors, provenance=provenance)


def _write_manifest(out: Path, axis, values, params, n_traj, base_seed, errors) -> None:
    manifest = {
        "axis": axis, "values": values, "base_params": params.to_dict(), "n_traj": n_traj,
        "base_seed": base_seed, "version": __version__,
        "points": [{"index": i, "value": values[i], "file": f"point_{i:03d}.json",
                    "status": "failed" if e else "done"} for i, e in enumerate(errors)],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

