"""Kicked-rotor evolution under continuous position measurement.

One kick period is: the instantaneous kick ``exp(-i kappa cos(q)/kbar)``,
then ``n_sub`` Strang substeps ``[half drift, measurement, half drift]``.
Moments are sampled immediately before each kick.

The measurement substep applies the Gaussian Kraus operator
``exp(-2k dt (q - R)**2)`` and renormalizes.  The outcome R is drawn from its
exact Born density, |psi|**2 smeared by a Gaussian of variance 1/(8k dt):
pick a grid point q_J with probability |psi_J|**2 dq, then

    R = q_J + dW / (sqrt(8k) dt),    dW ~ N(0, dt).

Averaged over outcomes the substep is then exactly the decoherence factor
``exp(-k dt (q - q')**2)``, so the trajectory mean carries no time-step
bias beyond the Strang splitting itself.  As dt -> 0 the spread of q_J is
negligible and the update reduces to the stochastic Schrodinger equation
``[1 - k q**2 dt + 4k q R dt] psi`` with ``R dt = <q> dt + dW/sqrt(8k)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import measure_rows
from .core import (
    TWO_PI,
    Grid,
    Moments,
    NumericalGuardError,
    SimParams,
    Wavefunction,
    batch_moments,
    edge_probabilities,
    initial_state,
    make_grid,
)

MOMENT_KEYS = ("mean_q", "mean_p", "mean_p2", "var_q", "var_p")


def trajectory_seed_sequence(base_seed: int, index: int) -> np.random.SeedSequence:
    """Independent, replayable stream for trajectory ``index`` of an ensemble."""
    return np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),))


@dataclass
class NoiseStream:
    """Wiener increments and Born-draw uniforms for one trajectory.

    With ``refine > 1`` each increment is the sum of ``refine`` finer
    increments, so runs at ``n_sub`` and ``n_sub * refine`` substeps can share
    one Brownian path.  Uniforms come from a separate stream.
    """

    seed: int
    refine: int = 1
    _rng: np.random.Generator = field(init=False, repr=False)
    _urng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(self.seed))))
        self._urng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(int(self.seed), spawn_key=(1,))))

    @classmethod
    def for_trajectory(cls, base_seed: int, index: int, refine: int = 1) -> "NoiseStream":
        seed = int(trajectory_seed_sequence(base_seed, index).generate_state(1, np.uint64)[0])
        return cls(seed=seed, refine=refine)

    def draw(self, n: int, dt: float) -> np.ndarray:
        fine = self._rng.standard_normal(n * self.refine) * np.sqrt(dt / self.refine)
        if self.refine == 1:
            return fine
        return fine.reshape(n, self.refine).sum(axis=1)

    def uniforms(self, n: int) -> np.ndarray:
        return self._urng.random(n)


@dataclass
class MeasurementRecord:
    """Measurement record samples ``R`` at the end of each substep."""

    t: np.ndarray
    samples: np.ndarray
    dt: float


# -- single-state operations -------------------------------------------------

def kick(psi: Wavefunction, kappa: float, kbar: float) -> Wavefunction:
    out = psi.copy()
    # cos(q) is 2*pi periodic, so the local frame needs no offset
    out.amps *= np.exp(-1j * kappa * np.cos(psi.grid.q_values) / kbar)
    return out


def drift(psi: Wavefunction, dt: float, kbar: float) -> Wavefunction:
    out = psi.copy()
    p = psi.grid.p_values + psi.p_offset
    phi = np.fft.fft(psi.amps)
    phi *= np.exp(-1j * p * p * dt / (2 * kbar))
    out.amps = np.fft.ifft(phi)
    return out


def measure_step(psi: Wavefunction, k: float, dt: float, dW: float, u: float | None = None
                 ) -> tuple[Wavefunction, float]:
    """One measurement substep; returns the updated state and the record value R.

    ``u`` in [0, 1) selects the Born draw of the outcome (see module docs);
    ``u=None`` centres the outcome on <q>, i.e. ``R = <q> + dW/(sqrt(8k) dt)``.
    R is ``nan`` when ``k == 0`` (no record).
    """
    if k < 0:
        raise ValueError(f"measurement strength must be >= 0, got {k}")
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    out = psi.copy()
    if k == 0:
        return out, float("nan")
    g = psi.grid
    amps = out.amps[None, :].copy()
    means = np.empty(1)
    drive = np.empty(1)
    measure_rows(amps, g.q_values[0], g.dq, k, dt, np.array([dW]), np.array([-1.0 if u is None else u]),
                 0, 0.0, np.zeros(1, np.int64), means, np.empty(1), drive)
    out.amps = amps[0]
    mean_q = means[0] + psi.q_offset
    return out, float(mean_q + drive[0] / (np.sqrt(8 * k) * dt))


# -- batched engine ------------------------------------------------------------

class Propagator:
    """Evolves a stack of trajectories (rows) sharing one ``SimParams``.

    Rows never interact, and every row gets the same floating-point operations
    it would get alone, so results do not depend on how trajectories are
    grouped.
    """

    def __init__(self, params: SimParams, grid: Grid | None = None):
        self.params = params
        self.grid = make_grid(params) if grid is None else grid
        g = self.grid
        self.k = params.k
        self.dt = params.dt
        self.kick_phase = np.exp(-1j * params.kappa * np.cos(g.q_values) / params.kbar)
        per = g.points_per_period
        # recentering needs room for several periods on each side
        self.per = per if (params.recenter and self.k > 0 and per and g.length >= 4 * TWO_PI) else 0
        self.shift_limit = g.length / 8
        self.p_shift_limit = g.p_max / 16

    def drift_phase(self, p_offset: np.ndarray, h: float) -> np.ndarray:
        p = self.grid.p_values[None, :] + p_offset[:, None]
        return np.exp(-1j * p * p * (h / (2 * self.params.kbar)))

    def _recenter_momentum(self, state: "BatchState") -> None:
        if not self.params.recenter:
            return
        mp = np.fft.fft(state.amps, axis=-1)
        prob = mp.real**2 + mp.imag**2
        mean = (prob * self.grid.p_values).sum(axis=-1) / prob.sum(axis=-1)
        bins = np.rint(mean / self.grid.dp).astype(np.int64)
        bins[np.abs(mean) <= self.p_shift_limit] = 0
        if not bins.any():
            return
        for r in np.flatnonzero(bins):
            mp[r] = np.roll(mp[r], -bins[r])
        state.p_offset = state.p_offset + bins * self.grid.dp
        rows = np.flatnonzero(bins)
        state.amps[rows] = np.fft.ifft(mp[rows], axis=-1)

    def sample(self, state: "BatchState") -> dict[str, np.ndarray]:
        return batch_moments(state.amps, self.grid, state.q_offset, state.p_offset)

    def check_edges(self, state: "BatchState") -> None:
        edge_q, edge_p = edge_probabilities(state.amps)
        tol = self.params.edge_tol
        # without measurement the box is a quasi-momentum sampling of the
        # open line and the state legitimately fills it
        if self.k > 0:
            bad = np.flatnonzero(edge_q > tol)
            if bad.size:
                r = bad[0]
                raise NumericalGuardError(
                    f"boundary leak: edge probability {edge_q[r]:.3g} in q exceeds {tol:g}",
                    state.seeds[r])
        bad = np.flatnonzero(edge_p > tol)
        if bad.size:
            r = bad[0]
            raise NumericalGuardError(
                f"momentum aliasing: probability {edge_p[r]:.3g} near the momentum cutoff "
                f"exceeds {tol:g}", state.seeds[r])

    def period(self, state: "BatchState", record: np.ndarray | None = None) -> None:
        """Advance every row by one kick period, in place."""
        self._recenter_momentum(state)
        state.amps *= self.kick_phase
        if self.k == 0:
            # drift operators commute; one exact step covers the period
            phi = np.fft.fft(state.amps, axis=-1)
            phi *= self.drift_phase(state.p_offset, 1.0)
            state.amps = np.fft.ifft(phi, axis=-1)
            return
        n_sub = self.params.n_sub
        half = self.drift_phase(state.p_offset, self.dt / 2)
        full = half * half
        dW = np.stack([s.draw(n_sub, self.dt) for s in state.noise], axis=1)
        uni = np.stack([s.uniforms(n_sub) for s in state.noise], axis=1)
        g = self.grid
        means = np.empty(state.n)
        variances = np.empty(state.n)
        drive = np.empty(state.n)
        for s in range(n_sub):
            phi = np.fft.fft(state.amps, axis=-1)
            phi *= half if s == 0 else full
            state.amps = np.fft.ifft(phi, axis=-1)
            measure_rows(state.amps, g.q_values[0], g.dq, self.k, self.dt, dW[s], uni[s],
                         self.per, self.shift_limit, state.q_shift, means, variances, drive)
            # 8 k dt var_q is the fraction by which one substep narrows the packet;
            # when it is not small the drift/measurement splitting is unresolved
            worst = int(np.argmax(variances))
            ratio = 8 * self.k * self.dt * variances[worst]
            state.max_dt_ratio = max(state.max_dt_ratio, float(ratio))
            if ratio > self.params.dt_guard_tol:
                raise NumericalGuardError(
                    f"substep too coarse: 8*k*dt*var_q = {ratio:.3g} exceeds "
                    f"{self.params.dt_guard_tol:g}; increase n_sub (now {n_sub})",
                    state.seeds[worst])
            if record is not None:
                record[:, s] = means + state.q_offset + drive / (np.sqrt(8 * self.k) * self.dt)
        phi = np.fft.fft(state.amps, axis=-1)
        phi *= half
        state.amps = np.fft.ifft(phi, axis=-1)

    def run(self, state: "BatchState", n_kicks: int | None = None, on_sample=None,
            keep_record: bool = False) -> tuple[dict[str, np.ndarray], np.ndarray | None]:
        """Run ``n_kicks`` periods; returns moments of shape (rows, n_kicks + 1).

        ``on_sample(t, state)`` is called at every pre-kick sample time.
        """
        n_kicks = self.params.n_kicks if n_kicks is None else n_kicks
        out = {key: np.empty((state.n, n_kicks + 1)) for key in MOMENT_KEYS}
        rec = None
        if keep_record and self.k > 0:
            rec = np.empty((state.n, n_kicks, self.params.n_sub))
        for t in range(n_kicks + 1):
            self.check_edges(state)
            m = self.sample(state)
            for key in MOMENT_KEYS:
                out[key][:, t] = m[key]
            if on_sample is not None:
                on_sample(t, state)
            if t == n_kicks:
                break
            self.period(state, None if rec is None else rec[:, t])
        return out, rec


@dataclass
class BatchState:
    amps: np.ndarray
    noise: list[NoiseStream]
    q_shift: np.ndarray
    p_offset: np.ndarray
    max_dt_ratio: float = 0.0

    @property
    def n(self) -> int:
        return self.amps.shape[0]

    @property
    def q_offset(self) -> np.ndarray:
        return self.q_shift * TWO_PI

    @property
    def seeds(self) -> list[int]:
        return [s.seed for s in self.noise]

    @classmethod
    def from_wavefunctions(cls, states: list[Wavefunction], noise: list[NoiseStream]) -> "BatchState":
        amps = np.stack([s.amps for s in states]).astype(np.complex128)
        q_shift = np.array([int(round(s.q_offset / TWO_PI)) for s in states], dtype=np.int64)
        p_offset = np.array([s.p_offset for s in states], dtype=float)
        return cls(amps, list(noise), q_shift, p_offset)

    def wavefunction(self, row: int, grid: Grid) -> Wavefunction:
        return Wavefunction(self.amps[row].copy(), grid, float(self.q_offset[row]),
                            float(self.p_offset[row]))


def step_period(psi: Wavefunction, params: SimParams, noise: NoiseStream, t: float = 0.0
                ) -> tuple[Wavefunction, Moments, np.ndarray]:
    """Advance one trajectory by one kick period.

    Returns the new state, the moments sampled just before this period's
    kick, and the period's measurement-record slice (empty when k == 0).
    """
    prop = Propagator(params, psi.grid)
    state = BatchState.from_wavefunctions([psi], [noise])
    m = prop.sample(state)
    before = Moments(t=float(t), **{key: float(v[0]) for key, v in m.items()})
    record = np.empty((1, params.n_sub)) if prop.k > 0 else None
    prop.period(state, record)
    prop.check_edges(state)
    samples = record[0] if record is not None else np.empty(0)
    return state.wavefunction(0, psi.grid), before, samples


@dataclass
class TrajectoryResult:
    t: np.ndarray
    moments: dict[str, np.ndarray]
    seed: int
    record: MeasurementRecord | None = None


def run_trajectory(params: SimParams, noise: NoiseStream, keep_record: bool = False
                   ) -> TrajectoryResult:
    prop = Propagator(params)
    psi = initial_state(params, prop.grid)
    state = BatchState.from_wavefunctions([psi], [noise])
    out, rec = prop.run(state, keep_record=keep_record)
    t = np.arange(params.n_kicks + 1, dtype=float)
    record = None
    if rec is not None:
        tr = (np.arange(params.n_kicks)[:, None] + (np.arange(params.n_sub)[None, :] + 1) * params.dt)
        record = MeasurementRecord(t=tr.ravel(), samples=rec[0].ravel(), dt=params.dt)
    return TrajectoryResult(t=t, moments={key: v[0] for key, v in out.items()}, seed=noise.seed,
                            record=record)
