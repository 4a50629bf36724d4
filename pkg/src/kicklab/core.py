"""Grids, wavefunctions and moments for the scaled kicked rotor.

All quantities are in the scaled units of ``H = p**2/2 + kappa*cos(q)*sum_n delta(t-n)``
with ``[q, p] = i*kbar``.  The position domain is a periodic box that is an
integer number of kick-potential periods wide; momentum amplitudes are kept in
discrete-Fourier (``numpy.fft``) order.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi
NORM_TOL = 1e-6


class NumericalGuardError(RuntimeError):
    """A run violated a numerical guard (boundary leak, norm drift, ...)."""

    def __init__(self, message: str, seed: int | None = None):
        if seed is not None:
            message = f"{message} (trajectory seed {seed})"
        super().__init__(message)
        self.seed = seed


def _is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SimParams:
    """Physical parameters and numerical controls of one simulation.

    ``k`` (measurement strength) is derived from ``d_env / kbar**2`` and is
    never set directly.  ``q_extent`` is the box length in units of 2*pi.
    """

    kappa: float = 10.0
    kbar: float = 3.0
    d_env: float = 0.1
    n_grid: int = 4096
    q_extent: int = 32
    n_sub: int = 100
    n_kicks: int = 50
    fit_window: tuple[float, float] = (30.0, 50.0)
    # initial packet; sigma_q=None means kbar/2, i.e. var_p = 1
    q0: float = 0.0
    p0: float = 0.0
    sigma_q: float | None = None
    # guards
    edge_tol: float = 1e-8
    dt_guard_tol: float = 0.3
    recenter: bool = True

    def __post_init__(self):
        object.__setattr__(self, "fit_window", tuple(float(x) for x in self.fit_window))
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not self.kbar > 0:
            raise ValueError(f"kbar must be > 0, got {self.kbar}")
        if not self.d_env >= 0:
            raise ValueError(f"d_env must be >= 0, got {self.d_env}")
        if not _is_power_of_two(self.n_grid):
            raise ValueError(f"n_grid must be a power of two, got {self.n_grid}")
        if not self.q_extent > 0:
            raise ValueError(f"q_extent must be > 0, got {self.q_extent}")
        if int(self.n_sub) < 1:
            raise ValueError(f"n_sub must be >= 1, got {self.n_sub}")
        if int(self.n_kicks) < 0:
            raise ValueError(f"n_kicks must be >= 0, got {self.n_kicks}")
        lo, hi = self.fit_window
        if not lo < hi <= self.n_kicks:
            raise ValueError(
                f"fit_window must satisfy t_lo < t_hi <= n_kicks, got {self.fit_window} "
                f"with n_kicks={self.n_kicks}"
            )
        if self.sigma_q is not None and not self.sigma_q > 0:
            raise ValueError(f"sigma_q must be > 0, got {self.sigma_q}")

    @property
    def k(self) -> float:
        return self.d_env / self.kbar**2

    @property
    def dt(self) -> float:
        return 1.0 / self.n_sub

    @property
    def packet_sigma(self) -> float:
        return self.kbar / 2.0 if self.sigma_q is None else self.sigma_q

    def replace(self, **changes) -> "SimParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["fit_window"] = list(self.fit_window)
        return d


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    length: float
    kbar: float
    q_values: np.ndarray = field(repr=False)
    p_values: np.ndarray = field(repr=False)  # FFT order

    @property
    def dq(self) -> float:
        return self.length / self.n

    @property
    def dp(self) -> float:
        return TWO_PI * self.kbar / self.length

    @property
    def p_max(self) -> float:
        return self.dp * (self.n // 2)

    @property
    def points_per_period(self) -> int:
        """Grid points per 2*pi, or 0 if the box is not a whole number of periods."""
        periods = self.length / TWO_PI
        if abs(periods - round(periods)) > 1e-12 or self.n % round(periods):
            return 0
        return self.n // round(periods)

    @classmethod
    def build(cls, n: int, length: float, kbar: float) -> "Grid":
        if not _is_power_of_two(n):
            raise ValueError(f"grid size must be a power of two, got {n}")
        if not length > 0:
            raise ValueError(f"box length must be > 0, got {length}")
        dq = length / n
        q = -length / 2 + dq * np.arange(n)
        p = kbar * TWO_PI * np.fft.fftfreq(n, d=dq)
        q.flags.writeable = False
        p.flags.writeable = False
        return cls(n=int(n), length=float(length), kbar=float(kbar), q_values=q, p_values=p)


def make_grid(params: SimParams) -> Grid:
    return Grid.build(params.n_grid, TWO_PI * params.q_extent, params.kbar)


@dataclass(eq=False)
class Wavefunction:
    """Position-space amplitudes on ``grid``.

    ``q_offset`` and ``p_offset`` locate the local box in absolute phase
    space: the true state is ``exp(i*p_offset*q/kbar) * amps(q - q_offset)``.
    Both are changed only by whole lattice shifts (2*pi in q, one momentum
    bin in p), which commute with the kick and measurement operators.
    """

    amps: np.ndarray
    grid: Grid
    q_offset: float = 0.0
    p_offset: float = 0.0

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amps) ** 2) * self.grid.dq)

    def copy(self) -> "Wavefunction":
        return Wavefunction(self.amps.copy(), self.grid, self.q_offset, self.p_offset)


@dataclass(frozen=True)
class Moments:
    mean_q: float
    mean_p: float
    mean_p2: float
    var_q: float
    var_p: float
    t: float = 0.0


def to_momentum(psi: Wavefunction) -> np.ndarray:
    """Momentum amplitudes in FFT order, normalized so ``sum(|phi|**2)*dp == 1``."""
    g = psi.grid
    return np.fft.fft(psi.amps, norm="ortho") * np.sqrt(g.dq / g.dp)


def to_position(phi: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of :func:`to_momentum`."""
    return np.fft.ifft(phi, norm="ortho") * np.sqrt(grid.dp / grid.dq)


def gaussian_packet(grid: Grid, q0: float, p0: float, sigma_q: float, kbar: float) -> Wavefunction:
    """Minimum-uncertainty Gaussian with var_q = sigma_q**2 and var_p = kbar**2/(4 sigma_q**2)."""
    if sigma_q < 2 * grid.dq:
        raise ValueError(f"sigma_q={sigma_q} unresolvable on grid with dq={grid.dq:.4g}")
    q = grid.q_values
    # 6 sigma to the nearest wall keeps the truncated tail below ~1e-8
    if abs(q0) + 6 * sigma_q > grid.length / 2:
        raise ValueError(f"packet at q0={q0} with sigma_q={sigma_q} is truncated by the box")
    if abs(kbar - grid.kbar) > 1e-12 * max(1.0, kbar):
        raise ValueError("kbar does not match the grid")
    amps = np.exp(-((q - q0) ** 2) / (4 * sigma_q**2) + 1j * p0 * q / kbar)
    amps /= np.sqrt(np.sum(np.abs(amps) ** 2) * grid.dq)
    return Wavefunction(amps.astype(np.complex128), grid)


def initial_state(params: SimParams, grid: Grid | None = None) -> Wavefunction:
    grid = make_grid(params) if grid is None else grid
    return gaussian_packet(grid, params.q0, params.p0, params.packet_sigma, params.kbar)


def batch_moments(amps: np.ndarray, grid: Grid, q_offset, p_offset) -> dict[str, np.ndarray]:
    """Moments of a stack of normalized states (rows of ``amps``).

    Row reductions avoid BLAS so each row's result is independent of the
    stack it sits in.

    Probabilities are renormalized by their sum, so the result does not
    depend on the overall amplitude scale.
    """
    amps = np.atleast_2d(amps)
    q = grid.q_values
    prob_q = amps.real**2 + amps.imag**2
    prob_q /= prob_q.sum(axis=-1, keepdims=True)
    mq_local = (prob_q * q).sum(axis=-1)
    var_q = (prob_q * (q * q)).sum(axis=-1) - mq_local**2

    phi = np.fft.fft(amps, axis=-1)
    prob_p = phi.real**2 + phi.imag**2
    prob_p /= prob_p.sum(axis=-1, keepdims=True)
    p = grid.p_values
    mp_local = (prob_p * p).sum(axis=-1)
    var_p = (prob_p * (p * p)).sum(axis=-1) - mp_local**2
    mean_p = mp_local + np.asarray(p_offset)
    return {
        "mean_q": mq_local + np.asarray(q_offset),
        "mean_p": mean_p,
        "mean_p2": var_p + mean_p**2,
        "var_q": np.maximum(var_q, 0.0),
        "var_p": np.maximum(var_p, 0.0),
    }


def moments(psi: Wavefunction, t: float = 0.0) -> Moments:
    n2 = psi.norm2()
    if abs(n2 - 1.0) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm^2 = {n2:.10g})")
    m = batch_moments(psi.amps[None, :], psi.grid, psi.q_offset, psi.p_offset)
    return Moments(t=float(t), **{key: float(val[0]) for key, val in m.items()})


def edge_probabilities(amps: np.ndarray, band_fraction: float = 1 / 16) -> tuple[np.ndarray, np.ndarray]:
    """Probability within ``band_fraction`` of the box edges, in q and near the momentum cutoff."""
    amps = np.atleast_2d(amps)
    n = amps.shape[-1]
    band = max(1, int(n * band_fraction))
    prob_q = amps.real**2 + amps.imag**2
    total = prob_q.sum(axis=-1)
    edge_q = (prob_q[:, :band].sum(axis=-1) + prob_q[:, -band:].sum(axis=-1)) / total
    phi = np.fft.fft(amps, axis=-1)
    prob_p = phi.real**2 + phi.imag**2
    # FFT order: the cutoff sits in the middle of the array
    edge_p = prob_p[:, n // 2 - band : n // 2 + band].sum(axis=-1) / prob_p.sum(axis=-1)
    return edge_q, edge_p
