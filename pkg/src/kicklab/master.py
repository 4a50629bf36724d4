"""Reference solution of the position-decoherence master equation on small grids.

    d rho/dt = -(i/kbar) [H, rho] - k [q, [q, rho]]

``rho`` is stored in the orthonormal position basis of the grid (so that
``trace(rho) == 1``).  Each substep uses the same Strang arrangement as the
trajectory propagator: half free flight, the decoherence factor
``exp(-k dt (q - q')**2)`` applied elementwise, half free flight.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid, NumericalGuardError, SimParams, Wavefunction, make_grid

MAX_GRID = 128


@dataclass
class DensityMatrix:
    rho: np.ndarray
    grid: Grid

    @classmethod
    def from_wavefunction(cls, psi: Wavefunction) -> "DensityMatrix":
        v = psi.amps * np.sqrt(psi.grid.dq)
        return cls(np.outer(v, v.conj()), psi.grid)

    @classmethod
    def from_states(cls, amps: np.ndarray, grid: Grid) -> "DensityMatrix":
        """Equal-weight mixture of the rows of ``amps`` (each normalized on the grid)."""
        v = np.atleast_2d(amps) * np.sqrt(grid.dq)
        return cls(v.T @ v.conj() / v.shape[0], grid)

    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def purity(self) -> float:
        return float(np.sum(np.abs(self.rho) ** 2))

    def momentum_moments(self) -> tuple[float, float]:
        """(<p>, <p**2>) from the momentum-space diagonal."""
        f = np.fft.fft(np.fft.ifft(self.rho, axis=1, norm="ortho"), axis=0, norm="ortho")
        prob = np.diag(f).real
        p = self.grid.p_values
        return float(prob @ p), float(prob @ (p * p))

    def position_moments(self) -> tuple[float, float]:
        prob = np.diag(self.rho).real
        q = self.grid.q_values
        return float(prob @ q), float(prob @ (q * q))

    def check(self, tol_herm: float = 1e-10, tol_trace: float = 1e-8, tol_eig: float = 1e-8) -> None:
        herm = np.max(np.abs(self.rho - self.rho.conj().T))
        if herm > tol_herm:
            raise NumericalGuardError(f"density matrix not Hermitian ({herm:.3g})")
        tr = self.trace()
        if abs(tr - 1) > tol_trace:
            raise NumericalGuardError(f"density matrix trace {tr!r} != 1")
        lo = np.linalg.eigvalsh(self.rho).min()
        if lo < -tol_eig:
            raise NumericalGuardError(f"density matrix has negative eigenvalue {lo:.3g}")


def trace_distance(a: DensityMatrix | np.ndarray, b: DensityMatrix | np.ndarray) -> float:
    ra = a.rho if isinstance(a, DensityMatrix) else a
    rb = b.rho if isinstance(b, DensityMatrix) else b
    d = ra - rb
    return 0.5 * float(np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2)).sum())


class MasterSolver:
    def __init__(self, params: SimParams, grid: Grid | None = None):
        grid = make_grid(params) if grid is None else grid
        if grid.n > MAX_GRID:
            raise ValueError(f"master-equation oracle limited to {MAX_GRID} points, got {grid.n}")
        self.params = params
        self.grid = grid
        q = grid.q_values
        kb = params.kbar
        u = np.exp(-1j * params.kappa * np.cos(q) / kb)
        self.kick = np.outer(u, u.conj())
        dt = params.dt
        p = grid.p_values
        h = np.exp(-1j * p * p * dt / (4 * kb))
        self.half = np.outer(h, h.conj())
        self.full = self.half * self.half
        self.decohere = np.exp(-params.k * dt * (q[:, None] - q[None, :]) ** 2)

    def _free(self, rho: np.ndarray, phase: np.ndarray) -> np.ndarray:
        # rho(p, p') = F rho F^dagger with unitary F
        r = np.fft.fft(np.fft.ifft(rho, axis=1, norm="ortho"), axis=0, norm="ortho")
        r *= phase
        return np.fft.ifft(np.fft.fft(r, axis=1, norm="ortho"), axis=0, norm="ortho")

    def period(self, rho: np.ndarray) -> np.ndarray:
        rho = rho * self.kick
        if self.params.k == 0:
            h = np.exp(-1j * self.grid.p_values**2 / (2 * self.params.kbar))
            return self._free(rho, np.outer(h, h.conj()))
        for s in range(self.params.n_sub):
            rho = self._free(rho, self.half if s == 0 else self.full)
            rho = rho * self.decohere
        rho = self._free(rho, self.half)
        return 0.5 * (rho + rho.conj().T)


def evolve_master(rho: DensityMatrix, params: SimParams, n_kicks: int | None = None,
                  check: bool = True) -> list[DensityMatrix]:
    """Evolve ``rho`` for ``n_kicks`` periods.

    Returns the pre-kick density matrices at t = 0, 1, ..., n_kicks.
    """
    n_kicks = params.n_kicks if n_kicks is None else n_kicks
    solver = MasterSolver(params, rho.grid)
    out = [DensityMatrix(rho.rho.copy(), rho.grid)]
    r = rho.rho
    for _ in range(n_kicks):
        r = solver.period(r)
        dm = DensityMatrix(r, rho.grid)
        if check:
            dm.check()
        out.append(dm)
    return out
