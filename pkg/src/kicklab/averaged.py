"""Ensemble-averaged dynamics on the infinite line, without trajectories.

The kick, free flight and position decoherence all commute with
translations by one period, so ``<p**2>(t)`` of a single packet equals that
of the mixture of all its 2*pi translates.  That mixture is periodic in the
centre coordinate ``X = (q + q')/2`` and is stored as ``f(X, xi)`` with
``xi = q - q'``.  In this form

* the kick multiplies by ``exp(2i kappa sin X sin(xi/2) / kbar)``,
* writing ``f = sum_n f_n(xi) exp(i n X)``, free flight for a time ``t``
  shifts ``f_n(xi) -> f_n(xi - n kbar t)`` and decoherence multiplies by
  ``exp(-k xi**2 dt)``.

Between kicks the flow is solved along characteristics, so a whole period is
an integer grid shift of every harmonic row plus a Gaussian factor.  Time is
not discretized at all.  The ``n_sub`` option reproduces the trajectory
propagator's Strang substeps instead; the factor then becomes the midpoint
rule of the same exponent, so the two differ by ``exp(k (n kbar dt)**2 / 12)``
per row and period.

The momentum distribution comes from the ``n = 0`` row, giving the exact
(up to grid truncation) ensemble mean that the trajectory average estimates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytics import DiffusionFit, fit_diffusion
from .core import TWO_PI, NumericalGuardError, SimParams

EDGE_TOL = 1e-6


@dataclass
class AveragedSeries:
    t: np.ndarray
    mean_p2: np.ndarray
    params: SimParams
    n_sub: int | None

    def fit(self, window: tuple[float, float] | None = None) -> DiffusionFit:
        return fit_diffusion((self.t, self.mean_p2), window or self.params.fit_window)


def _pow2(n: float) -> int:
    return 1 << max(4, math.ceil(math.log2(n)))


class AveragedMaster:
    """Translation-averaged master equation on a harmonic x coherence grid.

    ``m`` is the number of ``xi`` cells per ``kbar`` (so the momentum range is
    ``|p| < pi m``); ``xi_max`` bounds the coherence length kept; ``n_x`` is
    the number of centre points per period.  Defaults are sized from the
    parameters and checked at run time by the edge guards.
    """

    def __init__(self, params: SimParams, n_sub: int | None = None, m: int | None = None,
                 xi_max: float | None = None, n_x: int | None = None, edge_tol: float = EDGE_TOL):
        if params.k <= 0:
            raise ValueError("averaged solver needs d_env > 0 (harmonics are not damped otherwise)")
        self.params = params
        self.n_sub = n_sub
        self.edge_tol = edge_tol
        kb, sigma = params.kbar, params.packet_sigma
        if m is None:
            p_reach = abs(params.p0) + math.sqrt(1 + (params.kappa**2 + 2 * params.d_env) * params.n_kicks)
            m = math.ceil(8 * p_reach / math.pi)
        if n_sub is not None:
            m = math.ceil(m / (2 * n_sub)) * 2 * n_sub
        if xi_max is None:
            xi_max = max(10 / math.sqrt(params.k), 18 * sigma)
        if n_x is None:
            n_x = _pow2(2 * max(math.sqrt(120 / params.d_env), 2 * params.kappa / kb + 20))
        self.m = int(m)
        self.dxi = kb / self.m
        n_xi = 2 * math.ceil(xi_max / self.dxi / 2)
        self.xi = (np.arange(n_xi) - n_xi // 2) * self.dxi
        self.x = TWO_PI * np.arange(n_x) / n_x
        self.harm = np.rint(np.fft.fftfreq(n_x, 1.0 / n_x)).astype(int)
        self.p = TWO_PI * kb * np.fft.fftfreq(n_xi, self.dxi)
        self.kick = np.exp(2j * params.kappa * np.outer(np.sin(self.x), np.sin(self.xi / 2)) / kb)
        a = self.harm[:, None] * kb
        xi = self.xi[None, :]
        expo = xi**2 - a * xi + a**2 / 3
        if n_sub is not None:
            expo = expo - (a / n_sub) ** 2 / 12
        self.factor = np.exp(-params.k * expo)

    def initial(self) -> np.ndarray:
        p = self.params
        sigma = p.packet_sigma
        reach = math.ceil(10 * sigma / TWO_PI) + 1
        d = self.x[:, None] - p.q0 - TWO_PI * np.arange(-reach, reach + 1)[None, :]
        centre = np.exp(-d**2 / (2 * sigma**2)).sum(axis=1)
        coh = np.exp(-self.xi**2 / (8 * sigma**2) + 1j * p.p0 * self.xi / p.kbar)
        return (2 * np.pi * sigma**2) ** -0.5 * np.outer(centre, coh)

    def momentum_distribution(self, f: np.ndarray) -> np.ndarray:
        """Probabilities on ``self.p`` (FFT order), from the centre-averaged coherence."""
        f0 = f.mean(axis=0)
        prob = np.fft.fft(np.fft.ifftshift(f0)).real
        return prob / prob.sum()

    def _advance(self, g: np.ndarray) -> np.ndarray:
        out = np.zeros_like(g)
        for row, n in enumerate(self.harm):
            s = int(n) * self.m
            if s == 0:
                out[row] = g[row]
            elif 0 < s < g.shape[1]:
                out[row, s:] = g[row, :-s]
            elif -g.shape[1] < s < 0:
                out[row, :s] = g[row, -s:]
        return out * self.factor

    def _check(self, f: np.ndarray, prob: np.ndarray, t: int) -> None:
        # guards compare the weight (squared modulus) inside an edge band with the total
        w = np.abs(f) ** 2
        total = w.sum()
        band = max(1, len(self.xi) // 32)
        edge_xi = (w[:, :band].sum() + w[:, -band:].sum()) / total
        if edge_xi > self.edge_tol:
            raise NumericalGuardError(
                f"coherence reaches the xi boundary at t={t} ({edge_xi:.2g}); raise xi_max")
        pb = max(1, len(self.p) // 32)
        centre = len(self.p) // 2
        edge_p = np.abs(prob[centre - pb:centre + pb]).sum()
        if edge_p > self.edge_tol:
            raise NumericalGuardError(
                f"momentum distribution reaches p_max={np.pi * self.m:.4g} at t={t} ({edge_p:.2g}); raise m")
        wg = np.abs(np.fft.fft(f, axis=0)) ** 2
        top = np.abs(self.harm) >= len(self.x) // 2 - max(1, len(self.x) // 16)
        edge_n = wg[top].sum() / wg.sum()
        if edge_n > self.edge_tol:
            raise NumericalGuardError(f"harmonics reach n_x/2 at t={t} ({edge_n:.2g}); raise n_x")

    def run(self, n_kicks: int | None = None) -> AveragedSeries:
        n_kicks = self.params.n_kicks if n_kicks is None else n_kicks
        f = self.initial()
        p2 = np.empty(n_kicks + 1)
        for t in range(n_kicks + 1):
            prob = self.momentum_distribution(f)
            self._check(f, prob, t)
            p2[t] = prob @ (self.p * self.p)
            if t == n_kicks:
                break
            g = np.fft.fft(f * self.kick, axis=0)
            f = np.fft.ifft(self._advance(g), axis=0)
        return AveragedSeries(np.arange(n_kicks + 1, dtype=float), p2, self.params, self.n_sub)


def averaged_p2(params: SimParams, n_sub: int | None = None, **grid) -> AveragedSeries:
    """Exact ensemble-mean <p**2>(t) at integer times (pre-kick), see module docs."""
    return AveragedMaster(params, n_sub=n_sub, **grid).run()
