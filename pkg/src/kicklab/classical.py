"""Classical standard-map ensembles, optionally with Gaussian momentum noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# <p**2> of a free particle under position measurement grows at 2*k*kbar**2
# = 2*d_env per unit time (the double-commutator moment identity); one
# Gaussian kick of variance NOISE_FACTOR*d_env per period reproduces it.
NOISE_FACTOR = 2.0


def map_step(q, p, kappa: float):
    """One period of the standard map, ``p' = p + kappa sin q``, ``q' = q + p'`` (q unwrapped)."""
    p_new = p + kappa * np.sin(q)
    return q + p_new, p_new


def tangent_map(q, kappa: float) -> np.ndarray:
    """Jacobian d(q', p')/d(q, p) of :func:`map_step` at ``q``."""
    c = kappa * np.cos(q)
    return np.array([[1.0 + c, 1.0], [c, 1.0]])


@dataclass
class ClassicalEnsemble:
    q: np.ndarray
    p: np.ndarray
    seed: int
    kappa: float
    d_env: float = 0.0
    noise_factor: float = NOISE_FACTOR
    partitions: int = 1

    @classmethod
    def uniform(cls, n: int, kappa: float, d_env: float = 0.0, seed: int = 0,
                p0: float = 0.0, partitions: int = 1, noise_factor: float = NOISE_FACTOR
                ) -> "ClassicalEnsemble":
        """``n`` particles with q uniform over one period and p = p0."""
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        q = rng.uniform(-np.pi, np.pi, n)
        return cls(q=q, p=np.full(n, float(p0)), seed=seed, kappa=kappa, d_env=d_env,
                   noise_factor=noise_factor, partitions=partitions)

    @property
    def n(self) -> int:
        return self.q.size


def _evolve_partition(q, p, kappa, sigma, n_kicks, ss):
    rng = np.random.default_rng(ss)
    sums = np.empty(n_kicks + 1)
    for t in range(n_kicks + 1):
        sums[t] = np.sum(p * p)
        if t == n_kicks:
            break
        p = p + kappa * np.sin(q)
        if sigma > 0:
            p = p + sigma * rng.standard_normal(p.size)
        q = q + p
    return q, p, sums


def noisy_evolve(ens: ClassicalEnsemble, n_kicks: int) -> np.ndarray:
    """Evolve ``ens`` in place; return <p**2> sampled before each kick, t = 0..n_kicks.

    Momentum noise of variance ``noise_factor * d_env`` is added once per
    period right after the kick.  Partitions use independent child streams
    and are merged in a fixed order.
    """
    sigma = np.sqrt(ens.noise_factor * ens.d_env)
    bounds = np.linspace(0, ens.n, ens.partitions + 1).astype(int)
    children = np.random.SeedSequence(ens.seed, spawn_key=(1,)).spawn(ens.partitions)
    total = np.zeros(n_kicks + 1)
    for (lo, hi), ss in zip(zip(bounds[:-1], bounds[1:]), children):
        q, p, sums = _evolve_partition(ens.q[lo:hi], ens.p[lo:hi], ens.kappa, sigma, n_kicks, ss)
        ens.q[lo:hi] = q
        ens.p[lo:hi] = p
        total += sums
    return total / ens.n

