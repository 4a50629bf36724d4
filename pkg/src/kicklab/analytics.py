"""Closed-form reference quantities and diagnostics.

* ``kappa_eff`` and the early-time quantum diffusion rate ``shepelyansky_dinit``
* ordinary-least-squares diffusion fits of <p**2>(t)
* the two classicality inequalities for a continuously measured particle
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# -- Bessel functions ----------------------------------------------------------

_SERIES_MAX = 1.0


def _bessel_series(n: int, x: float) -> float:
    half = 0.5 * x
    term = half**n / math.factorial(n)
    total = term
    m = 0
    while True:
        m += 1
        term *= -(half * half) / (m * (m + n))
        total += term
        if abs(term) < 1e-17 * abs(total):
            return total


def _bessel_miller(n: int, x: float) -> float:
    # Miller's downward recurrence J_{m-1} = (2m/x) J_m - J_{m+1}, normalized by
    # J_0 + 2 sum_k J_{2k} = 1
    ax = abs(x)
    start = 2 * ((max(n, int(ax)) + 20 + int(4 * math.sqrt(ax + 1))) // 2)
    j_next, j = 0.0, 1e-300
    norm = 0.0
    value = 0.0
    for m in range(start, 0, -1):
        j_prev = (2.0 * m / ax) * j - j_next
        j_next, j = j, j_prev
        if m - 1 == n:
            value = j
        if (m - 1) % 2 == 0 and m - 1 > 0:
            norm += 2.0 * j
        if abs(j) > 1e250:
            j *= 1e-250
            j_next *= 1e-250
            value *= 1e-250
            norm *= 1e-250
    norm += j  # J_0 term
    result = value / norm
    return -result if (x < 0 and n % 2) else result


def bessel_j(n: int, x):
    """Bessel function of the first kind J_n(x) for integer ``n >= 0``."""
    if n < 0 or int(n) != n:
        raise ValueError("order must be a non-negative integer")
    n = int(n)

    def scalar(v: float) -> float:
        v = float(v)
        if v == 0.0:
            return 1.0 if n == 0 else 0.0
        if abs(v) < _SERIES_MAX:
            return _bessel_series(n, v)
        return _bessel_miller(n, v)

    if np.ndim(x) == 0:
        return scalar(x)
    arr = np.asarray(x, dtype=float)
    return np.array([scalar(v) for v in arr.ravel()]).reshape(arr.shape)


# -- early-time quantum diffusion ------------------------------------------------

def kappa_eff(kappa, kbar):
    """Renormalized kick strength ``2 kappa sin(kbar/2) / kbar``.

    Even in ``kbar``, equal to ``kappa`` in the limit ``kbar -> 0`` and zero at
    the quantum resonances ``kbar = 2 pi n``.
    """
    kbar = np.asarray(kbar, dtype=float)
    # np.sinc(x) = sin(pi x)/(pi x) and np.sinc(0) = 1
    out = kappa * np.sinc(kbar / (2 * np.pi))
    return float(out) if out.ndim == 0 else out


def shepelyansky_dinit(kappa: float, kbar, n_terms: int = 3, sign: int = -1):
    """Early-time diffusion rate ``kappa**2/2 (1 + 2s J2(K) + 2 J2(K)**2)``, K = kappa_eff.

    ``sign`` is the sign ``s`` of the linear Bessel term.  The default -1 is
    the classical correlation correction of the standard map with
    kappa -> kappa_eff; ``sign=+1`` gives the variant with a plus sign.
    ``n_terms`` keeps the first 1, 2 or 3 terms of the bracket.
    """
    if n_terms not in (1, 2, 3):
        raise ValueError(f"n_terms must be 1, 2 or 3, got {n_terms}")
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    ke = kappa_eff(kappa, kbar)
    j2 = bessel_j(2, ke)
    bracket = 1.0
    if n_terms >= 2:
        bracket = bracket + 2 * sign * j2
    if n_terms >= 3:
        bracket = bracket + 2 * j2 * j2
    return 0.5 * kappa**2 * bracket


# -- diffusion fits --------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionFit:
    d_p: float
    stderr: float
    window: tuple[float, float]
    intercept: float
    r2: float
    n_points: int
    # standard error from the spread of per-trajectory slopes, when available
    stderr_traj: float | None = None

    @property
    def best_stderr(self) -> float:
        return self.stderr if self.stderr_traj is None else self.stderr_traj


def ols_slope(t: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None):
    """Weighted least-squares line; returns (slope, intercept, slope stderr, r2)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=float)
    sw = w.sum()
    tm = (w * t).sum() / sw
    ym = (w * y).sum() / sw
    dt = t - tm
    sxx = (w * dt * dt).sum()
    slope = (w * dt * (y - ym)).sum() / sxx
    intercept = ym - slope * tm
    resid = y - (intercept + slope * t)
    ss_res = (w * resid * resid).sum()
    ss_tot = (w * (y - ym) ** 2).sum()
    dof = t.size - 2
    stderr = math.sqrt(ss_res / dof / sxx) if dof > 0 else float("inf")
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(stderr), float(r2)


def fit_diffusion(series, window: tuple[float, float] | None = None, weighted: bool = False
                  ) -> DiffusionFit:
    """Least-squares slope of <p**2>(t) over ``window`` (inclusive).

    ``series`` is an :class:`~kicklab.ensemble.EnsembleSeries` or a ``(t, p2)``
    pair.  With ``weighted=True`` points are weighted by 1/SEM**2.  When the
    series carries per-trajectory data, ``stderr_traj`` is the standard error
    of the mean per-trajectory slope, which accounts for the strong time
    correlation of <p**2>(t) that the residual-based ``stderr`` ignores.
    """
    if isinstance(series, tuple):
        t, y = (np.asarray(a, dtype=float) for a in series)
        sem = None
        per_traj = None
    else:
        t, y, sem = series.t, series.mean_p2, series.sem_p2
        per_traj = getattr(series, "p2_traj", None)
        if window is None:
            window = series.params.fit_window
    if window is None:
        window = (float(t[0]), float(t[-1]))
    lo, hi = window
    if lo < t[0] or hi > t[-1] or lo >= hi:
        raise ValueError(f"fit window {window} outside data range [{t[0]}, {t[-1]}]")
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 5:
        raise ValueError(f"fit window {window} holds {sel.sum()} samples; need at least 5")
    w = None
    if weighted and sem is not None:
        s = np.asarray(sem)[sel]
        if np.all(s > 0):
            w = 1.0 / s**2
    slope, intercept, stderr, r2 = ols_slope(t[sel], y[sel], w)
    stderr_traj = None
    if per_traj is not None and per_traj.shape[0] > 1:
        ts = t[sel]
        dt = ts - ts.mean()
        slopes = (per_traj[:, sel] - per_traj[:, sel].mean(axis=1, keepdims=True)) @ dt / (dt @ dt)
        stderr_traj = float(slopes.std(ddof=1) / math.sqrt(slopes.size))
    return DiffusionFit(d_p=slope, stderr=stderr, window=(float(lo), float(hi)), intercept=intercept,
                        r2=r2, n_points=int(sel.sum()), stderr_traj=stderr_traj)


# -- classicality inequalities ---------------------------------------------------

@dataclass(frozen=True)
class ForceScales:
    """Typical force-gradient magnitude |dF/dx|, curvature ratio |F''/F| and mass."""

    grad: float
    curvature: float = 1.0
    mass: float = 1.0

    @classmethod
    def kicked_rotor(cls, kappa: float) -> "ForceScales":
        """Scales of ``F = kappa sin q`` per kick: |F'| ~ kappa, |F''/F| = 1."""
        return cls(grad=kappa, curvature=1.0, mass=1.0)


@dataclass(frozen=True)
class ClassicalityReport:
    kbar: float
    k: float
    s: float
    eta: float
    forces: ForceScales
    localization_lhs: float  # 8 eta k
    localization_rhs: float  # |F''/F| sqrt(|F'|/2m)
    band_lower: float  # 2|F'|/(eta s)
    band_upper: float  # |F'| s / 4
    band_value: float  # kbar k
    margin: float

    @property
    def localization_ratio(self) -> float:
        return self.localization_lhs / self.localization_rhs

    @property
    def lower_ratio(self) -> float:
        return self.band_value / self.band_lower

    @property
    def upper_ratio(self) -> float:
        return self.band_upper / self.band_value

    @property
    def band_nonempty(self) -> bool:
        return self.band_upper > self.band_lower

    @property
    def localization_ok(self) -> bool:
        return self.localization_ratio >= self.margin

    @property
    def band_satisfied(self) -> bool:
        return self.lower_ratio >= self.margin and self.upper_ratio >= self.margin

    @property
    def classical(self) -> bool:
        return self.localization_ok and self.band_satisfied

    def as_dict(self) -> dict:
        return {
            "kbar": self.kbar, "k": self.k, "s": self.s, "eta": self.eta,
            "force_grad": self.forces.grad, "force_curvature": self.forces.curvature,
            "mass": self.forces.mass, "margin": self.margin,
            "localization_lhs": self.localization_lhs, "localization_rhs": self.localization_rhs,
            "localization_ratio": self.localization_ratio, "localization_ok": self.localization_ok,
            "band_lower": self.band_lower, "band_upper": self.band_upper,
            "band_value": self.band_value, "lower_ratio": self.lower_ratio,
            "upper_ratio": self.upper_ratio, "band_nonempty": self.band_nonempty,
            "band_satisfied": self.band_satisfied, "classical": self.classical,
        }


def classicality_check(kbar: float, k: float, s: float, forces: ForceScales,
                       eta: float = 1.0, margin: float = 10.0) -> ClassicalityReport:
    """Evaluate both classicality conditions with hbar -> kbar.

    "Much greater/less than" is read as a ratio of at least ``margin``.  The
    conditions were derived for smooth forces; for kicks the caller supplies
    effective scales (e.g. :meth:`ForceScales.kicked_rotor`).
    """
    for name, v in (("kbar", kbar), ("k", k), ("s", s), ("force grad", forces.grad),
                    ("force curvature", forces.curvature), ("mass", forces.mass),
                    ("eta", eta), ("margin", margin)):
        if not v > 0:
            raise ValueError(f"{name} must be > 0, got {v}")
    if eta > 1:
        raise ValueError("eta must be in (0, 1]")
    return ClassicalityReport(
        kbar=kbar, k=k, s=s, eta=eta, forces=forces,
        localization_lhs=8 * eta * k,
        localization_rhs=forces.curvature * math.sqrt(forces.grad / (2 * forces.mass)),
        band_lower=2 * forces.grad / (eta * s),
        band_upper=forces.grad * s / 4,
        band_value=kbar * k,
        margin=margin,
    )
