"""The 'cosh' Legendre pair, the action density Upsilon and Hellinger distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SERIES_CUTOFF = 1e-3
_RATIO_CUTOFF = 1e8


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def psi_star(z):
    """``2 (cosh(z/2) - 1)``, written with ``sinh`` to avoid cancellation near 0."""
    z = np.asarray(z, dtype=float)
    return _out(4.0 * np.sinh(z / 4.0) ** 2)


def psi(s):
    """Legendre dual of :func:`psi_star`: ``2 s asinh(s) - 2 sqrt(1 + s^2) + 2``."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    small = a < _SERIES_CUTOFF
    s2 = s * s
    series = s2 * (1.0 - s2 / 12.0 + s2 * s2 / 40.0)
    with np.errstate(over="ignore", invalid="ignore"):
        closed = 2.0 * a * np.arcsinh(a) - 2.0 * np.hypot(1.0, a) + 2.0
    return _out(np.where(small, series, closed))


def _upsilon_positive(w, g):
    """``psi(w / g) g`` for ``g > 0`` without forming huge ratios."""
    a = np.abs(w)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ratio = a / g
        moderate = ratio < _RATIO_CUTOFF
        safe_g = np.where(g > 0, g, 1.0)
        direct = psi(np.where(moderate, ratio, 0.0)) * g
        # asinh(a/g) = log(a + hypot(a, g)) - log(g), stable for a >> g
        asinh_big = np.log(a + np.hypot(a, g)) - np.log(safe_g)
        big = 2.0 * a * asinh_big - 2.0 * np.hypot(a, g) + 2.0 * g
    return np.where(moderate, direct, big)


def upsilon(w, u, v):
    """Jointly convex, 1-homogeneous action ``psi(w / sqrt(uv)) sqrt(uv)``.

    Returns 0 when ``w == 0`` and ``inf`` when ``w != 0`` but ``uv == 0``.
    """
    w, u, v = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (w, u, v)))
    if np.any(u < 0) or np.any(v < 0):
        raise ValueError("intensities must be nonnegative")
    g = np.sqrt(u) * np.sqrt(v)
    out = np.where(g > 0, _upsilon_positive(w, g), np.inf)
    out = np.where(w == 0, 0.0, out)
    return _out(out)


def hellinger_sq(mu, nu) -> float:
    """Squared Hellinger distance ``1/2 sum (sqrt(mu) - sqrt(nu))^2``."""
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError("measures must have the same shape")
    if np.any(mu < 0) or np.any(nu < 0):
        raise ValueError("measures must be nonnegative")
    return 0.5 * float(np.sum((np.sqrt(mu) - np.sqrt(nu)) ** 2))


@dataclass(frozen=True)
class DualPairSample:
    w: float
    u: float
    v: float
    zeta: float

    def __post_init__(self):
        if self.u < 0 or self.v < 0:
            raise ValueError("intensities must be nonnegative")


def dual_gap(sample: DualPairSample) -> float:
    """Young gap ``Upsilon(w, u, v) + psi*(zeta) sqrt(uv) - w zeta`` (always >= 0)."""
    return float(dual_gaps(sample.w, sample.u, sample.v, sample.zeta))


def dual_gaps(w, u, v, zeta):
    """Elementwise :func:`dual_gap` over broadcast arrays."""
    w, u, v, z = (np.asarray(a, dtype=float) for a in (w, u, v, zeta))
    return _out(np.asarray(upsilon(w, u, v)) + np.asarray(psi_star(z)) * np.sqrt(u * v) - w * z)


def optimal_flux(u, v, zeta):
    """Flux realising equality in the Young inequality: ``sqrt(uv) sinh(zeta / 2)``."""
    return np.sqrt(np.asarray(u) * np.asarray(v)) * np.sinh(np.asarray(zeta) / 2.0)
