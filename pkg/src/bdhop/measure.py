"""Finite measures on a discretized habitat.

The habitat is a finite grid of sites carrying positive activity weights
``pi_s``.  Microscopic states are scaled atomic measures ``nu = counts / n``
and mean-field states are densities ``u = d nu / d pi``.  Every integral
against ``pi`` becomes a weighted sum over sites.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SiteSpace:
    """Site coordinates and activity weights of the discretized habitat.

    Parameters
    ----------
    coords : array_like, shape (S,) or (S, d)
        Pairwise distinct site positions.
    weights : array_like, shape (S,)
        Strictly positive activity mass per site.
    """

    coords: np.ndarray
    weights: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.size < 1:
            raise ValueError("a site space needs at least one site")
        if coords.shape[0] != weights.size:
            raise ValueError(
                f"{coords.shape[0]} coordinates but {weights.size} weights"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("site weights must be finite and strictly positive")
        if len(np.unique(coords, axis=0)) != coords.shape[0]:
            raise ValueError("site coordinates must be pairwise distinct")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "total_mass", float(np.sum(weights)))

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @classmethod
    def uniform_grid(cls, S: int, length: float = 1.0) -> "SiteSpace":
        """Cell centres of ``[0, length]`` split into ``S`` equal cells."""
        h = length / S
        return cls(coords=(np.arange(S) + 0.5) * h, weights=np.full(S, h))

    def to_dict(self) -> dict:
        coords = self.coords[:, 0] if self.coords.shape[1] == 1 else self.coords
        return {"coords": coords.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SiteSpace":
        return cls(coords=data["coords"], weights=data["weights"])

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path: str | Path) -> "SiteSpace":
        p = Path(text_or_path)
        if isinstance(text_or_path, Path) or (
            not str(text_or_path).lstrip().startswith("{") and p.exists()
        ):
            text_or_path = p.read_text()
        return cls.from_dict(json.loads(text_or_path))


@dataclass(frozen=True)
class Configuration:
    """Scaled atomic measure ``nu = counts / scale_n`` on a site space."""

    scale_n: int
    counts: np.ndarray

    def __post_init__(self):
        if int(self.scale_n) != self.scale_n or self.scale_n < 1:
            raise ValueError("scale_n must be a positive integer")
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValueError("counts must be a vector")
        if not np.all(counts == np.round(counts)) or np.any(counts < 0):
            raise ValueError("counts must be nonnegative integers")
        object.__setattr__(self, "scale_n", int(self.scale_n))
        object.__setattr__(self, "counts", _frozen(counts, dtype=np.int64))

    @property
    def nu(self) -> np.ndarray:
        return self.counts / self.scale_n

    @property
    def tv_mass(self) -> float:
        return float(self.counts.sum()) / self.scale_n

    def check_space(self, space: SiteSpace) -> None:
        if self.counts.size != space.size:
            raise ValueError(
                f"configuration has {self.counts.size} sites, space has {space.size}"
            )

    def shifted(self, delta) -> "Configuration":
        return Configuration(self.scale_n, self.counts + np.asarray(delta))


@dataclass(frozen=True)
class DensityField:
    """Density ``u_s`` of a measure with respect to the activity weights."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("densities must be finite and nonnegative")
        object.__setattr__(self, "values", _frozen(v))

    def measure(self, space: SiteSpace) -> np.ndarray:
        """Per-site mass ``u_s pi_s``."""
        return self.values * space.weights


@dataclass(frozen=True)
class SignedSiteMeasure:
    """Signed mass per site (fluxes, vector-field values)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("signed measure must be finite")
        object.__setattr__(self, "values", _frozen(v))


def _values(m) -> np.ndarray:
    return np.asarray(getattr(m, "values", m), dtype=float)


def tv_norm(m) -> float:
    """Total variation norm ``sum_s |m_s|``."""
    return float(np.sum(np.abs(_values(m))))


def density_of(c: Configuration, space: SiteSpace) -> DensityField:
    """Density ``u_s = k_s / (n pi_s)`` of a configuration."""
    c.check_space(space)
    return DensityField(c.counts / (c.scale_n * space.weights))


def phi(s):
    """``s log s - s + 1`` with the continuous value ``phi(0) = 1``."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)) - s + 1.0, 1.0)
    return out if out.ndim else float(out)


def entropy_vs_activity(u, space: SiteSpace) -> float:
    """Relative entropy ``Ent(u pi | pi) = sum_s pi_s phi(u_s)``."""
    u = _values(u)
    if np.any(u < 0):
        raise ValueError("density must be nonnegative")
    return float(np.sum(space.weights * phi(u)))


def kl_divergence(p, q) -> float:
    """``sum_{p_i > 0} p_i log(p_i / q_i)``; ``inf`` if ``p`` is not dominated by ``q``."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("probability vectors must be nonnegative")
    pos = p > 0
    if np.any(q[pos] == 0):
        return float("inf")
    return max(float(np.sum(p[pos] * np.log(p[pos] / q[pos]))), 0.0)
