"""Exact stochastic simulation of the scaled birth-death-hopping process.

Direct-method Gillespie sampler for the jump process with per-site birth
propensities ``n b_s(nu)``, death propensities ``d(nu, s) k_s`` and hop
propensities ``h_{s->r}(nu) k_s``.  Every trajectory owns a generator seeded
from ``(base_seed, trajectory index)``, so ensembles are reproducible
regardless of how the trajectories are scheduled.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from bdhop.master import MasterDistribution, StateSpaceIndex
from bdhop.measure import Configuration
from bdhop.rates import RateModel

log = logging.getLogger(__name__)

BIRTH, DEATH, HOP = 0, 1, 2
KIND_NAMES = {BIRTH: "birth", DEATH: "death", HOP: "hop"}


class RateBoundError(ValueError):
    """A propensity exceeded the bound declared by the rate model."""


@dataclass(frozen=True)
class PropensityTable:
    birth: np.ndarray
    death: np.ndarray
    hop: np.ndarray
    total: float

    def flat(self) -> np.ndarray:
        """All propensities in event order: births, deaths, then hops row-major."""
        return np.concatenate([self.birth, self.death, self.hop.ravel()])


@dataclass(frozen=True)
class EventRecord:
    """One jump: ``site`` is the birth/death site or the hop source; ``target`` the hop target."""

    time: float
    kind: int
    site: int
    target: int = -1

    @property
    def kind_name(self) -> str:
        return KIND_NAMES[self.kind]


def propensities(c: Configuration, model: RateModel, check_bounds: bool = True) -> PropensityTable:
    """Propensity table of the configuration ``c``."""
    c.check_space(model.space)
    n = c.scale_n
    k = c.counts.astype(float)
    nu = k / n
    birth = n * model.birth(nu, n)
    death = model.death(nu, n) * k
    hop = model.hop(nu, n) * k[:, None]
    if check_bounds:
        bnd = model.bounds
        slack = 1.0 + 1e-12
        if (
            birth.sum() > n * bnd.birth * slack
            or np.any(death > bnd.death * k * slack)
            or np.any(hop.sum(axis=1) > bnd.hop * k * slack)
        ):
            raise RateBoundError(f"propensity above the declared rate bound at counts {c.counts.tolist()}")
    for part in (birth, death, hop):
        if np.any(part < 0):
            raise RateBoundError("negative propensity")
    total = float(birth.sum() + death.sum() + hop.sum())
    return PropensityTable(birth, death, hop, total)


def _apply(counts: np.ndarray, event: int, S: int) -> tuple[np.ndarray, int, int, int]:
    """Apply the flat event index to a count vector; returns (new counts, kind, site, target)."""
    new = counts.copy()
    if event < S:
        new[event] += 1
        return new, BIRTH, event, -1
    if event < 2 * S:
        s = event - S
        new[s] -= 1
        return new, DEATH, s, -1
    s, r = divmod(event - 2 * S, S)
    new[s] -= 1
    new[r] += 1
    return new, HOP, s, r


def step(
    c: Configuration, model: RateModel, rng: np.random.Generator, t: float = 0.0,
    table: PropensityTable | None = None,
):
    """One SSA step from ``c`` at time ``t``.

    Returns ``(dt, event, c_next)`` with the event stamped at ``t + dt``; in
    an absorbing state (zero total propensity) returns ``(inf, None, c)``.
    """
    table = table or propensities(c, model)
    if table.total <= 0.0:
        return float("inf"), None, c
    dt = rng.exponential(1.0 / table.total)
    flat = table.flat()
    event = int(np.searchsorted(np.cumsum(flat), rng.random() * table.total, side="right"))
    event = min(event, flat.size - 1)
    while flat[event] == 0.0:  # guard against landing on a zero-width slot at the end
        event -= 1
    counts, kind, s, r = _apply(c.counts, event, c.counts.size)
    return dt, EventRecord(t + dt, kind, s, r), Configuration(c.scale_n, counts)


def trajectory_seed(base_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))


@dataclass
class TrajectoryEnsemble:
    """Snapshots of ``M`` trajectories at common times.

    ``snapshots[m, i]`` is the count vector of trajectory ``m`` at
    ``times[i]`` (state after every jump at or before that time).
    """

    n: int
    times: np.ndarray
    snapshots: np.ndarray
    initial: np.ndarray
    base_seed: int
    events: list | None = None

    @property
    def M(self) -> int:
        return self.snapshots.shape[0]

    def time_index(self, t: float, atol: float = 1e-12) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol:
            raise KeyError(f"no snapshot at t={t}")
        return i

    def replay(self, m: int) -> np.ndarray:
        """Rebuild the snapshots of trajectory ``m`` from its initial state and event log."""
        if self.events is None:
            raise ValueError("ensemble was run without event logs")
        S = self.initial.size
        counts = self.initial.copy()
        out = np.empty((len(self.times), S), dtype=np.int64)
        log_m = self.events[m]
        j = 0
        for i, t in enumerate(self.times):
            while j < len(log_m) and log_m[j].time <= t:
                e = log_m[j]
                if e.kind == BIRTH:
                    counts[e.site] += 1
                elif e.kind == DEATH:
                    counts[e.site] -= 1
                else:
                    counts[e.site] -= 1
                    counts[e.target] += 1
                j += 1
            out[i] = counts
        return out


class _PropensityCache:
    """Memoized flat propensities keyed by count vector (the dense-table fast path)."""

    def __init__(self, model: RateModel, n: int, check_bounds: bool = True):
        self.model = model
        self.n = n
        self.check_bounds = check_bounds
        self.table: dict[bytes, tuple[np.ndarray, float]] = {}

    def __call__(self, counts: np.ndarray):
        key = counts.tobytes()
        hit = self.table.get(key)
        if hit is None:
            t = propensities(Configuration(self.n, counts), self.model, self.check_bounds)
            flat = t.flat()
            hit = (np.cumsum(flat), t.total)
            self.table[key] = hit
        return hit


def _simulate(counts0, times, cache: _PropensityCache, rng, record: bool):
    S = counts0.size
    counts = counts0.copy()
    out = np.empty((len(times), S), dtype=np.int64)
    events = [] if record else None
    t = 0.0
    i = 0
    T = times[-1]
    while True:
        cum, total = cache(counts)
        if total <= 0.0:
            t_next = np.inf
        else:
            t_next = t + rng.exponential(1.0 / total)
        while i < len(times) and times[i] < t_next:
            out[i] = counts
            i += 1
        if t_next > T:
            break
        event = int(np.searchsorted(cum, rng.random() * total, side="right"))
        event = min(event, cum.size - 1)
        while event > 0 and cum[event] == cum[event - 1]:
            event -= 1
        counts, kind, s, r = _apply(counts, event, S)
        t = t_next
        if record:
            events.append(EventRecord(t, kind, s, r))
    return out, events


def run_ensemble(
    c0: Configuration,
    model: RateModel,
    T: float,
    snapshot_times,
    M: int,
    base_seed: int = 0,
    threads: int = 1,
    record_events: bool = True,
    check_bounds: bool = True,
) -> TrajectoryEnsemble:
    """Simulate ``M`` independent trajectories from ``c0`` up to ``T``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    times = np.asarray(sorted(snapshot_times), dtype=float)
    if times.size == 0 or times[0] < 0 or times[-1] > T:
        raise ValueError("snapshot times must lie in [0, T]")
    c0.check_space(model.space)
    counts0 = c0.counts.astype(np.int64)
    S = counts0.size

    def work(indices):
        cache = _PropensityCache(model, c0.scale_n, check_bounds)
        res = []
        for m in indices:
            rng = np.random.default_rng(trajectory_seed(base_seed, m))
            res.append(_simulate(counts0, times, cache, rng, record_events))
        return res

    chunks = np.array_split(np.arange(M), max(1, int(threads)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(chunks[0])]
    snaps = np.empty((M, times.size, S), dtype=np.int64)
    events = [] if record_events else None
    m = 0
    for part in parts:
        for out, ev in part:
            snaps[m] = out
            if record_events:
                events.append(ev)
            m += 1
    return TrajectoryEnsemble(c0.scale_n, times, snaps, counts0, int(base_seed), events)


def w1_to_dirac(ensemble: TrajectoryEnsemble, t: float, target, space) -> tuple[float, float]:
    """Monte Carlo estimate of ``E |nu_t - u pi|`` and its standard error."""
    i = ensemble.time_index(t)
    u = np.asarray(getattr(target, "values", target), dtype=float)
    dist = np.abs(ensemble.snapshots[:, i, :] / ensemble.n - u * space.weights).sum(axis=1)
    err = float(dist.std(ddof=1) / np.sqrt(dist.size)) if dist.size > 1 else 0.0
    return float(dist.mean()), err


def empirical_law(ensemble: TrajectoryEnsemble, t: float, K_max: int) -> MasterDistribution:
    """Histogram of the snapshots at ``t`` on the box ``{0..K_max}^S``."""
    i = ensemble.time_index(t)
    snaps = ensemble.snapshots[:, i, :]
    index = StateSpaceIndex(snaps.shape[1], K_max)
    inside = np.all(snaps <= K_max, axis=1)
    probs = np.bincount(snaps[inside] @ index.strides, minlength=index.size) / ensemble.M
    return MasterDistribution(probs, index, deficit=float(1.0 - inside.mean()))


def mean_counts(ensemble: TrajectoryEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Per-time ensemble mean of the count vectors and its standard error."""
    mean = ensemble.snapshots.mean(axis=0)
    se = ensemble.snapshots.std(axis=0, ddof=1) / np.sqrt(ensemble.M) if ensemble.M > 1 else np.zeros_like(mean)
    return mean, se


SNAPSHOT_CSV_COLUMNS = ("trajectory", "time", "site", "count")


def write_snapshots_csv(ensemble: TrajectoryEnsemble, out: str | Path) -> None:
    """Long-format table with one row per (trajectory, time, site)."""
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_CSV_COLUMNS)
        for m in range(ensemble.M):
            for i, t in enumerate(ensemble.times):
                for s, k in enumerate(ensemble.snapshots[m, i]):
                    w.writerow([m, repr(float(t)), s, int(k)])


def ensemble_summary(ensemble: TrajectoryEnsemble) -> dict:
    mean, se = mean_counts(ensemble)
    n_events = [len(e) for e in ensemble.events] if ensemble.events is not None else None
    return {
        "n": ensemble.n,
        "M": ensemble.M,
        "base_seed": ensemble.base_seed,
        "times": ensemble.times.tolist(),
        "mean_counts": mean.tolist(),
        "stderr_counts": se.tolist(),
        "mean_events": None if n_events is None else float(np.mean(n_events)),
    }

