"""Large-population sweeps: particle laws against the mean-field solution.

A :class:`SweepPlan` fixes a rate model, an initial density ``u0`` and a list
of scales ``n``.  For every ``n`` the harness builds a well-prepared initial
law, evolves it with the master solver and/or the SSA, and records at each
observation time the distance to the Dirac mass at the mean-field state, the
scaled entropy and its limit, and (master mode) the propagation-of-chaos
entropy.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.stats import poisson

from bdhop.master import (
    MasterDistribution,
    SolverError,
    StateSpaceIndex,
    TruncationError,
    build_generator,
    expected_tv_distance,
    integrate_fke,
    poc_entropy,
    poisson_reference,
    product_poisson,
    scaled_entropy,
)
from bdhop.meanfield import integrate_meanfield, meanfield_energy
from bdhop.measure import Configuration, SiteSpace
from bdhop.rates import RateModel
from bdhop.ssa import run_ensemble, w1_to_dirac

log = logging.getLogger(__name__)


def six_sigma_cap(n: int, u0, space: SiteSpace) -> int:
    """Smallest cap with ``n max(u0) pi + 6 sqrt(n max pi) <= K_max``."""
    u0 = np.asarray(u0, dtype=float)
    top = n * max(float(np.max(u0)), 1.0) * float(np.max(space.weights))
    return int(np.ceil(top + 6.0 * np.sqrt(n * float(np.max(space.weights)))))


def auto_cap(n: int, u0, space: SiteSpace, tol: float = 1e-6, headroom: float = 1.5, u_peak: float = 1.0) -> int:
    """Cap meeting the six-sigma rule whose Poisson tail stays far below ``tol``.

    The tail is evaluated at ``headroom`` times the largest mean per site
    among the initial density, ``u_peak`` (e.g. the maximum along the
    mean-field path) and the equilibrium ``u = 1``; it must be below
    ``tol / 1000``.
    """
    top = max(float(np.max(u0)), float(u_peak), 1.0)
    mean = headroom * n * top * float(np.max(space.weights))
    tail = int(poisson.isf(tol * 1e-3, mean)) + 1
    return max(six_sigma_cap(n, u0, space), tail)


@dataclass
class SweepPlan:
    """Inputs of an ``n``-sweep.

    ``K_max`` may be an int (same cap for every ``n``), a dict keyed by ``n``,
    or ``None`` for :func:`auto_cap` of each ``n``.
    """

    model: RateModel
    u0: np.ndarray
    n_list: list
    T: float
    obs_times: list
    mode: str = "master"
    initial: str = "dirac"
    K_max: int | dict | None = None
    M: int = 1000
    seed: int = 0
    threads: int = 1
    method: str = "adaptive"
    mf_dt: float = 1e-3
    deficit_tol: float = 1e-6
    lipschitz: bool = False
    u_peak: float = 1.0

    def __post_init__(self):
        self.u0 = np.asarray(getattr(self.u0, "values", self.u0), dtype=float)
        self.n_list = [int(n) for n in self.n_list]
        self.obs_times = sorted(float(t) for t in self.obs_times)

    @property
    def space(self) -> SiteSpace:
        return self.model.space

    def cap(self, n: int) -> int:
        if self.K_max is None:
            return auto_cap(n, self.u0, self.space, self.deficit_tol, u_peak=self.u_peak)
        if isinstance(self.K_max, dict):
            return int(self.K_max[n])
        return int(self.K_max)

    def validate(self) -> None:
        if not self.n_list:
            raise ValueError("empty n-list")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n-list must be strictly increasing")
        if self.u0.shape != (self.space.size,) or np.any(self.u0 < 0):
            raise ValueError("u0 must be a nonnegative density on the site space")
        if self.mode not in ("master", "ssa", "both"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.initial not in ("dirac", "poisson"):
            raise ValueError(f"unknown initial law {self.initial!r}")
        if self.initial == "poisson" and self.mode == "ssa":
            raise ValueError("product-Poisson initial data is only supported in master mode")
        if not self.obs_times or self.obs_times[0] < 0 or self.obs_times[-1] > self.T:
            raise ValueError("observation times must lie in [0, T]")
        if self.mode in ("master", "both"):
            for n in self.n_list:
                need = six_sigma_cap(n, self.u0, self.space)
                if self.cap(n) < need:
                    raise ValueError(f"K_max={self.cap(n)} below the six-sigma cap {need} for n={n}")


@dataclass
class SweepRow:
    n: int
    t: float
    w1_to_dirac: float = float("nan")
    w1_ssa: float = float("nan")
    w1_ssa_se: float = float("nan")
    entropy_n: float = float("nan")
    entropy_limit: float = float("nan")
    poc_entropy: float = float("nan")
    deficit: float = float("nan")
    runtime: float = float("nan")

    @property
    def entropy_gap(self) -> float:
        return abs(self.entropy_n - self.entropy_limit)


SWEEP_CSV_COLUMNS = (
    "n", "t", "w1_to_dirac", "w1_ssa", "w1_ssa_se", "entropy_n", "entropy_limit",
    "entropy_gap", "poc_entropy", "deficit",
)


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    rounding: dict = field(default_factory=dict)
    lipschitz: dict = field(default_factory=dict)
    lipschitz_bound: float = float("nan")

    def column(self, name: str, t: float) -> tuple[list, list]:
        """``(n values, metric values)`` at observation time ``t``, sorted by ``n``."""
        sel = sorted((r for r in self.rows if abs(r.t - t) < 1e-12), key=lambda r: r.n)
        return [r.n for r in sel], [getattr(r, name) for r in sel]

    @property
    def times(self) -> list:
        return sorted({r.t for r in self.rows})

    def trend(self, name: str, strict: bool = True) -> dict:
        """Per-time monotonicity in ``n`` and the last/first ratio."""
        out = {}
        for t in self.times:
            ns, vals = self.column(name, t)
            vals = np.asarray(vals, dtype=float)
            if len(vals) < 2:
                continue
            diffs = np.diff(vals)
            mono = bool(np.all(diffs < 0)) if strict else bool(np.all(diffs <= 1e-15))
            ratio = float(vals[-1] / vals[0]) if vals[0] != 0 else float("nan")
            out[t] = {"n": ns, "values": vals.tolist(), "monotone": mono, "ratio": ratio}
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_CSV_COLUMNS)
            for r in sorted(self.rows, key=lambda r: (r.n, r.t)):
                w.writerow([r.n, repr(r.t)] + [repr(float(getattr(r, c))) for c in SWEEP_CSV_COLUMNS[2:]])

    def summary(self) -> dict:
        def clean(x):
            return {str(k): v for k, v in x.items()}

        return {
            "trend_w1": clean(self.trend("w1_to_dirac")),
            "trend_entropy_gap": clean(self.trend("entropy_gap")),
            "trend_poc": clean(self.trend("poc_entropy", strict=False)),
            "failures": self.failures,
            "rounding": {str(k): v for k, v in self.rounding.items()},
            "lipschitz": {str(k): v for k, v in self.lipschitz.items()},
            "lipschitz_bound": self.lipschitz_bound,
            "runtime_seconds": {str(r.n): r.runtime for r in self.rows},
        }

    def write(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.to_csv(out_dir / "sweep.csv")
        (out_dir / "sweep_summary.json").write_text(json.dumps(self.summary(), indent=2, default=float))


def rounded_counts(u0, n: int, space: SiteSpace) -> tuple[np.ndarray, float]:
    """Nearest-integer counts ``round(n u0 pi)`` and the rounding error in TV."""
    target = n * np.asarray(getattr(u0, "values", u0), dtype=float) * space.weights
    k = np.rint(target).astype(np.int64)
    return k, float(np.abs(k - target).sum()) / n


def dirac_initial_law(u0, n: int, space: SiteSpace, mode: str = "master", K_max: int | None = None):
    """Well-prepared Dirac initial data at the rounded state.

    Returns ``(law, rounding_error)`` where ``law`` is a :class:`Configuration`
    in SSA mode and a Dirac :class:`MasterDistribution` in master mode.
    """
    k, err = rounded_counts(u0, n, space)
    if mode == "ssa":
        return Configuration(n, k), err
    if K_max is None:
        raise ValueError("master mode needs K_max")
    if np.any(k > K_max):
        raise ValueError(f"rounded state {k.tolist()} exceeds K_max={K_max}")
    return MasterDistribution.dirac(k, StateSpaceIndex(space.size, K_max)), err


def w1_between_laws(P, Q, n: int) -> float:
    """Wasserstein-1 distance between two laws on the same box, cost ``|nu - nu'|_TV``.

    On the lattice the TV cost is ``1/n`` times the path length, so the
    optimal transport is a min-cost flow on the nearest-neighbour graph.
    """
    index = P.index
    if Q.index != index:
        raise ValueError("laws live on different boxes")
    p = np.asarray(P.probs, dtype=float)
    q = np.asarray(Q.probs, dtype=float)
    p = np.clip(p, 0, None) / np.clip(p, 0, None).sum()
    q = np.clip(q, 0, None) / np.clip(q, 0, None).sum()
    tails, heads = [], []
    all_idx = np.arange(index.size)
    for s in range(index.S):
        lo = all_idx[index.states[:, s] < index.K_max]
        hi = lo + index.strides[s]
        tails += [lo, hi]
        heads += [hi, lo]
    tails = np.concatenate(tails)
    heads = np.concatenate(heads)
    E = tails.size
    cols = np.arange(E)
    A = sp.coo_matrix(
        (np.concatenate([-np.ones(E), np.ones(E)]), (np.concatenate([tails, heads]), np.concatenate([cols, cols]))),
        shape=(index.size, E),
    ).tocsr()
    res = linprog(np.full(E, 1.0 / n), A_eq=A, b_eq=q - p, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def lipschitz_bound(model: RateModel, mass: float) -> float:
    """Speed bound ``B_b + (B_d + 2 B_h) * mass`` for ``d(P_t, P_s) / |t - s|``.

    Each birth or death moves ``nu`` by ``1/n`` in TV and each hop by ``2/n``;
    the total jump rate is at most ``n (B_b + (B_d + B_h) |nu|)``.
    """
    b = model.bounds
    return float(b.birth + (b.death + 2.0 * b.hop) * mass)


def _reference_path(plan: SweepPlan):
    times = sorted(set([0.0] + plan.obs_times))
    return integrate_meanfield(plan.u0, plan.model, plan.T, dt=plan.mf_dt, t_eval=times)


def _initial_master_law(plan: SweepPlan, n: int):
    K = plan.cap(n)
    if plan.initial == "dirac":
        law, err = dirac_initial_law(plan.u0, n, plan.space, "master", K)
        return law, err
    index = StateSpaceIndex(plan.space.size, K)
    law = product_poisson(n * plan.u0 * plan.space.weights, index)
    if law.deficit > plan.deficit_tol:
        raise TruncationError(f"initial Poisson law loses {law.deficit:.2e} at K_max={K}")
    return law, 0.0


def _master_cell(plan: SweepPlan, n: int, mf) -> tuple[list, dict, float | None]:
    t0 = time.perf_counter()
    P0, err = _initial_master_law(plan, n)
    index = P0.index
    gen = build_generator(plan.model, n, index)
    ref = poisson_reference(n, plan.space, index.K_max, tol=plan.deficit_tol)
    path = integrate_fke(P0, gen, plan.T, method=plan.method, t_eval=mf.times, outflow_tol=plan.deficit_tol)
    rows = []
    for i, t in enumerate(mf.times):
        if t not in plan.obs_times:
            continue
        P = path.at(i)
        u = mf.u[i]
        row = SweepRow(n=n, t=float(t))
        row.w1_to_dirac = expected_tv_distance(P, u * plan.space.weights, n)
        row.entropy_n = scaled_entropy(P, ref, n)
        row.entropy_limit = meanfield_energy(u, plan.space)
        row.deficit = float(path.deficits[i])
        try:
            row.poc_entropy = poc_entropy(P, u, plan.space, n, tol=plan.deficit_tol)
        except TruncationError as exc:
            log.warning("n=%d t=%g: %s", n, t, exc)
        rows.append(row)
    lip = None
    if plan.lipschitz and len(mf.times) > 1:
        speeds = [
            w1_between_laws(path.at(i), path.at(i + 1), n) / (mf.times[i + 1] - mf.times[i])
            for i in range(len(mf.times) - 1)
        ]
        lip = float(max(speeds))
    elapsed = time.perf_counter() - t0
    for r in rows:
        r.runtime = elapsed
    mass = float(np.max(path.probs @ index.total_counts)) / n
    return rows, {"rounding_error": err, "mass": mass}, lip


def _ssa_cell(plan: SweepPlan, n: int, mf) -> list:
    t0 = time.perf_counter()
    c0, _ = dirac_initial_law(plan.u0, n, plan.space, "ssa")
    ens = run_ensemble(c0, plan.model, plan.T, list(mf.times), plan.M, base_seed=plan.seed + n,
                       record_events=False)
    rows = []
    for i, t in enumerate(mf.times):
        if t not in plan.obs_times:
            continue
        est, se = w1_to_dirac(ens, t, mf.u[i], plan.space)
        rows.append(SweepRow(n=n, t=float(t), w1_ssa=est, w1_ssa_se=se))
    elapsed = time.perf_counter() - t0
    for r in rows:
        r.runtime = elapsed
    return rows


def run_sweep(plan: SweepPlan) -> SweepReport:
    """Run every ``n`` of the plan; failures are recorded and the sweep continues."""
    plan.validate()
    mf = _reference_path(plan)
    plan.u_peak = max(plan.u_peak, float(mf.u.max()))
    report = SweepReport()
    masses = []

    def cell(n):
        out = {"n": n, "rows": {}, "info": None, "lip": None, "error": None}
        try:
            if plan.mode in ("master", "both"):
                rows, info, lip = _master_cell(plan, n, mf)
                out["rows"] = {r.t: r for r in rows}
                out["info"], out["lip"] = info, lip
            if plan.mode in ("ssa", "both"):
                for r in _ssa_cell(plan, n, mf):
                    base = out["rows"].setdefault(r.t, SweepRow(n=n, t=r.t))
                    base.w1_ssa, base.w1_ssa_se = r.w1_ssa, r.w1_ssa_se
                    if plan.mode == "ssa":
                        base.w1_to_dirac = r.w1_ssa
                        base.runtime = r.runtime
        except (SolverError, TruncationError, ValueError, RuntimeError) as exc:
            out["error"] = f"{type(exc).__name__}: {exc}"
        return out

    if plan.threads > 1:
        with ThreadPoolExecutor(max_workers=plan.threads) as pool:
            results = list(pool.map(cell, plan.n_list))
    else:
        results = [cell(n) for n in plan.n_list]

    for res in sorted(results, key=lambda r: r["n"]):
        n = res["n"]
        if res["error"]:
            report.failures.append({"n": n, "error": res["error"]})
            log.warning("n=%d failed: %s", n, res["error"])
        report.rows.extend(res["rows"][t] for t in sorted(res["rows"]))
        if res["info"]:
            report.rounding[n] = res["info"]["rounding_error"]
            masses.append(res["info"]["mass"])
        if res["lip"] is not None:
            report.lipschitz[n] = res["lip"]
    if masses:
        report.lipschitz_bound = lipschitz_bound(plan.model, max(masses))
    return report


def poc_sweep(plan: SweepPlan) -> dict:
    """Propagation-of-chaos entropies ``{t: {n: value}}`` (master mode).

    Cells whose reference measure is truncated beyond tolerance are left
    out; the report's failures list says why.
    """
    if plan.mode != "master":
        raise ValueError("propagation of chaos needs the master solver")
    report = run_sweep(plan)
    table: dict = {}
    for r in report.rows:
        if np.isfinite(r.poc_entropy):
            table.setdefault(r.t, {})[r.n] = r.poc_entropy
    return {"table": table, "report": report}
