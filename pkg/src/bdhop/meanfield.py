"""Deterministic mean-field limit: nonlocal Fisher-KPP equation for the density ``u``.

With limit rates the density obeys

    du_s/dt = r_b(s) - r_d(s) u_s + sum_r (u_r - u_s) r_h(s, r) pi_r,

and the measure ``nu = u pi`` is driven by the birth-death flux
``lam_bd = b_nu - d_nu`` and the hopping flux ``lam_h = (h_nu - h_nu^T) / 2``,
where ``b_nu(s) = r_b pi_s``, ``d_nu(s) = r_d u_s pi_s`` and
``h_nu(s, r) = hop_{s->r}(nu) u_s pi_s``.  The net inflow at ``s`` from the
antisymmetric hopping flux is ``sum_r lam_h(r, s) - lam_h(s, r)``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from bdhop.ggf import hellinger_sq, upsilon
from bdhop.measure import SiteSpace, entropy_vs_activity
from bdhop.rates import RateModel, density_rates, meanfield_rhs_array

log = logging.getLogger(__name__)

NEG_TOL = 1e-12
LOG_GUARD = 1e-8


class MeanFieldError(RuntimeError):
    """Raised when the mean-field integration produces invalid densities."""


@dataclass(frozen=True)
class MeanFieldFluxes:
    """Measure-valued intensities and optimal fluxes at one density."""

    b_nu: np.ndarray
    d_nu: np.ndarray
    h_nu: np.ndarray

    @property
    def lam_bd(self) -> np.ndarray:
        return self.b_nu - self.d_nu

    @property
    def lam_h(self) -> np.ndarray:
        return 0.5 * (self.h_nu - self.h_nu.T)


def meanfield_intensities(model: RateModel, u) -> MeanFieldFluxes:
    """``b_nu``, ``d_nu`` and ``h_nu`` at the density ``u``."""
    u = np.asarray(getattr(u, "values", u), dtype=float)
    pi = model.space.weights
    nu = u * pi
    return MeanFieldFluxes(
        b_nu=model.birth(nu),
        d_nu=model.death(nu) * nu,
        h_nu=model.hop(nu) * nu[:, None],
    )


def divergence_free_inflow(lam_h: np.ndarray) -> np.ndarray:
    """Net hopping inflow ``sum_r lam_h(r, s) - lam_h(s, r)`` at each site."""
    return lam_h.sum(axis=0) - lam_h.sum(axis=1)


def flux_velocity(lam_bd: np.ndarray, lam_h: np.ndarray) -> np.ndarray:
    """``d nu / dt`` generated by a pair of fluxes."""
    return lam_bd + divergence_free_inflow(lam_h)


@dataclass(frozen=True)
class MeanFieldPath:
    """Densities (and optionally fluxes) on a time grid."""

    times: np.ndarray
    u: np.ndarray
    space: SiteSpace
    lam_bd: np.ndarray | None = None
    lam_h: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    def measures(self) -> np.ndarray:
        return self.u * self.space.weights

    def with_fluxes(self, lam_bd, lam_h) -> "MeanFieldPath":
        return MeanFieldPath(self.times, self.u, self.space, np.asarray(lam_bd), np.asarray(lam_h))


def _rk4_step(model, u, h):
    f = lambda x: meanfield_rhs_array(model, x)  # noqa: E731
    k1 = f(u)
    k2 = f(u + 0.5 * h * k1)
    k3 = f(u + 0.5 * h * k2)
    k4 = f(u + h * k3)
    return u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_segment(model, u, span, dt, max_halvings):
    """Advance ``u`` by ``span`` with RK4 steps of size at most ``dt``; halve on negativity."""
    steps = max(1, int(np.ceil(span / dt - 1e-9)))
    h = span / steps
    done, sub, halvings = 0.0, h, 0
    while done < span * (1.0 - 1e-14):
        size = min(sub, span - done)
        nxt = _rk4_step(model, u, size)
        if not np.all(np.isfinite(nxt)):
            raise MeanFieldError("non-finite density")
        if nxt.min() < -NEG_TOL:
            halvings += 1
            if halvings > max_halvings:
                raise MeanFieldError(f"density {nxt.min():.3e} < 0 after {max_halvings} halvings")
            sub = size / 2.0
            continue
        u, done = nxt, done + size
    return u


def integrate_meanfield(
    u0,
    model: RateModel,
    T: float,
    dt: float = 0.01,
    method: str = "rk4",
    output_every: int = 1,
    t_eval=None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_halvings: int = 30,
) -> MeanFieldPath:
    """Integrate the mean-field equation on ``[0, T]``.

    By default the solution is recorded every ``output_every`` steps of the
    uniform grid with spacing ``<= dt``; ``t_eval`` overrides the output times.
    ``method="rk4"`` steps between consecutive output times with step size at
    most ``dt`` and retries a step with half the size whenever it would push a
    density below ``-1e-12``.  ``method="adaptive"`` uses a Dormand-Prince
    pair.  The path carries the optimal fluxes at every recorded time.
    """
    u = np.array(getattr(u0, "values", u0), dtype=float)
    if u.shape != (model.space.size,):
        raise ValueError("initial density has the wrong number of sites")
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise ValueError("initial density must be finite and nonnegative")
    if t_eval is None:
        steps = max(1, int(np.ceil(T / dt - 1e-9)))
        grid = np.linspace(0.0, T, steps + 1)
        keep = np.arange(0, steps + 1, output_every)
        if keep[-1] != steps:
            keep = np.append(keep, steps)
        times = grid[keep]
    else:
        times = np.unique(np.concatenate([[0.0], np.asarray(t_eval, dtype=float)]))
        if times[-1] > T + 1e-12 or times[0] < 0:
            raise ValueError("output times must lie in [0, T]")

    if method == "rk4":
        out_u = np.empty((len(times), u.size))
        out_u[0] = u
        for i in range(1, len(times)):
            u = _rk4_segment(model, u, times[i] - times[i - 1], dt, max_halvings)
            out_u[i] = u
    elif method == "adaptive":
        sol = solve_ivp(
            lambda t, x: meanfield_rhs_array(model, x), (0.0, float(times[-1])), u,
            method="DOP853", t_eval=times, rtol=rtol, atol=atol,
        )
        if not sol.success:
            raise MeanFieldError(sol.message)
        out_u = sol.y.T.copy()
        if out_u.min() < -NEG_TOL:
            raise MeanFieldError(f"density {out_u.min():.3e} < 0")
    else:
        raise ValueError(f"unknown method {method!r}")

    lam_bd = np.empty_like(out_u)
    lam_h = np.empty((len(times), u.size, u.size))
    for i, ui in enumerate(out_u):
        fl = meanfield_intensities(model, np.clip(ui, 0.0, None))
        lam_bd[i], lam_h[i] = fl.lam_bd, fl.lam_h
    return MeanFieldPath(times, out_u, model.space, lam_bd, lam_h)


def meanfield_energy(u, space: SiteSpace) -> float:
    """Driving energy ``Ent(u pi | pi)``."""
    return entropy_vs_activity(u, space)


def meanfield_fisher(u, model: RateModel, space: SiteSpace | None = None) -> float:
    """Fisher information via ``2 sum (sqrt u - 1)^2 r_b pi + sum_{s,r} (sqrt u_r - sqrt u_s)^2 r_h pi_s pi_r``."""
    space = space or model.space
    u = np.asarray(getattr(u, "values", u), dtype=float)
    if np.any(u < 0):
        raise ValueError("density must be nonnegative")
    r_b, _, r_h = density_rates(model, u)
    pi = space.weights
    root = np.sqrt(u)
    bd = 2.0 * np.sum((root - 1.0) ** 2 * r_b * pi)
    hop = np.sum((root[None, :] - root[:, None]) ** 2 * r_h * pi[:, None] * pi[None, :])
    return float(bd + hop)


def meanfield_fisher_hellinger(u, model: RateModel) -> float:
    """Fisher information as ``4 H^2(b_nu, d_nu) + 2 H^2(h_nu, h_nu^T)``."""
    fl = meanfield_intensities(model, u)
    return 4.0 * hellinger_sq(fl.b_nu, fl.d_nu) + 2.0 * hellinger_sq(fl.h_nu, fl.h_nu.T)


def meanfield_dissipation(u, lam_bd, lam_h, model: RateModel) -> float:
    """``2 sum Upsilon(lam_bd / 2, b_nu, d_nu) + sum_{s,r} Upsilon(lam_h, h_nu, h_nu^T)``."""
    fl = meanfield_intensities(model, u)
    lam_bd = np.asarray(getattr(lam_bd, "values", lam_bd), dtype=float)
    lam_h = np.asarray(lam_h, dtype=float)
    r_bd = 2.0 * np.sum(upsilon(lam_bd / 2.0, fl.b_nu, fl.d_nu))
    r_h = np.sum(upsilon(lam_h, fl.h_nu, fl.h_nu.T))
    return float(r_bd + r_h)


def entropy_force(u) -> tuple[np.ndarray, np.ndarray]:
    """``-grad E'``: ``-log u_s`` on birth-death edges and ``log u_s - log u_r`` on hop edges."""
    u = np.asarray(getattr(u, "values", u), dtype=float)
    logu = np.log(u)
    return -logu, logu[:, None] - logu[None, :]


def legendre_pairing(u, lam_bd, lam_h) -> float:
    """``sum lam * (-grad E')`` with the hopping pairing over ordered pairs."""
    z_bd, z_h = entropy_force(u)
    return float(np.sum(np.asarray(lam_bd) * z_bd) + np.sum(np.asarray(lam_h) * z_h))


@dataclass(frozen=True)
class MeanFieldDiagnostics:
    times: np.ndarray
    energy: np.ndarray
    fisher: np.ndarray
    dissipation: np.ndarray

    @property
    def edb_partial(self) -> np.ndarray:
        f = self.fisher + self.dissipation
        integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(self.times) * (f[1:] + f[:-1]))])
        return integral + self.energy - self.energy[0]


def meanfield_diagnostics(path: MeanFieldPath, model: RateModel) -> MeanFieldDiagnostics:
    if path.lam_bd is None or path.lam_h is None:
        raise ValueError("path carries no fluxes")
    nt = len(path)
    E, D, R = np.empty(nt), np.empty(nt), np.empty(nt)
    for i in range(nt):
        u = np.clip(path.u[i], 0.0, None)
        E[i] = meanfield_energy(u, path.space)
        D[i] = meanfield_fisher(u, model, path.space)
        R[i] = meanfield_dissipation(u, path.lam_bd[i], path.lam_h[i], model)
    return MeanFieldDiagnostics(path.times.copy(), E, D, R)


def edb_residual_mf(path: MeanFieldPath, model: RateModel) -> float:
    """Trapezoidal ``I([0, T]) = int (R + D) dt + E(T) - E(0)`` along a path with fluxes."""
    return float(meanfield_diagnostics(path, model).edb_partial[-1])


@dataclass(frozen=True)
class ChainRuleReport:
    max_deviation: float
    checked: int
    skipped: int


def chain_rule_check(path: MeanFieldPath, guard: float = LOG_GUARD) -> ChainRuleReport:
    """Compare a central difference of ``E(nu_t)`` with ``sum_s log u_s dnu_s/dt``.

    ``dnu/dt`` is taken from the recorded fluxes.  Interior times where
    ``min u < guard`` are skipped.
    """
    if path.lam_bd is None or path.lam_h is None:
        raise ValueError("path carries no fluxes")
    t = path.times
    E = np.array([meanfield_energy(np.clip(u, 0.0, None), path.space) for u in path.u])
    worst, checked, skipped = 0.0, 0, 0
    for i in range(1, len(t) - 1):
        u = path.u[i]
        if u.min() < guard:
            skipped += 1
            continue
        fd = (E[i + 1] - E[i - 1]) / (t[i + 1] - t[i - 1])
        exact = float(np.log(u) @ flux_velocity(path.lam_bd[i], path.lam_h[i]))
        worst = max(worst, abs(fd - exact))
        checked += 1
    if skipped:
        log.info("chain rule: skipped %d times with min u < %g", skipped, guard)
    return ChainRuleReport(worst, checked, skipped)


def linear_solution(t, u0: float, beta: float, delta: float):
    """Closed form ``beta/delta + (u0 - beta/delta) exp(-delta t)`` for constant rates."""
    ratio = beta / delta
    return ratio + (u0 - ratio) * np.exp(-delta * np.asarray(t, dtype=float))


MEANFIELD_CSV_COLUMNS = ("t", "u", "energy", "fisher", "edb_partial")


def write_meanfield_csv(path: MeanFieldPath, model: RateModel, out: str | Path) -> None:
    """Write ``t, u_1..u_S, energy, fisher, edb_partial`` rows."""
    diag = meanfield_diagnostics(path, model)
    S = path.u.shape[1]
    header = ["t"] + [f"u_{s + 1}" for s in range(S)] + ["energy", "fisher", "edb_partial"]
    edb = diag.edb_partial
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(path.times):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in path.u[i]]
                       + [repr(float(diag.energy[i])), repr(float(diag.fisher[i])), repr(float(edb[i]))])
