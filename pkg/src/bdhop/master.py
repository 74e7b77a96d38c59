"""Forward Kolmogorov (master) equation on a truncated configuration space.

States are count vectors ``k`` in the box ``{0, ..., K_max}^S``; the scaled
configuration is ``nu = k / n``.  Jump rates carry the factor ``n`` of the
scaled generator: births ``k -> k + e_s`` at ``n b_s(nu)``, deaths
``k -> k - e_s`` at ``d(nu, s) k_s`` and hops ``k -> k - e_s + e_r`` at
``h_{s->r}(nu) k_s``.  Transitions leaving the box are clipped: their rate is
kept on the diagonal, so probability leaks out of the box and is tracked as
the truncation deficit.

Quantities of the generalized gradient structure live on edges.  With
``a = P(k) q(k -> k') / n`` and ``b = P(k') q(k' -> k) / n`` the optimal
fluxes are ``a - b`` on birth-death edges and ``(a - b) / 2`` on each ordered
hop edge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.special import gammaln
from scipy.stats import poisson

from bdhop.ggf import hellinger_sq, psi_star, upsilon
from bdhop.measure import SiteSpace, kl_divergence
from bdhop.rates import RateModel

log = logging.getLogger(__name__)

DIAG_FLOOR = 1e-300


class SolverError(RuntimeError):
    """Raised when a master-equation integration has to be aborted."""


class TruncationError(ValueError):
    """Raised when a truncated distribution loses more mass than tolerated."""


# --------------------------------------------------------------------------
# state space and distributions
# --------------------------------------------------------------------------


class StateSpaceIndex:
    """Bijection between count vectors in ``{0..K_max}^S`` and dense indices (C order)."""

    def __init__(self, S: int, K_max: int):
        if S < 1 or K_max < 1:
            raise ValueError("need S >= 1 and K_max >= 1")
        self.S = int(S)
        self.K_max = int(K_max)
        self.shape = (self.K_max + 1,) * self.S
        self.size = (self.K_max + 1) ** self.S
        states = np.indices(self.shape).reshape(self.S, -1).T
        states.setflags(write=False)
        self.states = states
        self.strides = np.array(
            [(self.K_max + 1) ** (self.S - 1 - s) for s in range(self.S)], dtype=np.int64
        )
        self.total_counts = states.sum(axis=1)

    def index_of(self, k) -> np.ndarray | int:
        k = np.asarray(k)
        if np.any(k < 0) or np.any(k > self.K_max):
            raise IndexError(f"state {k.tolist()} outside the box of cap {self.K_max}")
        idx = k @ self.strides
        return int(idx) if np.ndim(idx) == 0 else idx

    def state_of(self, i) -> np.ndarray:
        return self.states[i]

    def __eq__(self, other):
        return isinstance(other, StateSpaceIndex) and (self.S, self.K_max) == (other.S, other.K_max)

    def __hash__(self):
        return hash((self.S, self.K_max))

    def __repr__(self):
        return f"StateSpaceIndex(S={self.S}, K_max={self.K_max})"


@dataclass(frozen=True)
class MasterDistribution:
    """Probability vector over a truncated state space plus the mass lost to truncation."""

    probs: np.ndarray
    index: StateSpaceIndex
    deficit: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.shape != (self.index.size,):
            raise ValueError(f"expected {self.index.size} probabilities, got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())

    def normalized(self) -> np.ndarray:
        p = np.clip(self.probs, 0.0, None)
        return p / p.sum()

    @classmethod
    def dirac(cls, k, index: StateSpaceIndex) -> "MasterDistribution":
        p = np.zeros(index.size)
        p[index.index_of(k)] = 1.0
        return cls(p, index)

    def mean_counts(self) -> np.ndarray:
        return self.normalized() @ self.index.states


def product_poisson(means, index: StateSpaceIndex) -> MasterDistribution:
    """Independent Poisson counts with the given per-site means, renormalized on the box."""
    means = np.asarray(means, dtype=float)
    if means.shape != (index.S,):
        raise ValueError("one mean per site required")
    ks = np.arange(index.K_max + 1)
    log_p = np.zeros(index.size)
    kept = 1.0
    for s, m in enumerate(means):
        pmf = poisson.pmf(ks, m)
        kept *= pmf.sum()
        log_p += poisson.logpmf(index.states[:, s], m)
    p = np.exp(log_p)
    p /= p.sum()
    return MasterDistribution(p, index, deficit=max(1.0 - kept, 0.0))


def poisson_reference(n: int, space: SiteSpace, K_max: int, tol: float = 1e-6) -> MasterDistribution:
    """Scaled Poisson reference measure: independent Poisson(``n pi_s``) counts per site."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ref = product_poisson(n * space.weights, StateSpaceIndex(space.size, K_max))
    if ref.deficit > tol:
        raise TruncationError(
            f"Poisson reference loses {ref.deficit:.3e} > {tol:.1e} beyond K_max={K_max}"
        )
    return ref


def poisson_moments_analytic(n: int, space: SiteSpace) -> tuple[float, float]:
    """Untruncated ``(int |nu| dPi^n, (1/n) log int e^{n |nu|} dPi^n)``.

    Uses the per-site Poisson moment generating function
    ``E exp(theta k) = exp(lambda (e^theta - 1))`` with ``lambda = n pi_s``.
    """
    lam = n * space.weights
    first = float(np.sum(lam)) / n
    log_mgf = float(np.sum(lam * np.expm1(1.0)))
    return first, log_mgf / n


def reference_moments(ref: MasterDistribution, n: int) -> tuple[float, float]:
    """First and exponential moments of a (truncated) distribution on the box."""
    p = ref.normalized()
    mass = ref.index.total_counts
    first = float(p @ mass) / n
    expo = float(np.log(p @ np.exp(mass.astype(float)))) / n
    return first, expo


# --------------------------------------------------------------------------
# generator
# --------------------------------------------------------------------------


@dataclass
class GeneratorMatrix:
    """Sparse generator with explicit edge lists.

    Birth-death edges are stored once, as ``lo -> hi = lo + e_site`` with the
    birth rate ``up`` and the reverse death rate ``down``.  Hop edges are
    stored for both orientations: ``src -> dst`` moves one particle from
    ``s`` to ``r`` at ``rate``; ``rev`` is the rate of the reverse move.
    """

    index: StateSpaceIndex
    n: int
    Q: sp.csr_matrix
    bd_lo: np.ndarray
    bd_hi: np.ndarray
    bd_site: np.ndarray
    bd_up: np.ndarray
    bd_down: np.ndarray
    hop_src: np.ndarray
    hop_dst: np.ndarray
    hop_s: np.ndarray
    hop_r: np.ndarray
    hop_rate: np.ndarray
    hop_rev: np.ndarray
    outflow: np.ndarray
    QT: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        self.QT = self.Q.T.tocsr()

    @property
    def max_exit_rate(self) -> float:
        return float(np.max(-self.Q.diagonal())) if self.index.size else 0.0

    def apply_adjoint(self, p: np.ndarray) -> np.ndarray:
        """``G^T p``: the master-equation right-hand side."""
        return self.QT @ p

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.Q.sum(axis=1)).ravel()

    def to_coo_text(self) -> str:
        """Coordinate listing ``row col value`` for debugging."""
        coo = self.Q.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"% {self.index.size} {self.index.size} {coo.nnz}"]
        lines += [
            f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}" for i in order
        ]
        return "\n".join(lines) + "\n"


def build_generator(model: RateModel, n: int, index: StateSpaceIndex) -> GeneratorMatrix:
    """Assemble the truncated generator of the ``n``-scaled jump process."""
    if model.space.size != index.S:
        raise ValueError("model and state space have different numbers of sites")
    states = index.states
    K = index.K_max
    S = index.S
    nu = states / n
    b = model.birth(nu, n)
    d = model.death(nu, n)
    h = model.hop(nu, n)
    all_idx = np.arange(index.size)

    bd_lo, bd_hi, bd_site, bd_up, bd_down = [], [], [], [], []
    outflow = np.zeros(index.size)
    for s in range(S):
        inside = states[:, s] < K
        lo = all_idx[inside]
        hi = lo + index.strides[s]
        bd_lo.append(lo)
        bd_hi.append(hi)
        bd_site.append(np.full(lo.size, s))
        bd_up.append(n * b[lo, s])
        bd_down.append(d[hi, s] * states[hi, s])
        outflow[~inside] += n * b[~inside, s]

    hop_parts = {k: [] for k in ("src", "dst", "s", "r", "rate", "rev")}
    for s in range(S):
        for r in range(S):
            if r == s:
                continue
            occupied = states[:, s] >= 1
            full = states[:, r] >= K
            blocked = occupied & full
            outflow[blocked] += h[blocked, s, r] * states[blocked, s]
            ok = occupied & ~full
            src = all_idx[ok]
            dst = src - index.strides[s] + index.strides[r]
            hop_parts["src"].append(src)
            hop_parts["dst"].append(dst)
            hop_parts["s"].append(np.full(src.size, s))
            hop_parts["r"].append(np.full(src.size, r))
            hop_parts["rate"].append(h[src, s, r] * states[src, s])
            hop_parts["rev"].append(h[dst, r, s] * states[dst, r])

    cat = lambda xs, dt=float: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
    bd_lo, bd_hi, bd_site = cat(bd_lo, int), cat(bd_hi, int), cat(bd_site, int)
    bd_up, bd_down = cat(bd_up), cat(bd_down)
    hop = {k: cat(v, float if k in ("rate", "rev") else int) for k, v in hop_parts.items()}

    rows = np.concatenate([bd_lo, bd_hi, hop["src"]])
    cols = np.concatenate([bd_hi, bd_lo, hop["dst"]])
    vals = np.concatenate([bd_up, bd_down, hop["rate"]])
    keep = vals != 0
    off = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(index.size,) * 2).tocsr()
    exit_rate = np.asarray(off.sum(axis=1)).ravel() + outflow
    Q = (off - sp.diags(exit_rate)).tocsr()
    Q.sum_duplicates()
    return GeneratorMatrix(
        index=index, n=n, Q=Q,
        bd_lo=bd_lo, bd_hi=bd_hi, bd_site=bd_site, bd_up=bd_up, bd_down=bd_down,
        hop_src=hop["src"], hop_dst=hop["dst"], hop_s=hop["s"], hop_r=hop["r"],
        hop_rate=hop["rate"], hop_rev=hop["rev"], outflow=outflow,
    )


def check_reversibility(gen: GeneratorMatrix, ref: MasterDistribution, relative: bool = False) -> float:
    """Largest ``|Pi(k) q(k -> k') - Pi(k') q(k' -> k)|`` over interior edges."""
    if gen.index != ref.index:
        raise ValueError("generator and reference live on different state spaces")
    p = ref.probs
    bd = np.abs(p[gen.bd_lo] * gen.bd_up - p[gen.bd_hi] * gen.bd_down)
    hop = np.abs(p[gen.hop_src] * gen.hop_rate - p[gen.hop_dst] * gen.hop_rev)
    worst = max(bd.max(initial=0.0), hop.max(initial=0.0))
    if relative:
        scale = max(
            (p[gen.bd_lo] * gen.bd_up).max(initial=0.0),
            (p[gen.hop_src] * gen.hop_rate).max(initial=0.0),
        )
        return float(worst / scale) if scale > 0 else 0.0
    return float(worst)


# --------------------------------------------------------------------------
# time integration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MasterPath:
    """Solution of the truncated master equation on a time grid."""

    times: np.ndarray
    probs: np.ndarray
    index: StateSpaceIndex

    @property
    def deficits(self) -> np.ndarray:
        return 1.0 - self.probs.sum(axis=1)

    def at(self, i: int) -> MasterDistribution:
        return MasterDistribution(self.probs[i], self.index, deficit=float(self.deficits[i]))

    def at_time(self, t: float, atol: float = 1e-9) -> MasterDistribution:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol:
            raise KeyError(f"no output at t={t}")
        return self.at(i)

    def __len__(self):
        return len(self.times)


def default_dt(gen: GeneratorMatrix) -> float:
    rate = gen.max_exit_rate
    return min(0.01, 0.1 / rate) if rate > 0 else 0.01


def _rk4(gen: GeneratorMatrix, p0: np.ndarray, t_out: np.ndarray, dt: float) -> np.ndarray:
    f = gen.apply_adjoint
    out = np.empty((len(t_out), p0.size))
    p = p0.copy()
    t = t_out[0]
    out[0] = p
    for i, t_next in enumerate(t_out[1:], start=1):
        steps = max(1, int(np.ceil((t_next - t) / dt - 1e-9)))
        h = (t_next - t) / steps
        for _ in range(steps):
            k1 = f(p)
            k2 = f(p + 0.5 * h * k1)
            k3 = f(p + 0.5 * h * k2)
            k4 = f(p + h * k3)
            p = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_next
        out[i] = p
    return out


def integrate_fke(
    P0: MasterDistribution,
    gen: GeneratorMatrix,
    T: float,
    dt: float | None = None,
    method: str = "rk4",
    t_eval=None,
    n_out: int = 101,
    rtol: float = 1e-10,
    atol: float = 1e-16,
    outflow_tol: float = 1e-6,
    negativity_tol: float = 1e-12,
) -> MasterPath:
    """Solve ``dP/dt = G^T P`` on ``[0, T]``.

    ``method="rk4"`` uses fixed steps of size at most ``dt`` (default
    :func:`default_dt`) between output times; ``method="adaptive"`` uses an
    embedded Dormand-Prince pair with tolerances ``rtol``/``atol``.
    """
    if P0.index != gen.index:
        raise ValueError("initial law and generator use different state spaces")
    t_out = np.linspace(0.0, T, n_out) if t_eval is None else np.asarray(t_eval, dtype=float)
    if t_out[0] != 0.0:
        t_out = np.concatenate([[0.0], t_out])
    p0 = np.asarray(P0.probs, dtype=float)
    if method == "rk4":
        probs = _rk4(gen, p0, t_out, dt or default_dt(gen))
    elif method == "adaptive":
        QT = gen.QT
        sol = solve_ivp(
            lambda t, p: QT @ p, (0.0, float(t_out[-1])), p0, method="DOP853",
            t_eval=t_out, rtol=rtol, atol=atol,
        )
        if not sol.success:
            raise SolverError(sol.message)
        probs = sol.y.T.copy()
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(probs)):
        raise SolverError("non-finite probabilities")
    lowest = probs.min()
    if lowest < -negativity_tol:
        raise SolverError(f"probability {lowest:.3e} below -{negativity_tol:.0e}; step too large")
    lost = float(p0.sum() - probs[-1].sum())
    if lost > outflow_tol:
        raise TruncationError(f"truncation outflow {lost:.3e} exceeds {outflow_tol:.1e}")
    return MasterPath(times=t_out, probs=probs, index=P0.index)


# --------------------------------------------------------------------------
# energy, fluxes, dissipation
# --------------------------------------------------------------------------


def _probs(P, floor: float = 0.0) -> np.ndarray:
    """Normalized probabilities from a distribution or raw vector, clipped below at ``floor``."""
    p = np.asarray(getattr(P, "probs", P), dtype=float)
    p = np.clip(p, floor, None)
    return p / p.sum()


def scaled_entropy(P, ref: MasterDistribution, n: int) -> float:
    """``(1/n) KL(P || Pi^n)`` on the truncated space, both sides normalized."""
    return kl_divergence(_probs(P), ref.normalized()) / n


@dataclass(frozen=True)
class EdgeIntensities:
    """Forward/backward jump intensities on every edge, already divided by ``n``."""

    bd_fwd: np.ndarray
    bd_bwd: np.ndarray
    hop_fwd: np.ndarray
    hop_bwd: np.ndarray


def edge_intensities(P, gen: GeneratorMatrix, floor: float = 0.0) -> EdgeIntensities:
    p = _probs(P, floor)
    n = gen.n
    return EdgeIntensities(
        bd_fwd=p[gen.bd_lo] * gen.bd_up / n,
        bd_bwd=p[gen.bd_hi] * gen.bd_down / n,
        hop_fwd=p[gen.hop_src] * gen.hop_rate / n,
        hop_bwd=p[gen.hop_dst] * gen.hop_rev / n,
    )


@dataclass(frozen=True)
class MasterFlux:
    """Net fluxes: ``bd`` per birth-death edge (``lo -> hi``), ``hop`` per ordered hop edge."""

    bd: np.ndarray
    hop: np.ndarray

    def __neg__(self):
        return MasterFlux(-self.bd, -self.hop)

    def __mul__(self, c):
        return MasterFlux(c * self.bd, c * self.hop)

    __rmul__ = __mul__

    @classmethod
    def zeros_like(cls, gen: GeneratorMatrix) -> "MasterFlux":
        return cls(np.zeros(gen.bd_lo.size), np.zeros(gen.hop_src.size))


def optimal_flux(P, gen: GeneratorMatrix, floor: float = 0.0) -> MasterFlux:
    """Fluxes of the solution: birth minus transported death, half-antisymmetrized hops."""
    e = edge_intensities(P, gen, floor)
    return MasterFlux(bd=e.bd_fwd - e.bd_bwd, hop=0.5 * (e.hop_fwd - e.hop_bwd))


def continuity_rhs(flux: MasterFlux, gen: GeneratorMatrix) -> np.ndarray:
    """``dP/dt`` implied by a flux through the continuity equation."""
    N = gen.index.size
    dp = np.zeros(N)
    np.add.at(dp, gen.bd_hi, flux.bd)
    np.add.at(dp, gen.bd_lo, -flux.bd)
    np.add.at(dp, gen.hop_dst, flux.hop)
    np.add.at(dp, gen.hop_src, -flux.hop)
    return gen.n * dp


def dissipation_n(P, flux: MasterFlux, gen: GeneratorMatrix, floor: float = 0.0) -> float:
    """``R_n(P, J) = 2 sum Upsilon(J_bd / 2, .) + sum Upsilon(J_h, .)``; may be ``inf``.

    A positive ``floor`` lifts probabilities that integration noise pushed to
    zero, which keeps the dissipation finite on edges carrying only noise.
    """
    e = edge_intensities(P, gen, floor)
    r_bd = 2.0 * np.sum(upsilon(flux.bd / 2.0, e.bd_fwd, e.bd_bwd))
    r_h = np.sum(upsilon(flux.hop, e.hop_fwd, e.hop_bwd))
    return float(r_bd + r_h)


def entropy_force(P, ref: MasterDistribution, gen: GeneratorMatrix) -> MasterFlux:
    """``-grad E_n'(P)`` on every edge, ``log U(k) - log U(k')``.

    ``U`` is floored at 1e-300 so that the force stays finite.
    """
    U = np.maximum(_probs(P) / ref.normalized(), DIAG_FLOOR)
    logU = np.log(U)
    return MasterFlux(
        bd=logU[gen.bd_lo] - logU[gen.bd_hi],
        hop=logU[gen.hop_src] - logU[gen.hop_dst],
    )


def dual_dissipation_n(P, force: MasterFlux, gen: GeneratorMatrix) -> tuple[float, float]:
    """``R*_n(P, zeta)`` split into birth-death and hopping parts."""
    e = edge_intensities(P, gen)
    g_bd = np.sqrt(e.bd_fwd * e.bd_bwd)
    g_h = np.sqrt(e.hop_fwd * e.hop_bwd)
    return (
        float(2.0 * np.sum(psi_star(force.bd) * g_bd)),
        float(np.sum(psi_star(force.hop) * g_h)),
    )


def fisher_information_n(P, ref: MasterDistribution, gen: GeneratorMatrix) -> tuple[float, float]:
    """Fisher information ``(D_bd, D_h)`` from the density ``U = dP/dPi^n``.

    ``D_bd = 2 sum_k sum_s (sqrt U(k + e_s) - sqrt U(k))^2 b_s(k/n) Pi(k)`` and
    ``D_h = sum_k sum_{s != r} (sqrt U(k - e_s + e_r) - sqrt U(k))^2 h_{s->r}(k/n) (k_s / n) Pi(k)``.
    Returns ``inf`` if ``P`` charges a state where ``Pi^n`` vanishes.
    """
    p = _probs(P)
    pi = ref.normalized()
    if np.any((pi == 0) & (p > 0)):
        return float("inf"), float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        rootU = np.sqrt(np.where(pi > 0, p / pi, 0.0))
    n = gen.n
    birth_mass = gen.bd_up / n * pi[gen.bd_lo]
    hop_mass = gen.hop_rate / n * pi[gen.hop_src]
    D_bd = 2.0 * np.sum((rootU[gen.bd_hi] - rootU[gen.bd_lo]) ** 2 * birth_mass)
    D_h = np.sum((rootU[gen.hop_dst] - rootU[gen.hop_src]) ** 2 * hop_mass)
    return float(D_bd), float(D_h)


def fisher_information_hellinger(P, gen: GeneratorMatrix) -> tuple[float, float]:
    """Fisher information as ``(4 H^2(theta_b, T theta_d), 2 H^2(theta_h, T theta_h))``."""
    e = edge_intensities(P, gen)
    return 4.0 * hellinger_sq(e.bd_fwd, e.bd_bwd), 2.0 * hellinger_sq(e.hop_fwd, e.hop_bwd)


@dataclass(frozen=True)
class FKEDiagnostics:
    """Per-time energy-dissipation bookkeeping along a master path."""

    times: np.ndarray
    entropy: np.ndarray
    D_bd: np.ndarray
    D_h: np.ndarray
    R: np.ndarray
    deficit: np.ndarray

    @property
    def edb_partial(self) -> np.ndarray:
        """``I_n([0, t])`` with trapezoidal quadrature of ``R + D``."""
        f = self.R + self.D_bd + self.D_h
        integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(self.times) * (f[1:] + f[:-1]))])
        return integral + self.entropy - self.entropy[0]

    def rows(self):
        for row in zip(self.times, self.entropy, self.D_bd, self.D_h, self.R, self.edb_partial, self.deficit):
            yield tuple(float(x) for x in row)


def fke_diagnostics(
    path: MasterPath, gen: GeneratorMatrix, ref: MasterDistribution, fluxes=None, floor: float = DIAG_FLOOR
) -> FKEDiagnostics:
    """Entropy, Fisher information and dissipation at every output time.

    ``fluxes`` defaults to the optimal fluxes of the path itself.  The
    dissipation uses probabilities floored at ``floor`` (see
    :func:`dissipation_n`).
    """
    nt = len(path)
    ent, dbd, dh, R = (np.empty(nt) for _ in range(4))
    for i in range(nt):
        p = path.probs[i]
        ent[i] = scaled_entropy(p, ref, gen.n)
        dbd[i], dh[i] = fisher_information_n(p, ref, gen)
        J = optimal_flux(p, gen, floor) if fluxes is None else fluxes[i]
        R[i] = dissipation_n(p, J, gen, floor)
    return FKEDiagnostics(path.times.copy(), ent, dbd, dh, R, path.deficits.copy())


def edb_residual_n(
    path: MasterPath, gen: GeneratorMatrix, ref: MasterDistribution, fluxes=None, floor: float = DIAG_FLOOR
) -> float:
    """Energy-dissipation functional ``I_n([0, T])`` of a path/flux pair.

    Vanishes (up to quadrature error) for the master-equation solution with
    its optimal fluxes and is positive for any other admissible pair.
    """
    diag = fke_diagnostics(path, gen, ref, fluxes, floor)
    if not np.all(np.isfinite(diag.R)):
        raise SolverError("infinite dissipation: flux on an edge with vanishing intensity")
    return float(diag.edb_partial[-1])


# --------------------------------------------------------------------------
# distances to the mean-field limit
# --------------------------------------------------------------------------


def expected_tv_distance(P, target_measure, n: int) -> float:
    """``int |nu - target| dP(nu)``: the W1 distance from ``P`` to a Dirac mass."""
    p = _probs(P)
    index = P.index if hasattr(P, "index") else None
    if index is None:
        raise TypeError("expected a MasterDistribution")
    dist = np.abs(index.states / n - np.asarray(target_measure)[None, :]).sum(axis=1)
    return float(p @ dist)


def poc_reference(target_u, space: SiteSpace, n: int, index: StateSpaceIndex, tol: float = 1e-6) -> MasterDistribution:
    """Scaled Poisson measure with activity ``n u pi`` on the box."""
    u = np.asarray(getattr(target_u, "values", target_u), dtype=float)
    ref = product_poisson(n * u * space.weights, index)
    if ref.deficit > tol:
        raise TruncationError(
            f"reference Poisson(n u pi) loses {ref.deficit:.3e} > {tol:.1e} at K_max={index.K_max}"
        )
    return ref


def poc_entropy(P: MasterDistribution, target_u, space: SiteSpace, n: int, tol: float = 1e-6) -> float:
    """``(1/n) Ent(P | Pi^n_{u pi})`` for a mean-field density ``u``."""
    ref = poc_reference(target_u, space, n, P.index, tol)
    return kl_divergence(_probs(P), ref.normalized()) / n


def dirac_entropy(k, n: int, space: SiteSpace) -> float:
    """Untruncated ``(1/n)(-log Pi^n(k))`` for a single state."""
    k = np.asarray(k, dtype=float)
    lam = n * space.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        klog = np.where(k > 0, k * np.log(lam), 0.0)
    return float(np.sum(lam - klog + gammaln(k + 1.0))) / n
