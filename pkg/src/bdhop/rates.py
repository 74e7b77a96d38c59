"""Birth, death and hopping rates on a site space.

Conventions used throughout the package:

* ``birth(nu)[..., s]`` is the mass of ``b(nu, .)`` on site ``s``;
* ``death(nu)[..., s]`` is the per-capita death rate ``d(nu, x_s)``;
* ``hop(nu)[..., s, r]`` is the mass of ``h(nu, x_s, .)`` on the target
  site ``r`` (jump *from* ``s`` *to* ``r``).  The diagonal is zero since a
  jump onto the same site does not change the configuration.

All methods are vectorised over leading axes of ``nu``.  Passing ``n=None``
evaluates the limit rates, an integer ``n`` the rates of the ``n``-scaled
model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from bdhop.measure import Configuration, SignedSiteMeasure, SiteSpace


# --------------------------------------------------------------------------
# scalar response functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarFunction:
    """Bounded, nonnegative, Lipschitz scalar map used inside the example rates."""

    name: str
    params: dict
    fn: Callable[[np.ndarray], np.ndarray]
    sup: float
    lipschitz: float

    def __call__(self, z):
        return self.fn(np.asarray(z, dtype=float))


def constant(value: float) -> ScalarFunction:
    if value < 0:
        raise ValueError("constant rate must be nonnegative")
    return ScalarFunction(
        "constant", {"value": value}, lambda z: np.full_like(z, value, dtype=float),
        sup=float(value), lipschitz=0.0,
    )


def affine_clamped(intercept: float, slope: float, lo: float = 0.0, hi: float = 10.0) -> ScalarFunction:
    if not 0 <= lo <= hi:
        raise ValueError("need 0 <= lo <= hi")
    return ScalarFunction(
        "affine-clamped",
        {"intercept": intercept, "slope": slope, "lo": lo, "hi": hi},
        lambda z: np.clip(intercept + slope * z, lo, hi),
        sup=float(hi), lipschitz=abs(float(slope)),
    )


def sigmoid(low: float, high: float, steepness: float = 1.0, center: float = 0.0) -> ScalarFunction:
    if not 0 <= low <= high:
        raise ValueError("need 0 <= low <= high")

    def fn(z):
        return low + (high - low) / (1.0 + np.exp(-steepness * (z - center)))

    return ScalarFunction(
        "sigmoid",
        {"low": low, "high": high, "steepness": steepness, "center": center},
        fn, sup=float(high), lipschitz=abs(steepness) * (high - low) / 4.0,
    )


PSI_REGISTRY: dict[str, Callable[..., ScalarFunction]] = {
    "constant": constant,
    "affine-clamped": affine_clamped,
    "sigmoid": sigmoid,
}


def make_psi(spec: dict) -> ScalarFunction:
    """Build a response function from ``{"name": ..., **params}``."""
    spec = dict(spec)
    name = spec.pop("name")
    try:
        factory = PSI_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown response function {name!r}") from None
    return factory(**spec)


# --------------------------------------------------------------------------
# pair and triple kernels on the grid
# --------------------------------------------------------------------------


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum((a - b) ** 2, axis=-1)


def interaction_kernel(space: SiteSpace, name: str, **kw) -> np.ndarray:
    """Competition kernel ``c[s, r]`` with zero diagonal.

    ``off-diagonal``: ``amplitude`` for every ``s != r``;
    ``gaussian``: ``amplitude * exp(-|x_s - x_r|^2 / length^2)`` off the diagonal.
    """
    x = space.coords
    S = space.size
    amp = kw.get("amplitude", 1.0)
    if name == "off-diagonal":
        c = np.full((S, S), amp, dtype=float)
    elif name == "gaussian":
        ell = kw.get("length", 1.0)
        c = amp * np.exp(-_sqdist(x[:, None, :], x[None, :, :]) / ell**2)
    elif name == "zero":
        c = np.zeros((S, S))
    else:
        raise ValueError(f"unknown interaction kernel {name!r}")
    np.fill_diagonal(c, 0.0)
    return c


def hopping_kernel(space: SiteSpace, name: str, **kw) -> np.ndarray:
    """Triple kernel ``H[s, r, q] = h(x_s - x_q, x_r - x_q)``.

    ``gaussian``: ``h(a, b) = amplitude * exp(-(|a|^2 + |b|^2) / length^2)``;
    ``constant``: ``h = amplitude``; ``zero``: ``h = 0``.
    """
    x = space.coords
    S = space.size
    amp = kw.get("amplitude", 1.0)
    if name == "gaussian":
        ell = kw.get("length", 1.0)
        a = _sqdist(x[:, None, :], x[None, :, :])  # a[s, q] = |x_s - x_q|^2
        return amp * np.exp(-(a[:, None, :] + a[None, :, :]) / ell**2)
    if name == "constant":
        return np.full((S, S, S), float(amp))
    if name == "zero":
        return np.zeros((S, S, S))
    raise ValueError(f"unknown hopping kernel {name!r}")


def kernel_from_function(space: SiteSpace, h: Callable[[np.ndarray, np.ndarray], float]) -> np.ndarray:
    """Evaluate ``H[s, r, q] = h(x_s - x_q, x_r - x_q)`` for a user function."""
    x = space.coords
    S = space.size
    H = np.empty((S, S, S))
    for s in range(S):
        for r in range(S):
            for q in range(S):
                H[s, r, q] = h(x[s] - x[q], x[r] - x[q])
    return H


# --------------------------------------------------------------------------
# rate models
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RateBounds:
    birth: float
    death: float
    hop: float


class RateModel:
    """Base class for birth/death/hop rate families on a fixed site space."""

    space: SiteSpace
    bounds: RateBounds

    def birth(self, nu, n: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def death(self, nu, n: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def hop(self, nu, n: int | None = None) -> np.ndarray:
        raise NotImplementedError

    # Configuration-level conveniences
    def rates_at(self, c: Configuration):
        nu = c.nu
        n = c.scale_n
        return self.birth(nu, n), self.death(nu, n), self.hop(nu, n)

    def within_bounds(self, nu, n: int | None = None, rtol: float = 1e-12) -> bool:
        b = self.birth(nu, n).sum(axis=-1)
        d = self.death(nu, n)
        h = self.hop(nu, n).sum(axis=-1)
        slack = 1.0 + rtol
        return bool(
            np.all(b <= self.bounds.birth * slack)
            and np.all(d <= self.bounds.death * slack)
            and np.all(h <= self.bounds.hop * slack)
        )


@dataclass(frozen=True)
class ExampleModelParams:
    """Response functions and kernels of the example rate family.

    ``c`` is an ``S x S`` competition kernel with zero diagonal and
    ``h_kernel`` an ``S x S x S`` array ``H[s, r, q]`` weighting the mass at
    ``q`` in the hopping response for a jump ``s -> r``.
    """

    psi_bd: ScalarFunction
    psi_h: ScalarFunction
    c: np.ndarray
    h_kernel: np.ndarray

    def validate(self, S: int | None = None, atol: float = 1e-14) -> None:
        c = np.asarray(self.c, dtype=float)
        H = np.asarray(self.h_kernel, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("c must be a square matrix")
        if S is not None and c.shape[0] != S:
            raise ValueError(f"c is {c.shape[0]}x{c.shape[0]}, space has {S} sites")
        if H.shape != (c.shape[0],) * 3:
            raise ValueError(f"h_kernel must have shape {(c.shape[0],) * 3}")
        if np.any(np.abs(np.diag(c)) > atol):
            raise ValueError("c(s, s) must vanish on every site")
        if np.any(c < 0) or np.any(H < 0):
            raise ValueError("kernels must be nonnegative")
        # detailed balance of the hops: symmetric in (source, target) and the
        # self-terms of source and target must agree (h(x-y, 0) = h(0, y-x))
        if np.max(np.abs(H - H.transpose(1, 0, 2))) > atol:
            raise ValueError("h_kernel must be symmetric in source and target")
        idx = np.arange(c.shape[0])
        src_self = H[idx[:, None], idx[None, :], idx[:, None]]
        tgt_self = H[idx[:, None], idx[None, :], idx[None, :]]
        if np.max(np.abs(src_self - tgt_self)) > atol:
            raise ValueError("h_kernel violates h(x - y, 0) = h(0, y - x)")


class ExampleRateModel(RateModel):
    """Rates ``b = psi_bd(c * nu) pi = d pi`` and ``h = psi_h(H * nu) pi``.

    ``n_correction`` multiplies every rate at scale ``n`` by
    ``1 + n_correction / n``; the limit rates are unaffected and detailed
    balance holds at every ``n``.
    """

    def __init__(self, params: ExampleModelParams, space: SiteSpace, n_correction: float = 0.0):
        params.validate(space.size)
        self.params = params
        self.space = space
        self.n_correction = float(n_correction)
        self._c = np.asarray(params.c, dtype=float)
        self._H = np.asarray(params.h_kernel, dtype=float)
        factor = 1.0 + max(self.n_correction, 0.0)
        pi = space.weights
        self.bounds = RateBounds(
            birth=params.psi_bd.sup * space.total_mass * factor,
            death=params.psi_bd.sup * factor,
            hop=params.psi_h.sup * space.total_mass * factor,
        )
        self._offdiag = 1.0 - np.eye(space.size)
        self._pi = pi

    def _factor(self, n):
        return 1.0 if n is None else 1.0 + self.n_correction / n

    def death(self, nu, n=None):
        nu = np.asarray(nu, dtype=float)
        return self.params.psi_bd(nu @ self._c.T) * self._factor(n)

    def birth(self, nu, n=None):
        return self.death(nu, n) * self._pi

    def hop(self, nu, n=None):
        nu = np.asarray(nu, dtype=float)
        z = np.einsum("srq,...q->...sr", self._H, nu)
        return self.params.psi_h(z) * self._pi * self._offdiag * self._factor(n)


def make_example_model(params: ExampleModelParams, space: SiteSpace, n_correction: float = 0.0) -> ExampleRateModel:
    """Example rate family satisfying detailed balance by construction."""
    return ExampleRateModel(params, space, n_correction=n_correction)


class ConstantRateModel(RateModel):
    """Density-independent rates: ``b_s = beta pi_s``, ``d = delta``, ``h_{s->r} = eta_{sr} pi_r``.

    Detailed balance holds iff ``beta == delta`` and ``eta`` is symmetric.
    """

    def __init__(self, space: SiteSpace, beta: float, delta: float, eta=0.0):
        self.space = space
        self.beta = float(beta)
        self.delta = float(delta)
        S = space.size
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (S, S)).copy()
        np.fill_diagonal(eta, 0.0)
        self.eta = eta
        self._hop = eta * space.weights[None, :]
        self.bounds = RateBounds(
            birth=self.beta * space.total_mass,
            death=self.delta,
            hop=float(self._hop.sum(axis=1).max()),
        )

    def birth(self, nu, n=None):
        nu = np.asarray(nu, dtype=float)
        return np.broadcast_to(self.beta * self.space.weights, nu.shape).copy()

    def death(self, nu, n=None):
        nu = np.asarray(nu, dtype=float)
        return np.full(nu.shape, self.delta)

    def hop(self, nu, n=None):
        nu = np.asarray(nu, dtype=float)
        return np.broadcast_to(self._hop, nu.shape + (nu.shape[-1],)).copy()


class PerturbedRateModel(RateModel):
    """Additive perturbation of another model; used to inject detailed-balance violations."""

    def __init__(self, base: RateModel, birth_shift=0.0, death_shift=0.0, hop_shift=0.0):
        self.base = base
        self.space = base.space
        S = self.space.size
        self.birth_shift = np.broadcast_to(np.asarray(birth_shift, dtype=float), (S,))
        self.death_shift = np.broadcast_to(np.asarray(death_shift, dtype=float), (S,))
        hs = np.broadcast_to(np.asarray(hop_shift, dtype=float), (S, S)).copy()
        np.fill_diagonal(hs, 0.0)
        self.hop_shift = hs
        self.bounds = RateBounds(
            birth=base.bounds.birth + float(np.abs(self.birth_shift).sum()),
            death=base.bounds.death + float(np.abs(self.death_shift).max()),
            hop=base.bounds.hop + float(np.abs(hs).sum(axis=1).max()),
        )

    def birth(self, nu, n=None):
        return self.base.birth(nu, n) + self.birth_shift

    def death(self, nu, n=None):
        return self.base.death(nu, n) + self.death_shift

    def hop(self, nu, n=None):
        return self.base.hop(nu, n) + self.hop_shift


# --------------------------------------------------------------------------
# detailed balance, density rates, mean-field vector field
# --------------------------------------------------------------------------


def check_db_n(model: RateModel, samples: Iterable[Configuration], n: int | None = None) -> float:
    """Largest violation of the finite-``n`` detailed balance relations.

    Checks ``b_s(nu) = d(nu + e_s/n, s) pi_s`` for every site and
    ``h_{s->r}(nu) pi_s = h_{r->s}(nu + (e_r - e_s)/n) pi_r`` for every
    occupied source ``s``.  ``n`` defaults to each sample's own scale.
    """
    pi = model.space.weights
    S = model.space.size
    worst = 0.0
    for c in samples:
        c.check_space(model.space)
        m = c.scale_n if n is None else int(n)
        k = c.counts.astype(float)
        nu = k / m
        b = model.birth(nu, m)
        up = nu[None, :] + np.eye(S) / m  # row s: nu + e_s / n
        d_up = model.death(up, m)[np.arange(S), np.arange(S)]
        worst = max(worst, float(np.max(np.abs(b - d_up * pi))))
        h = model.hop(nu, m)
        for s in np.flatnonzero(k > 0):
            for r in range(S):
                if r == s:
                    continue
                moved = nu.copy()
                moved[s] -= 1.0 / m
                moved[r] += 1.0 / m
                back = model.hop(moved, m)[r, s]
                worst = max(worst, abs(h[s, r] * pi[s] - back * pi[r]))
    return worst


def density_rates(model: RateModel, u) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Density-form limit rates ``(r_b, r_d, r_h)`` at ``u``.

    ``r_h[s, r]`` is the density of ``h(u pi, x_r, .)`` at ``x_s``, i.e.
    ``hop[r, s] / pi_s``.
    """
    u = np.asarray(getattr(u, "values", u), dtype=float)
    pi = model.space.weights
    nu = u * pi
    r_b = model.birth(nu) / pi
    r_d = model.death(nu)
    r_h = np.swapaxes(model.hop(nu), -1, -2) / pi[..., :, None]
    return r_b, r_d, r_h


def meanfield_rhs_array(model: RateModel, u: np.ndarray) -> np.ndarray:
    """``du/dt`` of the doubly nonlocal Fisher-KPP equation as a plain array."""
    pi = model.space.weights
    r_b, r_d, r_h = density_rates(model, u)
    hop = np.sum(r_h * (u[..., None, :] - u[..., :, None]) * pi, axis=-1)
    return r_b - r_d * u + hop


def meanfield_rhs(model: RateModel, u) -> SignedSiteMeasure:
    """Time derivative of the density, ``r_b - r_d u + sum_r (u_r - u_s) r_h pi_r``."""
    u = np.asarray(getattr(u, "values", u), dtype=float)
    if np.any(u < 0):
        raise ValueError("density must be nonnegative")
    return SignedSiteMeasure(meanfield_rhs_array(model, u))


def velocity_field(model: RateModel, nu) -> np.ndarray:
    """Measure-form vector field ``b(nu) - d(nu) nu + (inflow - outflow)`` of hops."""
    nu = np.asarray(nu, dtype=float)
    h = model.hop(nu)
    flow = h * nu[..., :, None]  # mass rate s -> r
    return model.birth(nu) - model.death(nu) * nu + flow.sum(axis=-2) - flow.sum(axis=-1)
