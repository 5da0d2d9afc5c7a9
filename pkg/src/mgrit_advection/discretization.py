"""Upwind finite differences + Runge-Kutta steppers for ``u_t + alpha u_x = 0``.

The spatial domain is ``[-1, 1)`` with periodic boundaries, ``n_x`` points and
``dx = 2/n_x``.  Schemes are named ``"erk<p>+u<p>"`` (``p = 1..5``) or
``"sdirk<p>+u<p>"`` (``p = 1..4``).
"""
from __future__ import annotations

import csv
import functools
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar

from .circulant import CirculantOperator, RationalStepper, multiply

__all__ = [
    "STENCILS",
    "SpatialStencil",
    "ButcherTableau",
    "StabilityFunction",
    "SchemeSpec",
    "UnstableScheme",
    "GridTooSmall",
    "erk_tableau",
    "sdirk_tableau",
    "build_L",
    "stability_function",
    "build_phi",
    "runge_kutta_stepper",
    "cfl_limit",
    "sequential_solve",
    "exact_solution",
    "initial_condition",
    "discretization_error",
    "export_trajectory",
    "parse_scheme_id",
]


class UnstableScheme(ValueError):
    """A stepper has an eigenvalue outside the unit disc."""


class GridTooSmall(ValueError):
    """The stencil would wrap onto itself on the periodic grid."""


@dataclass(frozen=True)
class SpatialStencil:
    """Upwind approximation ``u'(x_i) ~ sum_o w_o u_{i+o} / dx``."""

    order: int
    offsets: tuple
    weights: tuple  # Fractions, exact

    def symbol(self, theta):
        """``sum_o w_o exp(i*theta*o)``, the Fourier symbol of ``dx * d/dx``."""
        theta = np.asarray(theta, dtype=float)
        return sum(float(w) * np.exp(1j * theta * o) for o, w in zip(self.offsets, self.weights))


def _stencil(order, entries, denom):
    offsets = tuple(sorted(entries))
    weights = tuple(Fraction(entries[o], denom) for o in offsets)
    return SpatialStencil(order, offsets, weights)


STENCILS = {
    1: _stencil(1, {0: 1, -1: -1}, 1),
    2: _stencil(2, {0: 3, -1: -4, -2: 1}, 2),
    3: _stencil(3, {1: 2, 0: 3, -1: -6, -2: 1}, 6),
    4: _stencil(4, {1: 3, 0: 10, -1: -18, -2: 6, -3: -1}, 12),
    5: _stencil(5, {2: -3, 1: 30, 0: 20, -1: -60, -2: 15, -3: -2}, 60),
}


@dataclass(frozen=True)
class ButcherTableau:
    name: str
    A: np.ndarray
    b: np.ndarray
    c_nodes: np.ndarray

    @property
    def stages(self) -> int:
        return self.b.shape[0]

    @property
    def explicit(self) -> bool:
        return bool(np.all(np.triu(self.A) == 0.0))


def _tableau(name, A, b, c):
    return ButcherTableau(name, np.array(A, dtype=float), np.array(b, dtype=float),
                          np.array(c, dtype=float))


def erk_tableau(p: int) -> ButcherTableau:
    """Explicit RK tableaux: Euler, SSP2, SSP3, classical RK4, Butcher's 6-stage RK5."""
    if p == 1:
        return _tableau("ERK1", [[0.0]], [1.0], [0.0])
    if p == 2:
        return _tableau("ERK2", [[0, 0], [1, 0]], [0.5, 0.5], [0, 1])
    if p == 3:
        return _tableau("ERK3", [[0, 0, 0], [1, 0, 0], [0.25, 0.25, 0]],
                        [1 / 6, 1 / 6, 2 / 3], [0, 1, 0.5])
    if p == 4:
        return _tableau("ERK4", [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1, 0]],
                        [1 / 6, 1 / 3, 1 / 3, 1 / 6], [0, 0.5, 0.5, 1])
    if p == 5:
        A = [
            [0, 0, 0, 0, 0, 0],
            [1 / 4, 0, 0, 0, 0, 0],
            [1 / 8, 1 / 8, 0, 0, 0, 0],
            [0, 0, 1 / 2, 0, 0, 0],
            [3 / 16, -3 / 8, 3 / 8, 9 / 16, 0, 0],
            [-3 / 7, 8 / 7, 6 / 7, -12 / 7, 8 / 7, 0],
        ]
        b = [7 / 90, 0, 32 / 90, 12 / 90, 32 / 90, 7 / 90]
        return _tableau("ERK5", A, b, [0, 1 / 4, 1 / 4, 1 / 2, 3 / 4, 1])
    raise ValueError(f"no ERK scheme of order {p}")


#: Diagonal coefficient of the three-stage L-stable SDIRK method.
SDIRK3_ZETA = 0.43586652150845899942


def sdirk_tableau(p: int) -> ButcherTableau:
    """L-stable SDIRK tableaux of orders 1-4 (backward Euler, two 2/3-stage
    Butcher methods, Hairer-Wanner 5-stage order 4)."""
    if p == 1:
        return _tableau("SDIRK1", [[1.0]], [1.0], [1.0])
    if p == 2:
        g = 1 - math.sqrt(2) / 2
        return _tableau("SDIRK2", [[g, 0], [1 - g, g]], [1 - g, g], [g, 1])
    if p == 3:
        z = SDIRK3_ZETA
        alpha = (1 + z) / 2
        beta = (1 - z) / 2
        gamma = -1.5 * z**2 + 4 * z - 0.25
        eps = 1.5 * z**2 - 5 * z + 1.25
        return _tableau("SDIRK3", [[z, 0, 0], [beta, z, 0], [gamma, eps, z]],
                        [gamma, eps, z], [z, alpha, 1])
    if p == 4:
        A = [
            [1 / 4, 0, 0, 0, 0],
            [1 / 2, 1 / 4, 0, 0, 0],
            [17 / 50, -1 / 25, 1 / 4, 0, 0],
            [371 / 1360, -137 / 2720, 15 / 544, 1 / 4, 0],
            [25 / 24, -49 / 48, 125 / 16, -85 / 12, 1 / 4],
        ]
        return _tableau("SDIRK4", A, A[-1], [1 / 4, 3 / 4, 11 / 20, 1 / 2, 1])
    raise ValueError(f"no SDIRK scheme of order {p}")


@dataclass(frozen=True)
class StabilityFunction:
    """``R(z) = P(z)/Q(z)``; coefficients in ascending powers of ``z``."""

    P_coeffs: np.ndarray
    Q_coeffs: np.ndarray

    def __call__(self, z):
        z = np.asarray(z)
        return (np.polynomial.polynomial.polyval(z, self.P_coeffs)
                / np.polynomial.polynomial.polyval(z, self.Q_coeffs))


def _poly_from_samples(fn, degree):
    # coefficients of a degree <= `degree` polynomial from samples on the unit circle
    n = 2 * (degree + 1)
    z = np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.array([fn(zk) for zk in z])
    coeffs = (np.fft.fft(vals) / n)[: degree + 1].real
    coeffs[np.abs(coeffs) < 1e-13] = 0.0
    nz = np.flatnonzero(coeffs)
    return coeffs[: nz[-1] + 1] if nz.size else np.zeros(1)


def stability_function(tableau: ButcherTableau) -> StabilityFunction:
    """Expand ``R(z) = 1 + z b^T (I - zA)^{-1} 1`` as a ratio of polynomials.

    Uses ``R = det(I - zA + z 1 b^T) / det(I - zA)``.
    """
    s = tableau.stages
    eye = np.eye(s)
    ones_b = np.outer(np.ones(s), tableau.b)
    P = _poly_from_samples(lambda z: np.linalg.det(eye - z * tableau.A + z * ones_b), s)
    Q = _poly_from_samples(lambda z: np.linalg.det(eye - z * tableau.A), s)
    # both determinants are exactly 1 at z = 0
    P[0] = Q[0] = 1.0
    return StabilityFunction(P, Q)


def _tableau_for(family, p):
    return erk_tableau(p) if family == "ERK" else sdirk_tableau(p)


@functools.lru_cache(maxsize=None)
def _stability(family, p):
    return stability_function(_tableau_for(family, p))


_ID_RE = re.compile(r"^(erk|sdirk)(\d)\+u(\d)$")


def parse_scheme_id(scheme_id: str):
    """``"erk3+u3"`` -> ``("ERK", 3)``."""
    match = _ID_RE.match(scheme_id.strip().lower())
    if not match or match.group(2) != match.group(3):
        raise ValueError(f"unknown scheme id {scheme_id!r}")
    family = match.group(1).upper()
    p = int(match.group(2))
    if (family == "ERK" and not 1 <= p <= 5) or (family == "SDIRK" and not 1 <= p <= 4):
        raise ValueError(f"unknown scheme id {scheme_id!r}")
    return family, p


@dataclass(frozen=True)
class SchemeSpec:
    """Space-time discretisation of the periodic advection problem.

    Use :meth:`erk` / :meth:`sdirk` / :meth:`from_id` for the standard grid
    presets; the raw constructor takes the time step directly.
    """

    order: int
    family: str
    n_x: int
    n_t: int
    dt: float
    alpha: float = 1.0
    check_stability: bool = field(default=True, compare=False)
    allow_degenerate: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        fam = self.family.upper()
        object.__setattr__(self, "family", fam)
        if fam not in ("ERK", "SDIRK"):
            raise ValueError(f"family must be ERK or SDIRK, got {self.family!r}")
        if fam == "ERK" and not 1 <= self.order <= 5:
            raise ValueError("ERK schemes have order 1..5")
        if fam == "SDIRK" and not 1 <= self.order <= 4:
            raise ValueError("SDIRK schemes have order 1..4")
        if self.n_x < 2 or self.n_t < 1 or self.dt <= 0:
            raise ValueError("need n_x >= 2, n_t >= 1 and dt > 0")
        if self.alpha < 0 or (self.alpha == 0 and not self.allow_degenerate):
            raise ValueError("wave speed alpha must be positive")
        if fam == "ERK" and self.check_stability and self.cfl > cfl_limit(self.order) * (1 + 1e-9):
            raise UnstableScheme(
                f"CFL {self.cfl:.6g} exceeds limit {cfl_limit(self.order):.6g} for ERK{self.order}")

    # -- presets -------------------------------------------------------------
    @classmethod
    def erk(cls, p: int, n_x: int, cfl_fraction: float = 0.85, alpha: float = 1.0,
            t_max: float = 8.0, n_t: int | None = None):
        """ERK grid preset: ``c = cfl_fraction * c_max`` and ``n_t`` the largest
        power of two with ``n_t * dt <= t_max`` (unless given)."""
        dx = 2.0 / n_x
        c = cfl_fraction * cfl_limit(p)
        dt = c * dx / alpha
        if n_t is None:
            n_t = 2 ** int(math.floor(math.log2(t_max / dt) + 1e-12))
        return cls(p, "ERK", n_x, n_t, dt, alpha)

    @classmethod
    def sdirk(cls, p: int, n_x: int, cfl: float = 4.0, t_max: float = 8.0, alpha: float = 1.0):
        """SDIRK grid preset: ``T = t_max`` and ``n_t`` chosen so that ``c = cfl``
        (``n_t = n_x`` for the defaults)."""
        dx = 2.0 / n_x
        dt = cfl * dx / alpha
        n_t = int(round(t_max / dt))
        return cls(p, "SDIRK", n_x, n_t, dt, alpha)

    @classmethod
    def from_id(cls, scheme_id: str, n_x: int, **kwargs):
        family, p = parse_scheme_id(scheme_id)
        return cls.erk(p, n_x, **kwargs) if family == "ERK" else cls.sdirk(p, n_x, **kwargs)

    def with_dt(self, dt: float, n_t: int | None = None, check_stability: bool | None = None):
        """Same spatial grid with a different time step (used for rediscretisation)."""
        return SchemeSpec(self.order, self.family, self.n_x, self.n_t if n_t is None else n_t,
                          dt, self.alpha,
                          self.check_stability if check_stability is None else check_stability,
                          self.allow_degenerate)

    # -- derived -------------------------------------------------------------
    @property
    def scheme_id(self) -> str:
        return f"{self.family.lower()}{self.order}+u{self.order}"

    @property
    def dx(self) -> float:
        return 2.0 / self.n_x

    @property
    def T(self) -> float:
        return self.n_t * self.dt

    @property
    def cfl(self) -> float:
        return self.alpha * self.dt / self.dx

    @property
    def x(self) -> np.ndarray:
        return -1.0 + self.dx * np.arange(self.n_x)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t + 1)

    @property
    def tableau(self) -> ButcherTableau:
        return _tableau_for(self.family, self.order)

    @property
    def stability(self) -> StabilityFunction:
        return _stability(self.family, self.order)


def build_L(p: int, n_x: int, dx: float, alpha: float = 1.0) -> CirculantOperator:
    """Circulant discretisation of ``-alpha d/dx`` with the order-``p`` upwind stencil."""
    stencil = STENCILS[p]
    if n_x <= 2 * p or n_x <= max(stencil.offsets) - min(stencil.offsets):
        raise GridTooSmall(f"n_x={n_x} too small for U{p}")
    entries = {-o: -alpha * float(w) / dx for o, w in zip(stencil.offsets, stencil.weights)}
    L = CirculantOperator.from_offsets(entries, n_x)
    if np.max(L.spectrum.real) > 1e-12 * max(1.0, np.max(np.abs(L.spectrum))):
        raise UnstableScheme("upwind operator has an eigenvalue with positive real part")
    return L


def _poly_of(coeffs, X: CirculantOperator) -> CirculantOperator:
    # Horner evaluation of sum_k coeffs[k] X^k, keeping sparsity exact
    n = X.n_x
    result = CirculantOperator.from_offsets({0: coeffs[-1]}, n)
    for a in coeffs[-2::-1]:
        result = multiply(result, X) + CirculantOperator.from_offsets({0: a}, n)
    return result


def runge_kutta_stepper(X: CirculantOperator, family: str, p: int):
    """``R(X)`` for the stability function of ERK``p`` or SDIRK``p``.

    ``X`` is ``dt`` times any circulant spatial operator.
    """
    family = family.upper()
    R = _stability(family, p)
    P = _poly_of(R.P_coeffs, X)
    if family == "ERK":
        return P
    return RationalStepper(P, _poly_of(R.Q_coeffs, X))


def build_phi(spec: SchemeSpec):
    """Fine-grid time stepper for ``spec``.

    Returns a :class:`CirculantOperator` ``P(dt L)`` for ERK schemes and a
    :class:`RationalStepper` ``(P(dt L), Q(dt L))`` for SDIRK schemes.
    """
    L = build_L(spec.order, spec.n_x, spec.dx, spec.alpha if spec.alpha > 0 else 0.0)
    phi = runge_kutta_stepper(spec.dt * L, spec.family, spec.order)
    biggest = float(np.max(np.abs(phi.spectrum)))
    if spec.check_stability and biggest > 1 + 1e-10:
        raise UnstableScheme(f"max |lambda| = {biggest:.12g} > 1 for {spec.scheme_id}")
    return phi


#: Per-step growth ``|R| - 1`` below this is not counted as unstable in
#: :func:`cfl_limit`.
AMPLIFICATION_SLACK = 1e-6


@functools.lru_cache(maxsize=None)
def cfl_limit(p: int, family: str = "ERK", n_theta: int = 2048) -> float:
    """Largest CFL number ``c`` with ``max_theta |R(-c sigma(theta))| <= 1``.

    ``sigma`` is the Fourier symbol of the order-``p`` upwind stencil. The
    maximum over ``theta`` is taken on ``n_theta`` equispaced samples and then
    refined by a bounded 1-D search around the sampled maximiser; ``c`` is
    located by bisection on ``[0, 4]`` to ``1e-9``. Amplification in excess
    of one by less than ``AMPLIFICATION_SLACK`` counts as neutral: ERK5+U5
    picks up a ``O(1e-7)`` long-wave growth for ``1.94 < c < 1.9658`` that is
    invisible over any practical number of steps. Implicit schemes return
    ``inf``.
    """
    family = family.upper()
    if family == "SDIRK":
        return math.inf
    R = _stability("ERK", p)
    stencil = STENCILS[p]
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    sigma = stencil.symbol(theta)
    h = theta[1] - theta[0]

    def amp(c, th):
        return float(np.abs(R(-c * stencil.symbol(th))))

    def max_amp(c):
        vals = np.abs(R(-c * sigma))
        i = int(np.argmax(vals))
        best = float(vals[i])
        res = minimize_scalar(lambda th: -amp(c, th), bounds=(theta[i] - h, theta[i] + h),
                              method="bounded", options={"xatol": 1e-12})
        return max(best, -float(res.fun))

    lo, hi = 0.0, 4.0
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if max_amp(mid) <= 1.0 + AMPLIFICATION_SLACK:
            lo = mid
        else:
            hi = mid
    return lo


def initial_condition(x):
    return np.sin(np.pi * x) ** 4


def exact_solution(x, t, alpha: float = 1.0):
    """``u(x, t) = sin^4(pi (x - alpha t))``."""
    return np.sin(np.pi * (np.asarray(x) - alpha * t)) ** 4


def sequential_solve(spec: SchemeSpec, u0=None, phi=None) -> np.ndarray:
    """Time-step from ``u0`` (default ``sin^4(pi x)``); returns ``(n_t+1, n_x)``."""
    if phi is None:
        phi = build_phi(spec)
    if u0 is None:
        u0 = initial_condition(spec.x)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (spec.n_x,):
        raise ValueError(f"u0 must have length {spec.n_x}")
    traj = np.empty((spec.n_t + 1, spec.n_x))
    traj[0] = u0
    for n in range(spec.n_t):
        traj[n + 1] = phi.apply(traj[n])
    return traj


def discretization_error(spec: SchemeSpec, trajectory=None) -> float:
    """Discrete space-time L2 error ``sqrt(dx dt sum |u - u_exact|^2)``."""
    if trajectory is None:
        trajectory = sequential_solve(spec)
    exact = exact_solution(spec.x[None, :], spec.t[:, None], spec.alpha)
    return float(np.sqrt(spec.dx * spec.dt * np.sum((trajectory - exact) ** 2)))


def export_trajectory(spec: SchemeSpec, trajectory, path):
    """CSV with columns ``t, x, u`` (one row per space-time point)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "u"])
        for tn, row in zip(spec.t, trajectory):
            for xi, ui in zip(spec.x, row):
                writer.writerow([repr(float(tn)), repr(float(xi)), repr(float(ui))])
    return path
