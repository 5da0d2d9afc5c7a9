"""MGRIT / Parareal for one-step linear time-stepping ``u^{n+1} = Phi u^n``.

Space-time iterates are arrays of shape ``(n_t + 1, n_x)``.  Every level of a
hierarchy solves the block lower-bidiagonal system

    u^0 = g^0,    u^{n+1} - Phi u^n = g^{n+1},

where the finest level has ``g = (u0, 0, ..., 0)`` and coarser levels carry
restricted residuals.  Relaxation work over distinct C-intervals is batched
into single array operations; with ``threads > 1`` the batch is split into
row chunks handled by a thread pool. Stepping is row-wise, so both paths give
bitwise-identical results.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RepeatedStepper",
    "Level",
    "Hierarchy",
    "SpaceTimeState",
    "SolveReport",
    "f_relax",
    "c_relax",
    "fcf_relax",
    "residual",
    "coarse_correction",
    "sequential_propagate",
    "solve",
    "operator_complexity",
    "DIVERGENCE_FACTOR",
]

#: A solve is flagged as diverged once the residual exceeds this multiple of
#: the initial residual.
DIVERGENCE_FACTOR = 1e3


class RepeatedStepper:
    """``base`` applied ``m`` times; the exact (ideal) coarse stepper ``Phi^m``.

    Its cost, reported through ``nnz``, is ``m`` fine steps.
    """

    def __init__(self, base, m: int):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.base = base
        self.m = int(m)

    @property
    def n_x(self):
        return self.base.n_x

    @property
    def nnz(self):
        return self.m * self.base.nnz

    @property
    def spectrum(self):
        return self.base.spectrum ** self.m

    def apply(self, u):
        for _ in range(self.m):
            u = self.base.apply(u)
        return u

    def __repr__(self):
        return f"RepeatedStepper({self.base!r}, m={self.m})"


@dataclass
class Level:
    """One grid level: its stepper, number of time steps and the coarsening
    factor to the next level (``None`` on the coarsest level)."""

    stepper: object
    n_t: int
    m: int | None = None


@dataclass
class Hierarchy:
    """Time-grid hierarchy; ``levels[0]`` is the fine grid.

    The last level is always solved by sequential time-stepping.
    """

    levels: list
    dx: float = 1.0
    dt: float = 1.0
    min_coarse_points: int = 2

    def __post_init__(self):
        if not self.levels:
            raise ValueError("hierarchy needs at least one level")
        n_x = self.levels[0].stepper.n_x
        for a, b in zip(self.levels[:-1], self.levels[1:]):
            if not a.m or a.m < 1:
                raise ValueError("every non-coarsest level needs a coarsening factor")
            if a.n_t % a.m or a.n_t // a.m != b.n_t:
                raise ValueError(f"n_t={a.n_t} is not coarsened exactly by m={a.m} to {b.n_t}")
            if b.stepper.n_x != n_x:
                raise ValueError("all levels must share n_x")
        if len(self.levels) > 1 and self.levels[-1].n_t < self.min_coarse_points:
            raise ValueError(
                f"coarsest grid has {self.levels[-1].n_t} < {self.min_coarse_points} points")

    @classmethod
    def two_level(cls, phi, psi, n_t: int, m: int, dx: float = 1.0, dt: float = 1.0,
                  min_coarse_points: int = 2):
        return cls([Level(phi, n_t, m), Level(psi, n_t // m)], dx, dt, min_coarse_points)

    @classmethod
    def from_steppers(cls, steppers, n_t: int, m: int, dx: float = 1.0, dt: float = 1.0,
                      min_coarse_points: int = 2):
        """Constant coarsening factor ``m`` between consecutive steppers."""
        levels = []
        for i, st in enumerate(steppers):
            last = i == len(steppers) - 1
            levels.append(Level(st, n_t // m**i, None if last else m))
        return cls(levels, dx, dt, min_coarse_points)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_x(self) -> int:
        return self.levels[0].stepper.n_x

    @property
    def n_t(self) -> int:
        return self.levels[0].n_t


@dataclass
class SpaceTimeState:
    """Space-time iterate; ``values[0]`` holds the initial condition."""

    values: np.ndarray
    rng_seed: int | None = None

    @classmethod
    def random(cls, u0, n_t: int, seed: int = 0):
        """Uniform(-1, 1) iterate everywhere except ``t = 0``."""
        u0 = np.asarray(u0, dtype=float)
        rng = np.random.default_rng(seed)
        values = np.empty((n_t + 1, u0.shape[0]))
        values[1:] = rng.uniform(-1.0, 1.0, size=(n_t, u0.shape[0]))
        values[0] = u0
        return cls(values, seed)


@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    converged: bool
    operator_complexity: float
    flags: list = field(default_factory=list)
    solution: np.ndarray | None = field(default=None, repr=False)

    @property
    def diverged(self) -> bool:
        return "diverged" in self.flags

    def to_csv(self, path):
        """Per-iteration residuals: columns ``iteration, residual``."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "residual"])
            for i, r in enumerate(self.residual_history):
                writer.writerow([i, repr(float(r))])
        return path

    def summary_row(self, scheme: str, m, levels: int) -> dict:
        return {
            "scheme": scheme,
            "m": m,
            "levels": levels,
            "iters": self.iterations,
            "OC": round(self.operator_complexity, 6),
            "converged": self.converged,
            "flags": ";".join(self.flags) or "ok",
        }


# ---------------------------------------------------------------------------
# batched stepping


class _Stepping:
    """Applies a stepper to a stack of rows, optionally through a thread pool."""

    def __init__(self, threads: int = 1, chunk_rows: int = 32):
        self.threads = max(1, int(threads))
        self.chunk_rows = chunk_rows
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def apply(self, stepper, rows):
        if self._pool is None or rows.shape[0] <= self.chunk_rows:
            return stepper.apply(rows)
        bounds = range(0, rows.shape[0], self.chunk_rows)
        parts = self._pool.map(lambda s: stepper.apply(rows[s:s + self.chunk_rows]), bounds)
        return np.concatenate(list(parts), axis=0)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


_SERIAL = _Stepping(1)


def _f_relax(u, g, phi, m, ex):
    n_t = u.shape[0] - 1
    for i in range(1, m):
        step = ex.apply(phi, u[i - 1:n_t:m])
        if g is not None:
            step += g[i:n_t:m]
        u[i:n_t:m] = step


def _c_relax(u, g, phi, m, ex):
    step = ex.apply(phi, u[m - 1:-1:m])
    if g is not None:
        step += g[m::m]
    u[m::m] = step


def _residual_rows(u, g, phi, ex):
    r = ex.apply(phi, u[:-1]) - u[1:]
    if g is not None:
        r += g[1:]
    return r


def _norm(r, weight):
    # per-row sums first, then numpy's pairwise sum: same order every time
    return math.sqrt(weight * float(np.sum(np.einsum("ij,ij->i", r, r))))


def _sequential(u, g, phi):
    for n in range(u.shape[0] - 1):
        nxt = phi.apply(u[n])
        if g is not None:
            nxt += g[n + 1]
        u[n + 1] = nxt


def _check_grid(u, m):
    if (u.shape[0] - 1) % m:
        raise ValueError(f"n_t={u.shape[0] - 1} is not divisible by m={m}")


def _values(state):
    return state.values if isinstance(state, SpaceTimeState) else np.asarray(state, dtype=float)


# ---------------------------------------------------------------------------
# public relaxation / residual operations


def f_relax(state, phi, m: int, rhs=None):
    """Step from every C-point across the following F-interval.

    Returns a new array; C-point values (and ``t = 0``) are untouched.
    """
    u = _values(state).copy()
    _check_grid(u, m)
    _f_relax(u, rhs, phi, m, _SERIAL)
    return u


def c_relax(state, phi, m: int, rhs=None):
    """Step from the last F-point of each interval into the next C-point."""
    u = _values(state).copy()
    _check_grid(u, m)
    _c_relax(u, rhs, phi, m, _SERIAL)
    return u


def fcf_relax(state, phi, m: int, rhs=None):
    """F-, then C-, then F-relaxation."""
    u = _values(state).copy()
    _check_grid(u, m)
    _f_relax(u, rhs, phi, m, _SERIAL)
    _c_relax(u, rhs, phi, m, _SERIAL)
    _f_relax(u, rhs, phi, m, _SERIAL)
    return u


def residual(state, phi, dx: float = 1.0, dt: float = 1.0, rhs=None) -> float:
    """Discrete space-time L2 norm of the residual,
    ``sqrt(dx * dt * sum_n |g^{n+1} - u^{n+1} + Phi u^n|^2)``."""
    u = _values(state)
    return _norm(_residual_rows(u, rhs, phi, _SERIAL), dx * dt)


def sequential_propagate(phi, u0, n_t: int, rhs=None):
    """Forward substitution ``u^{n+1} = Phi u^n + g^{n+1}`` from ``u^0 = u0``."""
    u = np.zeros((n_t + 1, len(u0)))
    u[0] = u0
    _sequential(u, rhs, phi)
    return u


def coarse_correction(state, phi, psi, m: int, rhs=None):
    """Two-level coarse-grid correction with a sequential coarse solve.

    Restricts the residual at C-points, solves ``e^{j+1} = Psi e^j + r^{j+1}``
    from ``e^0 = 0``, adds ``e`` at the C-points and F-relaxes (ideal
    interpolation).  Meant to follow an FCF-relaxation.
    """
    u = _values(state).copy()
    _check_grid(u, m)
    _correct(u, rhs, phi, m, _SERIAL, lambda e, gc: _sequential(e, gc, psi))
    return u


def _correct(u, g, phi, m, ex, coarse_solve):
    r_c = ex.apply(phi, u[m - 1:-1:m]) - u[m::m]
    if g is not None:
        r_c += g[m::m]
    g_c = np.zeros((r_c.shape[0] + 1, u.shape[1]))
    g_c[1:] = r_c
    e = np.zeros_like(g_c)
    coarse_solve(e, g_c)
    u[m::m] += e[1:]
    _f_relax(u, g, phi, m, ex)


# ---------------------------------------------------------------------------
# cycles


def _cycle(hierarchy, idx, u, g, ex, cycle):
    levels = hierarchy.levels
    lvl = levels[idx]
    if idx == len(levels) - 1:
        _sequential(u, g, lvl.stepper)
        return
    phi, m = lvl.stepper, lvl.m
    _f_relax(u, g, phi, m, ex)
    _c_relax(u, g, phi, m, ex)
    _f_relax(u, g, phi, m, ex)

    def coarse(e, g_c):
        _cycle(hierarchy, idx + 1, e, g_c, ex, cycle)
        if cycle == "F" and idx + 1 < len(levels) - 1:
            _cycle(hierarchy, idx + 1, e, g_c, ex, "V")

    _correct(u, g, phi, m, ex, coarse)


def operator_complexity(hierarchy: Hierarchy) -> float:
    """Time-stepping work over all levels relative to the fine level.

    Each level contributes ``nnz(Phi_l) * n_t,l / n_t,1``; for implicit
    steppers ``nnz`` counts numerator plus denominator.
    """
    fine = hierarchy.levels[0]
    total = sum(lvl.stepper.nnz * lvl.n_t / fine.n_t for lvl in hierarchy.levels)
    return total / fine.stepper.nnz


def solve(hierarchy: Hierarchy, u0, tol: float = 1e-10, max_iters: int = 100,
          cycle: str = "V", threads: int = 1, seed: int = 0, initial=None,
          keep_solution: bool = False) -> SolveReport:
    """Iterate MGRIT cycles with FCF-relaxation until the residual drops below ``tol``.

    Each iteration is a coarse-grid correction followed by the FCF-relaxation
    that opens the next cycle; the residual is measured on the relaxed fine
    iterate, so an ideal coarse stepper stops after exactly one iteration.

    Parameters
    ----------
    hierarchy : Hierarchy
        Two levels give Parareal-style two-level MGRIT; more levels recurse.
    u0 : array_like
        Initial condition (length ``n_x``).
    tol : float
        Absolute stopping tolerance on the space-time residual norm.
    max_iters : int
        Iteration cap.
    cycle : {"V", "F"}
    threads : int
        Worker threads for relaxation; results do not depend on it.
    seed : int
        Seed of the uniform(-1, 1) initial iterate.
    initial : ndarray, optional
        Explicit initial iterate, overriding the random one (row 0 is reset
        to ``u0``).

    Returns
    -------
    SolveReport
        ``residual_history[0]`` is the residual after the first relaxation.
    """
    cycle = cycle.upper()
    if cycle not in ("V", "F"):
        raise ValueError("cycle must be 'V' or 'F'")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (hierarchy.n_x,):
        raise ValueError(f"u0 must have length {hierarchy.n_x}")
    if initial is None:
        u = SpaceTimeState.random(u0, hierarchy.n_t, seed).values
    else:
        u = np.array(initial, dtype=float, copy=True)
        u[0] = u0
    g = np.zeros_like(u)
    g[0] = u0
    ex = _Stepping(threads)
    fine = hierarchy.levels[0]
    phi, m = fine.stepper, fine.m
    weight = hierarchy.dx * hierarchy.dt
    flags = []

    def relax():
        if hierarchy.n_levels == 1:
            _sequential(u, g, phi)
        else:
            _f_relax(u, g, phi, m, ex)
            _c_relax(u, g, phi, m, ex)
            _f_relax(u, g, phi, m, ex)

    def coarse(e, g_c):
        _cycle(hierarchy, 1, e, g_c, ex, cycle)
        if cycle == "F" and hierarchy.n_levels > 2:
            _cycle(hierarchy, 1, e, g_c, ex, "V")

    try:
        with np.errstate(over="ignore", invalid="ignore"):
            relax()
            history = [_norm(_residual_rows(u, g, phi, ex), weight)]
            it = 0
            while history[-1] >= tol and it < max_iters:
                _correct(u, g, phi, m, ex, coarse)
                relax()
                it += 1
                res = _norm(_residual_rows(u, g, phi, ex), weight)
                history.append(res)
                if not math.isfinite(res) or res > DIVERGENCE_FACTOR * history[0]:
                    flags.append("diverged")
                    break
    finally:
        ex.close()
    converged = history[-1] < tol
    if not converged and "diverged" not in flags:
        flags.append("max_iters")
    return SolveReport(it, history, converged, operator_complexity(hierarchy), flags,
                       u if keep_solution else None)
