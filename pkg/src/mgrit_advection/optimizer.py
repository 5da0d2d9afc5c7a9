"""Coarse time-stepper synthesis.

A sparse circulant ``Psi`` is fitted to the ideal coarse stepper ``Phi^m``
through its spectrum.  The first column of ``Psi`` is restricted to a
:class:`SparsityPattern`; because circulant eigenvalues are a linear
function (the DFT) of the first column, matching spectra under a diagonal
weight is a linear least squares problem.  :func:`nonlinear_lsq_psi` then
refines the fit by minimising the two-level convergence bound directly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import scipy.linalg as sla

from .circulant import (
    IMAG_TOL,
    CirculantOperator,
    ImaginaryResidue,
    RationalStepper,
    power,
    rational_first_column_power,
)
from .discretization import SchemeSpec, build_phi, parse_scheme_id
from .mgrit import Hierarchy, Level
from .theory import UNSTABLE_TOL, WeightingSpec, error_bound, weight_vector

__all__ = [
    "EmptyPattern",
    "IllConditioned",
    "NonFiniteObjective",
    "SparsityPattern",
    "PhiPattern",
    "IdealWindow",
    "Threshold",
    "OptimizedPsi",
    "ideal_column",
    "select_pattern",
    "linear_lsq_psi",
    "nonlinear_lsq_psi",
    "search_window",
    "build_multilevel_psis",
    "psi_from_rediscretization",
    "sdirk_threshold",
    "load_pattern_presets",
    "write_pattern_presets",
    "generate_pattern_presets",
    "preset_pattern",
    "ETA_TOL",
    "MAX_CONDITION",
    "SCALABLE_BOUND",
    "MULTILEVEL_BOUND",
]

#: Largest accepted condition number of the weighted design matrix.
MAX_CONDITION = 1e14

#: Thresholds ``eta`` for SDIRK patterns, by order, for m = 2, 4, ..., 64.
ETA_TOL = {
    1: (0.1, 0.125, 0.25, 0.5, 0.5, 0.6),
    2: (0.05, 0.1, 0.1, 0.2, 0.2, 0.2),
    3: (0.005, 0.01, 0.02, 0.02, 0.02, 0.04),
    4: (0.005, 0.01, 0.01, 0.01, 0.02, 0.02),
}

#: Window growth stops once the largest per-mode two-level bound is below
#: this value on both test resolutions.
SCALABLE_BOUND = 0.31

#: Tolerance for levels below the first coarse level of a multilevel
#: hierarchy; each of them approximates an already approximate stepper.
MULTILEVEL_BOUND = 0.1


class EmptyPattern(ValueError):
    """A pattern strategy selected no offsets."""


class IllConditioned(ArithmeticError):
    """The weighted least squares problem is numerically singular."""


class NonFiniteObjective(ArithmeticError):
    """The bound objective could not be evaluated at any admissible point."""


# ---------------------------------------------------------------------------
# patterns


def _signed(j, n_x):
    j = np.asarray(j, dtype=np.int64) % n_x
    return np.where(j > n_x // 2, j - n_x, j)


def _diagonals(indices, n_x):
    """First-column indices -> diagonal offsets."""
    return tuple(int(d) for d in _signed(-np.asarray(indices, dtype=np.int64), n_x))


@dataclass(frozen=True)
class SparsityPattern:
    """Allowed non-zero diagonals of a circulant.

    Offset ``d`` is a diagonal index: ``(Psi u)_i`` receives
    ``psi_d * u_{i+d}``, stored at first-column index ``-d mod n_x``.
    Upwind transport to the right therefore lives on negative offsets.
    Offsets are kept sorted and reduced to ``[-n_x/2, n_x/2)``.
    """

    offsets: tuple
    n_x: int

    def __post_init__(self):
        offs = -_signed(-np.asarray(self.offsets, dtype=np.int64).ravel(), self.n_x)
        uniq = np.unique(offs)
        if uniq.size == 0:
            raise EmptyPattern("pattern has no offsets")
        if uniq.size != offs.size:
            raise ValueError("offsets are not distinct modulo n_x")
        if uniq.size > self.n_x // 4:
            raise ValueError(f"pattern of size {uniq.size} exceeds n_x/4 = {self.n_x // 4}")
        object.__setattr__(self, "offsets", tuple(int(o) for o in uniq))

    @classmethod
    def window(cls, lo: int, hi: int, n_x: int) -> "SparsityPattern":
        """Contiguous offsets ``lo..hi`` inclusive."""
        return cls(tuple(range(lo, hi + 1)), n_x)

    @classmethod
    def from_indices(cls, indices, n_x: int) -> "SparsityPattern":
        """Pattern covering the given first-column indices."""
        return cls(_diagonals(indices, n_x), n_x)

    @property
    def nu(self) -> int:
        return len(self.offsets)

    @property
    def indices(self) -> np.ndarray:
        """First-column indices of the pattern."""
        return (-np.asarray(self.offsets, dtype=np.int64)) % self.n_x

    def is_contiguous(self) -> bool:
        o = np.asarray(self.offsets)
        return bool(np.all(np.diff(o) == 1))

    def scatter(self, values) -> np.ndarray:
        """First column with ``values`` placed on the pattern (``R^T psi``)."""
        col = np.zeros(self.n_x)
        col[self.indices] = values
        return col

    def gather(self, column) -> np.ndarray:
        """Entries of ``column`` on the pattern (``R psi~``)."""
        return np.asarray(column)[self.indices]

    def resized(self, n_x: int) -> "SparsityPattern":
        """Same signed offsets on another grid."""
        return SparsityPattern(self.offsets, n_x)

    def __str__(self):
        return " ".join(str(o) for o in self.offsets)


@dataclass(frozen=True)
class PhiPattern:
    """Reuse the fine stepper's own non-zero diagonals."""

    offsets: tuple


@dataclass(frozen=True)
class IdealWindow:
    """Contiguous window over the largest ideal entries, ``extra`` wider
    than the requested size."""

    extra: int = 0

    def __post_init__(self):
        if self.extra < 0:
            raise ValueError("extra must be >= 0")


@dataclass(frozen=True)
class Threshold:
    """All diagonals with ``|entry| >= eta * max|entry|``."""

    eta: float

    def __post_init__(self):
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")


def ideal_column(phi, m: int) -> np.ndarray:
    """First column of ``Phi^m`` for a circulant or rational stepper."""
    if isinstance(phi, RationalStepper):
        return rational_first_column_power(phi, m)[0]
    return power(phi, m).first_column


def _best_window(mag, size):
    """Start index of the cyclic window of ``size`` entries with largest mass."""
    n = mag.shape[0]
    ext = np.concatenate([mag, mag[:size]])
    sums = np.convolve(ext, np.ones(size), mode="valid")[:n]
    return int(np.argmax(sums))


def _grow(mag, lo, hi):
    """Extend ``[lo, hi]`` by one towards the larger neighbouring entry."""
    n = mag.shape[0]
    return (lo - 1, hi) if mag[(lo - 1) % n] > mag[(hi + 1) % n] else (lo, hi + 1)


def select_pattern(column, strategy, nnz_target: int | None = None) -> SparsityPattern:
    """Choose the non-zero diagonals of ``Psi`` from the ideal first column.

    Parameters
    ----------
    column : array_like
        First column of ``Phi^m``.
    strategy : PhiPattern, IdealWindow or Threshold
    nnz_target : int, optional
        Base window size for :class:`IdealWindow` (normally ``nnz(Phi)``).

    Returns
    -------
    SparsityPattern
    """
    column = np.asarray(column, dtype=float)
    n = column.shape[0]
    mag = np.abs(column)
    if isinstance(strategy, PhiPattern):
        return SparsityPattern(strategy.offsets, n)
    if isinstance(strategy, Threshold):
        peak = mag.max()
        if peak == 0.0:
            raise EmptyPattern("ideal column is zero")
        idx = np.flatnonzero(mag >= strategy.eta * peak)
        if idx.size == 0:
            raise EmptyPattern(f"no entry reaches eta={strategy.eta}")
        return SparsityPattern.from_indices(idx, n)
    if isinstance(strategy, IdealWindow):
        if not nnz_target or nnz_target < 1:
            raise ValueError("IdealWindow needs a positive nnz_target")
        if mag.max() == 0.0:
            raise EmptyPattern("ideal column is zero")
        lo = _best_window(mag, nnz_target)
        hi = lo + nnz_target - 1
        for _ in range(strategy.extra):
            lo, hi = _grow(mag, lo, hi)
        return SparsityPattern.from_indices(np.arange(lo, hi + 1), n)
    raise TypeError(f"unknown pattern strategy {strategy!r}")


# ---------------------------------------------------------------------------
# least squares


@dataclass
class OptimizedPsi:
    """A fitted sparse coarse stepper and its diagnostics."""

    operator: CirculantOperator
    pattern: SparsityPattern
    imag_residue: float
    objective_value: float
    method: str
    condition: float = float("nan")
    max_abs_mu: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return self.pattern.gather(self.operator.first_column)

    @property
    def stable(self) -> bool:
        """``max|mu_k| <= 1`` up to :data:`UNSTABLE_TOL`."""
        return self.max_abs_mu <= 1.0 + UNSTABLE_TOL

    @property
    def nnz(self) -> int:
        return self.pattern.nu

    def to_csv(self, path):
        """First column as ``index,value`` rows after ``#``-prefixed metadata."""
        with open(path, "w", newline="") as fh:
            fh.write(f"# method={self.method}\n")
            fh.write(f"# objective={self.objective_value!r}\n")
            fh.write(f"# imag_residue={self.imag_residue!r}\n")
            fh.write(f"# max_abs_mu={self.max_abs_mu!r}\n")
            fh.write(f"# pattern={self.pattern}\n")
            writer = csv.writer(fh)
            writer.writerow(["index", "value"])
            for i, v in enumerate(self.operator.first_column):
                writer.writerow([i, repr(float(v))])
        return path


def _dft_columns(pattern: SparsityPattern) -> np.ndarray:
    """``F R^T``: column ``j`` holds ``exp(-2 pi i k o_j / n_x)``."""
    n = pattern.n_x
    k = np.arange(n, dtype=np.int64)[:, None]
    # reduce k*o mod n in integers so the phase is exact for large n
    phase = (k * pattern.indices[None, :]) % n
    return np.exp(-2j * np.pi * phase / n)


def _weighted_objective(weights, target, mu):
    return float(np.sum(weights * np.abs(target - mu) ** 2))


def linear_lsq_psi(column, pattern: SparsityPattern, weights, target_spectrum=None) -> OptimizedPsi:
    """Weighted spectral least squares fit of ``Psi`` on a fixed pattern.

    Minimises ``|| W^(1/2) F (phi_m - R^T psi) ||_2`` over the pattern values
    ``psi``.  The complex problem has a real minimiser, so the imaginary part
    of the computed solution is only rounding noise; it is discarded when
    below ``IMAG_TOL`` and reported.

    Parameters
    ----------
    column : array_like
        First column of ``Phi^m``.
    pattern : SparsityPattern
    weights : array_like
        Strictly positive per-mode weights ``w_k``.
    target_spectrum : array_like, optional
        Eigenvalues of ``Phi^m`` if already known; defaults to ``fft(column)``.

    Raises
    ------
    IllConditioned
        Condition number of the weighted design matrix above ``MAX_CONDITION``.
    ImaginaryResidue
        Imaginary part of the solution at or above ``IMAG_TOL``.
    """
    column = np.asarray(column, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = column.shape[0]
    if pattern.n_x != n or weights.shape != (n,):
        raise ValueError("column, pattern and weights must share n_x")
    if np.any(weights <= 0):
        raise ValueError("weights must be strictly positive")
    target = np.fft.fft(column) if target_spectrum is None else np.asarray(target_spectrum)
    sw = np.sqrt(weights)
    design = sw[:, None] * _dft_columns(pattern)
    rhs = sw * target
    q, r, perm = sla.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[-1] == 0.0:
        raise IllConditioned("rank-deficient design matrix")
    cond = float(np.linalg.cond(r))
    if not cond <= MAX_CONDITION:
        raise IllConditioned(f"condition number {cond:.2e} exceeds {MAX_CONDITION:.0e}")
    y = sla.solve_triangular(r, q.conj().T @ rhs)
    psi = np.empty(pattern.nu, dtype=complex)
    psi[perm] = y
    residue = float(np.max(np.abs(psi.imag)))
    if residue >= IMAG_TOL:
        raise ImaginaryResidue(f"imaginary residue {residue:.3e} exceeds {IMAG_TOL:.0e}")
    op = CirculantOperator(pattern.scatter(psi.real))
    mu = op.spectrum
    return OptimizedPsi(
        op, pattern, residue, _weighted_objective(weights, target, mu), "linear",
        condition=cond, max_abs_mu=float(np.max(np.abs(mu))),
    )


def _bound_residuals(lam, m, n_t, pattern, basis, psi):
    mu = basis @ psi
    b = error_bound(lam, mu, m, n_t).bounds
    return b / math.sqrt(lam.shape[0]), float(np.max(np.abs(mu)))


def nonlinear_lsq_psi(phi_spectrum, pattern: SparsityPattern, m: int, n_t: int,
                      init: OptimizedPsi, max_nl_iters: int = 30, damping: float = 1e-3,
                      rtol: float = 1e-10, atol: float = 1e-20) -> OptimizedPsi:
    """Refine ``Psi`` by Levenberg-Marquardt on the per-mode bound.

    The objective is ``(1/n_x) sum_k bound_k(lambda_k, mu_k(psi))^2`` where
    ``bound_k`` is the two-level FCF bound of :func:`theory.error_bound` and
    ``mu(psi) = F R^T psi``.  Each iteration solves the damped normal
    equations with a forward-difference Jacobian; a trial is accepted only
    if it lowers the objective and keeps every ``|mu_k| <= 1 + UNSTABLE_TOL``.

    Parameters
    ----------
    phi_spectrum : array_like
        Fine eigenvalues ``lambda_k``.
    pattern : SparsityPattern
    m, n_t : int
        Coarsening factor and fine step count entering the bound.
    init : OptimizedPsi
        Starting point, normally the weighted linear fit.
    max_nl_iters : int
        Iteration cap.
    damping : float
        Initial damping; multiplied by 10 after a rejected trial and divided
        by 10 after an accepted one.
    rtol : float
        Stop once an accepted step lowers the objective by less than this
        relative amount.
    atol : float
        Objective treated as zero; below it the start point is returned as is.

    Returns
    -------
    OptimizedPsi
        The best point visited, so the objective never exceeds the initial one.
    """
    lam = np.asarray(phi_spectrum, dtype=complex)
    if init.pattern != pattern:
        raise ValueError("init must live on the same pattern")
    basis = _dft_columns(pattern)
    psi = init.values.astype(float)
    res, mu_max = _bound_residuals(lam, m, n_t, pattern, basis, psi)
    obj = float(res @ res)
    if not math.isfinite(obj):
        raise NonFiniteObjective("objective is not finite at the initial point")
    history = [obj]
    lam_damp = damping
    for _ in range(max_nl_iters):
        if obj <= atol:
            break
        jac = np.empty((res.shape[0], psi.shape[0]))
        for j in range(psi.shape[0]):
            h = 1e-7 * max(1.0, abs(psi[j]))
            trial = psi.copy()
            trial[j] += h
            jac[:, j] = (_bound_residuals(lam, m, n_t, pattern, basis, trial)[0] - res) / h
        jtj = jac.T @ jac
        grad = jac.T @ res
        accepted = False
        while lam_damp < 1e16:
            step = np.linalg.solve(jtj + lam_damp * np.eye(psi.shape[0]), -grad)
            cand = psi + step
            c_res, c_mu = _bound_residuals(lam, m, n_t, pattern, basis, cand)
            c_obj = float(c_res @ c_res)
            if math.isfinite(c_obj) and c_obj < obj and c_mu <= 1.0 + UNSTABLE_TOL:
                accepted = True
                lam_damp = max(lam_damp / 10.0, 1e-15)
                break
            lam_damp *= 10.0
        if not accepted:
            break
        decrease = (obj - c_obj) / obj
        psi, res, obj, mu_max = cand, c_res, c_obj, c_mu
        history.append(obj)
        if decrease < rtol:
            break
    op = CirculantOperator(pattern.scatter(psi))
    return OptimizedPsi(op, pattern, init.imag_residue, obj, "nonlinear",
                        condition=init.condition, max_abs_mu=mu_max, history=history)


def max_bound(phi, psi, m: int, n_t: int) -> float:
    """Largest per-mode two-level bound for the pair ``(Phi, Psi)``."""
    return error_bound(phi.spectrum, psi.spectrum, m, n_t).max_bound


# ---------------------------------------------------------------------------
# pattern search for explicit schemes


def _fit(phi, m, pattern, eps):
    col = ideal_column(phi, m)
    return linear_lsq_psi(col, pattern.resized(phi.n_x), weight_vector(phi.spectrum, WeightingSpec(eps)))


def search_window(specs, m: int, max_extra: int = 12, bound_tol: float = SCALABLE_BOUND,
                  eps: float = 1e-6, phis=None):
    """Grow a contiguous window until the fitted ``Psi`` looks scalable.

    Starting from the ``nnz(Phi)``-sized window with the largest ideal
    entries on the first grid, one diagonal at a time is added on the side
    of the larger neighbouring entry.  A window is accepted once the largest
    two-level bound is below ``bound_tol`` on every grid in ``specs``
    (normally two resolutions of the same scheme).  If ``max_extra``
    diagonals are added without success the window with the smallest
    worst-grid bound is returned; the trace shows that it failed.

    Returns
    -------
    pattern : SparsityPattern
        Pattern on the first grid.
    trace : list of (nu, [max bound per grid])
    """
    phis = phis or [build_phi(s) for s in specs]
    base = phis[0]
    mag = np.abs(ideal_column(base, m))
    nnz = base.nnz
    lo = _best_window(mag, nnz)
    hi = lo + nnz - 1
    trace = []
    best = None
    for _ in range(max_extra + 1):
        pattern = SparsityPattern.from_indices(np.arange(lo, hi + 1), base.n_x)
        bounds = []
        for spec, phi in zip(specs, phis):
            try:
                psi = _fit(phi, m, pattern, eps).operator
                bounds.append(max_bound(phi, psi, m, spec.n_t))
            except (IllConditioned, ImaginaryResidue):
                bounds.append(float("inf"))
        trace.append((pattern.nu, bounds))
        if best is None or max(bounds) < best[0]:
            best = (max(bounds), pattern)
        if max(bounds) <= bound_tol:
            return pattern, trace
        lo, hi = _grow(mag, lo, hi)
    # cap reached: fall back to the best window seen
    pattern = best[1]
    return pattern, trace


# ---------------------------------------------------------------------------
# presets


_PRESET_FILE = "erk_patterns.txt"


def load_pattern_presets(path=None) -> dict:
    """Read ``scheme,m,offset,offset,...`` lines into ``{(scheme, m): offsets}``.

    Blank lines and lines starting with ``#`` are ignored.
    """
    if path is None:
        text = resources.files(__package__).joinpath("presets").joinpath(_PRESET_FILE).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    presets = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 3:
            raise ValueError(f"line {lineno}: expected scheme,m,offsets...")
        try:
            key = (parts[0].upper(), int(parts[1]))
            presets[key] = tuple(int(p) for p in parts[2:])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return presets


def write_pattern_presets(presets: dict, path, header: str = ""):
    """Inverse of :func:`load_pattern_presets`; keys are written sorted."""
    with open(path, "w") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        for (scheme, m), offs in sorted(presets.items()):
            fh.write(",".join([scheme, str(m)] + [str(o) for o in offs]) + "\n")
    return path


def preset_pattern(scheme_id: str, m: int, n_x: int, presets=None) -> SparsityPattern:
    """Shipped pattern for an explicit scheme and coarsening factor."""
    presets = presets if presets is not None else load_pattern_presets()
    fam, p = parse_scheme_id(scheme_id)
    key = (f"{fam}{p}+U{p}", int(m))
    if key not in presets:
        raise KeyError(f"no preset pattern for {key[0]} with m={m}")
    return SparsityPattern(presets[key], n_x)


def generate_pattern_presets(orders=(1, 2, 3, 4, 5), ms=(2, 4, 8, 16, 32, 64), n_x: int = 256,
                             refine: int = 4, max_extra: int = 12,
                             bound_tol: float = SCALABLE_BOUND) -> tuple[dict, dict]:
    """Run :func:`search_window` for every ERK scheme and coarsening factor.

    Each search uses the default grid at ``n_x`` and at ``refine * n_x``.
    A search that exhausts ``max_extra`` is repeated once with twice the cap.

    Returns
    -------
    presets : dict
        ``{("ERKp+Up", m): offsets}``, ready for :func:`write_pattern_presets`.
    traces : dict
        The search trace for every key.
    """
    presets, traces = {}, {}
    for p in orders:
        specs = [SchemeSpec.erk(p, n_x), SchemeSpec.erk(p, refine * n_x)]
        phis = [build_phi(s) for s in specs]
        for m in ms:
            for cap in (max_extra, 2 * max_extra):
                pattern, trace = search_window(specs, m, max_extra=cap,
                                               bound_tol=bound_tol, phis=phis)
                if max(trace[-1][1]) <= bound_tol:
                    break
            key = (f"ERK{p}+U{p}", m)
            presets[key] = pattern.offsets
            traces[key] = trace
    return presets, traces


def sdirk_threshold(p: int, m: int) -> float:
    """Preset ``eta`` for SDIRK``p`` at coarsening factor ``m``."""
    ms = (2, 4, 8, 16, 32, 64)
    if p not in ETA_TOL or m not in ms:
        raise KeyError(f"no threshold preset for SDIRK{p} with m={m}")
    return ETA_TOL[p][ms.index(m)]


# ---------------------------------------------------------------------------
# hierarchies and rediscretization


def psi_from_rediscretization(spec: SchemeSpec, m: int, allow_unstable: bool = False):
    """The fine scheme rebuilt with time step ``m * dt``.

    Explicit schemes usually violate their CFL limit after coarsening, which
    raises :class:`~mgrit_advection.discretization.UnstableScheme` unless
    ``allow_unstable`` is set.
    """
    if m == 1:
        return build_phi(spec)
    if spec.n_t % m:
        raise ValueError(f"n_t={spec.n_t} is not divisible by m={m}")
    coarse = spec.with_dt(spec.dt * m, spec.n_t // m, check_stability=not allow_unstable)
    return build_phi(coarse)


def _grown_pattern(col, phi, m, n_t, weights, bound_tol, max_extra):
    mag = np.abs(col)
    nnz = phi.nnz if isinstance(phi, CirculantOperator) else 1
    lo = _best_window(mag, nnz)
    hi = lo + nnz - 1
    for _ in range(max_extra + 1):
        pattern = SparsityPattern.from_indices(np.arange(lo, hi + 1), phi.n_x)
        fit = linear_lsq_psi(col, pattern, weights)
        if max_bound(phi, fit.operator, m, n_t) <= bound_tol:
            break
        lo, hi = _grow(mag, lo, hi)
    return fit


def build_multilevel_psis(fine: SchemeSpec, m: int, levels: int, strategy=None,
                          min_coarse_points: int = 2, eps: float = 1e-6,
                          bound_tol: float = SCALABLE_BOUND,
                          coarse_bound_tol: float = MULTILEVEL_BOUND, max_extra: int = 40):
    """Recursive hierarchy of least squares coarse steppers.

    Level ``l + 1`` approximates ``Phi_l^m`` with the weights of ``Phi_l``.
    With ``strategy=None`` the first coarse level uses the shipped preset
    pattern of an explicit scheme (so two levels reproduce the two-level
    solver) or, failing that, a window grown until the two-level bound is
    below ``bound_tol``.  Deeper levels grow their windows from
    ``nnz(Phi_l)`` until the bound between consecutive levels is below
    ``coarse_bound_tol``, which lets the stencils fill in as levels
    coarsen.  A :class:`Threshold` strategy or a callable
    ``(level, column, phi) -> SparsityPattern`` may be supplied instead.

    Returns
    -------
    hierarchy : Hierarchy
    fits : list of OptimizedPsi
        One per coarse level.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if fine.n_t % m ** (levels - 1):
        raise ValueError(f"n_t={fine.n_t} is not divisible by m^{levels - 1}")
    phi = build_phi(fine)
    level_list = [Level(phi, fine.n_t, m if levels > 1 else None)]
    fits = []
    n_t = fine.n_t
    for lev in range(1, levels):
        col = ideal_column(phi, m)
        weights = weight_vector(phi.spectrum, WeightingSpec(eps))
        if strategy is None:
            fit = None
            if lev == 1 and fine.family == "ERK":
                try:
                    pattern = preset_pattern(fine.scheme_id, m, fine.n_x)
                    fit = linear_lsq_psi(col, pattern, weights)
                except KeyError:
                    pass
            if fit is None:
                tol = bound_tol if lev == 1 else coarse_bound_tol
                fit = _grown_pattern(col, phi, m, n_t, weights, tol, max_extra)
        else:
            if callable(strategy):
                pattern = strategy(lev, col, phi)
            else:
                pattern = select_pattern(col, strategy, getattr(phi, "nnz", None))
            fit = linear_lsq_psi(col, pattern, weights)
        fits.append(fit)
        phi = fit.operator
        n_t //= m
        last = lev == levels - 1
        level_list.append(Level(phi, n_t, None if last else m))
    hierarchy = Hierarchy(level_list, fine.dx, fine.dt, min_coarse_points)
    return hierarchy, fits
