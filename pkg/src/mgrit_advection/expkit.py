"""Experiment harness: configs, table and figure runners, baselines.

Every experiment id reproduces one table or figure of the advection study
at desk scale.  Results are collected in a :class:`ResultTable` with a fixed
column layout and written as CSV; figure experiments also write the data
behind each panel as CSV and, when plotting is on, as SVG.

Config files are flat ``key = value`` text; a key given several times
builds a list::

    experiment = table3
    scheme = erk1+u1
    scheme = erk3+u3
    n_x = 2^8
    m = 2
    m = 4
"""
from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .circulant import CirculantOperator, ImaginaryResidue
from .discretization import (
    SchemeSpec,
    build_phi,
    cfl_limit,
    discretization_error,
    initial_condition,
    parse_scheme_id,
    runge_kutta_stepper,
)
from .mgrit import Hierarchy, RepeatedStepper, solve
from .optimizer import (
    IllConditioned,
    Threshold,
    build_multilevel_psis,
    ideal_column,
    linear_lsq_psi,
    nonlinear_lsq_psi,
    preset_pattern,
    psi_from_rediscretization,
    sdirk_threshold,
    select_pattern,
    SparsityPattern,
)
from .svg import Series, emit_svg
from .theory import UNSTABLE_TOL, error_bound, weight_vector

__all__ = [
    "ConfigError",
    "BaselineMissing",
    "ExperimentConfig",
    "Row",
    "ResultTable",
    "BaselineReport",
    "parse_config",
    "load_config",
    "run_experiment",
    "compare_baseline",
    "list_experiments",
    "coarse_operator",
    "emit_svg",
    "Series",
    "EXPERIMENTS",
    "OUTPUT_ENV",
]

#: Environment variable overriding the default output directory.
OUTPUT_ENV = "MGRIT_ADV_OUTPUT_DIR"

FLAGS = ("ok", "diverged", "imag-flagged")
COLUMNS = ("experiment", "scheme", "n_x", "n_t", "m", "levels", "variant", "quantity",
           "value", "flags", "note")
MS = (2, 4, 8, 16, 32, 64)
ERK_IDS = tuple(f"erk{p}+u{p}" for p in range(1, 6))
SDIRK_IDS = tuple(f"sdirk{p}+u{p}" for p in range(1, 5))
DESK_MAX_NX = 2 ** 10


class ConfigError(ValueError):
    """Invalid experiment config; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, source="<config>", field=None):
        self.line = line
        self.field = field
        self.message = message
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


class BaselineMissing(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True, order=True)
class Row:
    """One result value.  Integer columns use 0 for "not applicable"."""

    experiment: str
    scheme: str
    n_x: int
    n_t: int
    m: int
    levels: int
    variant: str
    quantity: str
    value: float = field(compare=False)
    flags: str = field(default="ok", compare=False)
    note: str = field(default="", compare=False)
    may_fail: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        if self.flags not in FLAGS:
            raise ValueError(f"flags must be one of {FLAGS}, got {self.flags!r}")

    @property
    def key(self):
        return (self.experiment, self.scheme, self.n_x, self.n_t, self.m, self.levels,
                self.variant, self.quantity)


def _fmt_value(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.10g}"


class ResultTable:
    """Rows kept in a deterministic (sorted) order."""

    def __init__(self, rows=()):
        self.rows = sorted(rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def extend(self, rows):
        self.rows = sorted(list(self.rows) + list(rows))

    def select(self, **criteria):
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in criteria.items())]

    def value(self, **criteria):
        """Value of the single row matching ``criteria``."""
        hits = self.select(**criteria)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {criteria}")
        return hits[0].value

    def unexpected_failures(self):
        return [r for r in self.rows if r.flags != "ok" and not r.may_fail]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS)
            for r in self.rows:
                writer.writerow([r.experiment, r.scheme, r.n_x, r.n_t, r.m, r.levels, r.variant,
                                 r.quantity, _fmt_value(r.value), r.flags, r.note])
        return path

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
            for rec in reader:
                rows.append(Row(rec["experiment"], rec["scheme"], int(rec["n_x"]),
                                int(rec["n_t"]), int(rec["m"]), int(rec["levels"]),
                                rec["variant"], rec["quantity"], float(rec["value"]),
                                rec["flags"], rec["note"]))
        return cls(rows)

    def format(self) -> str:
        """Fixed-width text rendering."""
        head = ("scheme", "n_x", "n_t", "m", "lev", "variant", "quantity", "value", "flags")
        lines = [f"{head[0]:<12}{head[1]:>6}{head[2]:>7}{head[3]:>4}{head[4]:>4}  "
                 f"{head[5]:<18}{head[6]:<22}{head[7]:>12}  {head[8]}"]
        for r in self.rows:
            lines.append(f"{r.scheme:<12}{r.n_x:>6}{r.n_t:>7}{r.m:>4}{r.levels:>4}  "
                         f"{r.variant:<18}{r.quantity:<22}{_fmt_value(r.value):>12}  {r.flags}"
                         + (f" ({r.note})" if r.note else ""))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run.

    Empty tuples mean "use the experiment's defaults" (see
    :meth:`resolved`).
    """

    experiment: str
    schemes: tuple = ()
    n_x: tuple = ()
    m: tuple = ()
    levels: tuple = ()
    variants: tuple = ()
    tol: float = 1e-10
    seed: int = 0
    output_dir: str | None = None
    max_iters: int | None = None
    min_coarse_points: int | None = None
    cycle: str = "V"
    plot: bool = True
    large: bool = False
    heat: bool = False
    threads: int = 1

    def resolved(self) -> "ExperimentConfig":
        """Copy with experiment defaults filled in and values validated."""
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}", field="experiment")
        exp = EXPERIMENTS[self.experiment]
        updates = {k: tuple(v) for k, v in exp.defaults.items() if not getattr(self, k)}
        cfg = replace(self, **updates)
        cfg.validate()
        return cfg

    def validate(self):
        for s in self.schemes:
            try:
                parse_scheme_id(s)
            except ValueError as exc:
                raise ConfigError(str(exc), field="schemes") from None
        for n in self.n_x:
            if n < 4 or n & (n - 1):
                raise ConfigError(f"grid size {n} is not a power of two >= 4", field="n_x")
            if n > DESK_MAX_NX and not self.large:
                raise ConfigError(f"n_x={n} exceeds the desk-scale cap {DESK_MAX_NX}; pass --large",
                                  field="n_x")
        for v in self.m:
            if v < 1:
                raise ConfigError(f"coarsening factor {v} must be >= 1", field="m")
        for v in self.levels:
            if v < 1:
                raise ConfigError(f"levels {v} must be >= 1", field="levels")
        if not self.tol > 0:
            raise ConfigError("tol must be positive", field="tol")
        if self.cycle.upper() not in ("V", "F"):
            raise ConfigError("cycle must be V or F", field="cycle")
        if self.large and any(n > DESK_MAX_NX for n in self.n_x):
            warnings.warn("large grids requested; expect long runtimes and high memory use",
                          RuntimeWarning, stacklevel=2)


def _parse_int(text):
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return int(base) ** int(exp)
    return int(text)


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# config key -> (field name, converter, is_list)
_KEYS = {
    "experiment": ("experiment", str.strip, False),
    "scheme": ("schemes", lambda s: s.strip().lower(), True),
    "n_x": ("n_x", _parse_int, True),
    "m": ("m", _parse_int, True),
    "levels": ("levels", _parse_int, True),
    "variant": ("variants", str.strip, True),
    "tol": ("tol", float, False),
    "seed": ("seed", int, False),
    "output_dir": ("output_dir", str.strip, False),
    "max_iters": ("max_iters", int, False),
    "min_coarse_points": ("min_coarse_points", int, False),
    "cycle": ("cycle", lambda s: s.strip().upper(), False),
    "plot": ("plot", _parse_bool, False),
    "large": ("large", _parse_bool, False),
    "heat": ("heat", _parse_bool, False),
    "threads": ("threads", int, False),
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Raises
    ------
    ConfigError
        With the offending line number for syntax errors, unknown keys, bad
        values and repeated scalar keys.
    """
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        key, val = (p.strip() for p in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        name, conv, is_list = _KEYS[key]
        try:
            items = [conv(v) for v in val.split(",")] if is_list else [conv(val)]
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, source) from None
        if is_list:
            values.setdefault(name, []).extend(items)
        else:
            if name in values:
                raise ConfigError(f"key {key!r} given twice", lineno, source)
            values[name] = items[0]
        lines.setdefault(name, lineno)
    if "experiment" not in values:
        raise ConfigError("missing 'experiment' key", None, source)
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    cfg = ExperimentConfig(**kwargs)
    try:
        return cfg.resolved()
    except ConfigError as exc:
        # re-attach the line of the offending key
        raise ConfigError(exc.message, lines.get(exc.field), source, exc.field) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def config_fields():
    return [f.name for f in fields(ExperimentConfig)]


# ---------------------------------------------------------------------------
# building blocks shared with the CLI


def default_spec(scheme: str, n_x: int) -> SchemeSpec:
    """Standard grid for a scheme: ``c = 0.85 c_max`` (ERK) or ``c = 4`` (SDIRK)."""
    return SchemeSpec.from_id(scheme, n_x)


@dataclass
class CoarseResult:
    stepper: object
    flags: str = "ok"
    note: str = ""
    fit: object = None


def coarse_operator(spec: SchemeSpec, m: int, kind: str = "lsq", eta: float | None = None,
                    max_nl_iters: int | None = None, phi=None) -> CoarseResult:
    """Coarse stepper of one of the supported kinds.

    ``kind`` is ``ideal`` (``Phi^m`` applied exactly), ``rediscretize``,
    ``lsq`` (weighted least squares on the shipped ERK pattern or the SDIRK
    threshold pattern), ``nlsq`` (``lsq`` refined on the bound) or
    ``phi-pattern`` (least squares on the sparsity of ``Phi`` itself).
    Fit failures are reported through ``flags = "imag-flagged"`` with a
    ``None`` stepper.
    """
    phi = phi if phi is not None else build_phi(spec)
    if kind == "ideal":
        return CoarseResult(RepeatedStepper(phi, m))
    if kind == "rediscretize":
        psi = psi_from_rediscretization(spec, m, allow_unstable=True)
        stable = np.max(np.abs(psi.spectrum)) <= 1.0 + UNSTABLE_TOL
        return CoarseResult(psi, note="" if stable else "unstable-psi")
    col = ideal_column(phi, m)
    weights = weight_vector(phi.spectrum)
    if kind == "phi-pattern":
        pattern = SparsityPattern.from_indices(phi.support, spec.n_x)
    elif kind in ("lsq", "nlsq"):
        if spec.family == "ERK":
            pattern = preset_pattern(spec.scheme_id, m, spec.n_x)
        else:
            eta = eta if eta is not None else sdirk_threshold(spec.order, m)
            pattern = select_pattern(col, Threshold(eta))
    else:
        raise ValueError(f"unknown coarse operator kind {kind!r}")
    try:
        fit = linear_lsq_psi(col, pattern, weights)
        if kind == "nlsq":
            if max_nl_iters is None:
                max_nl_iters = 10 if (spec.family, spec.order, m) == ("ERK", 2, 64) else 30
            fit = nonlinear_lsq_psi(phi.spectrum, pattern, m, spec.n_t, fit,
                                    max_nl_iters=max_nl_iters)
    except (ImaginaryResidue, IllConditioned) as exc:
        return CoarseResult(None, "imag-flagged", type(exc).__name__)
    note = "" if fit.stable else "unstable-psi"
    return CoarseResult(fit.operator, "ok", note, fit)


def _solve(hierarchy, spec, cfg, max_iters):
    return solve(hierarchy, initial_condition(spec.x), tol=cfg.tol, max_iters=max_iters,
                 cycle=cfg.cycle, threads=cfg.threads, seed=cfg.seed)


def _iter_row(exp, spec, m, levels, variant, report, may_fail=False, note=""):
    flags = "ok" if report.converged else "diverged"
    notes = [n for n in (note, ";".join(f for f in report.flags if f != "diverged")) if n]
    return Row(exp, spec.scheme_id, spec.n_x, spec.n_t, m, levels, variant, "iterations",
               report.iterations, flags, ";".join(notes), may_fail)


def _failed_row(exp, spec, m, levels, variant, coarse, may_fail):
    return Row(exp, spec.scheme_id, spec.n_x, spec.n_t, m, levels, variant, "iterations",
               float("nan"), coarse.flags, coarse.note, may_fail)


def _two_level_oc(phi, psi, m):
    return 1.0 + psi.nnz / (m * phi.nnz)


# ---------------------------------------------------------------------------
# tasks (module level so they can run in worker processes)


def _task_table2(cfg, scheme, n_x, m):
    spec = default_spec(scheme, n_x)
    phi = build_phi(spec)
    psi = psi_from_rediscretization(spec, m, allow_unstable=True)
    h = Hierarchy.two_level(phi, psi, spec.n_t, m, spec.dx, spec.dt)
    exact = spec.n_t // (2 * m)
    rep = _solve(h, spec, cfg, cfg.max_iters or exact + 8)
    rows = [_iter_row("table2", spec, m, 2, "rediscretized", rep, may_fail=True)]
    rows.append(Row("table2", spec.scheme_id, n_x, spec.n_t, m, 2, "exact-arithmetic",
                    "iterations", exact))
    return rows


def _task_table3(cfg, scheme, n_x, m, variant):
    spec = default_spec(scheme, n_x)
    phi = build_phi(spec)
    kind = "phi-pattern" if variant == "phi" else "lsq"
    may_fail = variant == "phi"
    coarse = coarse_operator(spec, m, kind, phi=phi)
    if coarse.stepper is None:
        return [_failed_row("table3", spec, m, 2, variant, coarse, may_fail)]
    h = Hierarchy.two_level(phi, coarse.stepper, spec.n_t, m, spec.dx, spec.dt)
    # a solve that needs n_t/(2m) iterations is no faster than time-stepping
    cap = spec.n_t // (2 * m) if variant == "phi" else 100
    rep = _solve(h, spec, cfg, cfg.max_iters or cap)
    return [
        _iter_row("table3", spec, m, 2, variant, rep, may_fail, coarse.note),
        Row("table3", spec.scheme_id, n_x, spec.n_t, m, 2, variant, "nnz", coarse.stepper.nnz),
        Row("table3", spec.scheme_id, n_x, spec.n_t, m, 2, variant, "OC",
            _two_level_oc(phi, coarse.stepper, m)),
    ]


def _task_table5(cfg, scheme, n_x, m, levels, min_points):
    spec = default_spec(scheme, n_x)
    h, _ = build_multilevel_psis(spec, m, levels, min_coarse_points=min_points)
    rep = _solve(h, spec, cfg, cfg.max_iters or 100)
    return [
        _iter_row("table5", spec, m, levels, cfg.cycle.upper() + "-cycle", rep),
        Row("table5", spec.scheme_id, n_x, spec.n_t, m, levels, cfg.cycle.upper() + "-cycle",
            "OC", rep.operator_complexity),
    ]


def _task_table6(cfg, scheme, n_x, m):
    spec = default_spec(scheme, n_x)
    phi = build_phi(spec)
    coarse = coarse_operator(spec, m, "lsq", phi=phi)
    if coarse.stepper is None:
        return [_failed_row("table6", spec, m, 2, "threshold", coarse, False)]
    h = Hierarchy.two_level(phi, coarse.stepper, spec.n_t, m, spec.dx, spec.dt)
    rep = _solve(h, spec, cfg, cfg.max_iters or 100)
    base = ("table6", spec.scheme_id, n_x, spec.n_t, m, 2, "threshold")
    return [
        _iter_row("table6", spec, m, 2, "threshold", rep, note=coarse.note),
        Row(*base, "nnz", coarse.stepper.nnz),
        Row(*base, "max_abs_mu", coarse.fit.max_abs_mu),
        Row(*base, "eta", sdirk_threshold(spec.order, m)),
    ]


def _task_tableB(cfg, scheme, n_x, m):
    spec = default_spec(scheme, n_x)
    phi = build_phi(spec)
    rows = []
    for variant, kind in (("linear", "lsq"), ("nonlinear", "nlsq")):
        coarse = coarse_operator(spec, m, kind, phi=phi)
        if coarse.stepper is None:
            rows.append(_failed_row("tableB", spec, m, 2, variant, coarse, False))
            continue
        h = Hierarchy.two_level(phi, coarse.stepper, spec.n_t, m, spec.dx, spec.dt)
        rep = _solve(h, spec, cfg, cfg.max_iters or 100)
        rows.append(_iter_row("tableB", spec, m, 2, variant, rep, note=coarse.note))
        lam, mu = phi.spectrum, coarse.stepper.spectrum
        b = error_bound(lam, mu, m, spec.n_t).bounds
        rows.append(Row("tableB", spec.scheme_id, n_x, spec.n_t, m, 2, variant, "objective",
                        float(np.mean(b ** 2))))
        rows.append(Row("tableB", spec.scheme_id, n_x, spec.n_t, m, 2, variant, "max_bound",
                        float(b.max())))
    return rows


def _task_fig1(cfg, scheme, n_x):
    spec = default_spec(scheme, n_x)
    return [Row("fig1", spec.scheme_id, n_x, spec.n_t, 0, 0, "sequential", "error",
                discretization_error(spec))]


_TASKS = {
    "table2": _task_table2,
    "table3": _task_table3,
    "table5": _task_table5,
    "table6": _task_table6,
    "tableB": _task_tableB,
    "fig1": _task_fig1,
}


def _call(args):
    name, cfg, params = args
    return _TASKS[name](cfg, *params)


def _run_tasks(name, cfg, param_list, workers):
    jobs = [(name, cfg, p) for p in param_list]
    if workers <= 1 or len(jobs) <= 1:
        results = [_call(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_call, jobs))
    return [row for rows in results for row in rows]


# ---------------------------------------------------------------------------
# runners


def _product(*lists):
    out = [()]
    for lst in lists:
        out = [o + (v,) for o in out for v in lst]
    return out


def _run_table2(cfg, out, workers):
    return _run_tasks("table2", cfg, _product(cfg.schemes, cfg.n_x, cfg.m), workers), []


def _run_table3(cfg, out, workers):
    params = _product(cfg.schemes, cfg.n_x, cfg.m, cfg.variants)
    return _run_tasks("table3", cfg, params, workers), []


def _run_table5(cfg, out, workers):
    params = []
    for scheme, n_x, m, levels in _product(cfg.schemes, cfg.n_x, cfg.m, cfg.levels):
        min_points = cfg.min_coarse_points or (4 if scheme == "erk1+u1" else 8)
        n_t = default_spec(scheme, n_x).n_t
        if n_t % m ** (levels - 1) or n_t // m ** (levels - 1) < min_points:
            continue
        params.append((scheme, n_x, m, levels, min_points))
    return _run_tasks("table5", cfg, params, workers), []


def _run_table6(cfg, out, workers):
    return _run_tasks("table6", cfg, _product(cfg.schemes, cfg.n_x, cfg.m), workers), []


def _run_tableB(cfg, out, workers):
    return _run_tasks("tableB", cfg, _product(cfg.schemes, cfg.n_x, cfg.m), workers), []


def observed_orders(errors: dict) -> dict:
    """Order from the two finest grids, ``log2(e(n/2) / e(n))``."""
    orders = {}
    for scheme, by_n in errors.items():
        ns = sorted(by_n)
        if len(ns) >= 2:
            n1, n2 = ns[-2], ns[-1]
            orders[scheme] = math.log(by_n[n1] / by_n[n2]) / math.log(n2 / n1)
    return orders


def _run_fig1(cfg, out, workers):
    rows = _run_tasks("fig1", cfg, _product(cfg.schemes, cfg.n_x), workers)
    errors: dict = {}
    for r in rows:
        errors.setdefault(r.scheme, {})[r.n_x] = r.value
    for scheme, order in observed_orders(errors).items():
        finest = max(errors[scheme])
        p = parse_scheme_id(scheme)[1]
        rows.append(Row("fig1", scheme, finest, default_spec(scheme, finest).n_t, 0, 0,
                        "sequential", "observed_order", order))
        rows.append(Row("fig1", scheme, finest, default_spec(scheme, finest).n_t, 0, 0,
                        "sequential", "theoretical_order", p))
    artifacts = []
    if cfg.plot:
        for fam in ("erk", "sdirk"):
            series = [Series(s.upper(), np.log2(sorted(errors[s])),
                             [errors[s][n] for n in sorted(errors[s])])
                      for s in sorted(errors) if s.startswith(fam)]
            if series:
                path = os.path.join(out, f"fig1_{fam}.svg")
                emit_svg(series, "semilogy", path, title=f"{fam.upper()}+U discretization error",
                         xlabel="log2 n_x", ylabel="space-time L2 error")
                artifacts.append(path)
    return rows, artifacts


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_fmt_value(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def heat_stepper(n_x: int, dt: float, p: int = 2):
    """SDIRK``p`` with second-order central differences for ``u_t = u_xx``
    on the periodic grid of width ``2 / n_x``."""
    dx = 2.0 / n_x
    lap = CirculantOperator.from_offsets({-1: 1 / dx**2, 0: -2 / dx**2, 1: 1 / dx**2}, n_x)
    return runge_kutta_stepper(lap * dt, "SDIRK", p)


def _run_fig2(cfg, out, workers):
    rows, artifacts = [], []
    for scheme, n_x, m in _product(cfg.schemes, cfg.n_x, cfg.m):
        family, p = parse_scheme_id(scheme)
        dx = 2.0 / n_x
        # dt = dx on [0, 8]
        spec = SchemeSpec(p, family, n_x, int(round(8.0 / dx)), dx, check_stability=False)
        cases = [(scheme, build_phi(spec), psi_from_rediscretization(spec, m, allow_unstable=True))]
        if cfg.heat:
            cases.append(("heat-sdirk2+cd2", heat_stepper(n_x, dx), heat_stepper(n_x, m * dx)))
        for label, phi, psi in cases:
            lam_m, mu = phi.spectrum ** m, psi.spectrum
            prof = error_bound(phi.spectrum, mu, m, spec.n_t)
            base = ("fig2", label, n_x, spec.n_t, m, 2, "rediscretized")
            rows.append(Row(*base, "max_bound", prof.max_bound))
            rows.append(Row(*base, "max_abs_mu", float(np.max(np.abs(mu)))))
            stem = f"fig2_{label}_m{m}_nx{n_x}"
            artifacts.append(_write_csv(os.path.join(out, stem + "_eigs.csv"),
                                        ["k", "lambda_m_re", "lambda_m_im", "mu_re", "mu_im"],
                                        [(k, a.real, a.imag, b.real, b.imag)
                                         for k, (a, b) in enumerate(zip(lam_m, mu))]))
            artifacts.append(prof.to_csv(os.path.join(out, stem + "_bound.csv")))
            if cfg.plot:
                p1 = os.path.join(out, stem + "_eigs.svg")
                emit_svg([Series(f"lambda^{m}", lam_m.real, lam_m.imag, "marker"),
                          Series("mu", mu.real, mu.imag, "marker")],
                         "eigenscatter", p1, title=label, xlabel="Re", ylabel="Im")
                half = slice(0, n_x // 2 + 1)
                p2 = os.path.join(out, stem + "_bound.svg")
                emit_svg([Series("bound", prof.theta[half], prof.bounds[half])], "semilogy", p2,
                         title=label, xlabel="theta", ylabel="bound")
                artifacts += [p1, p2]
    return rows, artifacts


def _signed_index(n_x):
    # first-column index j holds diagonal offset -j
    j = np.arange(n_x)
    return np.where(j > n_x // 2, n_x - j, -j)


def diagonal_entries(column, threshold: float = 1e-3):
    """``(offset, value)`` of entries above ``threshold`` in magnitude, by offset."""
    column = np.asarray(column)
    offs = _signed_index(column.shape[0])
    keep = np.abs(column) > threshold
    order = np.argsort(offs[keep], kind="stable")
    return offs[keep][order], column[keep][order]


def _run_fig3(cfg, out, workers):
    rows, artifacts, table = [], [], []
    for m in cfg.m:
        series, vlines = [], []
        for scheme, n_x in _product(cfg.schemes, cfg.n_x):
            spec = default_spec(scheme, n_x)
            col = ideal_column(build_phi(spec), m)
            offs, vals = diagonal_entries(col)
            char = -m * spec.cfl
            peak = int(_signed_index(n_x)[np.argmax(np.abs(col))])
            base = ("fig3", spec.scheme_id, n_x, spec.n_t, m, 0, "ideal")
            rows.append(Row(*base, "peak_offset", peak))
            rows.append(Row(*base, "characteristic_offset", char))
            rows.append(Row(*base, "entries_above_1e-3", len(offs)))
            table.extend((spec.scheme_id, n_x, m, int(o), abs(v)) for o, v in zip(offs, vals))
            series.append(Series(spec.scheme_id.upper(), offs, np.abs(vals)))
            vlines.append(char)
        if cfg.plot:
            path = os.path.join(out, f"fig3_m{m}.svg")
            emit_svg(series, "stemplot", path, title=f"|entries| of Phi^{m}",
                     xlabel="diagonal index", ylabel="magnitude", vlines=vlines)
            artifacts.append(path)
    artifacts.append(_write_csv(os.path.join(out, "fig3_entries.csv"),
                                ["scheme", "n_x", "m", "offset", "magnitude"], table))
    return rows, artifacts


def _run_fig4(cfg, out, workers):
    rows, artifacts, patterns = [], [], []
    oc_series = []
    for scheme, n_x in _product(cfg.schemes, cfg.n_x):
        spec = default_spec(scheme, n_x)
        phi = build_phi(spec)
        ocs = []
        for m in cfg.m:
            pattern = preset_pattern(spec.scheme_id, m, n_x)
            oc = 1.0 + pattern.nu / (m * phi.nnz)
            ocs.append(oc)
            base = ("fig4", spec.scheme_id, n_x, spec.n_t, m, 2, "ideal")
            rows.append(Row(*base, "nnz", pattern.nu))
            rows.append(Row(*base, "OC", oc))
            rows.append(Row(*base, "target_OC", 1.0 + 1.0 / m))
            rows.append(Row(*base, "first_offset", pattern.offsets[0]))
            rows.append(Row(*base, "last_offset", pattern.offsets[-1]))
            patterns.extend((spec.scheme_id, m, o) for o in pattern.offsets)
        oc_series.append(Series(spec.scheme_id.upper(), np.log2(cfg.m), ocs))
    artifacts.append(_write_csv(os.path.join(out, "fig4_patterns.csv"),
                                ["scheme", "m", "offset"], patterns))
    if cfg.plot:
        path = os.path.join(out, "fig4_oc.svg")
        oc_series.append(Series("1 + 1/m", np.log2(cfg.m), [1 + 1 / m for m in cfg.m], "dashed"))
        emit_svg(oc_series, "semilogy", path, title="two-level operator complexity",
                 xlabel="log2 m", ylabel="OC")
        artifacts.append(path)
        for scheme in cfg.schemes:
            pts = [(o, m) for s, m, o in patterns if s == scheme]
            if not pts:
                continue
            path = os.path.join(out, f"fig4_pattern_{scheme}.svg")
            emit_svg([Series(scheme.upper(), [p[0] for p in pts], [p[1] for p in pts], "marker")],
                     "semilogy", path, title=f"sparsity patterns {scheme.upper()}",
                     xlabel="diagonal index", ylabel="m")
            artifacts.append(path)
    return rows, artifacts


def _run_fig5(cfg, out, workers):
    rows, artifacts = [], []
    for scheme, n_x, m in _product(cfg.schemes, cfg.n_x, cfg.m):
        spec = default_spec(scheme, n_x)
        phi = build_phi(spec)
        coarse = coarse_operator(spec, m, "lsq", phi=phi)
        psi = coarse.stepper
        lam_m, mu = phi.spectrum ** m, psi.spectrum
        prof = error_bound(phi.spectrum, mu, m, spec.n_t)
        h = Hierarchy.two_level(phi, psi, spec.n_t, m, spec.dx, spec.dt)
        rep = _solve(h, spec, cfg, cfg.max_iters or 100)
        col = ideal_column(phi, m)
        peak = int(_signed_index(n_x)[np.argmax(np.abs(col))])
        base = ("fig5", spec.scheme_id, n_x, spec.n_t, m, 2, "ideal")
        rows.append(_iter_row("fig5", spec, m, 2, "ideal", rep))
        rows.append(Row(*base, "max_bound", prof.max_bound))
        rows.append(Row(*base, "peak_offset", peak))
        rows.append(Row(*base, "characteristic_offset", -m * spec.cfl))
        stem = f"fig5_{spec.scheme_id}_m{m}_nx{n_x}"
        io, iv = diagonal_entries(col)
        po, pv = diagonal_entries(psi.first_column, threshold=0.0)
        artifacts.append(_write_csv(os.path.join(out, stem + "_entries.csv"),
                                    ["operator", "offset", "value"],
                                    [("ideal", int(o), v) for o, v in zip(io, iv)]
                                    + [("psi", int(o), v) for o, v in zip(po, pv)]))
        artifacts.append(_write_csv(os.path.join(out, stem + "_eigs.csv"),
                                    ["k", "lambda_m_re", "lambda_m_im", "mu_re", "mu_im"],
                                    [(k, a.real, a.imag, b.real, b.imag)
                                     for k, (a, b) in enumerate(zip(lam_m, mu))]))
        artifacts.append(prof.to_csv(os.path.join(out, stem + "_bound.csv")))
        if cfg.plot:
            p1 = os.path.join(out, stem + "_eigs.svg")
            emit_svg([Series(f"lambda^{m}", lam_m.real, lam_m.imag, "marker"),
                      Series("mu", mu.real, mu.imag, "marker")], "eigenscatter", p1,
                     title=spec.scheme_id.upper(), xlabel="Re", ylabel="Im")
            p2 = os.path.join(out, stem + "_entries.svg")
            emit_svg([Series(f"Phi^{m}", io, iv), Series("Psi", po, pv)], "stemplot", p2,
                     title=spec.scheme_id.upper(), xlabel="diagonal index", ylabel="entry",
                     vlines=[-m * spec.cfl])
            p3 = os.path.join(out, stem + "_bound.svg")
            half = slice(0, n_x // 2 + 1)
            emit_svg([Series("bound", prof.theta[half], prof.bounds[half])], "semilogy", p3,
                     title=spec.scheme_id.upper(), xlabel="theta", ylabel="bound")
            artifacts += [p1, p2, p3]
    return rows, artifacts


def _run_custom(cfg, out, workers):
    rows = []
    for scheme, n_x, m, levels, variant in _product(cfg.schemes, cfg.n_x, cfg.m, cfg.levels,
                                                    cfg.variants):
        spec = default_spec(scheme, n_x)
        phi = build_phi(spec)
        if levels > 2 and variant == "lsq":
            h, _ = build_multilevel_psis(spec, m, levels,
                                         min_coarse_points=cfg.min_coarse_points or 2)
        else:
            coarse = coarse_operator(spec, m, variant, phi=phi)
            if coarse.stepper is None:
                rows.append(_failed_row("custom", spec, m, levels, variant, coarse, True))
                continue
            h = Hierarchy.two_level(phi, coarse.stepper, spec.n_t, m, spec.dx, spec.dt)
        rep = _solve(h, spec, cfg, cfg.max_iters or 100)
        rows.append(_iter_row("custom", spec, m, h.n_levels, variant, rep, may_fail=True))
        rows.append(Row("custom", spec.scheme_id, n_x, spec.n_t, m, h.n_levels, variant, "OC",
                        rep.operator_complexity))
    return rows, []


@dataclass(frozen=True)
class Experiment:
    id: str
    title: str
    runner: object
    defaults: dict


EXPERIMENTS = {e.id: e for e in (
    Experiment("table2", "rediscretized SDIRK coarse grids: two-level iterations",
               _run_table2, {"schemes": SDIRK_IDS, "n_x": (2 ** 10,), "m": (2, 4)}),
    Experiment("table3", "ERK two-level iterations with least squares coarse grids",
               _run_table3, {"schemes": ERK_IDS, "n_x": (2 ** 8,), "m": MS,
                             "variants": ("phi", "ideal")}),
    Experiment("table5", "ERK multilevel V-cycle iterations and operator complexity",
               _run_table5, {"schemes": ("erk1+u1", "erk3+u3", "erk5+u5"), "n_x": (2 ** 8,),
                             "m": (4,), "levels": (2, 3, 4, 5, 6, 7)}),
    Experiment("table6", "SDIRK two-level iterations with thresholded least squares coarse grids",
               _run_table6, {"schemes": SDIRK_IDS, "n_x": (2 ** 10,), "m": MS}),
    Experiment("tableB", "ERK two-level iterations with nonlinear least squares coarse grids",
               _run_tableB, {"schemes": ERK_IDS, "n_x": (2 ** 8,), "m": MS}),
    Experiment("fig1", "discretization error against grid size",
               _run_fig1, {"schemes": ERK_IDS + SDIRK_IDS, "n_x": (2 ** 6, 2 ** 7, 2 ** 8, 2 ** 9)}),
    Experiment("fig2", "eigenvalues and two-level bound for rediscretized SDIRK3+U3",
               _run_fig2, {"schemes": ("sdirk3+u3",), "n_x": (128,), "m": (2,)}),
    Experiment("fig3", "entries of the ideal coarse stepper against diagonal index",
               _run_fig3, {"schemes": ERK_IDS, "n_x": (2 ** 10,), "m": (16, 64)}),
    Experiment("fig4", "ERK sparsity patterns and two-level operator complexity",
               _run_fig4, {"schemes": ERK_IDS, "n_x": (2 ** 8,), "m": MS}),
    Experiment("fig5", "least squares coarse stepper for ERK3+U3 with m = 8",
               _run_fig5, {"schemes": ("erk3+u3",), "n_x": (2 ** 8,), "m": (8,)}),
    Experiment("custom", "user-defined solves",
               _run_custom, {"schemes": ("erk3+u3",), "n_x": (2 ** 7,), "m": (4,),
                             "levels": (2,), "variants": ("lsq",)}),
)}


def list_experiments():
    """``[(id, title), ...]`` in a fixed order."""
    return [(e.id, e.title) for e in EXPERIMENTS.values()]


def _output_dir(cfg, output_dir):
    out = output_dir or cfg.output_dir or os.environ.get(OUTPUT_ENV) or "results"
    os.makedirs(out, exist_ok=True)
    return out


def run_experiment(config: ExperimentConfig, output_dir=None, workers: int | None = None):
    """Run an experiment and write its CSV (plus figure artifacts).

    Parameters
    ----------
    config : ExperimentConfig
    output_dir : path-like, optional
        Overrides ``config.output_dir`` and the ``MGRIT_ADV_OUTPUT_DIR``
        environment variable.
    workers : int, optional
        Process pool size for independent rows; defaults to the core count.

    Returns
    -------
    table : ResultTable
    artifacts : list of str
        Paths written, the main CSV first.
    """
    cfg = config.resolved()
    out = _output_dir(cfg, output_dir)
    workers = workers if workers is not None else (os.cpu_count() or 1)
    rows, extra = EXPERIMENTS[cfg.experiment].runner(cfg, out, workers)
    table = ResultTable(rows)
    main = table.to_csv(os.path.join(out, f"{cfg.experiment}.csv"))
    return table, [main] + [a for a in extra if a]


# ---------------------------------------------------------------------------
# baselines

#: Allowed absolute change of an iteration count, per experiment.
ITERATION_TOLERANCE = {"table2": 3, "fig1": 0}
#: Relative tolerance on all other quantities.
VALUE_RTOL = 1e-6


@dataclass
class DiffEntry:
    key: tuple
    status: str
    detail: str

    def as_dict(self):
        return {"key": list(self.key), "status": self.status, "detail": self.detail}


@dataclass
class BaselineReport:
    """Differences between a result table and its baseline.

    Identical tables give an empty ``entries`` list.  ``status`` is one of
    ``pass-with-note`` (within tolerance) and ``fail``.
    """

    entries: list

    @property
    def passed(self) -> bool:
        return all(e.status != "fail" for e in self.entries)

    def to_json(self) -> str:
        return json.dumps({"passed": self.passed,
                           "entries": [e.as_dict() for e in self.entries]}, indent=2)

    def __str__(self):
        return "\n".join(f"{e.status:<15}{'/'.join(map(str, e.key))}: {e.detail}"
                         for e in self.entries)


def _close(a, b, rtol):
    if math.isnan(a) and math.isnan(b):
        return True
    return abs(a - b) <= rtol * max(abs(a), abs(b))


def compare_baseline(result, baseline, tolerances=None, rtol: float = VALUE_RTOL) -> BaselineReport:
    """Row-wise comparison of ``result`` with a baseline table or CSV path.

    Raises
    ------
    BaselineMissing
        If ``baseline`` is a path that does not exist.
    """
    if not isinstance(baseline, ResultTable):
        if not os.path.exists(baseline):
            raise BaselineMissing(f"baseline {baseline} not found")
        baseline = ResultTable.from_csv(baseline)
    if not isinstance(result, ResultTable):
        result = ResultTable.from_csv(result)
    tolerances = {**ITERATION_TOLERANCE, **(tolerances or {})}
    new = {r.key: r for r in result}
    old = {r.key: r for r in baseline}
    entries = []
    for key in sorted(set(new) | set(old)):
        if key not in new:
            entries.append(DiffEntry(key, "fail", "missing from result"))
            continue
        if key not in old:
            entries.append(DiffEntry(key, "fail", "not in baseline"))
            continue
        a, b = new[key], old[key]
        same_value = _fmt_value(a.value) == _fmt_value(b.value)
        if a.flags != b.flags:
            entries.append(DiffEntry(key, "fail", f"flags {b.flags} -> {a.flags}"))
        elif same_value:
            continue
        elif a.quantity == "iterations":
            tol = tolerances.get(a.experiment, 1)
            ok = (not math.isnan(a.value) and not math.isnan(b.value)
                  and abs(a.value - b.value) <= tol)
            entries.append(DiffEntry(key, "pass-with-note" if ok else "fail",
                                     f"iterations {_fmt_value(b.value)} -> {_fmt_value(a.value)}"))
        else:
            ok = _close(a.value, b.value, rtol)
            entries.append(DiffEntry(key, "pass-with-note" if ok else "fail",
                                     f"{_fmt_value(b.value)} -> {_fmt_value(a.value)}"))
    return BaselineReport(entries)
