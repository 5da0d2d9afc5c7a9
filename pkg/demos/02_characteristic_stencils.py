"""Coarse stencils that follow the characteristics.

The ideal coarse operator Phi^m is a circulant whose entries cluster around
diagonal -m*c: over m steps the solution moves m*c cells to the right.  A
short stencil placed on that cluster and fitted by weighted least squares
gives a cheap, stable and fast coarse stepper.

Run: python demos/02_characteristic_stencils.py
"""
import numpy as np

from mgrit_advection.discretization import SchemeSpec, build_phi, initial_condition
from mgrit_advection.expkit import diagonal_entries
from mgrit_advection.mgrit import Hierarchy, solve
from mgrit_advection.optimizer import (
    IdealWindow,
    ideal_column,
    linear_lsq_psi,
    preset_pattern,
    select_pattern,
)
from mgrit_advection.theory import error_bound, weight_vector

spec = SchemeSpec.erk(3, 256)
phi = build_phi(spec)
m = 8
col = ideal_column(phi, m)
offs, vals = diagonal_entries(col)
peak = offs[np.argmax(np.abs(vals))]
print(f"ERK3+U3, m={m}: Phi^m has {len(offs)} entries above 1e-3, peak at diagonal {peak}, "
      f"-m*c = {-m * spec.cfl:.2f}")

weights = weight_vector(phi.spectrum)
candidates = {
    "nnz(Phi) window": select_pattern(col, IdealWindow(0), phi.nnz),
    "shipped preset": preset_pattern(spec.scheme_id, m, spec.n_x),
}
for name, pattern in candidates.items():
    fit = linear_lsq_psi(col, pattern, weights)
    bound = error_bound(phi.spectrum, fit.operator.spectrum, m, spec.n_t).max_bound
    h = Hierarchy.two_level(phi, fit.operator, spec.n_t, m, spec.dx, spec.dt)
    rep = solve(h, initial_condition(spec.x))
    print(f"  {name:<16} offsets {pattern}  max bound {bound:.3f}  "
          f"{rep.iterations} iterations, OC {rep.operator_complexity:.3f}")

# Grid independence: the same offsets work on a finer grid.
fine = SchemeSpec.erk(3, 1024)
phi_f = build_phi(fine)
fit = linear_lsq_psi(ideal_column(phi_f, m), candidates["shipped preset"].resized(1024),
                     weight_vector(phi_f.spectrum))
rep = solve(Hierarchy.two_level(phi_f, fit.operator, fine.n_t, m, fine.dx, fine.dt),
            initial_condition(fine.x))
print(f"  n_x=1024 with the same offsets: {rep.iterations} iterations")
