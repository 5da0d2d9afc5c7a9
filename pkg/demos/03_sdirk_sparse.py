"""An explicit coarse stepper for an implicit fine scheme.

For SDIRK schemes Phi^m is dense, but most of its entries are tiny.  Keeping
the diagonals whose entries exceed eta times the largest one gives a sparse
circulant that can stand in for m implicit steps.

Run: python demos/03_sdirk_sparse.py
"""
from mgrit_advection.discretization import SchemeSpec, build_phi, initial_condition
from mgrit_advection.mgrit import Hierarchy, solve
from mgrit_advection.optimizer import (
    Threshold,
    ideal_column,
    linear_lsq_psi,
    sdirk_threshold,
    select_pattern,
)
from mgrit_advection.theory import weight_vector

spec = SchemeSpec.sdirk(3, 512)
phi = build_phi(spec)
weights = weight_vector(phi.spectrum)
print(f"SDIRK3+U3 on {spec.n_x}x{spec.n_t}, CFL number {spec.cfl:g}")
print(f"{'m':>4} {'eta':>6} {'nnz':>5} {'iters':>6}")
for m in (2, 4, 8, 16, 32):
    eta = sdirk_threshold(3, m)
    col = ideal_column(phi, m)
    pattern = select_pattern(col, Threshold(eta))
    fit = linear_lsq_psi(col, pattern, weights)
    rep = solve(Hierarchy.two_level(phi, fit.operator, spec.n_t, m, spec.dx, spec.dt),
                initial_condition(spec.x))
    print(f"{m:>4} {eta:>6g} {fit.nnz:>5} {rep.iterations:>6}")

# Compare: rediscretizing SDIRK3 at m = 2 does not converge in a useful
# number of iterations (see demo 01).
