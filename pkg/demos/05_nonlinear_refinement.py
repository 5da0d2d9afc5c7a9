"""Polishing the least squares fit against the convergence bound itself.

The linear fit minimises a weighted distance between eigenvalues.  A
Levenberg-Marquardt refinement instead minimises the mean squared two-level
bound over all Fourier modes, starting from the linear fit.

Run: python demos/05_nonlinear_refinement.py
"""
from mgrit_advection.discretization import SchemeSpec, build_phi, initial_condition
from mgrit_advection.expkit import coarse_operator
from mgrit_advection.mgrit import Hierarchy, solve
from mgrit_advection.theory import error_bound

spec = SchemeSpec.erk(3, 256)
phi = build_phi(spec)
print(f"ERK3+U3 on {spec.n_x}x{spec.n_t}")
print(f"{'m':>4} {'kind':>6} {'max bound':>10} {'iters':>6} {'LM steps':>9}")
for m in (4, 16, 64):
    for kind in ("lsq", "nlsq"):
        c = coarse_operator(spec, m, kind, phi=phi)
        prof = error_bound(phi.spectrum, c.stepper.spectrum, m, spec.n_t)
        rep = solve(Hierarchy.two_level(phi, c.stepper, spec.n_t, m, spec.dx, spec.dt),
                    initial_condition(spec.x))
        steps = len(c.fit.history) - 1 if kind == "nlsq" else "-"
        print(f"{m:>4} {kind:>6} {prof.max_bound:>10.4f} {rep.iterations:>6} {steps:>9}")
