"""Recursive coarsening: V-cycles with fitted steppers on every level.

Each level approximates m steps of the level above it.  Stencils widen as
levels coarsen, but the operator complexity settles to a constant, so the
work per cycle does not grow with the number of levels.

Run: python demos/04_multilevel.py
"""
from mgrit_advection.discretization import SchemeSpec, initial_condition
from mgrit_advection.mgrit import solve
from mgrit_advection.optimizer import build_multilevel_psis

for scheme, max_levels in (("erk1+u1", 5), ("erk5+u5", 4)):
    spec = SchemeSpec.from_id(scheme, 256)
    print(f"{scheme.upper()} on {spec.n_x}x{spec.n_t}, m=4")
    for levels in range(2, max_levels + 1):
        h, fits = build_multilevel_psis(spec, 4, levels)
        rep = solve(h, initial_condition(spec.x), cycle="V")
        nnz = [f.nnz for f in fits]
        print(f"  {levels} levels: {rep.iterations} iterations, OC {rep.operator_complexity:.3f}, "
              f"coarse nnz {nnz}")
