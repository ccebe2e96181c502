"""Static condensation cross-check.

One implicit-midpoint step computed two independent ways from the same
random coefficients: elementwise Schur condensation onto the trace unknowns
versus one monolithic sparse solve over everything.  Agreement is at solver
precision; it validates the condensation algebra, the scatter maps, and the
boundary handling in one shot.
"""

from porohdg import verify
from porohdg.materials import material_library
from porohdg.mesh import build_structured_rect
from porohdg.verify import example1_material

print(f"{'mesh':>6} {'k':>3} {'material':>14} {'max rel diff':>14}")
for nx in (2, 4, 8):
    for k in (1, 2, 3):
        m = build_structured_rect(0.0, 1.0, 0.0, 1.0, nx, nx)
        d = verify.oracle_compare(m, k, example1_material(), dt=0.01, seed=nx + k)
        print(f"{nx:>4}x{nx} {k:>3} {'unit-scale':>14} {d:>14.3e}")

m = build_structured_rect(0.0, 1500.0, 0.0, 1400.0, 6, 6)
d = verify.oracle_compare(m, 1, material_library()["shale"], dt=1e-4, seed=9)
print(f"{'6x6':>6} {1:>3} {'shale (SI)':>14} {d:>14.3e}")
