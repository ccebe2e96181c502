"""Globally coupled unknowns: hybridized traces versus volumetric DG.

Prints the per-element volumetric count of an all-degree-k DG discretization
of the eight scalar unknowns next to the per-face trace count of the
hybridized scheme, and the resulting reduction for a typical 2D simplicial
mesh with 1.5 faces per element.
"""

from porohdg.system import dg_volume_dofs, dof_reduction, hdg_trace_dofs

print(f"{'k':>3} {'DG dofs / element':>18} {'trace dofs / face':>18} {'reduction':>10}")
for k in range(1, 5):
    print(
        f"{k:>3} {dg_volume_dofs(k):>18} {hdg_trace_dofs(k):>18} "
        f"{100.0 * dof_reduction(k):>9.1f}%"
    )
