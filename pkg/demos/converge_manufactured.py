"""Reproduce the manufactured-solution convergence tables.

Runs the unit-square problem at degrees 1 and 2 over a sequence of uniform
meshes and prints the L2 errors and empirical orders of each field at the
final time.  Expect orders k+1 for stress, seepage velocity, and pressure,
and k+2 for the solid velocity (its space has one extra degree).
"""

from porohdg import verify

for k, levels in ((1, 4), (2, 3)):
    hs = [2.0 ** (-(i + 1)) for i in range(levels)]
    print(f"\n=== degree {k}, compressible (E, nu) = (3, 0.3) ===")
    report = verify.convergence_study(k, hs, material=(3.0, 0.3))
    print(report.ascii_table())
    print("fitted slopes over the finest levels:",
          {f: round(report.fitted(f), 2) for f in verify.FIELDS})

print("\n=== degree 1, nearly incompressible (E, nu) = (3, 0.499) ===")
report = verify.convergence_study(1, [0.5, 0.25, 0.125], material=(3.0, 0.499))
print(report.ascii_table())
