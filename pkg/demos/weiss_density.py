"""Solve the tilted half-plane problem and tabulate the Weiss energy.

Run:  python demos/weiss_density.py [n]
"""
import math
import sys

from weissfb.field import extract_free_boundary
from weissfb.minimizer import solve
from weissfb.physics import BoundaryData, ProblemSpec, VorticityModel
from weissfb.weiss import compensation_constant, estimate_limit, weiss_report

n = int(sys.argv[1]) if len(sys.argv) > 1 else 257
spec = ProblemSpec((1.0, -1.0), None, VorticityModel.zero(), BoundaryData("half-plane", math.pi / 2 + 0.4),
                   grid_n=n)
res = solve(spec)
psi = res.field
center = extract_free_boundary(psi).nearest_point(spec.X0)
rep = weiss_report(psi, center, R0=spec.R0)

print(f"grid {n}x{n}, h = {psi.grid.h:.5f}, {res.iterations} solver iterations")
print(f"{'r':>10} {'D(r)':>10} {'density':>10} {'residual':>10}")
for r, D, dens, res_r in zip(rep.radii, rep.D, rep.density, rep.residual):
    print(f"{r:10.5f} {D:10.5f} {dens:10.5f} {res_r:10.2e}")
lim = estimate_limit(rep)
print(f"extrapolated D0 = {lim.D0:.4f}  (half-plane value pi/2 = {math.pi / 2:.4f})")
print(f"extrapolated density = {lim.density0:.4f}")
print(f"compensation constant C = {compensation_constant(rep.radii, rep.D):.3f}")
