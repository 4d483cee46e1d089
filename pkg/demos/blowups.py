"""Blow-ups of a computed minimizer at shrinking scales.

Run:  python demos/blowups.py [n]
"""
import math
import sys

from weissfb.blowup import blowup_sequence
from weissfb.field import extract_free_boundary
from weissfb.minimizer import solve
from weissfb.physics import BoundaryData, ProblemSpec, VorticityModel

n = int(sys.argv[1]) if len(sys.argv) > 1 else 513
spec = ProblemSpec((1.0, -1.0), None, VorticityModel.zero(), BoundaryData("half-plane", math.pi / 2 + 0.4),
                   grid_n=n)
psi = solve(spec).field
h = psi.grid.h
scales, r = [], spec.R0 / 2
while r >= 64 * h:
    scales.append(r)
    r /= math.sqrt(2)
seq = blowup_sequence(psi, extract_free_boundary(psi).nearest_point(spec.X0), scales)
print(f"{'rho':>9} {'angle':>8} {'slope':>8} {'misfit':>9} {'deficit':>9}")
for rho, nu, a, e, d in zip(seq.scales, seq.nus, seq.slopes, seq.misfits, seq.deficits):
    print(f"{rho:9.5f} {math.atan2(nu[1], nu[0]):8.4f} {a:8.4f} {e:9.2e} {d:9.2e}")
if seq.rate is not None:
    print(f"misfit ~ rho^gamma: gamma_hat = {seq.rate.gamma:.3f}, R^2 = {seq.rate.r2:.3f}")
print(f"expected slope x0 sqrt(-y0) = {spec.X0[0] * math.sqrt(-spec.X0[1]):.4f}")
