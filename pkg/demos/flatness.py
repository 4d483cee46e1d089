"""Improvement-of-flatness schedule and free-boundary graph of a perturbed minimizer.

Run:  python demos/flatness.py [n]
"""
import math
import sys

from weissfb.field import extract_free_boundary
from weissfb.minimizer import solve
from weissfb.physics import BoundaryData, ProblemSpec, VorticityModel
from weissfb.regularity import GeneralFBP, RegularityConfig, best_direction, extract_graph, flatness_iteration

n = int(sys.argv[1]) if len(sys.argv) > 1 else 513
bd = BoundaryData("half-plane", math.pi / 2 + 0.4, amplitude=0.05, frequency=4.0)
spec = ProblemSpec((1.0, -1.0), None, VorticityModel.zero(), bd, grid_n=n, frozen=True)
psi = solve(spec).field
center = extract_free_boundary(psi).nearest_point(spec.X0)
cfg = RegularityConfig()

sched = flatness_iteration(psi, GeneralFBP.frozen(1.0), cfg, center, spec.R0 / 2, 1.0)
print(f"{'k':>2} {'scale':>9} {'eps_k':>9} {'pass':>5} {'margin':>10} {'|dnu|':>9}")
for lv in sched.levels:
    print(f"{lv.k:2d} {lv.scale:9.5f} {lv.eps:9.5f} {str(lv.passed):>5} {lv.margin:10.2e} {lv.dnu:9.2e}")
print(f"stopped: {sched.failure or 'resolution floor reached'}")
print(f"sum |nu_k - nu_k-1| = {sched.cauchy_sum:.2e} <= {sched.cauchy_bound:.2e}")

R = spec.R0 / 2
nu, eps = best_direction(psi, center, R)
graph = extract_graph(psi, center, nu, R / 2, spacing=16 * psi.grid.h)
print(f"best flatness on B_R: eps = {eps:.4f}; graph Lipschitz constant {graph.lipschitz:.4f} (4 eps = {4 * eps:.4f})")
