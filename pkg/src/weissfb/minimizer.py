"""Minimization of the weighted one-phase functional on a grid.

The discrete energy is the nodal sum

    E(psi) = sum_edges c_e (psi_a - psi_b)^2 - sum_i 2 s_i F(psi_i) + sum_i q_i I(psi_i > 0)

with edge weights ``c_e = 1/x`` at edge midpoints, ``s_i = h^2 x_i`` and
``q_i = -h^2 x_i y_i``, taken over the unknown nodes (those inside ``B_R0(X0)``
or inside the box).  Its Euler-Lagrange equation on the positive set is the
five-point weighted stencil of :func:`weissfb.field.weighted_divergence_nodes`.

The solver alternates three moves, each of which can only lower the energy:

* an exact solve of the Euler-Lagrange system on the current positive set,
  followed by projection onto ``psi >= 0``;
* red-black projected Gauss-Seidel sweeps in which every node is set to the
  exact minimizer of its local energy (ties go to zero);
* a continuation in the indicator smoothing ``I_delta = min(psi/delta, 1)``
  that starts from a convex obstacle-type problem and ends at delta = 0.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergenceError, ParameterError, RefusalError
from .field import GridSpec, ScalarField, disk_integral, gradient_xy, prolong, rect_integral
from .physics import (VORTICITY_KINDS, BoundaryData, ProblemSpec, VorticityModel, boundary_slope,
                      compute_R0)

log = logging.getLogger(__name__)

try:  # algebraic multigrid for the large positive-set solves
    import pyamg
except ImportError:  # pragma: no cover - pyamg is a declared dependency
    pyamg = None

_DIRECT_LIMIT = 40_000
# values below this fraction of the trace scale are round-off and count as zero
_SNAP = 1e-13


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of :func:`minimize`.

    ``delta_schedule`` is relative to the largest trace value.  By default
    the sharp problem (delta = 0) is solved last; a positive ``final_delta``
    instead ends on the smoothed problem with width ``final_delta * G h``
    (``G`` the trace gradient), whose free boundary is not pinned to grid
    lines.  ``sweeps`` is the number of red-black Gauss-Seidel sweeps between
    exact solves.
    """

    delta_schedule: Sequence[float] = (0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)
    max_outer: int = 200
    tol: float = 1e-11
    sweeps: int = 3
    linear_tol: float = 1e-13
    flip_search: bool = True
    flip_search_limit: int = 400
    final_delta: float = 0.0

    def __post_init__(self):
        d = list(self.delta_schedule)
        if any(x <= 0 for x in d):
            raise ParameterError("delta values must be positive")
        if any(b >= a for a, b in zip(d, d[1:])):
            raise ParameterError("delta schedule must be strictly decreasing")
        if self.tol <= 0 or self.linear_tol <= 0:
            raise ParameterError("tolerances must be positive")
        if self.final_delta < 0:
            raise ParameterError("final_delta must be non-negative")
        if self.max_outer < 1 or self.sweeps < 0:
            raise ParameterError("max_outer must be >= 1 and sweeps >= 0")
        object.__setattr__(self, "delta_schedule", tuple(float(x) for x in d))

    def to_dict(self):
        return {"delta_schedule": list(self.delta_schedule), "max_outer": self.max_outer, "tol": self.tol,
                "sweeps": self.sweeps, "linear_tol": self.linear_tol, "flip_search": self.flip_search,
                "flip_search_limit": self.flip_search_limit, "final_delta": self.final_delta}

    @classmethod
    def from_dict(cls, d):
        kw = dict(d)
        if "delta_schedule" in kw:
            kw["delta_schedule"] = tuple(kw["delta_schedule"])
        return cls(**kw)


class DiscreteProblem:
    """Grid coefficients, unknown mask and Dirichlet trace of one problem."""

    def __init__(self, spec: ProblemSpec, grid: Optional[GridSpec] = None,
                 trace: Optional[np.ndarray] = None, unknown: Optional[np.ndarray] = None):
        self.spec = spec
        self.grid = grid = spec.grid() if grid is None else grid
        self.vorticity: VorticityModel = spec.vorticity
        X, Y = grid.mesh()
        xc, yc = spec.coefficients(X, Y)
        h2 = grid.h ** 2
        if spec.frozen:
            self.cx = np.full((grid.ny, grid.nx - 1), 1.0 / spec.X0[0])
            self.cy = np.full((grid.ny - 1, grid.nx), 1.0 / spec.X0[0])
        else:
            xmid = 0.5 * (X[:, 1:] + X[:, :-1])
            self.cx = 1.0 / xmid
            self.cy = 1.0 / X[:-1, :]
        self.s = h2 * xc
        self.q = -h2 * xc * yc
        if unknown is None:
            unknown = np.zeros(X.shape, dtype=bool)
            unknown[1:-1, 1:-1] = True
            if spec.domain == "ball":
                unknown &= (X - spec.X0[0]) ** 2 + (Y - spec.X0[1]) ** 2 < spec.R0 ** 2
        self.unknown = np.asarray(unknown, dtype=bool)
        if self.unknown[0].any() or self.unknown[-1].any() or self.unknown[:, 0].any() or self.unknown[:, -1].any():
            raise ParameterError("unknown nodes must not lie on the grid boundary")
        if not self.unknown.any():
            raise ParameterError("problem has no unknown nodes")
        tr = spec.boundary.evaluate(spec.X0, spec.R0, grid) if trace is None else np.asarray(trace, float)
        self.trace = np.where(self.unknown, 0.0, tr.reshape(X.shape))
        a = np.zeros(X.shape)
        a[:, :-1] += self.cx
        a[:, 1:] += self.cx
        a[:-1, :] += self.cy
        a[1:, :] += self.cy
        self.a = a
        self.hedge = self.unknown[:, :-1] | self.unknown[:, 1:]
        self.vedge = self.unknown[:-1, :] | self.unknown[1:, :]
        parity = np.add.outer(np.arange(grid.ny), np.arange(grid.nx)) % 2
        self.colors = [self.unknown & (parity == 0), self.unknown & (parity == 1)]

    @property
    def n_unknown(self) -> int:
        return int(self.unknown.sum())

    def embed(self, values: np.ndarray) -> np.ndarray:
        """Put ``values`` on the unknowns and the trace elsewhere."""
        return np.where(self.unknown, values, self.trace)

    def neighbor_sum(self, v: np.ndarray) -> np.ndarray:
        b = np.zeros_like(v)
        b[:, :-1] += self.cx * v[:, 1:]
        b[:, 1:] += self.cx * v[:, :-1]
        b[:-1, :] += self.cy * v[1:, :]
        b[1:, :] += self.cy * v[:-1, :]
        return b

    def energy(self, v: np.ndarray, delta: float = 0.0) -> float:
        """Discrete energy; ``delta > 0`` uses the smoothed indicator."""
        dx = np.diff(v, axis=1)
        dy = np.diff(v, axis=0)
        dirichlet = float(np.sum((self.cx * dx * dx)[self.hedge]) + np.sum((self.cy * dy * dy)[self.vedge]))
        u = v[self.unknown]
        Fterm = -2.0 * float(np.sum(self.s[self.unknown] * self.vorticity.F(u)))
        if delta > 0:
            ind = np.minimum(np.maximum(u, 0.0) / delta, 1.0)
        else:
            ind = (u > 0).astype(float)
        return dirichlet + Fterm + float(np.sum(self.q[self.unknown] * ind))

    # ------------------------------------------------------------ local solve
    def _root(self, a, B, s):
        """Root of ``a t - B - s f(t)`` on ``t >= 0`` (may come out negative)."""
        m = self.vorticity
        if m.kind == "zero":
            return B / a
        if m.kind == "constant":
            return (B + s * m.F0) / a
        t1 = (B + s * m.F0) / (a + s * m.F0 / m.z_ref)
        return np.where(t1 <= m.z_ref, t1, B / a)

    def _local_energy(self, a, b, s, q, t, delta):
        ind = np.where(t > 0, 1.0, 0.0) if delta <= 0 else np.minimum(np.maximum(t, 0.0) / delta, 1.0)
        return a * t * t - 2 * b * t - 2 * s * self.vorticity.F(t) + q * ind

    def local_minimizer(self, a, b, s, q, delta=0.0):
        """Exact minimizer over ``t >= 0`` of the local energy; ties go to 0."""
        if delta <= 0:
            t = np.maximum(self._root(a, b, s), 0.0)
            e = self._local_energy(a, b, s, q, t, 0.0)
            return np.where((t > 0) & (e < 0), t, 0.0)
        t1 = np.clip(self._root(a, b - q / (2 * delta), s), 0.0, delta)
        t2 = np.maximum(self._root(a, b, s), delta)
        e1 = self._local_energy(a, b, s, q, t1, delta)
        e2 = self._local_energy(a, b, s, q, t2, delta)
        t = np.where(e2 < e1, t2, t1)
        e = np.minimum(e1, e2)
        return np.where(e < 0, t, 0.0)

    def sweep(self, v: np.ndarray, delta: float = 0.0) -> np.ndarray:
        v = v.copy()
        for color in self.colors:
            b = self.neighbor_sum(v)
            v[color] = self.local_minimizer(self.a[color], b[color], self.s[color], self.q[color], delta)
        return v

    # ------------------------------------------------------------ exact solve
    def assemble(self, support: np.ndarray):
        """Matrix and constant right-hand side of the stationarity system on ``support``."""
        idx = -np.ones(support.shape, dtype=np.int64)
        n = int(support.sum())
        idx[support] = np.arange(n)
        rows = [np.arange(n)]
        cols = [np.arange(n)]
        vals = [self.a[support]]
        rhs = np.zeros(n)
        fixed = np.where(self.unknown, 0.0, self.trace)
        ny, nx = support.shape
        J, I = np.nonzero(support)
        for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            jn, in_ = J + dj, I + di
            if di == 1:
                c = self.cx[J, I]
            elif di == -1:
                c = self.cx[J, I - 1]
            elif dj == 1:
                c = self.cy[J, I]
            else:
                c = self.cy[J - 1, I]
            nb = idx[jn, in_]
            inside = nb >= 0
            rows.append(idx[J[inside], I[inside]])
            cols.append(nb[inside])
            vals.append(-c[inside])
            rhs[~inside] += c[~inside] * fixed[jn[~inside], in_[~inside]]
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
        return A, rhs

    def solve_on_support(self, support: np.ndarray, ramp: Optional[np.ndarray] = None,
                         delta: float = 0.0, guess: Optional[np.ndarray] = None,
                         tol: float = 1e-13) -> np.ndarray:
        """Minimize the smooth energy over fields vanishing on unknowns outside ``support``.

        Nodes in ``ramp`` carry the linear indicator cost ``q psi / delta``.
        The vorticity term is handled by fixed-point iteration around the
        linear solve.
        """
        v = np.where(self.unknown, 0.0, self.trace)
        if not support.any():
            return v
        A, rhs0 = self.assemble(support)
        s = self.s[support]
        if ramp is not None and delta > 0:
            rhs0 = rhs0 - np.where(ramp[support], self.q[support] / (2 * delta), 0.0)
        solve = _linear_solver(A, tol)
        m = self.vorticity
        x0 = guess[support] if guess is not None else None
        x = solve(rhs0 + s * m.f(x0 if x0 is not None else np.zeros(len(s))), x0)
        if m.kind != "zero":
            for _ in range(500):
                x_new = solve(rhs0 + s * m.f(x), x)
                if np.max(np.abs(x_new - x)) <= tol * max(1.0, float(np.max(np.abs(x_new)))):
                    x = x_new
                    break
                x = x_new
            else:
                raise NonConvergenceError("vorticity fixed point did not converge")
        v[support] = x
        return v


def _linear_solver(A: sp.csr_matrix, tol: float):
    n = A.shape[0]
    if n <= _DIRECT_LIMIT or pyamg is None:
        lu = spla.splu(A.tocsc())
        return lambda b, x0=None: lu.solve(b)
    ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=500)

    def solve(b, x0=None):
        x = ml.solve(b, x0=x0, tol=tol, accel="cg", maxiter=500)
        r = b - A @ x
        if np.max(np.abs(r)) > tol * max(1.0, float(np.max(np.abs(b)))):
            # iterative refinement against round-off drift
            x = x + ml.solve(r, tol=tol, accel="cg", maxiter=200)
        return x
    return solve


# ----------------------------------------------------------------- driver

@dataclass
class IterationRecord:
    stage: float
    iteration: int
    energy: float
    change: float
    positive: int


def _scale(problem: DiscreteProblem) -> float:
    m = float(np.max(np.abs(problem.trace)))
    return m if m > 0 else 1.0


def _run_stage(problem: DiscreteProblem, v: np.ndarray, delta: float, config: SolverConfig,
               history: List[IterationRecord]) -> np.ndarray:
    """Iterate exact solves and sweeps at fixed ``delta`` until the pattern settles."""
    U = problem.unknown
    scale = _scale(problem)
    e_prev = problem.energy(v, delta)
    snap = _SNAP * scale
    for it in range(config.max_outer):
        support = U & (v > 0)
        ramp = support & (v < delta) if delta > 0 else None
        # primal active set: nodes pushed below zero leave the support
        for _ in range(100):
            w = problem.solve_on_support(support, ramp, delta, guess=v, tol=config.linear_tol)
            neg = support & (w <= snap)
            if not neg.any():
                break
            support = support & ~neg
            if ramp is not None:
                ramp = ramp & support
        w = np.where(U & (w <= snap), 0.0, w)
        if problem.energy(w, delta) > e_prev:
            w = v  # keep the descent property; the sweeps below still act
        solved = w
        for _ in range(config.sweeps):
            w = problem.sweep(w, delta)
            w = np.where(U & (w <= snap), 0.0, w)
        e = problem.energy(w, delta)
        same_pattern = np.array_equal(w > 0, v > 0) if delta <= 0 else (
            np.array_equal(w > 0, v > 0) and np.array_equal(w >= delta, v >= delta))
        change = float(np.max(np.abs(w - v)))
        history.append(IterationRecord(delta, it, e, change, int(np.count_nonzero(w[U] > 0))))
        if e > e_prev + 1e-9 * max(1.0, abs(e_prev)):
            log.warning("energy increased at delta=%g it=%d: %.6e -> %.6e", delta, it, e_prev, e)
        e_prev = e
        v = w
        if same_pattern and change <= config.tol * scale:
            return solved if np.array_equal(solved > 0, w > 0) else w
    raise NonConvergenceError(f"no convergence at delta={delta} after {config.max_outer} iterations",
                              last_iterate=ScalarField(problem.grid, v), history=history)


def _flip_search(problem: DiscreteProblem, v: np.ndarray, config: SolverConfig,
                 history: List[IterationRecord]) -> np.ndarray:
    """Pattern flips, relaxed and accepted on energy decrease.

    The moves are single-node flips plus growing or peeling the whole layer
    of unknowns along the free boundary.  Only used for small problems; it
    removes the Gauss-Seidel stickiness near the free boundary, which
    matters when comparing with the oracle.
    """
    U = problem.unknown
    e = problem.energy(v)

    def dilate(mask):
        out = mask.copy()
        out[1:, :] |= mask[:-1, :]
        out[:-1, :] |= mask[1:, :]
        out[:, 1:] |= mask[:, :-1]
        out[:, :-1] |= mask[:, 1:]
        return out

    improved = True
    while improved:
        improved = False
        pos = U & (v > 0)
        zero = (U & ~pos) | (~U & (problem.trace <= 0))
        # candidates: positive nodes and zero unknowns touching the positive set
        near = dilate(pos | (~U & (problem.trace > 0)))
        grow = U & ~pos & near
        peel = pos & dilate(zero)
        moves = [pos ^ grow, pos & ~peel]
        for j, i in np.argwhere(U & (pos | near)):
            trial = pos.copy()
            trial[j, i] = not trial[j, i]
            moves.append(trial)
        for trial_support in moves:
            if np.array_equal(trial_support, pos):
                continue
            w = problem.solve_on_support(trial_support, tol=config.linear_tol)
            w = np.where(U, np.maximum(w, 0.0), w)
            # let the rest of the pattern react to the flip before judging it
            w = _run_stage(problem, w, 0.0, config, [])
            ew = problem.energy(w)
            if ew < e - 1e-13 * max(1.0, abs(e)):
                v, e = w, ew
                history.append(IterationRecord(0.0, -1, e, 0.0, int(np.count_nonzero(w[U] > 0))))
                improved = True
                break
    return v


def trace_gradient(problem: DiscreteProblem) -> float:
    """Largest difference quotient of the trace between neighbouring fixed nodes."""
    t = problem.trace
    fixed = ~problem.unknown
    gx = np.abs(np.diff(t, axis=1))[fixed[:, 1:] & fixed[:, :-1]]
    gy = np.abs(np.diff(t, axis=0))[fixed[1:, :] & fixed[:-1, :]]
    g = max(gx.max(initial=0.0), gy.max(initial=0.0)) / problem.grid.h
    return g if g > 0 else _scale(problem)


def delta_stages(problem: DiscreteProblem, config: SolverConfig, full: bool = True) -> List[float]:
    """Absolute smoothing widths for one level.

    The relative schedule (``full``) is followed by halvings of a grid-scale
    width ``G h`` down to ``G h / 4``, with ``G`` the trace gradient, so that
    the last smoothed stage resolves the free boundary to a fraction of a cell.
    """
    scale = _scale(problem)
    Gh = trace_gradient(problem) * problem.grid.h
    out = [d * scale for d in config.delta_schedule] if full else []
    d = 4.0 * Gh if full else Gh
    floor = Gh / 4 if config.final_delta <= 0 else config.final_delta * Gh
    while d > floor * (1 + 1e-12):
        if not out or d < out[-1] * (1 - 1e-12):
            out.append(d)
        d /= 2
    if not out or floor < out[-1] * (1 - 1e-12):
        out.append(floor)
    return out


def minimize_discrete(problem: DiscreteProblem, config: SolverConfig = SolverConfig(),
                      psi_init: Optional[np.ndarray] = None, history: Optional[list] = None,
                      continuation: bool = True) -> np.ndarray:
    history = [] if history is None else history
    U = problem.unknown
    if psi_init is None:
        v = solve_dirichlet_values(problem, U)
        v = np.where(U, np.maximum(v, 0.0), problem.trace)
    else:
        v = np.where(U, np.maximum(np.asarray(psi_init, float), 0.0), problem.trace)
    for d in delta_stages(problem, config, continuation):
        v = _run_stage(problem, v, d, config, history)
    if config.final_delta > 0:
        return v
    v = _run_stage(problem, v, 0.0, config, history)
    if config.flip_search and problem.n_unknown <= config.flip_search_limit:
        v2 = _flip_search(problem, v, config, history)
        if v2 is not v:
            v = _run_stage(problem, v2, 0.0, config, history)
    return v


def minimize(spec: ProblemSpec, config: SolverConfig = SolverConfig(),
             psi_init: Optional[ScalarField] = None, history: Optional[list] = None,
             grid: Optional[GridSpec] = None) -> ScalarField:
    """Local minimizer of the discrete functional with the trace of ``psi_init``.

    When ``psi_init`` is given its values outside the unknown set define the
    trace; otherwise the boundary descriptor of ``spec`` does.
    """
    if psi_init is not None:
        grid = psi_init.grid
        if np.any(psi_init.values < 0) and np.any(psi_init.values[~_unknown_mask(spec, grid)] < 0):
            raise ParameterError("initial trace must be non-negative")
        problem = DiscreteProblem(spec, grid, trace=psi_init.values)
        v = minimize_discrete(problem, config, psi_init.values, history)
    else:
        problem = DiscreteProblem(spec, grid)
        v = minimize_discrete(problem, config, None, history)
    return ScalarField(problem.grid, v)


def _unknown_mask(spec: ProblemSpec, grid: GridSpec) -> np.ndarray:
    return DiscreteProblem(spec, grid).unknown


@dataclass
class SolveResult:
    field: ScalarField
    problem: DiscreteProblem
    energy: float
    iterations: int
    levels: List[int]
    history: List[IterationRecord] = field(default_factory=list)


def solve(spec: ProblemSpec, config: SolverConfig = SolverConfig(), coarse_n: int = 65) -> SolveResult:
    """Nested iteration: minimize on a coarse grid, prolong, re-minimize.

    Continuation in delta runs on the coarsest level only; finer levels start
    from the prolonged coarse minimizer and solve the sharp problem.
    """
    n = spec.grid_n
    levels = [n]
    while (levels[-1] - 1) % 2 == 0 and (levels[-1] + 1) // 2 >= coarse_n:
        levels.append((levels[-1] + 1) // 2)
    levels.reverse()
    history: List[IterationRecord] = []
    v = None
    problem = None
    for k, m in enumerate(levels):
        grid = spec.grid(m)
        problem = DiscreteProblem(spec, grid)
        init = None
        if v is not None:
            init = prolong(v, grid).values
        cfg = config
        if k > 0 and config.flip_search:
            cfg = dataclasses.replace(config, flip_search=False)
        w = minimize_discrete(problem, cfg, init, history, continuation=(k == 0))
        v = ScalarField(grid, w)
        log.info("level n=%d: energy %.10g", m, problem.energy(w))
    return SolveResult(v, problem, problem.energy(v.values), len(history), levels, history)


# --------------------------------------------------------------- Dirichlet

def solve_dirichlet_values(problem: DiscreteProblem, mask: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    mask = np.asarray(mask, bool) & problem.unknown
    if not mask.any():
        raise ParameterError("empty interior: nothing to solve")
    v = problem.solve_on_support(mask, tol=tol)
    # unknowns outside the mask keep the trace value given to the problem
    return v


def dirichlet_residual(problem: DiscreteProblem, v: np.ndarray, mask: np.ndarray) -> float:
    """Max-norm residual of ``a psi - sum c psi_nb - s f(psi)`` on ``mask``."""
    r = problem.a * v - problem.neighbor_sum(v) - problem.s * problem.vorticity.f(v)
    return float(np.max(np.abs(r[mask])))


def solve_dirichlet(spec: ProblemSpec, mask: np.ndarray, trace: ScalarField) -> ScalarField:
    """Solve the weighted five-point equation on ``mask`` with ``trace`` elsewhere."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ParameterError("empty interior: nothing to solve")
    problem = DiscreteProblem(spec, trace.grid, trace=trace.values, unknown=mask)
    v = problem.solve_on_support(mask)
    res = dirichlet_residual(problem, v, mask)
    if res > 1e-10:
        raise NonConvergenceError(f"Dirichlet residual {res:.3e} above 1e-10", ScalarField(trace.grid, v))
    return ScalarField(trace.grid, v)


# ---------------------------------------------------------------- J value

def evaluate_J(psi: ScalarField, spec: ProblemSpec, subsample: int = 4) -> float:
    """Quadrature value of the functional over ``B_R0(X0)`` (or the box)."""
    m = spec.vorticity

    def integrand(x, y):
        xc, yc = spec.coefficients(x, y)
        gx, gy = gradient_xy(psi, x, y)
        p = psi.interp(x, y)
        return (gx * gx + gy * gy) / xc - 2 * xc * m.F(p) - xc * yc * (p > 0)

    if spec.domain == "box":
        return rect_integral(integrand, psi.grid, cut_fields=(psi,), subsample=subsample)
    return disk_integral(integrand, spec.X0, spec.R0, psi.grid, cut_fields=(psi,), subsample=subsample)


def discrete_energy(psi: ScalarField, spec: ProblemSpec) -> float:
    """The nodal energy minimized by :func:`minimize`, for ``psi``'s own trace."""
    problem = DiscreteProblem(spec, psi.grid, trace=psi.values)
    return problem.energy(np.where(problem.unknown, psi.values, problem.trace))


# ----------------------------------------------------------------- oracles

class OracleResult(NamedTuple):
    field: ScalarField
    pattern: np.ndarray
    energy: float
    patterns_tried: int


def oracle_small(spec: ProblemSpec, grid: Optional[GridSpec] = None,
                 trace: Optional[np.ndarray] = None, max_unknowns: int = 25) -> OracleResult:
    """Exhaustive search over all positivity patterns of the unknown nodes."""
    problem = DiscreteProblem(spec, grid, trace=trace)
    k = problem.n_unknown
    if k > max_unknowns:
        raise RefusalError(f"{k} unknown nodes exceed the enumeration limit {max_unknowns}")
    U = problem.unknown
    nodes = np.argwhere(U)
    best = None
    best_key = None
    tried = 0
    for bits in itertools.product((False, True), repeat=k):
        tried += 1
        support = np.zeros_like(U)
        for (j, i), b in zip(nodes, bits):
            support[j, i] = b
        v = problem.solve_on_support(support) if any(bits) else np.where(U, 0.0, problem.trace)
        v = np.where(U, np.maximum(v, 0.0), v)
        e = problem.energy(v)
        key = (round(e, 12), int(np.count_nonzero(v[U] > 0)))
        if best_key is None or key < best_key:
            best, best_key = v, key
    return OracleResult(ScalarField(problem.grid, best), best[U] > 0, problem.energy(best), tried)


class Oracle1D(NamedTuple):
    fb_location: float
    J_value: float
    touches_boundary: bool
    a: float
    Q: float
    L: float

    def profile(self, t):
        """Minimizing profile at distance ``t`` from the Dirichlet end."""
        t = np.asarray(t, float)
        if self.touches_boundary:
            return np.maximum(self.a * (1 - t / self.L), 0.0)
        return np.maximum(self.a - self.Q * t, 0.0)


def oracle_1d(a: float, Q: float, L: float) -> Oracle1D:
    """Minimizer of ``int_0^L u'^2 + Q^2 I(u > 0)`` with ``u(0) = a``, ``u(L) = 0``."""
    if not (a >= 0 and Q > 0 and L > 0):
        raise ParameterError("need a >= 0, Q > 0, L > 0")
    s = a / Q
    if s > L:
        return Oracle1D(L, a * a / L + Q * Q * L, True, a, Q, L)
    return Oracle1D(s, 2 * a * Q, False, a, Q, L)


def small_corpus(n_instances: int = 20, seed: int = 0) -> List[ProblemSpec]:
    """Random 5 x 5 box problems (3 x 3 unknowns) for the exhaustive oracle.

    Centres, slopes, offsets and wiggles of the half-plane trace are drawn
    from ``seed``; the vorticity kind cycles through the three models.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_instances):
        X0 = (rng.uniform(0.5, 3.0), -rng.uniform(0.5, 3.0))
        R0 = compute_R0(X0)
        angle = rng.uniform(0, 2 * math.pi)
        amp = rng.uniform(0, 0.3)
        offset = rng.uniform(-0.5, 0.5) * R0
        kind = VORTICITY_KINDS[k % 3]
        F0 = rng.uniform(0, 1.5) if kind != "zero" else 0.0
        vort = VorticityModel(kind, F0, 0.5, 1.0 + rng.uniform(0, 1))
        slope = boundary_slope(X0) * rng.uniform(0.5, 2.0)
        bd = BoundaryData("half-plane", angle, slope=slope, amplitude=amp, frequency=3.0, offset=offset)
        out.append(ProblemSpec(X0, R0, vort, bd, grid_n=5, domain="box"))
    return out
