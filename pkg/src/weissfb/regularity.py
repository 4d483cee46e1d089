"""Flatness, viscosity and graph-regularity diagnostics for one-phase fields.

The operations here work on the general problem

    sum a_ij D_ij u + b . grad u = f   in {u > 0},     |grad u| = Q   on the free boundary,

of which the stream-function problem is the instance ``a = identity``,
``b = (-1/x, 0)``, ``f = -x^2 f(psi)`` and ``Q = x sqrt(-y)``.  That form comes
from expanding ``div((1/x) grad psi) = (1/x) lap psi - (1/x^2) psi_x``.

Fields are normalized before any flatness statement: around a centre ``c``
and a radius ``R`` the unit-ball picture is ``X -> u(c + R X) / (R q)`` where
``q`` is the boundary slope at ``c`` (one for already normalized fields).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, ParameterError, RefusalError
from .field import (GridSpec, ScalarField, circle_integral, disk_integral, extend_positive,
                    extract_free_boundary)
from .physics import VorticityModel, boundary_slope, eval_f

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

FLAT_TOL = 1e-12    # rounding slack of the flatness inequalities (unit-ball units)
ZERO_TOL = 1e-10    # a node counts as belonging to the zero phase below this value
FLOOR_CELLS = 16    # smallest iteration scale, in grid spacings
E2 = np.array([0.0, 1.0])


# ------------------------------------------------------------------ helpers

def _unit(nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float).reshape(2)
    n = float(np.hypot(nu[0], nu[1]))
    if not n > 0:
        raise ParameterError("direction must be a nonzero vector")
    return nu / n


def _angle(nu) -> float:
    return math.atan2(nu[1], nu[0])


def _ball_nodes(u: ScalarField, center, R: float, slope: float = 1.0):
    """Nodes of ``B_R(center)`` in unit-ball coordinates with normalized values."""
    if not R > 0:
        raise ParameterError(f"radius must be positive, got {R}")
    if not slope > 0:
        raise ParameterError(f"normalizing slope must be positive, got {slope}")
    g = u.grid
    if not g.contains_ball(center, R):
        raise DomainError(f"B_{R:g}({tuple(center)}) leaves the grid hull")
    X, Y = g.mesh()
    dx = X - center[0]
    dy = Y - center[1]
    inside = dx * dx + dy * dy <= R * R * (1 + 1e-12)
    if not inside.any():
        raise ParameterError("no grid node inside the ball")
    return dx[inside] / R, dy[inside] / R, u.values[inside] / (R * slope)


def flatness_width(X, Y, v, nu) -> float:
    """Smallest ``eps`` with ``(X.nu - eps)^+ <= v <= (X.nu + eps)^+`` at the samples."""
    nu = _unit(nu)
    s = X * nu[0] + Y * nu[1]
    pos = v > 0
    w = 0.0
    if pos.any():
        w = max(w, float(np.max(np.abs(v[pos] - s[pos]))))
    if (~pos).any():
        w = max(w, float(np.max(s[~pos])))
    return w


def _angle_search(X, Y, v, theta0: float, half_span: float, resolution: float,
                  n: int = 41) -> Tuple[float, float]:
    """Coarse-to-fine minimization of the flatness width over an angle window.

    Each pass evaluates ``n`` equispaced angles and zooms onto two steps
    around the best one; ``argmin`` keeps the first (smallest) angle on ties.
    """
    if half_span <= 0:
        return theta0, flatness_width(X, Y, v, (math.cos(theta0), math.sin(theta0)))
    lo, hi = theta0 - half_span, theta0 + half_span
    best = (theta0, flatness_width(X, Y, v, (math.cos(theta0), math.sin(theta0))))
    while True:
        ts = np.linspace(lo, hi, n)
        ws = np.array([flatness_width(X, Y, v, (math.cos(t), math.sin(t))) for t in ts])
        k = int(np.argmin(ws))
        if ws[k] < best[1]:
            best = (float(ts[k]), float(ws[k]))
        step = ts[1] - ts[0]
        if step <= resolution:
            return best
        lo = max(ts[k] - 2 * step, theta0 - half_span)
        hi = min(ts[k] + 2 * step, theta0 + half_span)


def best_direction(u: ScalarField, center, R: float, nu0=None, max_dev: float = math.pi,
                   resolution: float = 1e-7, slope: float = 1.0) -> Tuple[np.ndarray, float]:
    """Direction minimizing the flatness width on ``B_R(center)``, and that width.

    Without ``nu0`` the whole circle is scanned; otherwise the search stays
    within ``max_dev`` radians of ``nu0``.
    """
    X, Y, v = _ball_nodes(u, center, R, slope)
    if nu0 is None:
        theta, w = _angle_search(X, Y, v, math.pi, math.pi, resolution, n=361)
    else:
        theta, w = _angle_search(X, Y, v, _angle(_unit(nu0)), max_dev, resolution)
    return np.array([math.cos(theta), math.sin(theta)]), w


def _nu_distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def _span_for(dist: float) -> float:
    """Angle whose chord on the unit circle has length ``dist``."""
    return 2 * math.asin(min(1.0, dist / 2)) if dist < 2 else math.pi


# ---------------------------------------------------------------- problems

def _const(c: float) -> Evaluator:
    c = float(c)
    return lambda x, y: np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, c)


@dataclass(frozen=True, eq=False)
class GeneralFBP:
    """Coefficients of the general one-phase problem as pointwise evaluators.

    ``beta`` is the Hölder exponent of the coefficients; ``None`` marks a
    constant-coefficient problem, for which Hölder seminorms vanish and the
    schedule bound that involves ``beta`` is void.
    """

    a11: Evaluator
    a12: Evaluator
    a22: Evaluator
    b1: Evaluator
    b2: Evaluator
    f: Evaluator
    Q: Evaluator
    beta: Optional[float] = 1.0
    lam: float = 1.0
    Lam: float = 1.0

    @classmethod
    def frozen(cls, Q0: float = 1.0) -> "GeneralFBP":
        """Laplacian, no drift, no source, constant boundary gradient ``Q0``."""
        if not Q0 > 0:
            raise ParameterError("Q0 must be positive")
        zero = _const(0.0)
        one = _const(1.0)
        return cls(one, zero, one, zero, zero, zero, _const(Q0), beta=None)

    @classmethod
    def axisymmetric(cls, vorticity: Optional[VorticityModel] = None,
                     psi: Optional[ScalarField] = None) -> "GeneralFBP":
        """The stream-function problem in non-divergence form.

        With a nonzero vorticity the right-hand side ``-x^2 f(psi)`` depends on
        the field, which must then be supplied.
        """
        zero = _const(0.0)
        one = _const(1.0)
        vort = VorticityModel.zero() if vorticity is None else vorticity
        if vort.kind == "zero":
            rhs = zero
        else:
            if psi is None:
                raise ParameterError("a nonzero vorticity needs the field to evaluate f(psi)")
            rhs = lambda x, y: -np.asarray(x) ** 2 * eval_f(vort, psi.interp(x, y))  # noqa: E731

        def b1(x, y):
            x = np.asarray(x, dtype=float)
            if np.any(x <= 0):
                raise DomainError("drift -1/x is singular on the axis")
            return -1.0 / x + 0.0 * np.asarray(y)

        def Q(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            if np.any(y > 0):
                raise DomainError("boundary gradient x sqrt(-y) needs y <= 0")
            return x * np.sqrt(-y)

        return cls(one, zero, one, b1, zero, rhs, Q, beta=1.0)

    def rescaled(self, center, rho: float, q0: float = 1.0) -> "GeneralFBP":
        """Problem solved by ``u(c + rho X) / (rho q0)`` when ``u`` solves this one."""
        cx, cy = float(center[0]), float(center[1])
        rho = float(rho)
        q0 = float(q0)

        def at(fn, scale=1.0):
            return lambda x, y: scale * fn(cx + rho * np.asarray(x), cy + rho * np.asarray(y))

        return GeneralFBP(at(self.a11), at(self.a12), at(self.a22), at(self.b1, rho), at(self.b2, rho),
                          at(self.f, rho / q0), at(self.Q, 1.0 / q0), self.beta, self.lam, self.Lam)

    def check(self, x, y, n_dirs: int = 16) -> None:
        """Sample ellipticity and positivity of ``Q`` at the given points."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        a11, a12, a22 = (np.broadcast_to(a(x, y), x.shape) for a in (self.a11, self.a12, self.a22))
        t = np.pi * np.arange(n_dirs) / n_dirs
        c, s = np.cos(t)[:, None], np.sin(t)[:, None]
        form = a11 * c * c + 2 * a12 * c * s + a22 * s * s
        tol = 1e-12 * max(1.0, self.Lam)
        if np.any(form < self.lam - tol) or np.any(form > self.Lam + tol):
            raise ParameterError("coefficients violate the ellipticity bounds")
        if np.any(np.broadcast_to(self.Q(x, y), x.shape) <= 0):
            raise ParameterError("boundary gradient Q must be positive")

    def smallness(self, n_rad: int = 16, n_ang: int = 64) -> Dict[str, float]:
        """Sup norms on the closed unit ball of ``f``, ``b``, ``Q - 1`` and ``a - identity``."""
        rr = np.linspace(0.0, 1.0, n_rad + 1)
        tt = 2 * np.pi * np.arange(n_ang) / n_ang
        R, T = np.meshgrid(rr, tt)
        x = (R * np.cos(T)).ravel()
        y = (R * np.sin(T)).ravel()

        def sup(v):
            return float(np.max(np.abs(np.broadcast_to(v, x.shape))))

        a_dev = max(sup(self.a11(x, y) - 1.0), sup(self.a12(x, y)), sup(self.a22(x, y) - 1.0))
        b = np.hypot(np.broadcast_to(self.b1(x, y), x.shape), np.broadcast_to(self.b2(x, y), x.shape))
        return {"f": sup(self.f(x, y)), "b": sup(b), "Q": sup(self.Q(x, y) - 1.0), "a": a_dev}

    def ladder_margin(self, eps: float) -> float:
        """Worst slack of ``|f|, |b|, |Q - 1| <= eps^2`` and ``|a - identity| <= eps`` on the unit ball."""
        s = self.smallness()
        return min(eps * eps - s["f"], eps * eps - s["b"], eps * eps - s["Q"], eps - s["a"])


# ---------------------------------------------------------------- flatness

@dataclass(frozen=True, eq=False)
class FlatnessCertificate:
    """Outcome of a flatness test on ``B_radius(center)``.

    Margins are in unit-ball units and negative when violated;
    ``lower_margin`` and ``upper_margin`` refer to the two inequalities.
    """

    center: tuple
    radius: float
    nu: np.ndarray
    eps: float
    passed: bool
    margin: float
    lower_margin: float = 0.0
    upper_margin: float = 0.0

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        if abs(np.hypot(nu[0], nu[1]) - 1.0) > 1e-12:
            raise ParameterError("flatness direction must be a unit vector")
        if self.eps < 0:
            raise ParameterError("flatness level must be non-negative")


def check_flatness(u: ScalarField, center, R: float, nu, eps: float,
                   slope: float = 1.0) -> FlatnessCertificate:
    """Test ``(X.nu - eps)^+ <= u <= (X.nu + eps)^+`` on the nodes of ``B_R(center)``.

    Coordinates are recentred and divided by ``R``; values by ``R * slope``.
    """
    if eps < 0:
        raise ParameterError("flatness level must be non-negative")
    nu = _unit(nu)
    X, Y, v = _ball_nodes(u, center, R, slope)
    s = X * nu[0] + Y * nu[1]
    lower = float(np.min(v - np.maximum(s - eps, 0.0)))
    upper = float(np.min(np.maximum(s + eps, 0.0) - v))
    margin = min(lower, upper)
    return FlatnessCertificate((float(center[0]), float(center[1])), float(R), nu, float(eps),
                               margin >= -FLAT_TOL, margin, lower, upper)


# --------------------------------------------------------------- viscosity

@dataclass(frozen=True, eq=False)
class ViscosityReport:
    """Pointwise residuals of the classical form of the viscosity conditions.

    ``fb_errors`` holds ``|grad u| - Q`` at the free-boundary samples, so a
    positive entry means the field is steeper than required.
    """

    interior_points: np.ndarray
    interior_residuals: np.ndarray
    fb_points: np.ndarray
    fb_gradients: np.ndarray
    fb_Q: np.ndarray
    h: float

    @property
    def fb_errors(self) -> np.ndarray:
        return self.fb_gradients - self.fb_Q

    @property
    def interior_max(self) -> float:
        return float(np.max(self.interior_residuals)) if self.interior_residuals.size else 0.0

    @property
    def fb_max(self) -> float:
        return float(np.max(np.abs(self.fb_errors))) if self.fb_errors.size else 0.0

    @property
    def fb_mean(self) -> float:
        return float(np.mean(self.fb_errors)) if self.fb_errors.size else 0.0

    @property
    def fb_rms(self) -> float:
        return float(np.sqrt(np.mean(self.fb_errors ** 2))) if self.fb_errors.size else 0.0

    def passes(self, tol_interior: float, tol_fb: float) -> bool:
        return self.interior_max <= tol_interior and self.fb_max <= tol_fb


def _hessian_nodes(v: np.ndarray, h: float):
    c = v[1:-1, 1:-1]
    dxx = (v[1:-1, 2:] - 2 * c + v[1:-1, :-2]) / (h * h)
    dyy = (v[2:, 1:-1] - 2 * c + v[:-2, 1:-1]) / (h * h)
    dxy = (v[2:, 2:] - v[:-2, 2:] - v[2:, :-2] + v[:-2, :-2]) / (4 * h * h)
    dx = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * h)
    dy = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * h)
    return dxx, dxy, dyy, dx, dy


def _one_sided(v: np.ndarray, j: int, i: int, h: float) -> float:
    """Gradient magnitude at node (j, i) from differences inside the positive phase."""
    ny, nx = v.shape
    comps = []
    for dj, di in ((0, 1), (1, 0)):
        def val(k):
            jj, ii = j + k * dj, i + k * di
            if 0 <= jj < ny and 0 <= ii < nx and v[jj, ii] > 0:
                return v[jj, ii]
            return None
        p1, m1, p2, m2 = val(1), val(-1), val(2), val(-2)
        c = v[j, i]
        if p1 is not None and m1 is not None:
            d = (p1 - m1) / (2 * h)
        elif p1 is not None and p2 is not None:
            d = (-3 * c + 4 * p1 - p2) / (2 * h)
        elif m1 is not None and m2 is not None:
            d = (3 * c - 4 * m1 + m2) / (2 * h)
        elif p1 is not None:
            d = (p1 - c) / h
        elif m1 is not None:
            d = (c - m1) / h
        else:
            d = 0.0
        comps.append(d)
    return math.hypot(comps[0], comps[1])


def viscosity_check(u: ScalarField, problem: GeneralFBP, center=None, radius: Optional[float] = None,
                    interior_threshold: Optional[float] = None) -> ViscosityReport:
    """Interior equation residuals and free-boundary gradient errors of a grid field.

    Interior samples are nodes whose whole 3x3 stencil is positive and whose
    value exceeds ``interior_threshold`` (default ``10 h``); their residual
    uses 9-point second differences.  Free-boundary samples are the segment
    midpoints of the zero level set; the gradient there is read off the
    nearest positive node with differences taken inside the positive phase.
    The sample set is restricted to ``B_radius(center)`` when given.
    """
    g = u.grid
    h = g.h
    v = u.values
    thr = 10 * h if interior_threshold is None else float(interior_threshold)
    X, Y = g.mesh()

    def in_region(px, py):
        if center is None or radius is None:
            return np.ones(np.shape(px), dtype=bool)
        return (px - center[0]) ** 2 + (py - center[1]) ** 2 <= radius ** 2

    dxx, dxy, dyy, dx, dy = _hessian_nodes(v, h)
    pos = v > 0
    stencil = np.ones_like(pos[1:-1, 1:-1])
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            stencil &= pos[1 + dj:pos.shape[0] - 1 + dj, 1 + di:pos.shape[1] - 1 + di]
    Xc, Yc = X[1:-1, 1:-1], Y[1:-1, 1:-1]
    sel = stencil & (v[1:-1, 1:-1] > thr) & in_region(Xc, Yc)
    xs, ys = Xc[sel], Yc[sel]
    if xs.size:
        res = (problem.a11(xs, ys) * dxx[sel] + 2 * problem.a12(xs, ys) * dxy[sel]
               + problem.a22(xs, ys) * dyy[sel] + problem.b1(xs, ys) * dx[sel]
               + problem.b2(xs, ys) * dy[sel] - problem.f(xs, ys))
        res = np.abs(np.broadcast_to(res, xs.shape)).astype(float)
    else:
        res = np.zeros(0)

    fb = extract_free_boundary(u)
    pts = fb.midpoints() if not fb.is_empty else np.zeros((0, 2))
    if pts.size:
        keep = in_region(pts[:, 0], pts[:, 1])
        # stay clear of the hull so the one-sided stencils exist
        keep &= ((pts[:, 0] > g.x_min + 3 * h) & (pts[:, 0] < g.x_max - 3 * h)
                 & (pts[:, 1] > g.y_min + 3 * h) & (pts[:, 1] < g.y_max - 3 * h))
        pts = pts[keep]
    grads = np.zeros(len(pts))
    for k, (px, py) in enumerate(pts):
        i0 = int(round((px - g.x_min) / h))
        j0 = int(round((py - g.y_min) / h))
        best = None
        for dj in range(-2, 3):
            for di in range(-2, 3):
                j, i = j0 + dj, i0 + di
                if 0 <= j < g.ny and 0 <= i < g.nx and v[j, i] > 0:
                    d2 = (X[j, i] - px) ** 2 + (Y[j, i] - py) ** 2
                    if best is None or d2 < best[0]:
                        best = (d2, j, i)
        grads[k] = _one_sided(v, best[1], best[2], h) if best is not None else 0.0
    Qs = (np.broadcast_to(problem.Q(pts[:, 0], pts[:, 1]), (len(pts),)).astype(float)
          if len(pts) else np.zeros(0))
    if xs.size == 0 and len(pts) == 0:
        raise ParameterError("viscosity check found no interior or free-boundary samples")
    return ViscosityReport(np.column_stack([xs, ys]), res, pts, grads, Qs, h)


# ------------------------------------------------------- Lipschitz estimate

def lipschitz_ratio(psi: ScalarField, center=None, radius: Optional[float] = None) -> float:
    """``max |grad psi| / (x sqrt(-y))`` over interior nodes (central differences)."""
    g = psi.grid
    if g.x_min <= 0 or g.y_max >= 0:
        raise DomainError("the ratio needs a grid inside {x > 0, y < 0}")
    v = psi.values
    gx = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * g.h)
    gy = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * g.h)
    X, Y = g.mesh()
    Xc, Yc = X[1:-1, 1:-1], Y[1:-1, 1:-1]
    ratio = np.hypot(gx, gy) / (Xc * np.sqrt(-Yc))
    if center is not None and radius is not None:
        ratio = ratio[(Xc - center[0]) ** 2 + (Yc - center[1]) ** 2 <= radius ** 2]
    return float(np.max(ratio)) if ratio.size else 0.0


# ------------------------------------------------------------------ config

CONSTANT_KEYS = ("c", "eps_bar", "C0", "eps0", "r0", "c_star_kappa", "C_star", "r_bar", "kappa")


@dataclass(frozen=True)
class RegularityConfig:
    """Measured stand-ins for the universal constants of the regularity theory.

    The defaults are the output of :func:`calibrate` with its default
    arguments; see that function for how each one is obtained.
    """

    kappa: float = 0.5
    c_star_kappa: float = 0.04959128315936736
    C_star: float = 1.4712403351934613
    harnack_ratio: float = 1.0 / 20.0
    r_bar: float = 0.5
    r0: float = 0.5
    eps0: float = 0.49603223969771965
    C0: float = 0.7654181846983504
    c: float = 0.872781989950589
    eps_bar: float = 0.12400805992442991

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ParameterError("kappa must lie in (0, 1)")
        if not 0 < self.r_bar < 1:
            raise ParameterError("r_bar must lie in (0, 1)")
        if not 0 < self.c < 1:
            raise ParameterError("Harnack constant c must lie in (0, 1)")
        for name in ("c_star_kappa", "C_star", "harnack_ratio", "r0", "eps0", "C0", "eps_bar"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")

    def schedule_eps(self, k: int, r_bar: Optional[float] = None) -> float:
        """Flatness level of iteration step ``k``: ``2^-k eps0 r_bar^2``."""
        rb = self.r_bar if r_bar is None else r_bar
        return 2.0 ** (-k) * self.eps0 * rb ** 2

    def effective_r_bar(self, problem: "GeneralFBP") -> float:
        """``min(r_bar, (1/4)^(1/beta))``; the second bound is void for constant coefficients."""
        if problem.beta is None:
            return self.r_bar
        return min(self.r_bar, 0.25 ** (1.0 / problem.beta))

    @property
    def holder_exponent(self) -> float:
        """``log(1 - c) / log(harnack_ratio)``, the exponent delivered by the Harnack step."""
        return math.log(1 - self.c) / math.log(self.harnack_ratio)

    def to_dict(self) -> Dict[str, float]:
        return {k: float(getattr(self, k)) for k in CONSTANT_KEYS}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d) -> "RegularityConfig":
        missing = [k for k in CONSTANT_KEYS if k not in d]
        if missing:
            raise ParameterError(f"constants file lacks {missing}")
        return cls(**{k: float(d[k]) for k in CONSTANT_KEYS})

    @classmethod
    def read_json(cls, path) -> "RegularityConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------- probes

@dataclass(frozen=True)
class ProbeVerdict:
    """``triggered``: the hypothesis of the lemma holds at this ``(X, r)``;
    ``consistent``: its conclusion holds too (always true when not triggered)."""

    triggered: bool
    consistent: bool
    value: float
    threshold: float
    witness: float


def _node_values_in_ball(psi: ScalarField, X, r: float) -> np.ndarray:
    g = psi.grid
    Xg, Yg = g.mesh()
    m = (Xg - X[0]) ** 2 + (Yg - X[1]) ** 2 <= r * r * (1 + 1e-12)
    return psi.values[m]


def nondegeneracy_probe(psi: ScalarField, X, r: float, config: RegularityConfig = RegularityConfig(),
                        R0: Optional[float] = None, F0: float = 0.0) -> ProbeVerdict:
    """Small ``L^2`` average on ``B_r(X)`` must force ``psi = 0`` on ``B_{kappa r}(X)``."""
    x, y = float(X[0]), float(X[1])
    k = config.kappa
    depth = -y - k * r
    if not depth > 0:
        raise RefusalError(f"-y - kappa r = {depth:g} must be positive", margin=depth)
    limit = min(x / 2, 0.5) if R0 is None else min(x / 2, R0 / 2, 0.5)
    if F0 > 0:
        limit = min(limit, config.c_star_kappa * math.sqrt(depth) / F0)
    if not 0 < r <= limit:
        raise RefusalError(f"radius {r:g} outside (0, {limit:g}]", margin=limit - r)
    g = psi.grid
    avg = disk_integral(lambda a, b: psi.interp(a, b) ** 2, (x, y), r, g,
                        cut_fields=(psi,)) / (math.pi * r * r)
    value = math.sqrt(max(avg, 0.0)) / r
    threshold = config.c_star_kappa * x * math.sqrt(depth)
    inner = _node_values_in_ball(psi, (x, y), k * r)
    witness = float(np.max(inner)) if inner.size else 0.0
    triggered = value < threshold
    return ProbeVerdict(triggered, (not triggered) or witness <= ZERO_TOL, value, threshold, witness)


def growth_probe(psi: ScalarField, X, r: float,
                 config: RegularityConfig = RegularityConfig()) -> ProbeVerdict:
    """Large circle average on ``dB_r(X)`` must force ``psi > 0`` on ``B_r(X)``."""
    x, y = float(X[0]), float(X[1])
    if not r > 0:
        raise RefusalError("radius must be positive", margin=r)
    if not (x - r > 0 and y + r < 0):
        raise RefusalError("B_r(X) must stay inside the quadrant {x > 0, y < 0}")
    g = psi.grid
    if not g.contains_ball((x, y), r):
        raise DomainError(f"B_{r:g}({x}, {y}) leaves the grid hull")
    n = max(256, 8 * int(math.ceil(2 * math.pi * r / g.h)))
    avg = circle_integral(psi.interp, (x, y), r, g, n_samples=n) / (2 * math.pi * r)
    value = avg / r
    threshold = config.C_star * x * math.sqrt(-y)
    inner = _node_values_in_ball(psi, (x, y), r)
    witness = float(np.min(inner)) if inner.size else 0.0
    triggered = value >= threshold
    return ProbeVerdict(triggered, (not triggered) or witness > 0, value, threshold, witness)


# ----------------------------------------------------------------- Harnack

@dataclass(frozen=True)
class HarnackResult:
    a1: float
    b1: float
    passed: bool
    ratio: float


def _band_bounds(X, Y, v, nu):
    """Tightest ``a <= b`` with ``(s + a)^+ <= v <= (s + b)^+`` at the samples."""
    s = X * nu[0] + Y * nu[1]
    pos = v > ZERO_TOL
    a = min(float(np.min(v[pos] - s[pos])) if pos.any() else math.inf,
            float(np.min(-s[~pos])) if (~pos).any() else math.inf)
    b = float(np.max(v[pos] - s[pos])) if pos.any() else -math.inf
    return a, b


def partial_harnack_check(u: ScalarField, problem: GeneralFBP, X1, r: float, a0: float, b0: float,
                          config: RegularityConfig = RegularityConfig(), nu=E2) -> HarnackResult:
    """Narrowing of a flatness band from ``B_r(X1)`` to ``B_{r/20}(X1)``.

    ``nu`` is the band direction (``e2`` as in the classical statement).
    The smallness of ``f``, ``b``, ``Q - 1`` and ``a - identity`` is checked
    on ``B_r(X1)`` against ``eps = (b0 - a0) / r``.
    """
    if b0 < a0:
        raise ParameterError("band needs a0 <= b0")
    if not r > 0:
        raise ParameterError("radius must be positive")
    nu = _unit(nu)
    eps = (b0 - a0) / r
    if eps > config.eps_bar:
        raise RefusalError(f"band width {eps:g} r exceeds eps_bar r", margin=config.eps_bar - eps)
    ladder = problem.rescaled(X1, r).ladder_margin(eps)
    if ladder < -FLAT_TOL:
        raise RefusalError("coefficients are not small enough at this scale", margin=ladder)
    X, Y, v = _ball_nodes(u, X1, r)
    # back to the original units: the band is stated for u itself
    X, Y, v = X * r + X1[0], Y * r + X1[1], v * r
    a, b = _band_bounds(X, Y, v, nu)
    scale = FLAT_TOL * max(1.0, abs(a0), abs(b0), float(np.max(np.abs(v))))
    if a < a0 - scale or b > b0 + scale:
        raise RefusalError("the band (a0, b0) does not enclose u on B_r(X1)",
                           margin=min(a - a0, b0 - b))
    Xi, Yi, vi = _ball_nodes(u, X1, config.harnack_ratio * r)
    rho = config.harnack_ratio * r
    a1, b1 = _band_bounds(Xi * rho + X1[0], Yi * rho + X1[1], vi * rho, nu)
    a1 = min(max(a1, a0), b0)
    b1 = max(min(b1, b0), a1)
    gap0 = b0 - a0
    ratio = (b1 - a1) / gap0 if gap0 > 0 else 0.0
    return HarnackResult(a1, b1, (b1 - a1) <= (1 - config.c) * gap0 + scale, ratio)


# ------------------------------------------------------ improvement of flatness

@dataclass(frozen=True, eq=False)
class StepResult:
    nu: np.ndarray
    passed: bool
    width: float
    certificate: FlatnessCertificate


def improvement_of_flatness_step(u: ScalarField, problem: GeneralFBP, r: float, nu, eps: float,
                                 config: RegularityConfig = RegularityConfig(), center=(0.0, 0.0),
                                 R: float = 1.0, slope: float = 1.0) -> StepResult:
    """From ``eps``-flatness on ``B_R`` to ``r eps / 2``-flatness on ``B_{rR}``.

    The new direction is searched within ``|nu' - nu| <= C0 eps`` at angular
    resolution ``1e-4 eps``; the step passes when the rescaled band on the
    smaller ball is at most ``eps / 2``.
    """
    if not 0 < r < 1:
        raise ParameterError("step ratio r must lie in (0, 1)")
    nu = _unit(nu)
    if eps > config.eps_bar * (1 + 1e-12):
        raise RefusalError(f"input flatness {eps:g} exceeds eps_bar = {config.eps_bar:g}",
                           margin=config.eps_bar - eps)
    cert = check_flatness(u, center, R, nu, eps, slope)
    if not cert.passed:
        raise RefusalError("input flatness is not certified", margin=cert.margin)
    ladder = problem.rescaled(center, R, slope).ladder_margin(eps)
    if ladder < -FLAT_TOL:
        raise RefusalError("coefficients are not small enough at this scale", margin=ladder)
    X, Y, v = _ball_nodes(u, center, r * R, slope)
    span = _span_for(config.C0 * eps)
    theta, width = _angle_search(X, Y, v, _angle(nu), span, max(1e-4 * eps, 1e-13))
    nu_new = np.array([math.cos(theta), math.sin(theta)])
    out = check_flatness(u, center, r * R, nu_new, eps / 2, slope)
    return StepResult(nu_new, out.passed, width, out)


@dataclass(frozen=True, eq=False)
class FlatnessLevel:
    k: int
    scale: float
    nu: np.ndarray
    eps: float
    passed: bool
    margin: float
    dnu: float


@dataclass(eq=False)
class FlatnessSchedule:
    """Recorded levels of the flatness iteration; ``failure`` names why it stopped early."""

    levels: List[FlatnessLevel] = field(default_factory=list)
    failure: Optional[str] = None
    failure_scale: Optional[float] = None
    C0: float = 1.0
    eps_start: float = 0.0

    COLUMNS = ("k", "scale", "nu_x", "nu_y", "eps", "pass", "margin")

    @property
    def passing_levels(self) -> int:
        """Length of the run of passing levels starting at ``k = 0``."""
        n = 0
        for lv in self.levels:
            if not lv.passed:
                break
            n += 1
        return n

    @property
    def cauchy_sum(self) -> float:
        return float(sum(lv.dnu for lv in self.levels[1:] if lv.passed))

    @property
    def cauchy_bound(self) -> float:
        """``C0 eps_start / (1 - sigma)`` with ``sigma = 1/2``."""
        return self.C0 * self.eps_start / (1 - 0.5)

    def direction_steps_ok(self) -> bool:
        lv = self.levels
        return all(lv[k].dnu <= self.C0 * lv[k - 1].eps * (1 + 1e-9) + 1e-12
                   for k in range(1, len(lv)) if lv[k].passed)

    def rows(self):
        for lv in self.levels:
            yield (lv.k, lv.scale, float(lv.nu[0]), float(lv.nu[1]), lv.eps, int(lv.passed), lv.margin)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([row[0], f"{row[1]:.17g}", f"{row[2]:.17g}", f"{row[3]:.17g}",
                            f"{row[4]:.17g}", row[5], f"{row[6]:.17g}"])


def flatness_iteration(u: ScalarField, problem: GeneralFBP, config: RegularityConfig = RegularityConfig(),
                       center=(0.0, 0.0), R: float = 1.0, slope: float = 1.0, nu0=None,
                       h: Optional[float] = None) -> FlatnessSchedule:
    """Improvement-of-flatness steps at scales ``R r_bar^k`` down to ``16 h``.

    The ratio is :meth:`RegularityConfig.effective_r_bar` of the problem.
    Level ``k`` certifies ``eps_k = 2^-k eps0 r_bar^2`` flatness of the
    rescaled field on ``B_{R r_bar^k}``.  Level 0 must hold (otherwise the
    iteration refuses); later levels are recorded until one fails or the
    resolution floor is reached.
    """
    h = u.grid.h if h is None else float(h)
    rb = config.effective_r_bar(problem)
    eps_start = config.schedule_eps(0, rb)
    sched = FlatnessSchedule(C0=config.C0, eps_start=eps_start)
    if nu0 is None:
        nu0, _ = best_direction(u, center, R, slope=slope)
    nu0 = _unit(nu0)
    cert = check_flatness(u, center, R, nu0, eps_start, slope)
    if not cert.passed:
        raise RefusalError(f"initial flatness {eps_start:g} not certified", margin=cert.margin)
    sched.levels.append(FlatnessLevel(0, R, nu0, eps_start, True, cert.margin, 0.0))
    k = 1
    while R * rb ** k >= FLOOR_CELLS * h * (1 - 1e-12):
        prev = sched.levels[-1]
        try:
            step = improvement_of_flatness_step(u, problem, rb, prev.nu, prev.eps, config,
                                                center, prev.scale, slope)
        except RefusalError as exc:
            sched.failure = str(exc)
            sched.failure_scale = R * rb ** k
            break
        sched.levels.append(FlatnessLevel(k, R * rb ** k, step.nu, config.schedule_eps(k, rb), step.passed,
                                          step.certificate.margin, _nu_distance(step.nu, prev.nu)))
        if not step.passed:
            sched.failure = "improvement step failed"
            sched.failure_scale = R * rb ** k
            break
        k += 1
    return sched


# ------------------------------------------------------------ Hölder modulus

@dataclass(frozen=True)
class HolderModulus:
    """``C``: smallest constant for the exponent ``gamma`` implied by ``c``;
    ``gamma_hat``: slope of the empirical modulus (``inf`` when it vanishes)."""

    C: float
    gamma: float
    gamma_hat: float
    n_samples: int


def holder_modulus(u: ScalarField, X1, eps: float, eps_bar: float,
                   config: RegularityConfig = RegularityConfig(), nu=E2, R: float = 1.0,
                   slope: float = 1.0) -> HolderModulus:
    """Modulus of ``(u - X.nu) / eps`` at ``X1`` on the positive phase of ``B_R(X1)``.

    Only samples at distance at least ``eps / eps_bar`` (unit-ball units)
    from ``X1`` are used.
    """
    if not eps > 0 or not eps_bar > 0:
        raise ParameterError("eps and eps_bar must be positive")
    nu = _unit(nu)
    cert = check_flatness(u, X1, R, nu, eps, slope)
    if not cert.passed:
        raise RefusalError("flatness around X1 is not certified", margin=cert.margin)
    X, Y, v = _ball_nodes(u, X1, R, slope)
    u0 = float(u.interp(X1[0], X1[1])) / (R * slope)
    d = np.hypot(X, Y)
    keep = (v > 0) & (d >= eps / eps_bar)
    d = d[keep]
    dev = np.abs((v[keep] - (X[keep] * nu[0] + Y[keep] * nu[1])) / eps - u0 / eps)
    gamma = config.holder_exponent
    if d.size == 0:
        raise ParameterError("no positive samples beyond eps / eps_bar")
    C = float(np.max(dev / d ** gamma))
    # empirical exponent from the envelope on dyadic shells
    lo = float(np.min(d))
    edges = [1.0]
    while edges[-1] / 2 >= lo:
        edges.append(edges[-1] / 2)
    edges = edges[::-1]
    mids, env = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (d >= a) & (d <= b)
        if m.any():
            mids.append(math.sqrt(a * b))
            env.append(float(np.max(dev[m])))
    env = np.array(env)
    good = env > 1e-12 * max(1.0, float(np.max(env)) if env.size else 1.0)
    if good.sum() < 2:
        gamma_hat = math.inf
    else:
        gamma_hat = float(np.polyfit(np.log(np.array(mids)[good]), np.log(env[good]), 1)[0])
    return HolderModulus(C, gamma, gamma_hat, int(d.size))


# ------------------------------------------------------------ graph extraction

@dataclass(frozen=True, eq=False)
class FreeBoundaryGraph:
    """Free boundary as a graph ``t = g(s)`` over the line orthogonal to ``nu``."""

    s: np.ndarray
    g: np.ndarray
    lipschitz: float
    holder_exponent: float
    holder_constant: float
    fit_residual: float
    multivalued: bool
    nu: np.ndarray

    COLUMNS = ("s", "g", "slope", "holder_fit")

    @property
    def slopes(self) -> np.ndarray:
        return np.gradient(self.g, self.s)

    def rows(self):
        if math.isfinite(self.holder_exponent):
            with np.errstate(divide="ignore"):
                fit = self.holder_constant * np.abs(self.s) ** self.holder_exponent
            fit = np.where(np.isfinite(fit), fit, np.nan)
        else:
            fit = np.zeros_like(self.s)
        for row in zip(self.s, self.g, self.slopes, fit):
            yield tuple(float(v) for v in row)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([f"{v:.17g}" for v in row])


def _slope_modulus(s: np.ndarray, g: np.ndarray):
    """Fit ``max_i |g'_{i+l} - g'_i| ~ C (l ds)^gamma`` over dyadic lags ``l``."""
    ds = np.diff(s)
    d = np.diff(g) / ds
    step = float(np.mean(ds))
    lags, env = [], []
    lag = 1
    while lag <= max(1, (len(d) - 1) // 2):
        lags.append(lag * step)
        env.append(float(np.max(np.abs(d[lag:] - d[:-lag]))))
        lag *= 2
    env = np.array(env)
    scale = max(1.0, float(np.max(np.abs(d)))) if d.size else 1.0
    good = env > 1e-9 * scale
    if good.sum() < 2:
        return math.inf, 0.0, 0.0
    lx = np.log(np.array(lags)[good])
    ly = np.log(env[good])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return float(coef[0]), float(math.exp(coef[1])), resid


def extract_graph(psi: ScalarField, X0, nu, window: float,
                  spacing: Optional[float] = None) -> FreeBoundaryGraph:
    """Heights ``g(s) = inf{t : psi(X0 + s tau + t nu) > 0}`` for ``|s|, |t| <= window``.

    ``tau`` is ``nu`` turned clockwise by a right angle.  The crossing on each
    line is located by linear interpolation of the signed extension of
    ``psi``.  ``spacing`` is the abscissa step (default ``h``); heights are
    sampled every ``h / 2``.
    """
    nu = _unit(nu)
    tau = np.array([nu[1], -nu[0]])
    g = psi.grid
    if not window > 0:
        raise ParameterError("window must be positive")
    reach = window * math.sqrt(2)
    if not g.contains_ball(X0, reach):
        raise DomainError("the graph window leaves the grid hull")
    ds = g.h if spacing is None else float(spacing)
    if not ds > 0:
        raise ParameterError("spacing must be positive")
    ns = int(math.floor(window / ds + 1e-9))
    s = ds * np.arange(-ns, ns + 1)
    nt = int(math.ceil(2 * window / (g.h / 2)))
    t = np.linspace(-window, window, nt + 1)
    signed = extend_positive(psi)
    S, T = np.meshgrid(s, t, indexing="ij")
    px = X0[0] + S * tau[0] + T * nu[0]
    py = X0[1] + S * tau[1] + T * nu[1]
    vals = signed.interp(px, py)
    pos = vals > 0
    heights = np.empty(len(s))
    multivalued = False
    for k in range(len(s)):
        p = pos[k]
        up = np.nonzero(~p[:-1] & p[1:])[0]
        if p[0]:
            raise ParameterError(f"line s={s[k]:g} starts inside the positive phase: window too small")
        if up.size == 0:
            raise ParameterError(f"line s={s[k]:g} does not cross the free boundary")
        if up.size > 1 or np.any(p[:-1] & ~p[1:]):
            multivalued = True
        j = up[0]
        v0, v1 = vals[k, j], vals[k, j + 1]
        heights[k] = t[j] + (t[j + 1] - t[j]) * (-v0) / (v1 - v0) if v1 != v0 else t[j]
    lip = float(np.max(np.abs(np.diff(heights) / np.diff(s)))) if len(s) > 1 else 0.0
    gam, C, resid = _slope_modulus(s, heights) if len(s) > 3 else (math.inf, 0.0, 0.0)
    return FreeBoundaryGraph(s, heights, lip, gam, C, resid, multivalued, nu)


# ---------------------------------------------------------------- cones

@dataclass(frozen=True)
class ConeVerdict:
    passed: bool
    upper_min: float
    lower_max: float
    n_upper: int
    n_lower: int


def cone_condition(psi: ScalarField, X0, nu, eps: float, R: float, r_min: float = 0.0) -> ConeVerdict:
    """``psi > 0`` on the cone ``nu.(X - X0) > eps |X - X0|`` and ``psi = 0`` on its mirror, in ``B_R``.

    Nodes closer than ``r_min`` to the apex are skipped.
    """
    nu = _unit(nu)
    g = psi.grid
    if not g.contains_ball(X0, R):
        raise DomainError(f"B_{R:g}({tuple(X0)}) leaves the grid hull")
    X, Y = g.mesh()
    dx = X - X0[0]
    dy = Y - X0[1]
    d = np.hypot(dx, dy)
    s = dx * nu[0] + dy * nu[1]
    ball = (d <= R) & (d >= r_min)
    up = ball & (s > eps * d)
    lo = ball & (-s > eps * d)
    vu = psi.values[up]
    vl = psi.values[lo]
    umin = float(np.min(vu)) if vu.size else math.inf
    lmax = float(np.max(np.abs(vl))) if vl.size else 0.0
    return ConeVerdict(umin > 0 and lmax <= ZERO_TOL, umin, lmax, int(vu.size), int(vl.size))


# -------------------------------------------------------------- bootstrap

@dataclass(frozen=True, eq=False)
class BootstrapResult:
    certificate: Optional[FlatnessCertificate]
    scale: Optional[float]
    tried: Tuple[Tuple[float, float], ...]

    @property
    def failed(self) -> bool:
        return self.certificate is None


def lipschitz_bootstrap(psi: ScalarField, X0, config: RegularityConfig = RegularityConfig(),
                        window: float = 1.0, slope: Optional[float] = None,
                        scales: Optional[Sequence[float]] = None) -> BootstrapResult:
    """Shrink the scale until the field is ``eps_bar``-flat around ``X0``.

    The free boundary must first be a single-valued graph on the window.  At
    each scale the blow-up is fitted with a half-plane and its normal is used
    for the flatness test.  ``tried`` lists ``(scale, width)`` pairs.
    """
    from .blowup import fit_halfplane, rescale

    q = boundary_slope(X0) if slope is None else float(slope)
    h = psi.grid.h
    ref = rescale(psi, X0, window)
    nu_w = fit_halfplane(ref).nu
    graph = extract_graph(psi, X0, nu_w, window / math.sqrt(2))
    if graph.multivalued or not math.isfinite(graph.lipschitz):
        raise RefusalError("free boundary is not a Lipschitz graph on the window")
    if scales is None:
        scales = []
        rho = window
        while rho >= FLOOR_CELLS * h * (1 - 1e-12):
            scales.append(rho)
            rho /= 2
    tried = []
    for rho in scales:
        nu = fit_halfplane(rescale(psi, X0, rho)).nu
        cert = check_flatness(psi, X0, rho, nu, config.eps_bar, q)
        X, Y, v = _ball_nodes(psi, X0, rho, q)
        tried.append((float(rho), flatness_width(X, Y, v, nu)))
        if cert.passed:
            return BootstrapResult(cert, float(rho), tuple(tried))
    return BootstrapResult(None, None, tuple(tried))


# ------------------------------------------------------------- calibration

@dataclass(frozen=True)
class CalibrationCase:
    amplitude: float
    index: int
    eps: float
    widths: Tuple[float, ...]
    dnus: Tuple[float, ...]


@dataclass(eq=False)
class CalibrationReport:
    config: RegularityConfig
    cases: List[CalibrationCase]
    harnack_ratios: List[float]
    ratio_candidates: Tuple[float, ...]


def _harmonic_corpus(n_fields: int, degree: int, seed: int):
    """Random harmonic polynomials ``sum r^k (a_k cos k t + b_k sin k t)`` with ``|h| <= 1`` on ``B_1``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_fields):
        a = rng.uniform(-1, 1, degree + 1)
        b = rng.uniform(-1, 1, degree + 1)
        b[0] = 0.0
        norm = np.sum(np.abs(a)) + np.sum(np.abs(b))

        def hfun(x, y, a=a / norm, b=b / norm):
            r = np.hypot(x, y)
            t = np.arctan2(y, x)
            return sum(r ** k * (a[k] * np.cos(k * t) + b[k] * np.sin(k * t)) for k in range(degree + 1))

        out.append(hfun)
    return out


def _neumann_corpus(n_fields: int, degree: int, seed: int):
    """Harmonic ``h = sum_{k>=1} a_k r^k cos k t`` with ``h(0) = 0``, ``d_y h = 0`` on ``y = 0``, ``sum |a_k| = 1``.

    ``(y + e h)^+`` then has its free boundary through the origin and gradient
    ``1 + O(e^2)`` there, so it solves the flat problem up to second order.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_fields):
        a = rng.uniform(-1, 1, degree + 1)
        a[0] = 0.0
        a /= np.sum(np.abs(a))

        def hfun(x, y, a=a):
            r = np.hypot(x, y)
            t = np.arctan2(y, x)
            return sum(r ** k * a[k] * np.cos(k * t) for k in range(1, degree + 1))

        out.append(hfun)
    return out


def _harmonic_oscillation_bound(rho: float) -> float:
    """Largest ``osc_{B_rho} h / osc_{B_1} h`` over harmonic ``|h| <= 1``.

    Two points ``X, Y`` of ``B_rho`` are separated best by the boundary data
    ``sign(P(X, .) - P(Y, .))`` of the Poisson kernel, i.e. by ``+-1`` on two
    half circles.  Its extension is ``(2 / pi) arctan(2 x / (1 - |X|^2))``,
    whose oscillation on ``B_rho`` is twice the value at ``(rho, 0)``.
    """
    return (2.0 / math.pi) * math.atan(2 * rho / (1 - rho * rho))


def _halfplane_l2_profile(kappa: float) -> float:
    """``sqrt(avg_{B_1} (s - kappa)^+^2)`` for the unit ball and unit slope."""
    from scipy.integrate import quad

    val, _ = quad(lambda s: (s - kappa) ** 2 * 2 * math.sqrt(max(1 - s * s, 0.0)), kappa, 1.0)
    return math.sqrt(val / math.pi)


def _halfplane_circle_profile(t: float) -> float:
    """``(1 / 2 pi) int (t + cos th)^+ dth`` for ``0 <= t <= 1``."""
    a = math.acos(-t)
    return (t * a + math.sin(a)) / math.pi


def calibrate(n: int = 401, kappa: float = 0.5, amplitudes: Sequence[float] = (0.05, 0.2, 0.5, 0.8),
              n_fields: int = 12, degree: int = 6, ratio_candidates: Sequence[float] = (0.5, 0.25),
              eps_cap: float = 0.5, safety: float = 2.0, seed: int = 0) -> CalibrationReport:
    """Fit the regularity constants on a corpus of exact and near-exact solutions.

    * ``r0``, ``eps0``, ``C0``: second-order solutions ``(y + e h)^+`` of the
      flat problem, with ``h`` drawn from :func:`_neumann_corpus`, sampled on
      an ``n x n`` grid of the unit square.  For each field the best flatness
      ``eps`` on ``B_1`` is compared with the best flatness on ``B_r`` for
      every candidate ratio ``r``.  ``r0`` is the largest ratio at which every
      case with ``eps <= eps_cap`` improves to ``eps / 2``; ``eps0`` is the
      largest such ``eps``; ``C0`` is ``safety`` times the largest
      ``|nu' - nu| / eps``.  These fields have constant coefficients, so
      ``r_bar = r0``.
    * ``eps_bar = eps0 r_bar^2``, the level-0 flatness of the iteration.
    * ``c``: harmonic perturbations ``(y + e h)^+`` of the flat solution;
      ``1 - c`` is ``safety`` times the worst gap ratio of the Harnack step,
      measured on the corpus and bounded below by the exact worst case
      :func:`_harmonic_oscillation_bound`.
    * ``c_star_kappa``: ``1 / safety`` times the smallest normalized ``L^2``
      average of an exact half-plane solution over a ball whose inner ball
      ``B_{kappa r}`` just touches its free boundary.
    * ``C_star``: ``1.25`` times the largest normalized circle average of a
      half-plane solution over balls that still meet the zero phase.
    """
    grid = GridSpec.square((0.0, 0.0), 1.0, n, axis_guard=False)
    corpus = _neumann_corpus(n_fields, degree, seed)
    cases = []
    for amp in amplitudes:
        for idx, hfun in enumerate(corpus):
            u = ScalarField.from_function(grid, lambda x, y, hf=hfun: np.maximum(y + amp * hf(x, y), 0.0))
            nu, eps = best_direction(u, (0.0, 0.0), 1.0, nu0=E2, max_dev=1.0)
            widths, dnus = [], []
            for r in ratio_candidates:
                nu_r, w = best_direction(u, (0.0, 0.0), r, nu0=nu, max_dev=1.0)
                widths.append(w)
                dnus.append(_nu_distance(nu_r, nu))
            cases.append(CalibrationCase(amp, idx, eps, tuple(widths), tuple(dnus)))
    usable = [cs for cs in cases if 0 < cs.eps <= eps_cap]
    if not usable:
        raise ParameterError("no calibration case within the flatness cap")
    r0 = None
    for j, r in enumerate(ratio_candidates):
        if all(cs.widths[j] <= cs.eps / 2 for cs in usable):
            r0 = r if r0 is None else max(r0, r)
    if r0 is None:
        raise ParameterError("no candidate ratio improves flatness on the whole corpus: "
                             + "; ".join(f"{cs.eps:.4f}->{cs.widths}" for cs in usable))
    j0 = list(ratio_candidates).index(r0)
    eps0 = max(cs.eps for cs in usable)
    C0 = safety * max(cs.dnus[j0] / cs.eps for cs in usable)
    r_bar = r0
    eps_bar = eps0 * r_bar ** 2

    # Harnack constant on harmonic perturbations of y^+
    e = 0.25 * eps_bar
    base = RegularityConfig(kappa=kappa, r_bar=r_bar, r0=r0, eps0=eps0, C0=C0, eps_bar=eps_bar,
                            c=0.5)
    ratios = []
    for hfun in _harmonic_corpus(20, 6, seed):
        u = ScalarField.from_function(grid, lambda x, y, hf=hfun: np.maximum(y + e * hf(x, y), 0.0))
        res = partial_harnack_check(u, GeneralFBP.frozen(1.0), (0.0, 0.0), 1.0, -e, e, base)
        ratios.append(res.ratio)
    worst = max(max(ratios), _harmonic_oscillation_bound(base.harnack_ratio))
    c = 1.0 - min(0.99, safety * worst)

    # non-degeneracy and growth constants from exact half-planes
    probes = [(1.0, -1.0), (2.0, -0.5), (0.5, -2.0), (1.5, -1.5)]
    phi = _halfplane_l2_profile(kappa)
    low, high = math.inf, 0.0
    for Xb in probes:
        for ang in np.linspace(0, 2 * math.pi, 16, endpoint=False):
            nu = np.array([math.cos(ang), math.sin(ang)])
            for r in (0.02, 0.05, 0.1):
                a = boundary_slope(Xb)
                # probe centre on the zero side, inner ball touching the boundary
                Xc = np.asarray(Xb) - kappa * r * nu
                depth = -Xc[1] - kappa * r
                if depth > 0 and Xc[0] > 0:
                    low = min(low, a * phi / (Xc[0] * math.sqrt(depth)))
                for t in np.linspace(0.0, 1.0, 21)[:-1]:
                    Xp = np.asarray(Xb) + t * r * nu
                    if Xp[1] < 0:
                        high = max(high, a * _halfplane_circle_profile(t) / (Xp[0] * math.sqrt(-Xp[1])))
    config = RegularityConfig(kappa=float(kappa), c_star_kappa=float(low / safety), C_star=float(1.25 * high),
                              r_bar=float(r_bar), r0=float(r0), eps0=float(eps0), C0=float(C0),
                              c=float(c), eps_bar=float(eps_bar))
    return CalibrationReport(config, cases, ratios, tuple(ratio_candidates))
