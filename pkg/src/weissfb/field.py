"""Uniform-grid scalar fields, weighted operators, quadrature and level sets.

Everything downstream (the minimizer, the Weiss energy, blow-ups and the
flatness machinery) works with a :class:`ScalarField` sampled on a
:class:`GridSpec`.  Fields are immutable; operations are pure functions.

Array layout: ``values[j, i]`` is the value at ``(x_min + i*h, y_min + j*h)``,
so rows run along ``y`` and the flattened array is row-major.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ParameterError, ResolutionError

Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Relative slack used by the hull tests so that points on the hull edge
# (up to round-off) are accepted.
_HULL_SLACK = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Isotropic Cartesian grid ``x_min + i*h``, ``y_min + j*h``.

    ``axis_guard`` enforces that the grid lies strictly inside ``{x > 0}``,
    where the weight ``1/x`` is finite.  Reference grids used for blow-ups
    live on the unit ball around the origin and switch the guard off.
    """

    x_min: float
    y_min: float
    h: float
    nx: int
    ny: int
    axis_guard: bool = True

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ParameterError(f"grid spacing must be positive, got {self.h}")
        if self.nx < 3 or self.ny < 3:
            raise ParameterError(f"grid needs at least 3x3 nodes, got {self.nx}x{self.ny}")
        if self.axis_guard and not self.x_min > 0:
            raise DomainError(f"grid touches the axis: x_min={self.x_min} must be > 0")

    @classmethod
    def square(cls, center, half_width, n, axis_guard=True):
        """Square grid of ``n x n`` nodes covering ``center +- half_width``."""
        if n < 3:
            raise ParameterError("n must be >= 3")
        h = 2.0 * half_width / (n - 1)
        return cls(center[0] - half_width, center[1] - half_width, h, n, n, axis_guard)

    @property
    def x_max(self) -> float:
        return self.x_min + (self.nx - 1) * self.h

    @property
    def y_max(self) -> float:
        return self.y_min + (self.ny - 1) * self.h

    @property
    def xs(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y_min + self.h * np.arange(self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def mesh(self):
        """Node coordinates as two ``(ny, nx)`` arrays."""
        return np.meshgrid(self.xs, self.ys)

    def _slack(self) -> float:
        return _HULL_SLACK * max(1.0, abs(self.x_min), abs(self.y_min), self.h * max(self.nx, self.ny))

    def contains(self, x, y) -> np.ndarray:
        s = self._slack()
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= self.x_min - s) & (x <= self.x_max + s) & (y >= self.y_min - s) & (y <= self.y_max + s)

    def contains_ball(self, center, r) -> bool:
        s = self._slack()
        cx, cy = center
        return (cx - r >= self.x_min - s and cx + r <= self.x_max + s
                and cy - r >= self.y_min - s and cy + r <= self.y_max + s)

    def nearest_node(self, x, y):
        i = int(round((x - self.x_min) / self.h))
        j = int(round((y - self.y_min) / self.h))
        return min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1)

    def refined(self):
        """Grid with half the spacing over the same hull."""
        return GridSpec(self.x_min, self.y_min, self.h / 2, 2 * self.nx - 1, 2 * self.ny - 1, self.axis_guard)

    def coarsened(self):
        if (self.nx - 1) % 2 or (self.ny - 1) % 2:
            raise ParameterError("grid cannot be coarsened: node counts must be odd")
        return GridSpec(self.x_min, self.y_min, 2 * self.h, (self.nx + 1) // 2, (self.ny + 1) // 2, self.axis_guard)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Finite nodal values on a grid, with bilinear interpolation in between."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.size != self.grid.size:
            raise ParameterError(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.ny, self.grid.nx)
        if not np.all(np.isfinite(v)):
            raise ParameterError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Integrand) -> "ScalarField":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(fn(X, Y), X.shape))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros((grid.ny, grid.nx)))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __call__(self, x, y) -> np.ndarray:
        return self.interp(x, y)

    def interp(self, x, y) -> np.ndarray:
        """Bilinear interpolant; raises :class:`DomainError` outside the hull."""
        g = self.grid
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not np.all(g.contains(x, y)):
            raise DomainError("interpolation point outside the grid hull")
        fx = (x - g.x_min) / g.h
        fy = (y - g.y_min) / g.h
        i = np.clip(np.floor(fx).astype(np.int64), 0, g.nx - 2)
        j = np.clip(np.floor(fy).astype(np.int64), 0, g.ny - 2)
        tx = np.clip(fx - i, 0.0, 1.0)
        ty = np.clip(fy - j, 0.0, 1.0)
        v = self.values
        return ((1 - ty) * ((1 - tx) * v[j, i] + tx * v[j, i + 1])
                + ty * ((1 - tx) * v[j + 1, i] + tx * v[j + 1, i + 1]))

    def positive(self) -> "ScalarField":
        return ScalarField(self.grid, np.maximum(self.values, 0.0))

    def max_abs_diff(self, other: "ScalarField") -> float:
        if other.grid != self.grid:
            raise ParameterError("fields live on different grids")
        return float(np.max(np.abs(self.values - other.values)))


# ---------------------------------------------------------------- operators

def gradient_xy(field: ScalarField, x, y):
    """Central difference (step h) of the bilinear interpolant at (x, y).

    Near the hull edge the stencil falls back to a one-sided difference.
    """
    g = field.grid
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(g.contains(x, y)):
        raise DomainError("gradient point outside the grid hull")
    h = g.h
    xp = np.minimum(x + h, g.x_max)
    xm = np.maximum(x - h, g.x_min)
    yp = np.minimum(y + h, g.y_max)
    ym = np.maximum(y - h, g.y_min)
    gx = (field.interp(xp, y) - field.interp(xm, y)) / (xp - xm)
    gy = (field.interp(x, yp) - field.interp(x, ym)) / (yp - ym)
    return gx, gy


def gradient(field: ScalarField, X) -> np.ndarray:
    """Gradient at a point (or an ``(..., 2)`` array of points)."""
    X = np.asarray(X, dtype=float)
    gx, gy = gradient_xy(field, X[..., 0], X[..., 1])
    return np.stack([gx, gy], axis=-1)


def weighted_divergence(field: ScalarField, i: int, j: int) -> float:
    """Five-point conservative stencil for div((1/x) grad psi) at node (i, j)."""
    g = field.grid
    if not (1 <= i <= g.nx - 2 and 1 <= j <= g.ny - 2):
        raise DomainError(f"node ({i}, {j}) is not an interior node")
    return float(weighted_divergence_nodes(field)[j, i])


def weighted_divergence_nodes(field: ScalarField) -> np.ndarray:
    """The same stencil on every interior node; NaN on the grid boundary."""
    g = field.grid
    v = field.values
    x = g.xs
    h2 = g.h * g.h
    out = np.full(v.shape, np.nan)
    w_right = 1.0 / (x[1:-1] + 0.5 * g.h)
    w_left = 1.0 / (x[1:-1] - 0.5 * g.h)
    w_mid = 1.0 / x[1:-1]
    c = v[1:-1, 1:-1]
    out[1:-1, 1:-1] = (w_right * (v[1:-1, 2:] - c) - w_left * (c - v[1:-1, :-2])
                       + w_mid * (v[2:, 1:-1] - 2 * c + v[:-2, 1:-1])) / h2
    return out


# --------------------------------------------------------------- quadrature

def _check_ball(grid: GridSpec, center, r):
    if not r > 0:
        raise ParameterError(f"radius must be positive, got {r}")
    if not grid.contains_ball(center, r):
        raise DomainError(f"ball of radius {r} around {tuple(center)} leaves the grid hull")
    if r < 4 * grid.h * (1 - 1e-12):
        raise ResolutionError(f"radius {r} is below the 4h floor ({4 * grid.h})")


def _cut_mask(fields: Sequence[ScalarField], j0, j1, i0, i1):
    """Cells (j, i) whose corner signs disagree for any of the given fields."""
    cut = np.zeros((j1 - j0, i1 - i0), dtype=bool)
    for f in fields:
        p = f.values[j0:j1 + 1, i0:i1 + 1] > 0
        corners = (p[:-1, :-1].astype(np.int8) + p[:-1, 1:] + p[1:, :-1] + p[1:, 1:])
        cut |= (corners > 0) & (corners < 4)
    return cut


def square_coverage(d, nx, ny, a):
    """Fraction of an axis-aligned square of side ``a`` on the side ``n . X > -d``.

    ``d`` is the signed distance of the square's centre to the line and
    ``(nx, ny)`` the unit normal.  The fraction is the distribution function
    of a sum of two uniform variables, a piecewise quadratic in ``d``.
    """
    d = np.asarray(d, float)
    with np.errstate(all="ignore"):
        return _square_coverage(d, nx, ny, a)


def _square_coverage(d, nx, ny, a):
    u = 0.5 * a * np.maximum(np.abs(nx), np.abs(ny))
    v = 0.5 * a * np.minimum(np.abs(nx), np.abs(ny))
    out = np.where(d >= u + v, 1.0, 0.0)
    mid = np.abs(d) <= u - v
    uu = np.maximum(u, 1e-300)
    vv = np.maximum(v, 1e-300)
    out = np.where(mid, 0.5 + d / (2 * uu), out)
    lo = (d > -(u + v)) & (d < -(u - v))
    hi = (d > u - v) & (d < u + v)
    out = np.where(lo, (d + u + v) ** 2 / (8 * uu * vv), out)
    out = np.where(hi, 1.0 - (u + v - d) ** 2 / (8 * uu * vv), out)
    return np.clip(out, 0.0, 1.0)


def disk_integral(integrand: Integrand, center, r: float, grid: GridSpec, *,
                  cut_fields: Sequence[ScalarField] = (), subsample: int = 4,
                  r_inner: float = 0.0) -> float:
    """Integrate ``integrand(x, y)`` over the disk (or annulus) around ``center``.

    The integrand may return a ``(k, n)`` stack of values, in which case the
    ``k`` integrals are returned as an array.

    Cells entirely inside the region use the midpoint rule.  Cells crossed by
    the circle(s), and cells where a field in ``cut_fields`` changes sign
    (the free boundary), are integrated with ``subsample x subsample``
    sub-cell midpoints.  A sub-cell crossed by a circle is weighted by the
    fraction of it inside, computed from the tangent line of the circle.
    """
    _check_ball(grid, center, r)
    if subsample < 1:
        raise ParameterError("subsample must be >= 1")
    if r_inner < 0 or r_inner >= r:
        raise ParameterError("inner radius must satisfy 0 <= r_inner < r")
    cx, cy = float(center[0]), float(center[1])
    h = grid.h
    i0 = max(int(math.floor((cx - r - grid.x_min) / h)), 0)
    i1 = min(int(math.ceil((cx + r - grid.x_min) / h)), grid.nx - 1)
    j0 = max(int(math.floor((cy - r - grid.y_min) / h)), 0)
    j1 = min(int(math.ceil((cy + r - grid.y_min) / h)), grid.ny - 1)
    xl = grid.x_min + h * np.arange(i0, i1)
    yl = grid.y_min + h * np.arange(j0, j1)
    XL, YL = np.meshgrid(xl, yl)
    dx_far = np.maximum(np.abs(XL - cx), np.abs(XL + h - cx))
    dy_far = np.maximum(np.abs(YL - cy), np.abs(YL + h - cy))
    dmax = np.hypot(dx_far, dy_far)
    dx_near = np.maximum(np.maximum(XL - cx, cx - XL - h), 0.0)
    dy_near = np.maximum(np.maximum(YL - cy, cy - YL - h), 0.0)
    dmin = np.hypot(dx_near, dy_near)

    inside = (dmax <= r) & (dmin >= r_inner)
    outside = (dmin >= r) | (dmax <= r_inner)
    partial = ~inside & ~outside
    cut = _cut_mask(cut_fields, j0, j1, i0, i1) if cut_fields else np.zeros_like(inside)
    regular = inside & ~cut
    special = partial | (inside & cut)

    total = 0.0
    if np.any(regular):
        xm = XL[regular] + 0.5 * h
        ym = YL[regular] + 0.5 * h
        total = total + _sum_points(integrand, xm, ym) * h * h
    if np.any(special):
        off = (np.arange(subsample) + 0.5) * (h / subsample)
        ox, oy = np.meshgrid(off, off)
        xs = (XL[special][:, None] + ox.ravel()[None, :]).ravel()
        ys = (YL[special][:, None] + oy.ravel()[None, :]).ravel()
        a = h / subsample
        rho = np.hypot(xs - cx, ys - cy)
        safe = np.where(rho > 0, rho, 1.0)
        nx, ny = (xs - cx) / safe, (ys - cy) / safe
        # the shift accounts for the sagitta of the arc across a sub-cell
        weight = square_coverage(r - rho - a * a / (24 * r), nx, ny, a)
        if r_inner > 0:
            weight = weight * square_coverage(rho - r_inner + a * a / (24 * r_inner), nx, ny, a)
        keep = weight > 0
        if np.any(keep):
            total = total + _sum_points(lambda x, y: np.asarray(integrand(x, y), float) * weight[keep],
                                        xs[keep], ys[keep]) * a * a
    return total


def _sum_points(integrand: Integrand, x, y):
    """Sum over the last axis; vector-valued integrands return ``(k, n)`` arrays."""
    vals = np.asarray(integrand(x, y), dtype=float)
    if vals.ndim <= 1:
        return float(np.sum(vals))
    return np.sum(vals, axis=-1)


def circle_integral(integrand: Integrand, center, r: float, grid: GridSpec,
                    n_samples: int = 512) -> float:
    """Trapezoid rule on ``n_samples`` equispaced angles of the circle."""
    if n_samples < 64:
        raise ParameterError("circle_integral needs at least 64 samples")
    _check_ball(grid, center, r)
    theta = 2 * np.pi * np.arange(n_samples) / n_samples
    x = center[0] + r * np.cos(theta)
    y = center[1] + r * np.sin(theta)
    return _sum_points(integrand, x, y) * (2 * np.pi * r / n_samples)


# ------------------------------------------------------------ level sets

@dataclass(frozen=True, eq=False)
class BoundarySegmentSet:
    """Polyline pieces of the free boundary with normals into ``{psi > 0}``."""

    segments: np.ndarray = dc_field(default_factory=lambda: np.zeros((0, 2, 2)))
    normals: np.ndarray = dc_field(default_factory=lambda: np.zeros((0, 2)))

    def __len__(self) -> int:
        return int(self.segments.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def midpoints(self) -> np.ndarray:
        return self.segments.mean(axis=1)

    def points(self) -> np.ndarray:
        """Endpoints and midpoints as one ``(n, 2)`` point cloud."""
        if self.is_empty:
            return np.zeros((0, 2))
        return np.concatenate([self.segments[:, 0], self.segments[:, 1], self.midpoints()])

    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=1)

    def nearest_point(self, X) -> np.ndarray:
        """Closest point of the polyline to ``X``."""
        if self.is_empty:
            raise DomainError("no free boundary to project onto")
        a, b = self.segments[:, 0], self.segments[:, 1]
        d = b - a
        L2 = np.maximum(np.sum(d * d, axis=1), 1e-300)
        t = np.clip(np.sum((np.asarray(X, float) - a) * d, axis=1) / L2, 0.0, 1.0)
        p = a + t[:, None] * d
        k = int(np.argmin(np.sum((p - np.asarray(X, float)) ** 2, axis=1)))
        return p[k]


def _edge_roots(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fractional crossing position along each edge, measured from the lower node.

    NaN where the edge does not separate ``v > 0`` from ``v <= 0``.  When the
    non-positive end is exactly zero (a clipped field) the root is placed by
    extrapolating the positive side linearly, so that fields of the form
    ``max(affine, 0)`` are reconstructed exactly.
    """
    if axis == 1:
        return _edge_roots(v.T, 0, h).T
    a = v[:-1]
    b = v[1:]
    pa = a > 0
    pb = b > 0
    cross = pa != pb
    t = np.full(a.shape, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = a / (a - b)
    # the node beyond the positive end, along the same line
    beyond_a = np.full(a.shape, np.nan)
    beyond_a[1:] = v[:-2]          # for positive a at index k, node k-1
    beyond_b = np.full(a.shape, np.nan)
    beyond_b[:-1] = v[2:]          # for positive b at index k+1, node k+2
    with np.errstate(divide="ignore", invalid="ignore"):
        # positive at a, zero at b: root at distance a/(a_prev - a) beyond a
        ext_a = a / (beyond_a - a)
        # positive at b, zero at a: root at distance b/(b_next - b) before b
        ext_b = 1.0 - b / (beyond_b - b)
    use_ext_a = cross & pa & (b == 0) & (beyond_a > a)
    use_ext_b = cross & pb & (a == 0) & (beyond_b > b)
    t[cross] = lin[cross]
    t[use_ext_a] = np.clip(ext_a[use_ext_a], 0.0, 1.0)
    t[use_ext_b] = np.clip(ext_b[use_ext_b], 0.0, 1.0)
    return t


# marching-squares table: case -> list of (edge, edge) pairs.
# corners: 0=(i,j) 1=(i+1,j) 2=(i+1,j+1) 3=(i,j+1); edges: 0 bottom, 1 right, 2 top, 3 left
_CASES = {
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)], 6: [(0, 2)], 7: [(3, 2)],
    8: [(2, 3)], 9: [(0, 2)], 11: [(1, 2)], 12: [(3, 1)], 13: [(0, 1)], 14: [(3, 0)],
}
# saddles: (center positive, center non-positive)
_SADDLES = {
    5: ([(0, 1), (2, 3)], [(3, 0), (1, 2)]),
    10: ([(3, 0), (1, 2)], [(0, 1), (2, 3)]),
}


def extract_free_boundary(field: ScalarField, threshold: float = 0.0) -> BoundarySegmentSet:
    """Marching squares on the sign of ``field - threshold``.

    Saddle cells are resolved with the sign of the cell-centre average.
    Returns an empty set for single-phase fields.
    """
    g = field.grid
    v = field.values - threshold
    pos = v > 0
    if pos.all() or not pos.any():
        return BoundarySegmentSet()
    h = g.h
    ty = _edge_roots(v, 0, h)   # vertical edges (j, i)-(j+1, i): shape (ny-1, nx)
    tx = _edge_roots(v, 1, h)   # horizontal edges (j, i)-(j, i+1): shape (ny, nx-1)
    xs, ys = g.xs, g.ys

    case = (pos[:-1, :-1].astype(np.int16) + 2 * pos[:-1, 1:] + 4 * pos[1:, 1:] + 8 * pos[1:, :-1])
    center_pos = (v[:-1, :-1] + v[:-1, 1:] + v[1:, 1:] + v[1:, :-1]) > 0

    def edge_point(edge, j, i):
        if edge == 0:
            return xs[i] + tx[j, i] * h, np.full(j.shape, 0.0) + ys[j]
        if edge == 1:
            return np.full(j.shape, 0.0) + xs[i + 1], ys[j] + ty[j, i + 1] * h
        if edge == 2:
            return xs[i] + tx[j + 1, i] * h, np.full(j.shape, 0.0) + ys[j + 1]
        return np.full(j.shape, 0.0) + xs[i], ys[j] + ty[j, i] * h

    segs = []
    cells = []
    for c, pairs in _CASES.items():
        j, i = np.nonzero(case == c)
        for e1, e2 in pairs:
            segs.append(np.stack([np.stack(edge_point(e1, j, i), -1), np.stack(edge_point(e2, j, i), -1)], 1))
            cells.append(np.stack([j, i], -1))
    for c, (pairs_pos, pairs_neg) in _SADDLES.items():
        for cp, pairs in ((True, pairs_pos), (False, pairs_neg)):
            j, i = np.nonzero((case == c) & (center_pos == cp))
            for e1, e2 in pairs:
                segs.append(np.stack([np.stack(edge_point(e1, j, i), -1), np.stack(edge_point(e2, j, i), -1)], 1))
                cells.append(np.stack([j, i], -1))
    seg = np.concatenate(segs, 0)
    cell = np.concatenate(cells, 0)
    d = seg[:, 1] - seg[:, 0]
    length = np.hypot(d[:, 0], d[:, 1])
    keep = length > 1e-12 * h
    seg, cell, d, length = seg[keep], cell[keep], d[keep], length[keep]
    n = np.stack([-d[:, 1], d[:, 0]], -1) / length[:, None]

    # orient by the gradient of the cell's bilinear form at the midpoint
    j, i = cell[:, 0], cell[:, 1]
    mid = seg.mean(axis=1)
    sx = (mid[:, 0] - xs[i]) / h
    sy = (mid[:, 1] - ys[j]) / h
    v0, v1, v2, v3 = v[j, i], v[j, i + 1], v[j + 1, i + 1], v[j + 1, i]
    gx = (1 - sy) * (v1 - v0) + sy * (v2 - v3)
    gy = (1 - sx) * (v3 - v0) + sx * (v2 - v1)
    dot = n[:, 0] * gx + n[:, 1] * gy
    # fallback orientation: towards the centroid of the positive corners
    px = (pos[j, i] * xs[i] + pos[j, i + 1] * xs[i + 1] + pos[j + 1, i + 1] * xs[i + 1] + pos[j + 1, i] * xs[i])
    py = (pos[j, i] * ys[j] + pos[j, i + 1] * ys[j] + pos[j + 1, i + 1] * ys[j + 1] + pos[j + 1, i] * ys[j + 1])
    npos = (pos[j, i].astype(int) + pos[j, i + 1] + pos[j + 1, i + 1] + pos[j + 1, i])
    cen = np.stack([px / npos, py / npos], -1) - mid
    fallback = n[:, 0] * cen[:, 0] + n[:, 1] * cen[:, 1]
    sign = np.where(np.abs(dot) > 1e-14 * max(1.0, float(np.abs(v).max())), np.sign(dot), np.sign(fallback))
    sign[sign == 0] = 1.0
    n = n * sign[:, None]
    n /= np.linalg.norm(n, axis=1)[:, None]
    return BoundarySegmentSet(seg, n)


def extend_positive(field: ScalarField, layers: int = 3) -> ScalarField:
    """Signed extension of a clipped field across its zero set.

    Zero nodes next to the positive set receive the mean of the linear
    extrapolations ``2 v1 - v2`` along the grid axes (clamped to ``<= 0``),
    repeated for ``layers`` rings.  ``field`` is then ``max(result, 0)``, and
    a plane clipped at zero is reproduced exactly by the bilinear interpolant
    of the extension.  Three rings keep every step-``h`` difference taken
    from a cell crossed by the zero line inside the extended region.
    """
    v = np.array(field.values, dtype=float)
    known = v > 0
    if not known.any() or known.all():
        return field
    for _ in range(layers):
        total = np.zeros_like(v)
        count = np.zeros_like(v)
        for axis in (0, 1):
            for step in (1, -1):
                k1 = np.roll(known, -step, axis)
                k2 = np.roll(known, -2 * step, axis)
                v1 = np.roll(v, -step, axis)
                v2 = np.roll(v, -2 * step, axis)
                ok = k1 & k2 & ~known
                # invalidate wrap-around from np.roll
                edge = np.zeros_like(ok)
                idx = [slice(None)] * 2
                idx[axis] = slice(-2, None) if step == 1 else slice(0, 2)
                edge[tuple(idx)] = True
                ok &= ~edge
                total[ok] += np.minimum(2 * v1[ok] - v2[ok], 0.0)
                count[ok] += 1
        new = count > 0
        if not new.any():
            break
        v[new] = total[new] / count[new]
        known = known | new
    return field.with_values(v)


# ------------------------------------------------------------------- I/O

def write_field_csv(field: ScalarField, path) -> None:
    """Dump a field as ``i,j,x,y,value`` rows after a ``# nx,ny,h,x_min,y_min`` header."""
    g = field.grid
    X, Y = g.mesh()
    J, I = np.mgrid[0:g.ny, 0:g.nx]
    with open(path, "w", newline="") as fh:
        fh.write("# nx,ny,h,x_min,y_min\n")
        fh.write(f"# {g.nx},{g.ny},{g.h:.17g},{g.x_min:.17g},{g.y_min:.17g}\n")
        fh.write("i,j,x,y,value\n")
        rows = np.column_stack([I.ravel(), J.ravel(), X.ravel(), Y.ravel(), field.values.ravel()])
        for ii, jj, x, y, val in rows:
            fh.write(f"{int(ii)},{int(jj)},{x:.17g},{y:.17g},{val:.17g}\n")


def read_field_csv(path, axis_guard: bool = True) -> ScalarField:
    with open(path, newline="") as fh:
        fh.readline()
        nx, ny, h, x_min, y_min = fh.readline().lstrip("# ").strip().split(",")
        grid = GridSpec(float(x_min), float(y_min), float(h), int(nx), int(ny), axis_guard)
        reader = csv.reader(fh)
        next(reader)
        values = np.zeros((grid.ny, grid.nx))
        for row in reader:
            values[int(row[1]), int(row[0])] = float(row[4])
    return ScalarField(grid, values)


def rect_integral(integrand: Integrand, grid: GridSpec, *,
                  cut_fields: Sequence[ScalarField] = (), subsample: int = 4) -> float:
    """Integrate over the whole grid hull (midpoint rule, subsampled cut cells)."""
    h = grid.h
    XL, YL = np.meshgrid(grid.xs[:-1], grid.ys[:-1])
    cut = (_cut_mask(cut_fields, 0, grid.ny - 1, 0, grid.nx - 1) if cut_fields
           else np.zeros(XL.shape, dtype=bool))
    total = _sum_points(integrand, XL[~cut] + 0.5 * h, YL[~cut] + 0.5 * h) * h * h
    if np.any(cut):
        off = (np.arange(subsample) + 0.5) * (h / subsample)
        ox, oy = np.meshgrid(off, off)
        xs = (XL[cut][:, None] + ox.ravel()[None, :]).ravel()
        ys = (YL[cut][:, None] + oy.ravel()[None, :]).ravel()
        total = total + _sum_points(integrand, xs, ys) * (h / subsample) ** 2
    return total


def prolong(field: ScalarField, fine: GridSpec) -> ScalarField:
    """Bilinear transfer of ``field`` onto a grid covering the same hull."""
    X, Y = fine.mesh()
    g = field.grid
    Xc = np.clip(X, g.x_min, g.x_max)
    Yc = np.clip(Y, g.y_min, g.y_max)
    return ScalarField(fine, field.interp(Xc, Yc))
