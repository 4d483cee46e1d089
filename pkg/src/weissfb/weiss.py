"""Boundary-adjusted energy, monotonicity ingredients and integral identities.

All quantities are evaluated on a :class:`ScalarField` by disk and circle
quadrature.  Volume terms share one pass over the quadrature points so that a
full per-radius report costs one disk integral and one circle integral per
radius.
"""
from __future__ import annotations

import csv
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, ParameterError, ResolutionError
from .field import ScalarField, circle_integral, disk_integral, extend_positive, gradient_xy, square_coverage
from .physics import VorticityModel

_ZERO = VorticityModel.zero()


def circle_samples(r: float, h: float) -> int:
    """Number of trapezoid samples on a circle: about eight per cell crossed."""
    return max(256, 8 * int(math.ceil(2 * math.pi * r / h)))


def check_radius(psi, X0, r: float, R0: Optional[float] = None) -> None:
    """Require ``4h <= r`` (and ``r <= R0/2`` when ``R0`` is given) with the disk in the hull."""
    h = psi.grid.h
    if not r >= 4 * h * (1 - 1e-12):
        raise ResolutionError(f"radius {r:g} below the resolution floor 4h = {4 * h:g}")
    if R0 is not None and r > 0.5 * R0 * (1 + 1e-12):
        raise DomainError(f"radius {r:g} exceeds R0/2 = {0.5 * R0:g}")
    if not psi.grid.contains_ball(X0, r):
        raise DomainError(f"disk of radius {r:g} around {tuple(X0)} leaves the grid")


# ---------------------------------------------------------------------------
# shared pointwise evaluation

class Sampler:
    """Point evaluation of ``psi``, ``grad psi`` and ``I{psi > 0}``.

    With ``reconstruct`` the clipped field is first extended across its zero
    set (:func:`extend_positive`); values, gradients and the indicator then
    come from that signed extension, which keeps the gradient jump at the
    free boundary sharp instead of smearing it over a cell.

    Inside :meth:`disk` every quadrature point stands for a small square, and
    the indicator is the fraction of that square on the positive side of the
    linearised zero line.  The gradient is then scaled by the square root of
    the fraction, so every volume integrand (all are quadratic in the
    gradient) sees the covered fraction exactly once.
    """

    def __init__(self, psi: ScalarField, reconstruct: bool = True):
        self.psi = psi
        self.signed = extend_positive(psi) if reconstruct else psi
        self.grid = psi.grid
        self._local = threading.local()
        v = self.signed.values
        corners = np.stack([v[:-1, :-1], v[:-1, 1:], v[1:, :-1], v[1:, 1:]])
        self._mixed = (corners.max(axis=0) > 0) & (corners.min(axis=0) <= 0)

    def _in_mixed_cell(self, x, y):
        g = self.grid
        i = np.clip(np.floor((x - g.x_min) / g.h).astype(int), 0, g.nx - 2)
        j = np.clip(np.floor((y - g.y_min) / g.h).astype(int), 0, g.ny - 2)
        return self._mixed[j, i]

    def __call__(self, x, y):
        p = self.signed.interp(x, y)
        gx, gy = gradient_xy(self.signed, x, y)
        cell = getattr(self._local, "cell", None)
        if cell is None:
            ind = (p > 0).astype(float)
            return np.maximum(p, 0.0), gx * ind, gy * ind, ind
        g = np.hypot(gx, gy)
        safe = np.where(g > 0, g, 1.0)
        # only cells where the signed field changes sign hold a piece of the zero line
        frac = (g > 0) & self._in_mixed_cell(np.asarray(x, float), np.asarray(y, float))
        ind = np.where(frac, square_coverage(p / safe, gx / safe, gy / safe, cell), (p > 0).astype(float))
        w = np.sqrt(ind)
        return np.maximum(p, 0.0), gx * w, gy * w, ind

    def disk(self, integrand, center, r, subsample=4, r_inner=0.0):
        self._local.cell = self.grid.h / subsample
        try:
            return disk_integral(integrand, center, r, self.grid, cut_fields=(self.signed,),
                                 subsample=subsample, r_inner=r_inner)
        finally:
            self._local.cell = None

    def circle(self, integrand, center, r):
        return circle_integral(integrand, center, r, self.grid, n_samples=circle_samples(r, self.grid.h))


def _sampler(psi) -> Sampler:
    return psi if isinstance(psi, Sampler) else Sampler(psi)


def _grid(psi):
    return psi.grid


def _volume_stack(S: Sampler, X0, vort: VorticityModel):
    x0, y0 = float(X0[0]), float(X0[1])

    def integrand(x, y):
        p, gx, gy, ind = S(x, y)
        g2 = gx * gx + gy * gy
        F = vort.F(p)
        f = vort.f(p)
        return np.stack([
            g2 / x - x * y * ind - x * p * f,                              # D1
            (x - x0) / x ** 2 * g2 + ((x - x0) * y + (y - y0) * x) * ind,  # J0
            2 * F * (x - x0) + 4 * x * F,                                  # K1, volume part
            ind,                                                           # positive area
            2 * x * y * ind,                                               # Pohozaev left side
            (y * (x - x0) + x * (y - y0)) * ind,                           # Pohozaev right side
        ])

    return integrand


_VOL = ("D1", "J0", "K1_vol", "area", "poh_xy", "poh_I")


def _circle_stack(S: Sampler, X0, r: float, vort: VorticityModel):
    x0, y0 = float(X0[0]), float(X0[1])

    def integrand(x, y):
        p, gx, gy, ind = S(x, y)
        dn = (gx * (x - x0) + gy * (y - y0)) / r
        g2 = gx * gx + gy * gy
        F = vort.F(p)
        f = vort.f(p)
        return np.stack([
            p * p / x,                  # D2
            (dn - p / r) ** 2 / x,      # square term of the derivative
            (x - x0) / x ** 2 * p * p,
            2 * x * F - x * p * f,      # K1, boundary part
            x * y * ind,
            g2 / x,
            2 * dn * dn / x,
            2 * x * F,
        ])

    return integrand


_CIRC = ("D2", "sq", "psi2", "K1_circ", "poh_xy", "poh_g2", "poh_dn", "poh_F")


def _volume_terms(S: Sampler, X0, r, vort, subsample=4) -> Dict[str, float]:
    vals = S.disk(_volume_stack(S, X0, vort), X0, r, subsample)
    return dict(zip(_VOL, np.atleast_1d(vals).tolist()))


def _circle_terms(S: Sampler, X0, r, vort) -> Dict[str, float]:
    vals = S.circle(_circle_stack(S, X0, r, vort), X0, r)
    return dict(zip(_CIRC, np.atleast_1d(vals).tolist()))


# ---------------------------------------------------------------------------
# public scalar quantities
#
# Every function accepts either a ScalarField or a prepared Sampler; passing a
# Sampler avoids rebuilding the signed extension for repeated calls.

def compute_D1(psi, X0, r: float, vorticity: VorticityModel = _ZERO,
               R0: Optional[float] = None, subsample: int = 4) -> float:
    """Volume part of the energy: ``int_{B_r} |grad psi|^2/x - xy I - x psi f(psi)``."""
    S = _sampler(psi)
    check_radius(S, X0, r, R0)
    return _volume_terms(S, X0, r, vorticity, subsample)["D1"]


def compute_D2(psi, X0, r: float, R0: Optional[float] = None) -> float:
    """Boundary term ``int_{dB_r} psi^2 / x``."""
    S = _sampler(psi)
    check_radius(S, X0, r, R0)

    def integrand(x, y):
        p = S(x, y)[0]
        return p * p / x

    return float(S.circle(integrand, X0, r))


def compute_weiss(psi, X0, r: float, vorticity: VorticityModel = _ZERO,
                  R0: Optional[float] = None, subsample: int = 4) -> float:
    """``D(r) = r^-2 D1(r) - r^-3 D2(r)``."""
    S = _sampler(psi)
    return compute_D1(S, X0, r, vorticity, R0, subsample) / r ** 2 - compute_D2(S, X0, r, R0) / r ** 3


def compute_J0(psi, X0, r: float, R0: Optional[float] = None, subsample: int = 4) -> float:
    S = _sampler(psi)
    check_radius(S, X0, r, R0)
    return _volume_terms(S, X0, r, _ZERO, subsample)["J0"]


def compute_K1(psi, X0, r: float, vorticity: VorticityModel = _ZERO,
               R0: Optional[float] = None, subsample: int = 4) -> float:
    """Vorticity terms of the derivative: volume part minus ``r`` times the circle part."""
    S = _sampler(psi)
    check_radius(S, X0, r, R0)
    if vorticity.kind == "zero":
        return 0.0
    vol = _volume_terms(S, X0, r, vorticity, subsample)["K1_vol"]
    circ = _circle_terms(S, X0, r, vorticity)["K1_circ"]
    return vol - r * circ


def density(psi, X0, r: float, R0: Optional[float] = None, subsample: int = 4) -> float:
    """Fraction of ``B_r(X0)`` where ``psi > 0``."""
    S = _sampler(psi)
    check_radius(S, X0, r, R0)
    area = S.disk(lambda x, y: S(x, y)[3], X0, r, subsample)
    return float(min(max(area / (math.pi * r * r), 0.0), 1.0))


def _rhs(vol, circ, r):
    K1 = vol["K1_vol"] - r * circ["K1_circ"]
    return (2 * circ["sq"] / r ** 2 + circ["psi2"] / r ** 4
            - vol["J0"] / r ** 3 - K1 / r ** 3)


def derivative_rhs(psi, X0, r: float, vorticity: VorticityModel = _ZERO,
                   R0: Optional[float] = None, subsample: int = 4) -> float:
    """Right side of the monotonicity formula at radius ``r``."""
    S = _sampler(psi)
    check_radius(S, X0, r, R0)
    return _rhs(_volume_terms(S, X0, r, vorticity, subsample), _circle_terms(S, X0, r, vorticity), r)


def derivative_lhs(psi, X0, r: float, dr: float, vorticity: VorticityModel = _ZERO,
                   R0: Optional[float] = None, subsample: int = 4) -> float:
    """Centred difference ``(D(r+dr) - D(r-dr)) / (2 dr)``.

    ``D1(r +- dr)`` is split into ``D1(r)`` plus the two thin annuli, each
    integrated on its own, so the difference quotient never subtracts two
    nearly equal disk integrals.
    """
    if not dr > 0 or dr >= r:
        raise ParameterError("dr must satisfy 0 < dr < r")
    S = _sampler(psi)
    check_radius(S, X0, r - dr, R0)
    check_radius(S, X0, r + dr, R0)

    def g1(x, y):
        p, gx, gy, ind = S(x, y)
        return (gx * gx + gy * gy) / x - x * y * ind - x * p * vorticity.f(p)

    d1 = _volume_terms(S, X0, r, vorticity, subsample)["D1"]
    a_out = S.disk(g1, X0, r + dr, subsample, r_inner=r)
    a_in = S.disk(g1, X0, r, subsample, r_inner=r - dr)
    rp, rm = r + dr, r - dr
    d_plus = (d1 + a_out) / rp ** 2 - compute_D2(S, X0, rp) / rp ** 3
    d_minus = (d1 - a_in) / rm ** 2 - compute_D2(S, X0, rm) / rm ** 3
    return (d_plus - d_minus) / (2 * dr)


def monotonicity_residual(psi, X0, r: float, dr: float, vorticity: VorticityModel = _ZERO,
                          R0: Optional[float] = None, subsample: int = 4) -> float:
    """``|(D(r+dr) - D(r-dr)) / (2 dr) - RHS(r)|``."""
    S = _sampler(psi)
    lhs = derivative_lhs(S, X0, r, dr, vorticity, R0, subsample)
    return abs(lhs - derivative_rhs(S, X0, r, vorticity, R0, subsample))


def pohozaev_terms(psi, X0, r: float, vorticity: VorticityModel = _ZERO,
                   R0: Optional[float] = None, subsample: int = 4) -> Tuple[float, float]:
    """Both sides of the Pohozaev-type identity on ``B_r(X0)``."""
    S = _sampler(psi)
    check_radius(S, X0, r, R0)
    x0 = float(X0[0])

    def integrand(x, y):
        p, gx, gy, ind = S(x, y)
        F = vorticity.F(p)
        return np.stack([(x - x0) / x ** 2 * (gx * gx + gy * gy), 2 * F * (x - x0) + 4 * x * F])

    v_g2, v_F = np.asarray(S.disk(integrand, X0, r, subsample)).tolist()
    v = _volume_terms(S, X0, r, _ZERO, subsample)
    c = _circle_terms(S, X0, r, vorticity)
    lhs = v["poh_xy"] - r * c["poh_xy"]
    rhs = -r * c["poh_g2"] - v_g2 + r * c["poh_dn"] - v_F + r * c["poh_F"] - v["poh_I"]
    return lhs, rhs


def pohozaev_residual(psi, X0, r: float, vorticity: VorticityModel = _ZERO,
                      R0: Optional[float] = None, subsample: int = 4) -> float:
    lhs, rhs = pohozaev_terms(psi, X0, r, vorticity, R0, subsample)
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# first domain variation

@dataclass(frozen=True)
class BumpField:
    """Smooth compactly supported vector field ``phi(|X-c|/rho) (A + M (X-c))``.

    ``phi(s) = (1 - s^2)^4`` for ``s < 1`` and 0 otherwise, which is C^3.
    """

    center: Tuple[float, float]
    radius: float
    A: Tuple[float, float] = (1.0, 0.0)
    M: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("bump radius must be positive")

    @classmethod
    def random(cls, rng: np.random.Generator, center, radius) -> "BumpField":
        A = rng.normal(size=2)
        M = rng.normal(size=(2, 2)) / radius
        return cls((float(center[0]), float(center[1])), float(radius), tuple(A.tolist()),
                   tuple(map(tuple, M.tolist())))

    def evaluate(self, x, y):
        """Return ``(eta1, eta2, d1eta1, d2eta1, d1eta2, d2eta2)``."""
        cx, cy = self.center
        rho = self.radius
        dx, dy = x - cx, y - cy
        s2 = (dx * dx + dy * dy) / (rho * rho)
        inside = s2 < 1
        w = np.where(inside, 1 - s2, 0.0)
        phi = w ** 4
        dphi = -8 * w ** 3 / (rho * rho)      # times (dx, dy) gives the gradient
        A, M = np.asarray(self.A), np.asarray(self.M)
        v1 = A[0] + M[0, 0] * dx + M[0, 1] * dy
        v2 = A[1] + M[1, 0] * dx + M[1, 1] * dy
        e1, e2 = phi * v1, phi * v2
        d1e1 = dphi * dx * v1 + phi * M[0, 0]
        d2e1 = dphi * dy * v1 + phi * M[0, 1]
        d1e2 = dphi * dx * v2 + phi * M[1, 0]
        d2e2 = dphi * dy * v2 + phi * M[1, 1]
        return e1, e2, d1e1, d2e1, d1e2, d2e2


def domain_variation_residual(psi, spec, eta: BumpField, subsample: int = 4) -> float:
    """Absolute value of the first inner variation of the energy along ``eta``.

    ``spec`` supplies ``X0``, ``R0`` and the vorticity model; the support of
    ``eta`` must lie inside ``B_R0(X0)``.
    """
    S = _sampler(psi)
    X0, R0, vort = spec.X0, spec.R0, spec.vorticity
    c = np.asarray(eta.center, float)
    if np.hypot(*(c - np.asarray(X0))) + eta.radius > R0 * (1 + 1e-12):
        raise DomainError("support of eta leaves B_R0(X0)")
    if eta.radius < 4 * S.grid.h:
        raise ResolutionError("bump radius below 4h")

    def integrand(x, y):
        p, gx, gy, ind = S(x, y)
        g2 = gx * gx + gy * gy
        F = vort.F(p)
        e1, e2, a11, a12, a21, a22 = eta.evaluate(x, y)
        div = a11 + a22
        quad = gx * (a11 * gx + a12 * gy) + gy * (a21 * gx + a22 * gy)
        return ((g2 / x - 2 * x * F - x * y * ind) * div
                - 2 * quad / x
                + (-g2 / x ** 2 - 2 * F - y * ind) * e1
                - x * ind * e2)

    return abs(float(S.disk(integrand, eta.center, eta.radius, subsample)))


def random_bumps(n: int, X0, R0: float, radius: float, seed: int = 0,
                 spread: Optional[float] = None) -> List[BumpField]:
    """``n`` random bump fields with centres within ``spread`` of ``X0``."""
    rng = np.random.default_rng(seed)
    spread = 0.5 * radius if spread is None else spread
    if spread + radius > R0:
        raise ParameterError("bumps would leave B_R0(X0)")
    out = []
    for _ in range(n):
        t = rng.uniform(0, 2 * math.pi)
        s = spread * math.sqrt(rng.uniform())
        out.append(BumpField.random(rng, (X0[0] + s * math.cos(t), X0[1] + s * math.sin(t)), radius))
    return out


# ---------------------------------------------------------------------------
# per-radius report

def radii_schedule(R0: float, h: float) -> List[float]:
    """Geometric radii ``R0/2 * 2^-k`` down to ``4h``, increasing."""
    out = []
    r = 0.5 * R0
    while r >= 4 * h * (1 - 1e-12):
        out.append(r)
        r *= 0.5
    return sorted(out)


@dataclass
class WeissReport:
    radii: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D: np.ndarray
    J0: np.ndarray
    K1: np.ndarray
    density: np.ndarray
    dD_lhs: np.ndarray
    dD_rhs: np.ndarray
    residual: np.ndarray
    center: Tuple[float, float] = (0.0, 0.0)

    COLUMNS = ("r", "D1", "D2", "D", "J0", "K1", "density", "dD_lhs", "dD_rhs", "residual")

    def rows(self):
        cols = [self.radii, self.D1, self.D2, self.D, self.J0, self.K1, self.density,
                self.dD_lhs, self.dD_rhs, self.residual]
        return [list(map(float, row)) for row in zip(*cols)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([f"{v:.17g}" for v in row])

    def check(self) -> None:
        """Verify the stored invariants."""
        if len(self.radii) and np.any(np.diff(self.radii) <= 0):
            raise ParameterError("radii must be strictly increasing")
        recomposed = self.D1 / self.radii ** 2 - self.D2 / self.radii ** 3
        if not np.array_equal(recomposed, self.D):
            raise ParameterError("stored D does not recompose from D1 and D2")


def _report_row(S: Sampler, X0, r, dr, vort, R0, subsample):
    vol = _volume_terms(S, X0, r, vort, subsample)
    circ = _circle_terms(S, X0, r, vort)
    K1 = vol["K1_vol"] - r * circ["K1_circ"] if vort.kind != "zero" else 0.0
    rhs = _rhs(vol, circ, r)
    lhs = float("nan")
    try:
        lhs = derivative_lhs(S, X0, r, dr, vort, R0, subsample)
    except (DomainError, ResolutionError):
        pass
    dens = min(max(vol["area"] / (math.pi * r * r), 0.0), 1.0)
    return (r, vol["D1"], circ["D2"], vol["J0"], K1, dens, lhs, rhs, abs(lhs - rhs))


def weiss_report(psi, X0, radii: Optional[Sequence[float]] = None,
                 vorticity: VorticityModel = _ZERO, R0: Optional[float] = None,
                 dr_fraction: float = 0.125, subsample: int = 4,
                 workers: int = 1) -> WeissReport:
    """Evaluate every per-radius quantity with ``dr = dr_fraction * r``.

    When the centred stencil would leave the admissible range the derivative
    columns are NaN for that radius.
    """
    S = _sampler(psi)
    if radii is None:
        if R0 is None:
            raise ParameterError("either radii or R0 is required")
        radii = radii_schedule(R0, S.grid.h)
    radii = sorted(float(r) for r in radii)
    for r in radii:
        check_radius(S, X0, r, R0)

    def row(r):
        return _report_row(S, X0, r, dr_fraction * r, vorticity, R0, subsample)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, radii))
    else:
        rows = [row(r) for r in radii]
    cols = [np.array(c, dtype=float) for c in zip(*rows)] if rows else [np.zeros(0)] * 9
    r, D1, D2, J0, K1, dens, lhs, rhs, res = cols
    D = D1 / r ** 2 - D2 / r ** 3
    return WeissReport(r, D1, D2, D, J0, K1, dens, lhs, rhs, res, (float(X0[0]), float(X0[1])))


@dataclass(frozen=True)
class LimitEstimate:
    D0: float
    density0: float
    D_slope: float
    density_slope: float
    D_fit_residual: float
    density_fit_residual: float


def _linear_fit(r, v):
    A = np.stack([np.ones_like(r), r], axis=1)
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    resid = float(np.max(np.abs(A @ coef - v))) if len(v) else 0.0
    return float(coef[0]), float(coef[1]), resid


def estimate_limit(report: WeissReport, min_points: int = 5) -> LimitEstimate:
    """Extrapolate ``D`` and the density linearly in ``r`` to ``r = 0``."""
    if len(report.radii) < min_points:
        raise ParameterError(f"need at least {min_points} radii, got {len(report.radii)}")
    r = np.asarray(report.radii, float)
    D0, Ds, Dres = _linear_fit(r, np.asarray(report.D, float))
    g0, gs, gres = _linear_fit(r, np.asarray(report.density, float))
    return LimitEstimate(D0, g0, Ds, gs, Dres, gres)


def compensation_constant(radii: Sequence[float], D: Sequence[float],
                          min_radius: float = 0.0) -> float:
    """Smallest ``C >= 0`` making ``r -> D(r) + C r`` nondecreasing on the samples.

    Radii below ``min_radius`` are ignored: ``D`` carries a bias that depends
    on ``r / h``, and difference quotients between the two smallest radii of
    a geometric schedule grow like ``1 / h``.
    """
    r = np.asarray(radii, float)
    d = np.asarray(D, float)
    keep = r >= min_radius * (1 - 1e-12)
    r, d = r[keep], d[keep]
    order = np.argsort(r)
    r, d = r[order], d[order]
    if len(r) < 2:
        return 0.0
    slopes = np.diff(d) / np.diff(r)
    return float(max(0.0, -np.min(slopes)))
