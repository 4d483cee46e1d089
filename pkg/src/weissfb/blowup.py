"""Blow-up rescalings around free-boundary points and half-plane fits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, ParameterError, ResolutionError
from .field import GridSpec, ScalarField, extend_positive, extract_free_boundary
from .weiss import Sampler

REFERENCE_N = 257
MISFIT_FLOOR = 1e-10


def reference_grid(n: int = REFERENCE_N) -> GridSpec:
    """Square ``[-1, 1]^2`` grid holding rescaled fields."""
    return GridSpec.square((0.0, 0.0), 1.0, n, axis_guard=False)


def rescale(psi: ScalarField, X0, rho: float, ref: Optional[GridSpec] = None) -> ScalarField:
    """``psi(X0 + rho X) / rho`` resampled bilinearly onto the reference grid.

    Values come from the signed extension of ``psi`` across its zero set, so
    the gradient jump at the free boundary is not smeared over a source
    cell.  Reference nodes whose image leaves the source hull are clamped
    onto it; only values on the unit disk are used downstream and those are
    always inside because the disk ``B_rho(X0)`` must lie in the hull.
    """
    g = psi.grid
    if rho < 8 * g.h * (1 - 1e-12):
        raise ResolutionError(f"scale {rho:g} below the resolution floor 8h = {8 * g.h:g}")
    if not g.contains_ball(X0, rho):
        raise DomainError(f"B_{rho:g}({tuple(X0)}) leaves the grid hull")
    ref = reference_grid() if ref is None else ref
    X, Y = ref.mesh()
    x = np.clip(X0[0] + rho * X, g.x_min, g.x_max)
    y = np.clip(X0[1] + rho * Y, g.y_min, g.y_max)
    signed = extend_positive(psi)
    return ScalarField(ref, np.maximum(signed.interp(x, y), 0.0) / rho)


def _disk_samples(field: ScalarField, stride: int = 1):
    X, Y = field.grid.mesh()
    inside = X ** 2 + Y ** 2 <= 1.0 + 1e-12
    if stride > 1:
        sub = np.zeros_like(inside)
        sub[::stride, ::stride] = True
        inside &= sub
    return X[inside], Y[inside], field.values[inside]


def _best_slope(s: np.ndarray, v: np.ndarray) -> Tuple[float, float]:
    """``argmin_{a >= 0} max |v - a s|`` for ``s >= 0``; returns ``(a, misfit)``."""
    pos = s > 0
    if not pos.any():
        return 0.0, float(np.max(np.abs(v)))

    def over(a):   # how far the plane overshoots: increasing in a
        return float(np.max(a * s - v))

    def under(a):  # how far it undershoots: decreasing in a
        return float(np.max(v - a * s))

    lo = 0.0
    if over(lo) >= under(lo):
        return 0.0, max(over(0.0), under(0.0))
    hi = max(1.0, float(np.max(v[pos] / s[pos])) * 2 + 1.0)
    while over(hi) < under(hi):
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if over(mid) < under(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    a = 0.5 * (lo + hi)
    return a, max(over(a), under(a))


def _misfit_at(theta, X, Y, v):
    s = np.maximum(X * math.cos(theta) + Y * math.sin(theta), 0.0)
    return _best_slope(s, v)


@dataclass(frozen=True)
class HalfPlaneFit:
    nu: np.ndarray
    slope: float
    misfit: float
    misfit_L2: float

    @property
    def angle(self) -> float:
        return math.atan2(self.nu[1], self.nu[0]) % (2 * math.pi)


def fit_halfplane(psi_ref: ScalarField, n_angles: int = 360, tol: float = 1e-6,
                  coarse_stride: int = 4) -> HalfPlaneFit:
    """Best ``a (X . nu)^+`` in the sup norm over the unit disk.

    A coarse scan over ``n_angles`` directions (on a subsampled point set)
    brackets the optimum, which golden-section search then refines to
    ``tol`` radians on all points.  Ties go to the smallest angle.
    """
    X, Y, v = _disk_samples(psi_ref)
    if not np.any(v != 0):
        raise ParameterError("field vanishes identically: direction undefined")
    Xc, Yc, vc = _disk_samples(psi_ref, coarse_stride)
    step = 2 * math.pi / n_angles
    angles = step * np.arange(n_angles)
    coarse = np.array([_misfit_at(t, Xc, Yc, vc)[1] for t in angles])
    k = int(np.argmin(coarse))    # argmin returns the first, i.e. smallest angle
    lo, hi = angles[k] - step, angles[k] + step
    invphi = (math.sqrt(5) - 1) / 2
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc = _misfit_at(c, X, Y, v)[1]
    fd = _misfit_at(d, X, Y, v)[1]
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = _misfit_at(c, X, Y, v)[1]
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = _misfit_at(d, X, Y, v)[1]
    # compare with the unrefined coarse optimum evaluated on all points
    cands = [0.5 * (lo + hi), angles[k]]
    best = min(cands, key=lambda t: (_misfit_at(t, X, Y, v)[1], t % (2 * math.pi)))
    theta = best % (2 * math.pi)
    a, e = _misfit_at(theta, X, Y, v)
    nu = np.array([math.cos(theta), math.sin(theta)])
    nu /= np.linalg.norm(nu)
    h = psi_ref.grid.h
    resid = v - a * np.maximum(X * nu[0] + Y * nu[1], 0.0)
    return HalfPlaneFit(nu, a, e, float(math.sqrt(np.sum(resid ** 2) * h * h)))


def homogeneity_deficit(psi, X0, r1: float, r2: float, R0: Optional[float] = None,
                        subsample: int = 4) -> float:
    """``int_{r1 < |X-X0| < r2} 2 |X-X0|^-4 (1/x) (grad psi . (X-X0) - psi)^2``."""
    S = psi if isinstance(psi, Sampler) else Sampler(psi)
    h = S.grid.h
    if not (4 * h * (1 - 1e-12) <= r1 < r2):
        raise ParameterError(f"need 4h <= r1 < r2, got r1={r1:g}, r2={r2:g}")
    if R0 is not None and r2 > 0.5 * R0 * (1 + 1e-12):
        raise ParameterError("r2 exceeds R0/2")
    x0, y0 = float(X0[0]), float(X0[1])

    def integrand(x, y):
        _, gx, gy, ind = S(x, y)
        # the sampler scales the gradient by sqrt(ind); scale the signed value alike
        p = np.sqrt(ind) * S.signed.interp(x, y)
        dx, dy = x - x0, y - y0
        d2 = dx * dx + dy * dy
        return 2.0 / (d2 * d2 * x) * (gx * dx + gy * dy - p) ** 2

    return float(S.disk(integrand, X0, r2, subsample, r_inner=r1))


@dataclass(frozen=True)
class RateFit:
    gamma: float
    C1: float
    r2: float
    exact_limit: bool = False


def convergence_rate(scales: Sequence[float], misfits: Sequence[float],
                     floor: float = MISFIT_FLOOR) -> RateFit:
    """Least-squares fit of ``log e = log C1 + gamma log rho``."""
    rho = np.asarray(scales, float)
    e = np.asarray(misfits, float)
    if len(rho) != len(e):
        raise ParameterError("scales and misfits differ in length")
    keep = e > floor
    if not keep.any():
        return RateFit(float("inf"), 0.0, 1.0, exact_limit=True)
    if np.count_nonzero(keep) < 4:
        raise ParameterError("need at least 4 scales with misfit above the floor")
    lx, ly = np.log(rho[keep]), np.log(e[keep])
    A = np.stack([np.ones_like(lx), lx], 1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(coef[1]), float(math.exp(coef[0])), r2)


Window = Union[float, Tuple[float, float, float, float]]


def _in_window(P: np.ndarray, window: Window) -> np.ndarray:
    if np.ndim(window) == 0:
        return np.hypot(P[:, 0], P[:, 1]) <= float(window)
    x0, x1, y0, y1 = window
    return (P[:, 0] >= x0) & (P[:, 0] <= x1) & (P[:, 1] >= y0) & (P[:, 1] <= y1)


def hausdorff_fb_distance(psi_a: ScalarField, psi_b: ScalarField, window: Window = 1.0) -> float:
    """Symmetric Hausdorff distance of the two free boundaries inside ``window``.

    ``window`` is a radius about the origin or a box ``(x0, x1, y0, y1)``.
    Points of each boundary inside the window are matched against the whole
    other boundary, so truncation at the window edge does not inflate the
    distance.
    """
    if psi_a.grid != psi_b.grid:
        raise ParameterError("fields must share a grid")
    Pa = extract_free_boundary(psi_a).points()
    Pb = extract_free_boundary(psi_b).points()
    wa, wb = Pa[_in_window(Pa, window)] if len(Pa) else Pa, Pb[_in_window(Pb, window)] if len(Pb) else Pb
    if len(wa) == 0 or len(wb) == 0:
        raise DomainError("empty free boundary inside the window")
    da, _ = cKDTree(Pb).query(wa)
    db, _ = cKDTree(Pa).query(wb)
    return float(max(da.max(), db.max()))


def scale_schedule(R0: float, h: float) -> List[float]:
    """``R0/2 * 2^-n`` down to the ``8h`` floor, decreasing."""
    out = []
    rho = 0.5 * R0
    while rho >= 8 * h * (1 - 1e-12):
        out.append(rho)
        rho *= 0.5
    return out


@dataclass
class BlowupSequence:
    center: Tuple[float, float]
    scales: np.ndarray
    fields: List[ScalarField]
    nus: np.ndarray
    slopes: np.ndarray
    misfits: np.ndarray
    misfits_L2: np.ndarray
    deficits: np.ndarray
    rate: Optional[RateFit] = None

    COLUMNS = ("rho", "nu_x", "nu_y", "slope", "misfit_Linf", "misfit_L2", "homog_deficit")

    def rows(self):
        return [[float(self.scales[k]), float(self.nus[k, 0]), float(self.nus[k, 1]),
                 float(self.slopes[k]), float(self.misfits[k]), float(self.misfits_L2[k]),
                 float(self.deficits[k])] for k in range(len(self.scales))]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in self.rows():
                w.writerow([f"{v:.17g}" for v in row])


def blowup_sequence(psi: ScalarField, X0, scales: Optional[Sequence[float]] = None,
                    R0: Optional[float] = None, ref: Optional[GridSpec] = None) -> BlowupSequence:
    """Rescale, fit and measure homogeneity at every scale."""
    if scales is None:
        if R0 is None:
            raise ParameterError("either scales or R0 is required")
        scales = scale_schedule(R0, psi.grid.h)
    scales = [float(s) for s in scales]
    if any(b >= a for a, b in zip(scales, scales[1:])):
        raise ParameterError("scales must be strictly decreasing")
    ref = reference_grid() if ref is None else ref
    S = Sampler(psi)
    fields, nus, slopes, mis, mis2, defs = [], [], [], [], [], []
    for rho in scales:
        f = rescale(psi, X0, rho, ref)
        fit = fit_halfplane(f)
        fields.append(f)
        nus.append(fit.nu)
        slopes.append(fit.slope)
        mis.append(fit.misfit)
        mis2.append(fit.misfit_L2)
        try:
            defs.append(homogeneity_deficit(S, X0, 0.5 * rho, rho))
        except ParameterError:
            defs.append(float("nan"))
    seq = BlowupSequence((float(X0[0]), float(X0[1])), np.array(scales), fields, np.array(nus),
                         np.array(slopes), np.array(mis), np.array(mis2), np.array(defs))
    try:
        seq.rate = convergence_rate(seq.scales, seq.misfits)
    except ParameterError:
        seq.rate = None
    return seq
