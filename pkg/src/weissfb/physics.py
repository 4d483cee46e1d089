"""Vorticity models, problem descriptions and analytic reference solutions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, ParameterError
from .field import GridSpec, ScalarField

VORTICITY_KINDS = ("zero", "constant", "affine-clipped")


@dataclass(frozen=True)
class VorticityModel:
    """The vorticity function ``f`` and its antiderivative ``F`` with ``F(0) = 0``.

    ``affine-clipped`` is ``f(z) = clamp(F0 * (1 - z / z_ref), 0, F0)``; its slope
    is ``-F0 / z_ref`` on the ramp, so ``z_ref >= 1`` keeps ``f' >= -F0``.
    """

    kind: str = "zero"
    F0: float = 0.0
    beta: float = 0.5
    z_ref: float = 1.0

    def __post_init__(self):
        if self.kind not in VORTICITY_KINDS:
            raise ParameterError(f"unknown vorticity kind {self.kind!r}")
        if self.F0 < 0 or not math.isfinite(self.F0):
            raise ParameterError("F0 must be a finite non-negative number")
        if not 0 < self.beta < 1:
            raise ParameterError("beta must lie in (0, 1)")
        if self.kind == "affine-clipped" and not self.z_ref > 0:
            raise ParameterError("z_ref must be positive")

    @classmethod
    def zero(cls):
        return cls("zero", 0.0)

    @classmethod
    def constant(cls, F0):
        return cls("constant", F0)

    @classmethod
    def affine_clipped(cls, F0, z_ref=1.0, beta=0.5):
        return cls("affine-clipped", F0, beta, z_ref)

    def f(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "constant":
            return np.full_like(z, self.F0)
        return np.clip(self.F0 * (1.0 - z / self.z_ref), 0.0, self.F0)

    def df(self, z):
        """Derivative of ``f`` (one-sided value at the kinks)."""
        z = np.asarray(z, dtype=float)
        if self.kind != "affine-clipped":
            return np.zeros_like(z)
        ramp = (z > 0) & (z < self.z_ref)
        return np.where(ramp, -self.F0 / self.z_ref, 0.0)

    def F(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(z)
        if self.kind == "constant":
            return self.F0 * z
        zr = self.z_ref
        ramp = self.F0 * (z - z * z / (2 * zr))
        return np.where(z <= 0, self.F0 * z, np.where(z >= zr, self.F0 * zr / 2, ramp))

    def to_dict(self):
        return {"kind": self.kind, "F0": self.F0, "beta": self.beta, "z_ref": self.z_ref}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", "zero"), float(d.get("F0", 0.0)), float(d.get("beta", 0.5)),
                   float(d.get("z_ref", 1.0)))


def eval_f(model: VorticityModel, z):
    out = model.f(z)
    return float(out) if np.ndim(out) == 0 else out


def eval_F(model: VorticityModel, z):
    out = model.F(z)
    return float(out) if np.ndim(out) == 0 else out


def validate(model: VorticityModel, z_range=(-2.0, 2.0), n: int = 10_000, seed: int = 0,
             n_pairs: int = 1000) -> VorticityModel:
    """Sampled check of the standing assumptions on ``f``; returns the model.

    Checks ``0 <= f <= F0`` for ``z <= 0``, ``-F0 <= f' <= 0`` and the
    concavity inequality ``F(q) - F(p) >= f(q)(q - p)``.
    """
    z = np.linspace(z_range[0], z_range[1], n)
    fz = model.f(z)
    tol = 1e-12 * max(1.0, model.F0)
    neg = z <= 0
    if np.any(fz[neg] < -tol) or np.any(fz[neg] > model.F0 + tol):
        raise ParameterError("f violates 0 <= f(z) <= F0 on z <= 0")
    slopes = np.diff(fz) / np.diff(z)
    if np.any(slopes > tol) or np.any(slopes < -model.F0 - tol):
        raise ParameterError("f' leaves [-F0, 0]")
    if abs(float(model.F(0.0))) > tol:
        raise ParameterError("F(0) must vanish")
    rng = np.random.default_rng(seed)
    p, q = rng.uniform(z_range[0], z_range[1], (2, n_pairs))
    if np.any(model.F(q) - model.F(p) < model.f(q) * (q - p) - 1e-12):
        raise ParameterError("F is not concave on the sampled pairs")
    return model


def compute_R0(X0) -> float:
    """Radius ``(1/2) min(x0/2, -y0/2)`` of the working ball around ``X0``."""
    x0, y0 = float(X0[0]), float(X0[1])
    if not x0 > 0 or not y0 < 0:
        raise ParameterError(f"degenerate centre {X0}: need x0 > 0 and y0 < 0")
    return 0.5 * min(x0 / 2.0, -y0 / 2.0)


def boundary_slope(X0) -> float:
    """Gradient jump ``x0 * sqrt(-y0)`` of the half-plane solution at ``X0``."""
    x0, y0 = float(X0[0]), float(X0[1])
    if not x0 > 0 or not y0 < 0:
        raise ParameterError(f"degenerate centre {X0}: need x0 > 0 and y0 < 0")
    return x0 * math.sqrt(-y0)


def unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def half_plane_solution(X0, nu, grid: GridSpec, slope: Optional[float] = None) -> ScalarField:
    """``x0 sqrt(-y0) ((X - X0) . nu)^+`` sampled on ``grid``."""
    a = boundary_slope(X0) if slope is None else float(slope)
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    return ScalarField.from_function(
        grid, lambda x, y: a * np.maximum((x - X0[0]) * nu[0] + (y - X0[1]) * nu[1], 0.0))


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet trace descriptor.

    ``half-plane``: ``a0 * (s + amp * R0 * sin(freq * t / R0))^+`` with
    ``s = (X - X0) . nu0`` and ``t`` the tangential coordinate; ``a0``
    defaults to ``x0 sqrt(-y0)``.
    ``extruded``: ``(a - a0 * (y_top - y))^+``, the one-dimensional profile
    hanging from the top edge ``y_top`` of the grid.
    ``zero``: the zero trace.
    """

    kind: str = "half-plane"
    angle: float = math.pi / 2
    slope: Optional[float] = None
    amplitude: float = 0.0
    frequency: float = 1.0
    offset: float = 0.0
    top_value: float = 0.5

    def __post_init__(self):
        if self.kind not in ("half-plane", "extruded", "zero"):
            raise ParameterError(f"unknown boundary kind {self.kind!r}")

    @property
    def normal(self) -> np.ndarray:
        return unit(self.angle)

    def evaluate(self, X0, R0, grid: GridSpec) -> np.ndarray:
        X, Y = grid.mesh()
        if self.kind == "zero":
            return np.zeros_like(X)
        a0 = boundary_slope(X0) if self.slope is None else self.slope
        if self.kind == "extruded":
            return np.maximum(self.top_value - a0 * (grid.y_max - Y), 0.0)
        nu = self.normal
        s = (X - X0[0]) * nu[0] + (Y - X0[1]) * nu[1] - self.offset
        t = -(X - X0[0]) * nu[1] + (Y - X0[1]) * nu[0]
        s = s + self.amplitude * R0 * np.sin(self.frequency * t / R0)
        return a0 * np.maximum(s, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "angle": self.angle, "slope": self.slope, "amplitude": self.amplitude,
                "frequency": self.frequency, "offset": self.offset, "top_value": self.top_value}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("kind", "angle", "slope", "amplitude", "frequency", "offset", "top_value")
                      if k in d})


@dataclass(frozen=True)
class ProblemSpec:
    """A local minimization problem around a non-degenerate point ``X0``.

    ``domain`` is ``"ball"`` (the unknowns are the grid nodes inside
    ``B_R0(X0)``) or ``"box"`` (all interior nodes of the grid).
    ``frozen`` replaces ``x`` and ``y`` in every coefficient by ``x0`` and
    ``y0``, giving the constant-coefficient problem solved by half-planes.
    ``margin`` is the extra width of the grid around the ball, in units of
    R0, so that diagnostics can sample slightly outside it.
    """

    X0: tuple = (1.0, -1.0)
    R0: Optional[float] = None
    vorticity: VorticityModel = field(default_factory=VorticityModel.zero)
    boundary: BoundaryData = field(default_factory=BoundaryData)
    grid_n: int = 129
    domain: str = "ball"
    frozen: bool = False
    margin: float = 0.0

    def __post_init__(self):
        X0 = (float(self.X0[0]), float(self.X0[1]))
        object.__setattr__(self, "X0", X0)
        rmax = compute_R0(X0)
        R0 = rmax if self.R0 is None else float(self.R0)
        if not 0 < R0 <= rmax * (1 + 1e-12):
            raise ParameterError(f"R0={R0} must lie in (0, {rmax}]")
        object.__setattr__(self, "R0", R0)
        if self.domain not in ("ball", "box"):
            raise ParameterError(f"unknown domain {self.domain!r}")
        if self.grid_n < 5:
            raise ParameterError("grid_n must be >= 5")
        if self.margin < 0:
            raise ParameterError("margin must be non-negative")
        # closure of the ball stays away from both axes
        if X0[0] - R0 <= 0 or X0[1] + R0 >= 0:
            raise DomainError("closed ball touches {x=0} or {y=0}")

    @property
    def slope(self) -> float:
        return boundary_slope(self.X0)

    def grid(self, n: Optional[int] = None) -> GridSpec:
        n = self.grid_n if n is None else n
        return GridSpec.square(self.X0, self.R0 * (1 + self.margin), n)

    def trace(self, grid: GridSpec) -> ScalarField:
        return ScalarField(grid, self.boundary.evaluate(self.X0, self.R0, grid))

    def coefficients(self, x, y):
        """Return ``(x, y)`` as seen by the functional (frozen or not)."""
        if self.frozen:
            return np.full_like(np.asarray(x, float), self.X0[0]), np.full_like(np.asarray(y, float), self.X0[1])
        return np.asarray(x, float), np.asarray(y, float)

    def replace(self, **kw) -> "ProblemSpec":
        d = dict(X0=self.X0, R0=self.R0, vorticity=self.vorticity, boundary=self.boundary,
                 grid_n=self.grid_n, domain=self.domain, frozen=self.frozen, margin=self.margin)
        d.update(kw)
        return ProblemSpec(**d)
