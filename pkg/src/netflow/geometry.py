"""Discrete differential geometry of sampled curves and triple-junction networks.

A curve is a map gamma: [0,1] -> R^n sampled on a uniform grid.  All
derivative quantities (unit tangent, curvature vector, parametrisation
speed) are formed with second-order finite differences: central stencils
at interior nodes, one-sided three/four-point stencils at the ends so the
junction tangent keeps second-order accuracy.  A triod is three such
curves sharing node 0 (the junction) with node N of each curve pinned to
a fixed endpoint.

Everything here is a pure function of immutable values; states can be
shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RegularityError

# Speeds at or below this fraction of the largest speed are treated as a
# vanished derivative (machine-scale floor, not a modelling threshold).
_SPEED_FLOOR = 1e3 * np.finfo(float).eps


def _freeze(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Grid:
    """Uniform parameter grid on [0, 1] with ``n_cells`` cells, nodes j/N."""

    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ValueError(f"grid too coarse: n_cells={self.n_cells}, need an integer >= 8")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_cells + 1)


@dataclass(frozen=True)
class CurveState:
    """One sampled curve; ``points[j]`` is gamma(j/N), shape (N+1, n).

    ``closed=True`` marks a loop stored with its first node repeated at the
    end (``points[N] == points[0]``); derivative stencils then wrap around
    the seam instead of going one-sided.
    """

    points: np.ndarray
    grid: Grid
    closed: bool = False

    def __post_init__(self):
        pts = _freeze(self.points)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[0] != self.grid.n_cells + 1:
            raise ValueError(
                f"points shape {pts.shape} does not match grid with {self.grid.n_cells} cells"
            )
        if pts.shape[1] < 2:
            raise ValueError("ambient dimension must be at least 2")
        if not np.all(np.isfinite(pts)):
            raise ValueError("curve points must be finite")
        if self.closed and not np.array_equal(pts[0], pts[-1]):
            raise ValueError("closed curve must repeat its first node at the end")
        chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(chords == 0.0):
            raise RegularityError("coincident consecutive nodes: |first difference| = 0")

    @property
    def n_dim(self) -> int:
        return self.points.shape[1]

    def with_points(self, points) -> "CurveState":
        return CurveState(points, self.grid, self.closed)


@dataclass(frozen=True)
class TriodState:
    """Three curves meeting at a shared junction node, far ends pinned.

    Invariants enforced on construction: all three curves live on the same
    grid and ambient space, are open, share node 0 bit-for-bit, and node N
    of curve i equals ``endpoints[i]`` bit-for-bit.
    """

    curves: tuple[CurveState, CurveState, CurveState]
    endpoints: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        curves = tuple(self.curves)
        object.__setattr__(self, "curves", curves)
        ends = _freeze(self.endpoints)
        object.__setattr__(self, "endpoints", ends)
        if len(curves) != 3:
            raise ValueError("a triod consists of exactly three curves")
        grid = curves[0].grid
        n = curves[0].n_dim
        for i, c in enumerate(curves):
            if c.closed:
                raise ValueError(f"curve {i} is closed; triod curves must be open arcs")
            if c.grid != grid or c.n_dim != n:
                raise ValueError("all three curves must share one grid and ambient dimension")
        if ends.shape != (3, n):
            raise ValueError(f"endpoints shape {ends.shape}, expected (3, {n})")
        o = curves[0].points[0]
        for i, c in enumerate(curves):
            if not np.array_equal(c.points[0], o):
                raise ValueError(f"curve {i} junction node differs from curve 0")
            if not np.array_equal(c.points[-1], ends[i]):
                raise ValueError(f"curve {i} last node differs from endpoints[{i}]")
        if not (np.isfinite(self.time) and self.time >= 0.0):
            raise ValueError("time must be a finite nonnegative scalar")

    @property
    def grid(self) -> Grid:
        return self.curves[0].grid

    @property
    def n_dim(self) -> int:
        return self.curves[0].n_dim

    @property
    def junction(self) -> np.ndarray:
        return self.curves[0].points[0]

    def with_curves(self, curves, time=None) -> "TriodState":
        return TriodState(tuple(curves), self.endpoints, self.time if time is None else time)


@dataclass(frozen=True)
class SingleCurveState:
    """Validation-mode state: one curve, no junction.

    Open curves keep both end nodes pinned where they start; closed curves
    evolve with periodic coupling.  Used to exercise the stepping machinery
    against exact single-curve solutions (e.g. the shrinking circle).
    """

    curve: CurveState
    time: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.time) and self.time >= 0.0):
            raise ValueError("time must be a finite nonnegative scalar")

    @property
    def grid(self) -> Grid:
        return self.curve.grid

    @property
    def n_dim(self) -> int:
        return self.curve.n_dim

    @property
    def closed(self) -> bool:
        return self.curve.closed


@dataclass(frozen=True)
class JunctionResiduals:
    """How far a triod is from the junction conditions.

    ``angle_residual`` is |sum of the three unit tangents at the junction|
    (dimensionless, in [0, 3]); ``concurrency_residual`` is the largest
    pairwise distance between the three node-0 points (zero whenever the
    junction is stored shared, kept as a guard).
    """

    angle_residual: float
    concurrency_residual: float

    def admissible_within(self, tol: float) -> bool:
        return self.angle_residual <= tol and self.concurrency_residual == 0.0


def first_derivative(points: np.ndarray, h: float, closed: bool = False) -> np.ndarray:
    """Second-order d/dx of node values: central inside, one-sided at the ends."""
    points = np.asarray(points, dtype=float)
    d = np.empty_like(points)
    if closed:
        p = points[:-1]
        dp = (np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)) / (2.0 * h)
        d[:-1] = dp
        d[-1] = dp[0]
        return d
    d[1:-1] = (points[2:] - points[:-2]) / (2.0 * h)
    d[0] = (-3.0 * points[0] + 4.0 * points[1] - points[2]) / (2.0 * h)
    d[-1] = (3.0 * points[-1] - 4.0 * points[-2] + points[-3]) / (2.0 * h)
    return d


def second_derivative(points: np.ndarray, h: float, closed: bool = False) -> np.ndarray:
    """Second-order d^2/dx^2 of node values: central inside, one-sided at the ends."""
    points = np.asarray(points, dtype=float)
    d = np.empty_like(points)
    hh = h * h
    if closed:
        p = points[:-1]
        dp = (np.roll(p, -1, axis=0) - 2.0 * p + np.roll(p, 1, axis=0)) / hh
        d[:-1] = dp
        d[-1] = dp[0]
        return d
    d[1:-1] = (points[2:] - 2.0 * points[1:-1] + points[:-2]) / hh
    d[0] = (2.0 * points[0] - 5.0 * points[1] + 4.0 * points[2] - points[3]) / hh
    d[-1] = (2.0 * points[-1] - 5.0 * points[-2] + 4.0 * points[-3] - points[-4]) / hh
    return d


def velocity(curve: CurveState) -> np.ndarray:
    """gamma_x at every node, shape (N+1, n)."""
    return first_derivative(curve.points, curve.grid.h, curve.closed)


def speed(curve: CurveState) -> np.ndarray:
    """|gamma_x| at every node."""
    return np.linalg.norm(velocity(curve), axis=1)


def checked_velocity(curve: CurveState) -> tuple[np.ndarray, np.ndarray]:
    v = velocity(curve)
    s = np.linalg.norm(v, axis=1)
    floor = _SPEED_FLOOR * max(float(s.max()), np.finfo(float).tiny)
    if float(s.min()) <= floor:
        raise RegularityError(
            f"parametrisation speed collapsed: min |gamma_x| = {float(s.min()):.3e}"
        )
    return v, s


def tangent(curve: CurveState) -> np.ndarray:
    """Unit tangent gamma_x / |gamma_x| at every node."""
    v, s = checked_velocity(curve)
    return v / s[:, None]


def curvature_vector(curve: CurveState) -> np.ndarray:
    """Curvature vector gamma_xx/|gamma_x|^2 - <gamma_xx, gamma_x> gamma_x / |gamma_x|^4.

    This is the second arclength derivative of the curve; the output is
    orthogonal to the tangent at every node (exact modulo round-off).
    """
    v, s = checked_velocity(curve)
    a = second_derivative(curve.points, curve.grid.h, curve.closed)
    s2 = s * s
    return a / s2[:, None] - (np.einsum("ij,ij->i", a, v) / (s2 * s2))[:, None] * v


def length(curve: CurveState) -> float:
    """Length of the curve: composite trapezoid rule on |gamma_x| over [0,1]."""
    _, s = checked_velocity(curve)
    h = curve.grid.h
    return float(h * (0.5 * s[0] + s[1:-1].sum() + 0.5 * s[-1]))


def curve_l2_curvature(curve: CurveState) -> float:
    """(integral of |kappa|^2 ds)^(1/2) over one curve, trapezoid quadrature."""
    return float(np.sqrt(_curvature_energy(curve)))


def _curvature_energy(curve: CurveState) -> float:
    """integral of |kappa|^2 |gamma_x| dx, trapezoid quadrature."""
    k = curvature_vector(curve)
    s = speed(curve)
    integrand = np.einsum("ij,ij->i", k, k) * s
    h = curve.grid.h
    return float(h * (0.5 * integrand[0] + integrand[1:-1].sum() + 0.5 * integrand[-1]))


def _component_curves(state) -> tuple[CurveState, ...]:
    if isinstance(state, CurveState):
        return (state,)
    if isinstance(state, SingleCurveState):
        return (state.curve,)
    return tuple(state.curves)


def l2_curvature(state) -> float:
    """L^2 norm of the curvature over a network or a single curve.

    For a triod, returns (sum_i integral |kappa^i|^2 |gamma^i_x| dx)^(1/2);
    a lone curve is treated as a one-curve network.
    """
    return float(np.sqrt(sum(_curvature_energy(c) for c in _component_curves(state))))


def min_speed(state) -> float:
    """Smallest parametrisation speed over all curves and nodes."""
    return float(min(speed(c).min() for c in _component_curves(state)))


def total_length(state) -> float:
    return float(sum(length(c) for c in _component_curves(state)))


def junction_residuals(triod: TriodState) -> JunctionResiduals:
    """Angle and concurrency residuals at the triple junction."""
    tangents = [tangent(c)[0] for c in triod.curves]
    angle = float(np.linalg.norm(tangents[0] + tangents[1] + tangents[2]))
    nodes = [c.points[0] for c in triod.curves]
    conc = max(
        float(np.linalg.norm(nodes[0] - nodes[1])),
        float(np.linalg.norm(nodes[1] - nodes[2])),
        float(np.linalg.norm(nodes[0] - nodes[2])),
    )
    return JunctionResiduals(angle_residual=angle, concurrency_residual=conc)
