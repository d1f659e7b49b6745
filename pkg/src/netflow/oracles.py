"""Closed-form and brute-force reference solutions for tests and acceptance.

Every quantitative target in the test suite traces back to one of these
analytically forced cases: the stationary junction of three straight
segments through the Fermat point, the shrinking circle r(t) =
sqrt(r0^2 - 2t) (from the radius equation dr/dt = -1/r of a circle moving
by curvature), and an independent spline-quadrature evaluation of the
length decay rate integral |kappa|^2 ds.  None of these numbers comes from
external data; each docstring records its derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import InfeasibleSteiner, RegularityError
from .geometry import (
    CurveState,
    Grid,
    SingleCurveState,
    TriodState,
    checked_velocity,
)


@dataclass(frozen=True)
class OracleCase:
    """A state with analytically forced reference data attached.

    ``exact`` maps quantity names to values or callables (e.g. a radius
    function of time); ``horizon`` bounds the time span on which the exact
    data is valid.
    """

    name: str
    state: Any
    exact: dict[str, Any]
    horizon: float


def fermat_point(p1, p2, p3, tol: float = 1e-14, max_iter: int = 10_000) -> np.ndarray:
    """Point minimising the summed distance to three points (all angles < 120 deg).

    Computed by Weiszfeld iteration started at the centroid; at the
    minimiser the three unit vectors toward the given points sum to zero,
    which is exactly the 120-degree junction condition.
    """
    pts = np.array([p1, p2, p3], dtype=float)
    _check_feasible(pts)
    x = pts.mean(axis=0)
    for _ in range(max_iter):
        d = np.linalg.norm(pts - x, axis=1)
        if np.any(d < 1e-15):
            # Sitting on a vertex cannot happen for a feasible triangle;
            # nudge off and continue.
            x = x + 1e-12
            continue
        w = 1.0 / d
        x_new = (pts * w[:, None]).sum(axis=0) / w.sum()
        if np.linalg.norm(x_new - x) <= tol * max(1.0, np.linalg.norm(x)):
            x = x_new
            break
        x = x_new
    # One Newton polish: grad = -sum u_i, hess = sum (I - u_i u_i^T)/d_i.
    d = np.linalg.norm(pts - x, axis=1)
    u = (pts - x) / d[:, None]
    grad = -u.sum(axis=0)
    eye = np.eye(pts.shape[1])
    hess = sum((eye - np.outer(u[i], u[i])) / d[i] for i in range(3))
    x = x - np.linalg.solve(hess, grad)
    return x


def _check_feasible(pts: np.ndarray) -> None:
    for i in range(3):
        a = pts[i]
        b = pts[(i + 1) % 3]
        c = pts[(i + 2) % 3]
        ab = b - a
        ac = c - a
        cos_angle = float(ab @ ac) / (np.linalg.norm(ab) * np.linalg.norm(ac))
        if cos_angle <= -0.5 + 1e-12:
            raise InfeasibleSteiner(
                f"triangle angle at vertex {i} is >= 120 degrees; "
                "the junction would sit on that vertex"
            )


def _segment(a, b, grid: Grid) -> CurveState:
    x = grid.nodes[:, None]
    return CurveState((1.0 - x) * np.asarray(a, float) + x * np.asarray(b, float), grid)


def steiner_triod(endpoints, n_cells: int = 128) -> TriodState:
    """Stationary triod: three straight constant-speed segments from the Fermat point.

    Each curve runs from the junction (the Fermat point of the endpoint
    triangle) to its endpoint; curvature vanishes and the junction tangents
    meet at mutual 120 degrees, so the flow leaves the state fixed.
    """
    ends = np.asarray(endpoints, dtype=float)
    if ends.shape != (3, 2):
        raise ValueError("expected three planar endpoints, shape (3, 2)")
    grid = Grid(n_cells)
    junction = fermat_point(*ends)
    curves = []
    for i in range(3):
        pts = np.empty((n_cells + 1, 2))
        x = grid.nodes[:, None]
        pts[:] = (1.0 - x) * junction + x * ends[i]
        pts[0] = junction
        pts[-1] = ends[i]
        curves.append(CurveState(pts, grid))
    # Share the junction row bit-for-bit.
    return TriodState(tuple(curves), ends, time=0.0)


def unit_steiner_triod(n_cells: int = 128, scale: float = 1.0) -> TriodState:
    """Symmetric stationary triod with endpoints at the third roots of unity."""
    angles = np.array([0.5 * math.pi, 0.5 * math.pi + 2 * math.pi / 3,
                       0.5 * math.pi + 4 * math.pi / 3])
    ends = scale * np.column_stack([np.cos(angles), np.sin(angles)])
    return steiner_triod(ends, n_cells)


def circle_curve(r0: float, n_cells: int, center=(0.0, 0.0)) -> CurveState:
    grid = Grid(n_cells)
    theta = 2.0 * math.pi * grid.nodes
    pts = np.column_stack(
        [center[0] + r0 * np.cos(theta), center[1] + r0 * np.sin(theta)]
    )
    pts[-1] = pts[0]
    return CurveState(pts, grid, closed=True)


def shrinking_circle(r0: float, n_cells: int = 256) -> OracleCase:
    """Closed circle under curvature flow: r(t) = sqrt(r0^2 - 2t).

    A circle of radius r moves with inward normal speed 1/r, so the radius
    obeys dr/dt = -1/r, i.e. d(r^2)/dt = -2; it collapses at t = r0^2 / 2.
    """
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    state = SingleCurveState(circle_curve(r0, n_cells), 0.0)

    def radius(t: float) -> float:
        return math.sqrt(max(r0 * r0 - 2.0 * t, 0.0))

    return OracleCase(
        name=f"shrinking-circle-r{r0:g}",
        state=state,
        exact={"radius": radius, "collapse_time": 0.5 * r0 * r0, "r0": r0},
        horizon=0.5 * r0 * r0,
    )


def _smooth_bump(x: np.ndarray, center: float, half_width: float) -> np.ndarray:
    """C-infinity bump supported on [center - hw, center + hw], peak value 1.

    exp(1 - 1/(1-u^2)) with u the scaled offset; underflows to exactly 0
    outside the support, so curves stay exactly straight near their ends.
    """
    u = (np.asarray(x, float) - center) / half_width
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


def bumped_triod(n_cells: int = 128, amplitudes=(0.08, -0.06, 0.05),
                 reparam: float = 0.0) -> TriodState:
    """Smooth non-stationary triod: straight Steiner legs with transverse bumps.

    Starting from the symmetric stationary triod (endpoints at the third
    roots of unity, junction at the origin), each leg is displaced normal
    to itself by a C-infinity bump supported on the middle of the
    parameter interval [0.2, 0.8].  The legs remain exactly straight near
    junction and endpoints, so the sampled state satisfies the junction
    angle condition to round-off while carrying O(1) curvature.

    ``reparam`` in (-1, 1) composes every leg with the parameter change
    x -> x + reparam * x(1-x), producing a different admissible
    parametrisation of the same geometric network.
    """
    if not -1.0 < reparam < 1.0:
        raise ValueError("reparam must lie in (-1, 1) to keep the map monotone")
    grid = Grid(n_cells)
    x = grid.nodes
    if reparam:
        x = x + reparam * x * (1.0 - x)
    angles = np.array([0.5 * math.pi, 0.5 * math.pi + 2 * math.pi / 3,
                       0.5 * math.pi + 4 * math.pi / 3])
    ends = np.column_stack([np.cos(angles), np.sin(angles)])
    bump = _smooth_bump(x, 0.5, 0.3)
    curves = []
    for i in range(3):
        direction = ends[i]
        normal = np.array([-direction[1], direction[0]])
        pts = x[:, None] * direction + (amplitudes[i] * bump)[:, None] * normal
        pts[0] = 0.0
        pts[-1] = ends[i]
        curves.append(CurveState(pts, grid))
    return TriodState(tuple(curves), ends, time=0.0)


def parallel_tangent_triod(n_cells: int = 64) -> TriodState:
    """Degenerate fixture: all three junction tangents equal e1.

    Three parabolic arcs leave the origin in the same direction and fan
    out quadratically.  Every normal projection at the junction kills e1,
    so the junction boundary operator is singular -- the canonical FAIL
    case for the well-posedness check (and a maximally inadmissible state,
    angle residual 3).
    """
    grid = Grid(n_cells)
    x = grid.nodes
    offsets = np.array([[0.0, 1.0], [0.0, -1.0], [0.5, 0.0]])
    curves = []
    ends = []
    for d in offsets:
        pts = np.column_stack([x, np.zeros_like(x)]) + (x**2)[:, None] * d
        pts[0] = 0.0
        curves.append(CurveState(pts, grid))
        ends.append(pts[-1])
    return TriodState(tuple(curves), np.asarray(ends), time=0.0)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    """C-infinity monotone ramp: 0 for u <= 0, 1 for u >= 1."""
    u = np.asarray(u, dtype=float)

    def g(v):
        out = np.zeros_like(v)
        pos = v > 0.0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    a = g(u)
    b = g(1.0 - u)
    return a / (a + b)


def infeasible_triod(n_cells: int = 128) -> TriodState:
    """Admissible triod whose endpoint triangle admits no 120-degree junction.

    One endpoint sits inside the wide angle formed by the other two, so
    the Fermat point of the triangle degenerates onto that vertex and no
    stationary configuration exists.  The initial curves still leave the
    junction at mutual 120 degrees (each leg is exactly straight near
    x=0, then blends smoothly into the chord toward its endpoint), so the
    state is admissible; under the flow the junction drifts toward the
    enclosed endpoint and the short curve shrinks until its length
    collapses.
    """
    grid = Grid(n_cells)
    x = grid.nodes
    junction = np.array([0.0, 0.3])
    ends = np.array([[-1.1, 0.8], [1.1, 0.8], [0.0, 0.85]])
    angles = (math.pi * 7 / 6, -math.pi / 6, math.pi / 2)
    stem = 0.3
    ramp = _smoothstep((x - 0.15) / 0.7)
    curves = []
    for i in range(3):
        u = np.array([math.cos(angles[i]), math.sin(angles[i])])
        # pts = O + x[(1-ramp) stem u + ramp (E - O)]: straight at the
        # junction, chord toward the endpoint once the ramp saturates.
        blend = (1.0 - ramp)[:, None] * (stem * u) + ramp[:, None] * (ends[i] - junction)
        pts = junction + x[:, None] * blend
        pts[0] = junction
        pts[-1] = ends[i]
        curves.append(CurveState(pts, grid))
    return TriodState(tuple(curves), ends, time=0.0)


def brute_force_length_decay(state) -> float:
    """Independent evaluation of the length decay rate integral |kappa|^2 ds.

    For motion by curvature the total length satisfies
    dL/dt = -integral |kappa|^2 ds (fixed endpoints; the junction term
    vanishes by the angle condition).  This oracle avoids the solver's
    finite-difference path entirely: each curve is fit with a cubic
    spline, curvature is evaluated from spline derivatives on a refined
    parameter grid, and the integral uses Simpson quadrature.
    """
    if isinstance(state, CurveState):
        curves = (state,)
    elif isinstance(state, SingleCurveState):
        curves = (state.curve,)
    else:
        curves = state.curves
    total = 0.0
    for curve in curves:
        checked_velocity(curve)
        pts = np.asarray(curve.points)
        xs = curve.grid.nodes
        bc = "periodic" if curve.closed else "not-a-knot"
        spline = CubicSpline(xs, pts, axis=0, bc_type=bc)
        fine = np.linspace(0.0, 1.0, 8 * curve.grid.n_cells + 1)
        v = spline(fine, 1)
        a = spline(fine, 2)
        s2 = np.einsum("ij,ij->i", v, v)
        if float(s2.min()) <= 0.0:
            raise RegularityError("spline speed vanished in decay oracle")
        kappa = a / s2[:, None] - (np.einsum("ij,ij->i", a, v) / (s2 * s2))[:, None] * v
        integrand = np.einsum("ij,ij->i", kappa, kappa) * np.sqrt(s2)
        total += float(simpson(integrand, x=fine))
    return total
