"""Constant-speed reparametrisation and set-level comparison of networks.

Two solvers started from different parametrisations of the same initial
network trace out the same set of points; comparing trajectories therefore
has to happen at the level of sets.  ``resample_constant_speed`` moves a
curve's nodes along its own polyline until they are equally spaced in
arclength (so |gamma_x| is constant, equal to the curve length), and
``hausdorff_distance`` measures the distance between two networks through
densely resampled polyline proxies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CurveState, SingleCurveState, TriodState, checked_velocity

# Dense resampling factor for polyline set proxies; keeps the metric error
# well below the O(h^2) discrepancies the comparisons measure.
DEFAULT_DENSITY = 8


def _cumulative_arclength(points: np.ndarray) -> np.ndarray:
    chords = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate(([0.0], np.cumsum(chords)))


def _resample_pass(points: np.ndarray) -> np.ndarray:
    """One monotone arclength inversion by linear interpolation."""
    s = _cumulative_arclength(points)
    targets = np.linspace(0.0, s[-1], points.shape[0])
    out = np.column_stack(
        [np.interp(targets, s, points[:, k]) for k in range(points.shape[1])]
    )
    out[0] = points[0]
    out[-1] = points[-1]
    return out


def resample_constant_speed(curve: CurveState, max_passes: int = 8) -> CurveState:
    """Reparametrise a curve so its nodes are equally spaced in arclength.

    The output traverses the same polyline (every new node lies on a
    segment of the input) with |gamma_x| constant and equal to the curve
    length up to O(h^2); the first and last node are unchanged.  The
    arclength inversion pass is iterated to its own fixed point so the
    operation is idempotent to round-off, not just to O(h^2).
    """
    checked_velocity(curve)  # raises RegularityError on degenerate input
    points = np.array(curve.points)
    scale = float(_cumulative_arclength(points)[-1])
    for _ in range(max_passes):
        new = _resample_pass(points)
        shift = float(np.max(np.linalg.norm(new - points, axis=1)))
        points = new
        if shift <= 1e-13 * scale:
            break
    if curve.closed:
        points[-1] = points[0]
    return curve.with_points(points)


def resample_state(state):
    """Constant-speed resampling of a whole state; junction/endpoints stay put."""
    if isinstance(state, CurveState):
        return resample_constant_speed(state)
    if isinstance(state, SingleCurveState):
        return SingleCurveState(resample_constant_speed(state.curve), state.time)
    curves = tuple(resample_constant_speed(c) for c in state.curves)
    return TriodState(curves, state.endpoints, state.time)


@dataclass(frozen=True)
class PolylineSet:
    """Point-set proxy for a network: its polylines densely resampled.

    Each grid cell of every curve is subdivided ``density`` times, so all
    proxy points lie exactly on segments of the original polylines.
    """

    points: np.ndarray

    @classmethod
    def from_curves(cls, curves, density: int = DEFAULT_DENSITY) -> "PolylineSet":
        if density < 1:
            raise ValueError("density must be >= 1")
        chunks = []
        w = np.linspace(0.0, 1.0, density, endpoint=False)
        for curve in curves:
            pts = np.asarray(curve.points, dtype=float)
            a = pts[:-1]
            b = pts[1:]
            dense = a[:, None, :] * (1.0 - w)[None, :, None] + b[:, None, :] * w[None, :, None]
            chunks.append(dense.reshape(-1, pts.shape[1]))
            chunks.append(pts[-1][None, :])
        return cls(np.vstack(chunks))

    @classmethod
    def from_state(cls, state, density: int = DEFAULT_DENSITY) -> "PolylineSet":
        if isinstance(state, CurveState):
            return cls.from_curves((state,), density)
        if isinstance(state, SingleCurveState):
            return cls.from_curves((state.curve,), density)
        return cls.from_curves(state.curves, density)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("a polyline set needs at least one point")
        object.__setattr__(self, "points", pts)


def hausdorff_distance(a: PolylineSet, b: PolylineSet) -> float:
    """Symmetric Hausdorff distance between two polyline-set proxies."""
    tree_a = cKDTree(a.points)
    tree_b = cKDTree(b.points)
    d_ab = float(tree_b.query(a.points)[0].max())
    d_ba = float(tree_a.query(b.points)[0].max())
    return max(d_ab, d_ba)


def state_distance(a, b, density: int = DEFAULT_DENSITY) -> float:
    """Hausdorff distance between two states via their polyline proxies."""
    return hausdorff_distance(
        PolylineSet.from_state(a, density), PolylineSet.from_state(b, density)
    )
