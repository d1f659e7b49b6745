"""Nonlinear time stepping of the curvature flow with fixed-point correction.

Each step freezes the coefficients at a reference state sigma, then
iterates

    gamma^(k+1) = solve( assemble(sigma, {f(gamma^k), b(gamma^k), psi}, dt) )

until successive iterates stop moving.  At the fixed point the iterate
satisfies the fully nonlinear backward-Euler step of
gamma_t = gamma_xx / |gamma_x|^2 together with the exact junction angle
condition (the linearised angle row plus its defect b reproduce
sum_i gamma^i_x/|gamma^i_x| = 0 identically).

``run`` drives steps to a horizon while watching the quantities that
signal a singularity: the shortest curve length, the L^2 norm of the
curvature, and the smallest parametrisation speed against a regularity
floor (half the reference state's minimum speed by default).

A single-curve validation mode (closed loop or fixed-ends arc, no
junction) reuses the same stepping on a periodic or Dirichlet system; it
exists to exercise the machinery against exact solutions such as the
shrinking circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import (
    InadmissibleInitialData,
    PicardDivergence,
    RegularityError,
    SingularSystemError,
)
from .geometry import (
    CurveState,
    SingleCurveState,
    TriodState,
    checked_velocity,
    first_derivative,
    junction_residuals,
    l2_curvature,
    length,
    min_speed,
    second_derivative,
    speed,
)
from .linearized import (
    FrozenCoefficients,
    LinearData,
    assemble,
    refresh_rhs,
    solve,
    triod_arrays,
)
from .reparam import resample_state

_EDGE_STENCIL = np.array([-3.0, 4.0, -1.0])


@dataclass(frozen=True)
class FlowConfig:
    """Run parameters: discretisation, tolerances, monitors, scheme switches.

    Thresholds left as None are resolved from the initial state when a run
    starts: length_collapse_threshold defaults to 5 h L0 (below spatial
    resolution) and curvature_blowup_threshold to 1e3 / L0, with L0 the
    initial total length.  The regularity floor is reg_floor_factor times
    the minimum speed of the current frozen coefficients.
    """

    n_cells: int = 128
    dt: float = 1e-4
    t_end: float = 1.0
    picard_tol: float = 1e-9
    max_picard: int = 25
    angle_tol: float = 1e-6
    reg_floor_factor: float = 0.5
    curvature_blowup_threshold: float | None = None
    length_collapse_threshold: float | None = None
    relinearize_every: int = 1
    resample: bool = False
    snapshot_every: int = 1

    def __post_init__(self):
        positive = {
            "n_cells": self.n_cells,
            "dt": self.dt,
            "t_end": self.t_end,
            "picard_tol": self.picard_tol,
            "angle_tol": self.angle_tol,
            "relinearize_every": self.relinearize_every,
            "snapshot_every": self.snapshot_every,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.max_picard < 2:
            raise ValueError("max_picard must be at least 2")
        if not 0.0 < self.reg_floor_factor < 1.0:
            raise ValueError("reg_floor_factor must lie in (0, 1)")
        for name in ("curvature_blowup_threshold", "length_collapse_threshold"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive when given")


@dataclass(frozen=True)
class StepReport:
    """Per-step diagnostics recorded along a run."""

    time: float
    lengths: tuple[float, ...]
    total_length: float
    l2_curvature: float
    angle_residual: float
    min_speed: float
    picard_iters: int
    picard_final_residual: float


HORIZON_REACHED = "horizon_reached"
LENGTH_COLLAPSE = "length_collapse"
CURVATURE_BLOWUP = "curvature_blowup"
REGULARITY_FLOOR = "regularity_floor"
PICARD_DIVERGENCE = "picard_divergence"

_STOP_KINDS = (
    HORIZON_REACHED,
    LENGTH_COLLAPSE,
    CURVATURE_BLOWUP,
    REGULARITY_FLOOR,
    PICARD_DIVERGENCE,
)


@dataclass(frozen=True)
class StopReason:
    """Why a run ended; ``curve`` names the collapsing curve if one did."""

    kind: str
    curve: int | None = None

    def __post_init__(self):
        if self.kind not in _STOP_KINDS:
            raise ValueError(f"unknown stop reason {self.kind!r}")
        if (self.curve is not None) != (self.kind == LENGTH_COLLAPSE):
            raise ValueError("curve index is carried by length_collapse and nothing else")

    def __str__(self):
        if self.curve is not None:
            return f"{self.kind}(curve={self.curve})"
        return self.kind


@dataclass(frozen=True)
class GuardReport:
    passed: bool
    min_speed: float


@dataclass(frozen=True)
class RunResult:
    """Trajectory snapshots, per-step diagnostics, and the stop reason."""

    snapshots: tuple
    reports: tuple[StepReport, ...]
    stop: StopReason

    @property
    def final(self):
        return self.snapshots[-1]


def nonlinearity_f(gamma: TriodState, sigma: FrozenCoefficients) -> np.ndarray:
    """Forcing (1/|gamma_x|^2 - 1/|sigma_x|^2) gamma_xx, node-wise, shape (3, N+1, n)."""
    h = gamma.grid.h
    out = np.empty((3, gamma.grid.n_cells + 1, gamma.n_dim))
    for i, curve in enumerate(gamma.curves):
        _, s = checked_velocity(curve)
        a = second_derivative(curve.points, h)
        out[i] = (1.0 / (s * s) - 1.0 / (sigma.speeds[i] * sigma.speeds[i]))[:, None] * a
    return out


def nonlinearity_b(gamma: TriodState, sigma: FrozenCoefficients) -> np.ndarray:
    """Angle-condition defect at the junction, shape (n,).

    b = sum_i ( (1/|gamma^i_x| - 1/|sigma^i_x|) gamma^i_x
                + sigma^i_x <gamma^i_x, sigma^i_x> / |sigma^i_x|^3 )  at x=0.

    Together with the linearised angle row this makes the fixed point
    satisfy the exact unit-tangent sum condition.
    """
    h = gamma.grid.h
    out = np.zeros(gamma.n_dim)
    for i, curve in enumerate(gamma.curves):
        gv = _EDGE_STENCIL @ curve.points[:3] / (2.0 * h)
        gs = float(np.linalg.norm(gv))
        if gs <= 0.0:
            raise RegularityError("junction tangent degenerate while evaluating b")
        sv = sigma.junction_velocity[i]
        ss = sigma.junction_speed[i]
        out += (1.0 / gs - 1.0 / ss) * gv + sv * float(gv @ sv) / ss**3
    return out


def regularity_guard(state, floor: float) -> GuardReport:
    """Check the smallest parametrisation speed against a floor."""
    ms = min_speed(state)
    return GuardReport(passed=ms >= floor, min_speed=ms)


def _displacement(a: TriodState, b: TriodState) -> float:
    return max(
        float(np.max(np.linalg.norm(ca.points - cb.points, axis=1)))
        for ca, cb in zip(a.curves, b.curves)
    )


def diagnostics_report(state, picard_iters: int = 0,
                       picard_final_residual: float = 0.0) -> StepReport:
    """StepReport snapshot of a state outside the stepping loop (e.g. t=0)."""
    if isinstance(state, TriodState):
        lengths = tuple(length(c) for c in state.curves)
        angle = junction_residuals(state).angle_residual
        time = state.time
    else:
        curve = state.curve if isinstance(state, SingleCurveState) else state
        lengths = (length(curve),)
        angle = math.nan
        time = getattr(state, "time", 0.0)
    return StepReport(
        time=time,
        lengths=lengths,
        total_length=float(sum(lengths)),
        l2_curvature=l2_curvature(state),
        angle_residual=angle,
        min_speed=min_speed(state),
        picard_iters=picard_iters,
        picard_final_residual=picard_final_residual,
    )


def step(state: TriodState, coeffs: FrozenCoefficients,
         config: FlowConfig) -> tuple[TriodState, StepReport]:
    """One backward-Euler step with Picard correction of the nonlinearity.

    The iterate displacement sequence must decrease monotonically and drop
    below picard_tol within max_picard sweeps; anything else raises
    PicardDivergence rather than silently accepting a state.
    """
    floor = config.reg_floor_factor * coeffs.min_speed
    residuals = junction_residuals(state)
    if not residuals.admissible_within(config.angle_tol):
        raise InadmissibleInitialData(
            f"state not admissible within {config.angle_tol:g}: "
            f"angle residual {residuals.angle_residual:.3e}, "
            f"concurrency residual {residuals.concurrency_residual:.3e}",
            residuals=residuals,
        )
    guard = regularity_guard(state, floor)
    if not guard.passed:
        raise RegularityError(
            f"min speed {guard.min_speed:.3e} below regularity floor {floor:.3e}"
        )

    psi = triod_arrays(state)
    system = None
    gamma_k = state
    displacements: list[float] = []
    converged = False
    for iteration in range(1, config.max_picard + 1):
        data = LinearData(
            f=nonlinearity_f(gamma_k, coeffs),
            eta=state.endpoints,
            b=nonlinearity_b(gamma_k, coeffs),
            psi=psi,
        )
        if system is None:
            system = assemble(coeffs, data, config.dt)
        else:
            refresh_rhs(system, data)
        gamma_next = solve(system)
        if min_speed(gamma_next) < floor:
            raise RegularityError(
                "parametrisation speed dropped below the regularity floor mid-iteration"
            )
        disp = _displacement(gamma_next, gamma_k)
        displacements.append(disp)
        gamma_k = gamma_next
        if disp < config.picard_tol:
            converged = True
            break
        if iteration >= 2 and disp >= displacements[-2]:
            raise PicardDivergence(
                f"fixed-point displacement grew at sweep {iteration}: "
                f"{displacements[-2]:.3e} -> {disp:.3e}",
                iterations=iteration,
                displacements=displacements,
            )
    if not converged:
        raise PicardDivergence(
            f"no contraction below {config.picard_tol:g} within "
            f"{config.max_picard} sweeps (last displacement {displacements[-1]:.3e})",
            iterations=config.max_picard,
            displacements=displacements,
        )

    report = diagnostics_report(
        gamma_k, picard_iters=len(displacements),
        picard_final_residual=displacements[-1],
    )
    return gamma_k, report


class _SingleCurveStepper:
    """Backward-Euler stepping for the junction-free validation mode.

    The implicit operator acts component-wise, so each step solves n
    independent tridiagonal systems: cyclic ones (rank-one corner
    correction) for a closed loop, Dirichlet-pinned ones for an arc.
    """

    def __init__(self, sigma: CurveState, dt: float, reg_floor: float):
        _, s = checked_velocity(sigma)
        if float(s.min()) < reg_floor:
            raise RegularityError(
                f"reference speed {float(s.min()):.3e} below floor {reg_floor:.3e}"
            )
        self.sigma_speeds = s
        self.closed = sigma.closed
        self.h = sigma.grid.h
        self.dt = dt
        hh = self.h * self.h
        if self.closed:
            c = 1.0 / (s[:-1] ** 2)
            diag = 1.0 / dt + 2.0 * c / hh
            off = -c / hh
            self._cyclic = _CyclicTridiag(diag, off, off, off[0], off[-1])
        else:
            m = s.shape[0]
            c = 1.0 / (s[1:-1] ** 2)
            ab = np.zeros((3, m))
            ab[1, 0] = ab[1, -1] = 1.0
            ab[1, 1:-1] = 1.0 / dt + 2.0 * c / hh
            ab[0, 2:] = -c / hh
            ab[2, :-2] = -c / hh
            self._ab = ab

    def forcing(self, curve: CurveState) -> np.ndarray:
        _, s = checked_velocity(curve)
        a = second_derivative(curve.points, self.h, self.closed)
        return (1.0 / (s * s) - 1.0 / (self.sigma_speeds * self.sigma_speeds))[:, None] * a

    def advance(self, psi: np.ndarray, curve_k: CurveState) -> np.ndarray:
        f = self.forcing(curve_k)
        if self.closed:
            rhs = psi[:-1] / self.dt + f[:-1]
            new = self._cyclic.solve(rhs)
            return np.vstack([new, new[0]])
        rhs = psi / self.dt + f
        rhs[0] = psi[0]
        rhs[-1] = psi[-1]
        return scipy.linalg.solve_banded((1, 1), self._ab, rhs)


class _CyclicTridiag:
    """Direct solver for a tridiagonal system with periodic corner entries."""

    def __init__(self, diag, lower, upper, corner_top, corner_bottom):
        m = diag.shape[0]
        if m < 3:
            raise ValueError("cyclic system needs at least 3 unknowns")
        gam = -float(diag[0])
        ab = np.zeros((3, m))
        ab[1] = diag
        ab[1, 0] -= gam
        ab[1, -1] -= corner_top * corner_bottom / gam
        ab[0, 1:] = upper[:-1]
        ab[2, :-1] = lower[1:]
        self.ab = ab
        self.gam = gam
        self.v_last = corner_top / gam
        self.corner_bottom = float(corner_bottom)
        self.m = m

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if rhs.ndim == 1:
            rhs = rhs[:, None]
        u = np.zeros(self.m)
        u[0] = self.gam
        u[-1] = self.corner_bottom
        stacked = np.column_stack([rhs, u])
        try:
            sol = scipy.linalg.solve_banded((1, 1), self.ab, stacked)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystemError(f"cyclic tridiagonal solve failed: {exc}") from exc
        z = sol[:, -1]
        y = sol[:, :-1]
        denom = 1.0 + z[0] + self.v_last * z[-1]
        if abs(denom) < 1e-300:
            raise SingularSystemError("cyclic correction denominator vanished")
        factor = (y[0, :] + self.v_last * y[-1, :]) / denom
        return y - np.outer(z, factor)


def step_curve(state: SingleCurveState, sigma: CurveState,
               config: FlowConfig) -> tuple[SingleCurveState, StepReport]:
    """Single-curve analogue of ``step``; same Picard and guard behaviour."""
    floor = config.reg_floor_factor * float(speed(sigma).min())
    stepper = _SingleCurveStepper(sigma, config.dt, floor)
    psi = np.array(state.curve.points)
    curve_k = state.curve
    displacements: list[float] = []
    converged = False
    for iteration in range(1, config.max_picard + 1):
        new_points = stepper.advance(psi, curve_k)
        if not np.all(np.isfinite(new_points)):
            raise SingularSystemError("single-curve solve produced non-finite values")
        curve_next = curve_k.with_points(new_points)
        if float(speed(curve_next).min()) < floor:
            raise RegularityError(
                "parametrisation speed dropped below the regularity floor mid-iteration"
            )
        disp = float(np.max(np.linalg.norm(curve_next.points - curve_k.points, axis=1)))
        displacements.append(disp)
        curve_k = curve_next
        if disp < config.picard_tol:
            converged = True
            break
        if iteration >= 2 and disp >= displacements[-2]:
            raise PicardDivergence(
                f"fixed-point displacement grew at sweep {iteration}",
                iterations=iteration,
                displacements=displacements,
            )
    if not converged:
        raise PicardDivergence(
            f"no contraction below {config.picard_tol:g} within {config.max_picard} sweeps",
            iterations=config.max_picard,
            displacements=displacements,
        )
    new_state = SingleCurveState(curve_k, state.time + config.dt)
    report = diagnostics_report(
        new_state, picard_iters=len(displacements),
        picard_final_residual=displacements[-1],
    )
    return new_state, report


def _resolve_thresholds(config: FlowConfig, initial) -> FlowConfig:
    from .geometry import total_length

    l0 = total_length(initial)
    h = initial.grid.h
    updates = {}
    if config.length_collapse_threshold is None:
        updates["length_collapse_threshold"] = 5.0 * h * l0
    if config.curvature_blowup_threshold is None:
        updates["curvature_blowup_threshold"] = 1e3 / l0
    return replace(config, **updates) if updates else config


def _monitor(report: StepReport, config: FlowConfig, floor: float) -> StopReason | None:
    # Tie-break priority: length collapse, then curvature blow-up, then floor.
    shortest = int(np.argmin(report.lengths))
    if report.lengths[shortest] <= config.length_collapse_threshold:
        return StopReason(LENGTH_COLLAPSE, curve=shortest)
    if report.l2_curvature >= config.curvature_blowup_threshold:
        return StopReason(CURVATURE_BLOWUP)
    if report.min_speed < floor:
        return StopReason(REGULARITY_FLOOR)
    return None


def run(initial, config: FlowConfig) -> RunResult:
    """March a state to the horizon, or to whichever monitor fires first.

    ``initial`` may be a TriodState or a SingleCurveState/CurveState (the
    junction-free validation mode).  Coefficients are refrozen at the
    current state every ``relinearize_every`` steps; snapshots are kept
    every ``snapshot_every`` steps plus the final state.  Optionally each
    accepted step is followed by a constant-speed resampling.
    """
    if isinstance(initial, CurveState):
        initial = SingleCurveState(initial, 0.0)
    is_triod = isinstance(initial, TriodState)
    if is_triod:
        residuals = junction_residuals(initial)
        if not residuals.admissible_within(config.angle_tol):
            raise InadmissibleInitialData(
                f"initial triod violates the junction conditions: "
                f"angle residual {residuals.angle_residual:.3e} "
                f"(tol {config.angle_tol:g}), concurrency residual "
                f"{residuals.concurrency_residual:.3e}",
                residuals=residuals,
            )
    config = _resolve_thresholds(config, initial)

    n_steps = max(1, math.ceil(config.t_end / config.dt - 1e-9))
    state = initial
    snapshots = [state]
    reports: list[StepReport] = []
    stop: StopReason | None = None
    coeffs = None
    floor = math.inf
    for k in range(n_steps):
        if k % config.relinearize_every == 0:
            if is_triod:
                floor = config.reg_floor_factor * min_speed(state)
                coeffs = FrozenCoefficients(state, reg_floor=floor)
            else:
                coeffs = state.curve
                floor = config.reg_floor_factor * float(speed(coeffs).min())
        try:
            if is_triod:
                state, report = step(state, coeffs, config)
            else:
                state, report = step_curve(state, coeffs, config)
        except PicardDivergence:
            stop = StopReason(PICARD_DIVERGENCE)
            break
        reports.append(report)
        if config.resample:
            state = resample_state(state)
        if (k + 1) % config.snapshot_every == 0:
            snapshots.append(state)
        stop = _monitor(report, config, floor)
        if stop is not None:
            break
    if stop is None:
        stop = StopReason(HORIZON_REACHED)
    if snapshots[-1] is not state:
        snapshots.append(state)
    return RunResult(snapshots=tuple(snapshots), reports=tuple(reports), stop=stop)
