"""One implicit time step of the linearised flow, as a banded linear system.

The flow equation gamma_t = gamma_xx / |gamma_x|^2 is linearised around a
frozen reference parametrisation sigma, giving

    gamma_t - gamma_xx / |sigma_x|^2 = f,

closed by Dirichlet data at x=1, the shared-junction (concurrency)
conditions at x=0, and the linearised 120-degree angle condition

    -sum_i ( gamma^i_x/|sigma^i_x| - sigma^i_x <gamma^i_x, sigma^i_x> / |sigma^i_x|^3 ) = b

at x=0.  A backward Euler step of size dt turns this into one square
block-banded system of dimension 3 n (N+1); unknowns are ordered
node-major (all three curves' node-j values adjacent) so the bandwidth
stays O(n), independent of N.

At the junction the three vector unknowns carry exactly 3n closure rows:
2n concurrency rows plus n angle rows built from the second-order
one-sided derivative stencil.  ``lopatinskii_shapiro_check`` verifies the
nondegeneracy of that boundary operator on decaying exponential modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from .errors import AssemblyError, InvalidLambdaError, SingularSystemError
from .geometry import CurveState, Grid, TriodState, speed

# Row tags for the assembled system.
ROW_INTERIOR = 0
ROW_ENDPOINT = 1
ROW_CONCURRENCY = 2
ROW_ANGLE = 3
ROW_JUNCTION_MOTION = 4  # reserved tag; the angle rows close the junction

ROW_TAG_NAMES = {
    ROW_INTERIOR: "interior",
    ROW_ENDPOINT: "endpoint",
    ROW_CONCURRENCY: "concurrency",
    ROW_ANGLE: "angle",
    ROW_JUNCTION_MOTION: "junction-motion",
}

# One-sided three-point stencil for d/dx at the first node, times 2h.
_EDGE_STENCIL = np.array([-3.0, 4.0, -1.0])

DEFAULT_LAMBDA_SAMPLES = (1.0 + 0.0j, 2.0 + 1.0j, 10.0 + 0.0j, 0.5 - 0.5j)
SINGULAR_VALUE_THRESHOLD = 1e-8
SOLVE_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class FrozenCoefficients:
    """Reference state sigma the step is linearised around, with cached speeds.

    ``reg_floor`` is the speed floor the caller wants enforced; assembly
    refuses coefficients whose minimum speed falls below it.
    """

    sigma: TriodState
    reg_floor: float = 0.0
    speeds: np.ndarray = field(init=False, repr=False)
    junction_velocity: np.ndarray = field(init=False, repr=False)
    junction_speed: np.ndarray = field(init=False, repr=False)
    junction_tangent: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.stack([speed(c) for c in self.sigma.curves])
        if not np.all(s > 0.0):
            raise AssemblyError("reference parametrisation is degenerate: |sigma_x| = 0")
        h = self.sigma.grid.h
        v0 = np.stack(
            [_EDGE_STENCIL @ c.points[:3] / (2.0 * h) for c in self.sigma.curves]
        )
        s0 = np.linalg.norm(v0, axis=1)
        object.__setattr__(self, "speeds", _ro(s))
        object.__setattr__(self, "junction_velocity", _ro(v0))
        object.__setattr__(self, "junction_speed", _ro(s0))
        object.__setattr__(self, "junction_tangent", _ro(v0 / s0[:, None]))

    @property
    def min_speed(self) -> float:
        return float(self.speeds.min())


def _ro(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LinearData:
    """Right-hand side of one linearised step.

    f    -- forcing, shape (3, N+1, n)
    eta  -- Dirichlet values at x=1, shape (3, n)
    b    -- angle-condition datum at x=0, shape (n,)
    psi  -- state at the start of the step, shape (3, N+1, n)
    """

    f: np.ndarray
    eta: np.ndarray
    b: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        for name in ("f", "eta", "b", "psi"):
            arr = _ro(getattr(self, name))
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"LinearData.{name} must be finite")
            object.__setattr__(self, name, arr)
        if self.f.shape != self.psi.shape or self.f.ndim != 3 or self.f.shape[0] != 3:
            raise ValueError("f and psi must both have shape (3, N+1, n)")
        n = self.f.shape[2]
        if self.eta.shape != (3, n) or self.b.shape != (n,):
            raise ValueError("eta must have shape (3, n) and b shape (n,)")


def triod_arrays(state: TriodState) -> np.ndarray:
    """Stack a triod's node values into shape (3, N+1, n)."""
    return np.stack([c.points for c in state.curves])


def data_from_state(coeffs: FrozenCoefficients, state: TriodState,
                    f: np.ndarray | None = None, b: np.ndarray | None = None) -> LinearData:
    """LinearData for stepping ``state`` forward: eta = fixed endpoints, psi = state."""
    n = state.n_dim
    shape = (3, state.grid.n_cells + 1, n)
    return LinearData(
        f=np.zeros(shape) if f is None else f,
        eta=state.endpoints,
        b=np.zeros(n) if b is None else b,
        psi=triod_arrays(state),
    )


@dataclass(frozen=True)
class CompatibilityReport:
    """Outcome of the linear compatibility check; lists each violated clause."""

    passed: bool
    tol: float
    clauses: tuple[tuple[str, float], ...]

    @property
    def violations(self) -> tuple[tuple[str, float], ...]:
        return tuple((name, r) for name, r in self.clauses if r > self.tol)

    def __str__(self):
        lines = [f"compatibility: {'pass' if self.passed else 'FAIL'} (tol {self.tol:g})"]
        lines += [f"  {name}: residual {r:.3e}" for name, r in self.clauses]
        return "\n".join(lines)


def angle_operator(junction_velocities: np.ndarray, coeffs: FrozenCoefficients) -> np.ndarray:
    """Linearised angle condition applied to junction derivatives, shape (3, n) -> (n,).

    Returns -sum_i ( v^i/|s^i| - s^i <v^i, s^i>/|s^i|^3 ) with s^i the frozen
    junction velocities of ``coeffs``; vanishes identically when the
    argument equals the frozen velocities themselves.
    """
    out = np.zeros(coeffs.sigma.n_dim)
    for i in range(3):
        v = junction_velocities[i]
        tau = coeffs.junction_tangent[i]
        out -= (v - tau * (v @ tau)) / coeffs.junction_speed[i]
    return out


def angle_operator_of_state(state: TriodState | np.ndarray, coeffs: FrozenCoefficients) -> np.ndarray:
    """Linearised angle operator evaluated on a triod's own one-sided derivatives."""
    pts = state if isinstance(state, np.ndarray) else triod_arrays(state)
    h = coeffs.sigma.grid.h
    v0 = np.einsum("m,imk->ik", _EDGE_STENCIL, pts[:, :3, :]) / (2.0 * h)
    return angle_operator(v0, coeffs)


def check_compatibility(data: LinearData, coeffs: FrozenCoefficients,
                        tol: float = 1e-10) -> CompatibilityReport:
    """Verify the initial datum psi is consistent with the boundary data.

    Checks psi^i(0) = psi^j(0), psi^i(1) = eta^i, and that the linearised
    angle operator applied to psi at x=0 equals b, each within ``tol``.
    """
    psi = data.psi
    conc = max(
        float(np.linalg.norm(psi[0, 0] - psi[1, 0])),
        float(np.linalg.norm(psi[1, 0] - psi[2, 0])),
        float(np.linalg.norm(psi[0, 0] - psi[2, 0])),
    )
    ends = float(max(np.linalg.norm(psi[i, -1] - data.eta[i]) for i in range(3)))
    angle = float(np.linalg.norm(angle_operator_of_state(psi, coeffs) - data.b))
    clauses = (("concurrency", conc), ("endpoint", ends), ("angle", angle))
    return CompatibilityReport(passed=all(r <= tol for _, r in clauses), tol=tol, clauses=clauses)


@dataclass(frozen=True)
class LinearStepSystem:
    """Assembled backward-Euler step: band-stored matrix, right-hand side, row tags.

    The matrix is square of dimension 3 n (N+1), stored in LAPACK band
    layout ``band[u + r - c, c] = A[r, c]`` with ``l``/``u`` sub/super
    bandwidths.  ``row_map[r]`` tags each row with one of the ROW_*
    constants.  ``time`` is the target time of the step.
    """

    band: np.ndarray
    rhs: np.ndarray
    row_map: np.ndarray
    l: int
    u: int
    n_cells: int
    n_dim: int
    dt: float
    time: float
    grid_h: float

    @property
    def dimension(self) -> int:
        return self.rhs.shape[0]

    def row_counts(self) -> dict[str, int]:
        return {
            name: int(np.count_nonzero(self.row_map == tag))
            for tag, name in ROW_TAG_NAMES.items()
        }

    def to_sparse(self) -> scipy.sparse.dia_matrix:
        offsets = self.u - np.arange(self.band.shape[0])
        return scipy.sparse.dia_matrix(
            (self.band, offsets), shape=(self.dimension, self.dimension)
        )

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def residual(self, x: np.ndarray) -> float:
        r = self.to_sparse() @ x - self.rhs
        scale = float(np.linalg.norm(self.rhs))
        return float(np.linalg.norm(r)) / (scale if scale > 0.0 else 1.0)


def _layout(n_cells: int, n_dim: int) -> tuple[int, int, int]:
    dim = 3 * n_dim * (n_cells + 1)
    l = 3 * n_dim
    u = 7 * n_dim - 1
    return dim, l, u


def assemble(coeffs: FrozenCoefficients, data: LinearData, dt: float) -> LinearStepSystem:
    """Build the banded backward-Euler system for one linearised step.

    Interior rows encode (I/dt - diag(1/|sigma_x|^2) D2) gamma_new =
    psi/dt + f; node-N rows pin gamma(1) = eta; node-0 rows carry the 2n
    concurrency conditions and the n linearised angle conditions = b.
    """
    if not (dt > 0.0 and np.isfinite(dt)):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    sigma = coeffs.sigma
    N = sigma.grid.n_cells
    n = sigma.n_dim
    h = sigma.grid.h
    if data.psi.shape != (3, N + 1, n):
        raise AssemblyError(
            f"data shaped {data.psi.shape}, coefficients expect {(3, N + 1, n)}"
        )
    if coeffs.min_speed < coeffs.reg_floor:
        raise AssemblyError(
            f"coefficients below regularity floor: min |sigma_x| = {coeffs.min_speed:.3e}"
            f" < {coeffs.reg_floor:.3e}"
        )

    dim, l, u = _layout(N, n)
    band = np.zeros((l + u + 1, dim))
    rhs = np.empty(dim)
    row_map = np.empty(dim, dtype=np.int8)
    stride = 3 * n

    # Interior rows, vectorised: row r = j*3n + i*n + c for j = 1..N-1.
    j = np.arange(1, N)
    i = np.arange(3)
    c = np.arange(n)
    rows = (j[:, None, None] * stride + i[None, :, None] * n + c[None, None, :]).ravel()
    coeff = 1.0 / (coeffs.speeds[:, 1:-1] ** 2)  # (3, N-1), indexed [i, j-1]
    coeff_rows = np.broadcast_to(coeff.T[:, :, None], (N - 1, 3, n)).ravel()
    band[u, rows] = 1.0 / dt + 2.0 * coeff_rows / (h * h)
    band[u - stride, rows + stride] = -coeff_rows / (h * h)
    band[u + stride, rows - stride] = -coeff_rows / (h * h)
    psi_slab = np.transpose(data.psi[:, 1:-1, :], (1, 0, 2)).ravel()
    force = np.transpose(data.f[:, 1:-1, :], (1, 0, 2)).ravel()
    rhs[rows] = psi_slab / dt + force
    row_map[rows] = ROW_INTERIOR

    # Endpoint rows: gamma^i(1) = eta^i.
    rN = N * stride + np.arange(stride)
    band[u, rN] = 1.0
    rhs[rN] = data.eta.ravel()
    row_map[rN] = ROW_ENDPOINT

    # Concurrency rows: gamma^1(0) - gamma^2(0) = 0, gamma^2(0) - gamma^3(0) = 0.
    for pair, (ia, ib) in enumerate(((0, 1), (1, 2))):
        for comp in range(n):
            r = pair * n + comp
            band[u + r - (ia * n + comp), ia * n + comp] = 1.0
            band[u + r - (ib * n + comp), ib * n + comp] = -1.0
            rhs[r] = 0.0
            row_map[r] = ROW_CONCURRENCY

    # Angle rows: -(sum_i P^i D+gamma^i(0) / |sigma^i_x(0)|) = b, with the
    # one-sided stencil D+ reaching nodes 0..2 of every curve.
    w = _EDGE_STENCIL / (2.0 * h)
    eye = np.eye(n)
    for i_curve in range(3):
        tau = coeffs.junction_tangent[i_curve]
        block = -(eye - np.outer(tau, tau)) / coeffs.junction_speed[i_curve]
        for m in range(3):
            for rc in range(n):
                r = 2 * n + rc
                for cc in range(n):
                    val = block[rc, cc] * w[m]
                    if val != 0.0:
                        col = m * stride + i_curve * n + cc
                        band[u + r - col, col] += val
    rhs[2 * n: 3 * n] = data.b
    row_map[2 * n: 3 * n] = ROW_ANGLE

    return LinearStepSystem(
        band=band, rhs=rhs, row_map=row_map, l=l, u=u, n_cells=N, n_dim=n,
        dt=dt, time=sigma.time + dt, grid_h=h,
    )


def refresh_rhs(system: LinearStepSystem, data: LinearData) -> None:
    """Update the right-hand side of an assembled system in place.

    The matrix depends only on the frozen coefficients and dt, so repeated
    fixed-point sweeps within one step can reuse it and rewrite f, b, eta.
    """
    N, n = system.n_cells, system.n_dim
    stride = 3 * n
    rows = (np.arange(1, N)[:, None, None] * stride
            + np.arange(3)[None, :, None] * n
            + np.arange(n)[None, None, :]).ravel()
    system.rhs[rows] = (np.transpose(data.psi[:, 1:-1, :], (1, 0, 2)).ravel() / system.dt
                        + np.transpose(data.f[:, 1:-1, :], (1, 0, 2)).ravel())
    system.rhs[N * stride: (N + 1) * stride] = data.eta.ravel()
    system.rhs[2 * n: 3 * n] = data.b


def solve(system: LinearStepSystem) -> TriodState:
    """Direct banded solve of one assembled step; returns the updated triod.

    The relative residual is verified against 1e-10; rank deficiency (a
    degenerate reference state or violated junction nondegeneracy) raises
    SingularSystemError.  The solution is repackaged with the junction node
    stored shared (mean of the three solved values) and the endpoint nodes
    pinned bit-exactly to the Dirichlet data.
    """
    try:
        x = scipy.linalg.solve_banded((system.l, system.u), system.band, system.rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"banded factorisation failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("banded solve produced non-finite values")
    res = system.residual(x)
    if res > SOLVE_RESIDUAL_TOL:
        raise SingularSystemError(f"solve residual {res:.3e} exceeds {SOLVE_RESIDUAL_TOL:g}")
    return repackage(x, system)


def repackage(x: np.ndarray, system: LinearStepSystem) -> TriodState:
    """Reshape a solution vector into a TriodState sharing its junction node."""
    N, n = system.n_cells, system.n_dim
    y = x.reshape(N + 1, 3, n)
    junction = y[0].mean(axis=0)
    stride = 3 * n
    eta = system.rhs[N * stride: (N + 1) * stride].reshape(3, n)
    grid = Grid(N)
    curves = []
    for i in range(3):
        pts = y[:, i, :].copy()
        pts[0] = junction
        pts[-1] = eta[i]
        curves.append(CurveState(pts, grid))
    return TriodState(tuple(curves), eta, time=system.time)


@dataclass(frozen=True)
class BoundaryCheckReport:
    """Spectral nondegeneracy of the junction boundary operator.

    For each sample lambda with positive real part, decaying modes
    rho^i(x) = c exp(-mu_i x) with mu_i = |sigma^i_x(0)| sqrt(lambda)
    reduce the junction conditions to the n x n complex matrix
    M(lambda) = sum_i mu_i P^i / |sigma^i_x(0)|, P^i = Id - tau^i tau^i^T,
    acting on the common junction value.  The check passes when the
    smallest singular value of every sample stays above the threshold.
    The companion condition at the fixed endpoints only admits the zero
    decaying mode and is reported as trivially nonsingular.
    """

    entries: tuple[tuple[complex, float], ...]
    passed: bool
    threshold: float
    endpoints_nonsingular: bool = True

    @property
    def min_singular_value(self) -> float:
        return min(sv for _, sv in self.entries)

    def __str__(self):
        lines = [
            f"  lambda = {lam.real:g}{lam.imag:+g}i : min singular value {sv:.6e}"
            for lam, sv in self.entries
        ]
        lines.append("  fixed endpoints: trivially nonsingular")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def lopatinskii_shapiro_check(
    coeffs: FrozenCoefficients,
    lambda_samples=DEFAULT_LAMBDA_SAMPLES,
    threshold: float = SINGULAR_VALUE_THRESHOLD,
) -> BoundaryCheckReport:
    """Numerically verify the Lopatinskii-Shapiro condition at the junction."""
    entries = []
    n = coeffs.sigma.n_dim
    eye = np.eye(n)
    for lam in lambda_samples:
        lam = complex(lam)
        if not lam.real > 0.0:
            raise InvalidLambdaError(f"lambda = {lam} must have positive real part")
        root = np.sqrt(lam)
        m = np.zeros((n, n), dtype=complex)
        for i in range(3):
            tau = coeffs.junction_tangent[i]
            mu = coeffs.junction_speed[i] * root
            m += (mu / coeffs.junction_speed[i]) * (eye - np.outer(tau, tau))
        sv = float(np.linalg.svd(m, compute_uv=False)[-1])
        entries.append((lam, sv))
    passed = min(sv for _, sv in entries) > threshold
    return BoundaryCheckReport(entries=tuple(entries), passed=passed, threshold=threshold)
