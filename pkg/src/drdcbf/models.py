"""Dual-relative-degree system models: unicycle with drift, planar quadrotor,
3D quadrotor (moment-driven and body-rate-driven variants).

Each model packages drift f, the split actuation columns g1/g2, the position
output map, and closed-form Lie derivatives so the barrier pipeline never
differentiates dynamics numerically at runtime.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .numdiff import fd_dir
from .rotations import quat_mul, quat_normalize, quat_rates_matrix, quat_to_rotmat, wrap_angle


@dataclass(frozen=True)
class ControlAffineSystem:
    """Control-affine system ẋ = f(x) + g1(x) u1 + g2(x) u2 with a position output.

    lf_y holds L_f^i y for i = 0..r; lg1_lfr1_y / lg2_lfr1_y are the decoupling
    blocks at order r-1.  declared_drd is the (r, q) pair the model is built for.
    """

    name: str
    n: int
    m1: int
    m2: int
    p: int
    f: Callable[[np.ndarray], np.ndarray]
    g1: Callable[[np.ndarray], np.ndarray]
    g2: Callable[[np.ndarray], np.ndarray]
    output: Callable[[np.ndarray], np.ndarray]
    lf_y: tuple
    lg1_lfr1_y: Callable[[np.ndarray], np.ndarray]
    lg2_lfr1_y: Callable[[np.ndarray], np.ndarray]
    declared_drd: tuple
    postprocess: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    @property
    def r(self) -> int:
        return self.declared_drd[0]

    def g(self, x: np.ndarray) -> np.ndarray:
        return np.hstack([self.g1(x), self.g2(x)])

    def dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.f(x) + self.g1(x) @ u[: self.m1] + self.g2(x) @ u[self.m1 :]


# ---------------------------------------------------------------------------
# unicycle with constant drift
# ---------------------------------------------------------------------------

def unicycle_dynamics(state: np.ndarray, u: Sequence[float],
                      drift: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    """State derivative (d_x + v cosθ, d_y + v sinθ, ω) for state (x, y, θ)."""
    theta = state[2]
    v, omega = u
    return np.array([
        drift[0] + v * np.cos(theta),
        drift[1] + v * np.sin(theta),
        omega,
    ])


def unicycle(drift: Sequence[float] = (0.0, 0.0)) -> ControlAffineSystem:
    d = np.asarray(drift, dtype=float)

    def f(x):
        return np.array([d[0], d[1], 0.0])

    def g1(x):
        return np.array([[np.cos(x[2])], [np.sin(x[2])], [0.0]])

    def g2(x):
        return np.array([[0.0], [0.0], [1.0]])

    def post(x):
        x = x.copy()
        x[2] = wrap_angle(x[2])
        return x

    return ControlAffineSystem(
        name="unicycle",
        n=3, m1=1, m2=1, p=2,
        f=f, g1=g1, g2=g2,
        output=lambda x: x[:2].copy(),
        lf_y=(lambda x: x[:2].copy(), lambda x: d.copy()),
        lg1_lfr1_y=lambda x: np.array([[np.cos(x[2])], [np.sin(x[2])]]),
        lg2_lfr1_y=lambda x: np.zeros((2, 1)),
        declared_drd=(1, 1),
        postprocess=post,
        params={"drift": d.copy()},
    )


# ---------------------------------------------------------------------------
# planar quadrotor, state (x, z, θ, ẋ, ż, ω), inputs (τ, M)
# ---------------------------------------------------------------------------

def planar_quad_dynamics(state: np.ndarray, u: Sequence[float], gravity: float = 9.81) -> np.ndarray:
    """State derivative (ẋ, ż, ω, −τ sinθ, −g + τ cosθ, M)."""
    _, _, theta, xdot, zdot, omega = state
    tau, moment = u
    return np.array([
        xdot,
        zdot,
        omega,
        -tau * np.sin(theta),
        -gravity + tau * np.cos(theta),
        moment,
    ])


def planar_quad(gravity: float = 9.81) -> ControlAffineSystem:
    g = float(gravity)

    def f(x):
        return np.array([x[3], x[4], x[5], 0.0, -g, 0.0])

    def g1(x):
        return np.array([[0.0], [0.0], [0.0], [-np.sin(x[2])], [np.cos(x[2])], [0.0]])

    def g2(x):
        return np.array([[0.0], [0.0], [0.0], [0.0], [0.0], [1.0]])

    def post(x):
        x = x.copy()
        x[2] = wrap_angle(x[2])
        return x

    return ControlAffineSystem(
        name="planar_quad",
        n=6, m1=1, m2=1, p=2,
        f=f, g1=g1, g2=g2,
        output=lambda x: x[:2].copy(),
        lf_y=(
            lambda x: x[:2].copy(),
            lambda x: x[3:5].copy(),
            lambda x: np.array([0.0, -g]),
        ),
        lg1_lfr1_y=lambda x: np.array([[-np.sin(x[2])], [np.cos(x[2])]]),
        lg2_lfr1_y=lambda x: np.zeros((2, 1)),
        declared_drd=(2, 2),
        postprocess=post,
        params={"gravity": g},
    )


# ---------------------------------------------------------------------------
# 3D quadrotor, state (y, ẏ, q, ω) ∈ R^13, inputs (τ, M ∈ R^3)
# ---------------------------------------------------------------------------

_EZ = np.array([0.0, 0.0, 1.0])


def quad3d_dynamics(state: np.ndarray, u: Sequence[float], mass: float = 1.0,
                    inertia: np.ndarray | None = None, gravity: float = 9.81,
                    quat_tol: float = 1e-6) -> np.ndarray:
    """Full rigid-body derivative: ÿ = −g e_z + (τ/m) R(q) e_z, q̇ = ½ q ⊗ (0, ω),
    ω̇ = J⁻¹(M − ω × Jω).  The gyroscopic term lives in the drift so the motion
    is physical for every thrust value."""
    J = np.eye(3) if inertia is None else np.asarray(inertia, dtype=float)
    q = state[6:10]
    if abs(np.linalg.norm(q) - 1.0) > quat_tol:
        raise ValueError(f"non-unit quaternion (|q| = {np.linalg.norm(q):.8f})")
    omega = state[10:13]
    tau = float(u[0])
    M = np.asarray(u[1:4], dtype=float)
    R = quat_to_rotmat(q)
    return np.concatenate([
        state[3:6],
        -gravity * _EZ + (tau / mass) * (R @ _EZ),
        0.5 * quat_mul(q, np.concatenate(([0.0], omega))),
        np.linalg.solve(J, M - np.cross(omega, J @ omega)),
    ])


def _check_inertia(J: np.ndarray) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if not np.allclose(J, J.T):
        raise ValueError("inertia matrix must be symmetric")
    if np.any(np.linalg.eigvalsh(J) <= 0):
        raise ValueError("inertia matrix must be positive definite")
    return J


def _quat_post(x: np.ndarray, qslice: slice) -> np.ndarray:
    x = x.copy()
    x[qslice] = quat_normalize(x[qslice])
    return x


def quad3d(mass: float = 1.0, inertia: np.ndarray | None = None,
           gravity: float = 9.81) -> ControlAffineSystem:
    m = float(mass)
    g = float(gravity)
    J = _check_inertia(np.eye(3) if inertia is None else inertia)
    Jinv = np.linalg.inv(J)

    def f(x):
        q = x[6:10]
        omega = x[10:13]
        return np.concatenate([
            x[3:6],
            -g * _EZ,
            0.5 * quat_mul(q, np.concatenate(([0.0], omega))),
            -Jinv @ np.cross(omega, J @ omega),
        ])

    def g1(x):
        col = np.zeros((13, 1))
        col[3:6, 0] = quat_to_rotmat(x[6:10]) @ _EZ / m
        return col

    def g2(x):
        cols = np.zeros((13, 3))
        cols[10:13, :] = Jinv
        return cols

    return ControlAffineSystem(
        name="quad3d",
        n=13, m1=1, m2=3, p=3,
        f=f, g1=g1, g2=g2,
        output=lambda x: x[:3].copy(),
        lf_y=(
            lambda x: x[:3].copy(),
            lambda x: x[3:6].copy(),
            lambda x: -g * _EZ,
        ),
        lg1_lfr1_y=lambda x: (quat_to_rotmat(x[6:10]) @ _EZ).reshape(3, 1) / m,
        lg2_lfr1_y=lambda x: np.zeros((3, 3)),
        declared_drd=(2, 2),
        postprocess=lambda x: _quat_post(x, slice(6, 10)),
        params={"mass": m, "gravity": g, "inertia": J},
    )


def quad3d_rates(mass: float = 1.0, gravity: float = 9.81) -> ControlAffineSystem:
    """Thrust + body-rate variant, state (y, ẏ, q) ∈ R^10, inputs (τ, ω ∈ R^3).

    This is the reduced attitude-kinematics model used when an inner loop tracks
    angular-rate commands; the attitude Lyapunov function has direct authority
    over q̇ here.
    """
    m = float(mass)
    g = float(gravity)

    def f(x):
        return np.concatenate([x[3:6], -g * _EZ, np.zeros(4)])

    def g1(x):
        col = np.zeros((10, 1))
        col[3:6, 0] = quat_to_rotmat(x[6:10]) @ _EZ / m
        return col

    def g2(x):
        cols = np.zeros((10, 3))
        cols[6:10, :] = quat_rates_matrix(x[6:10])
        return cols

    return ControlAffineSystem(
        name="quad3d_rates",
        n=10, m1=1, m2=3, p=3,
        f=f, g1=g1, g2=g2,
        output=lambda x: x[:3].copy(),
        lf_y=(
            lambda x: x[:3].copy(),
            lambda x: x[3:6].copy(),
            lambda x: -g * _EZ,
        ),
        lg1_lfr1_y=lambda x: (quat_to_rotmat(x[6:10]) @ _EZ).reshape(3, 1) / m,
        lg2_lfr1_y=lambda x: np.zeros((3, 3)),
        declared_drd=(2, 1),
        postprocess=lambda x: _quat_post(x, slice(6, 10)),
        params={"mass": m, "gravity": g},
    )


# ---------------------------------------------------------------------------
# dual-relative-degree diagnostics
# ---------------------------------------------------------------------------

@dataclass
class DrdSampleCheck:
    """Pass/fail of the four dual-relative-degree conditions at one state."""

    low_order_zero: bool      # L_g L_f^i y = 0 for i < r-1
    lg2_zero: bool            # L_g2 L_f^{r-1} y = 0
    lg1_full_rank: bool       # rank L_g1 L_f^{r-1} y = m1
    cross_full_rank: bool     # rank L_g2 L_f^{q-1} L_g1 L_f^{r-1} y = m2

    @property
    def ok(self) -> bool:
        return self.low_order_zero and self.lg2_zero and self.lg1_full_rank and self.cross_full_rank


@dataclass
class DrdReport:
    declared: tuple
    n_samples: int
    passed: bool
    first_failure_state: np.ndarray | None
    first_failure: DrdSampleCheck | None
    min_lg1_sv: float
    min_cross_sv: float


def _rank_ge(mat: np.ndarray, k: int, tol: float) -> tuple[bool, float]:
    sv = np.linalg.svd(np.atleast_2d(mat), compute_uv=False)
    kth = sv[k - 1] if sv.size >= k else 0.0
    return bool(kth > tol), float(kth)


def check_dual_relative_degree(sys: ControlAffineSystem, samples: Sequence[np.ndarray],
                               tol: float = 1e-3, fd_step: float = 1e-6) -> DrdReport:
    """Sample-based check of the dual-relative-degree conditions.

    Low-order terms L_g L_f^i y and the cross block L_g2 L_f^{q-1} L_g1 L_f^{r-1} y
    are formed by finite-difference Lie differentiation (q ≤ 2); the order-(r-1)
    blocks come from the model's closed-form table.  Failures are reported, not
    raised, with the first offending state attached.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample state")
    r, q = sys.declared_drd
    if q > 2:
        raise NotImplementedError("finite-difference cross check only supports q <= 2")
    passed = True
    first_state = None
    first_check = None
    min_lg1 = np.inf
    min_cross = np.inf
    for x in samples:
        x = np.asarray(x, dtype=float)

        low_zero = True
        for i in range(r - 1):
            lf_i = sys.lf_y[i]
            for gcol in np.hstack([sys.g1(x), sys.g2(x)]).T:
                if np.max(np.abs(fd_dir(lf_i, x, gcol, fd_step))) > tol:
                    low_zero = False

        lg2_zero = bool(np.max(np.abs(sys.lg2_lfr1_y(x))) <= tol)
        lg1_ok, sv1 = _rank_ge(sys.lg1_lfr1_y(x), sys.m1, tol)
        min_lg1 = min(min_lg1, sv1)

        phi = sys.lg1_lfr1_y  # (p, m1) field whose Lie derivatives close the loop via u2
        if q == 1:
            target = phi
        else:
            def target(z, _phi=phi):
                return fd_dir(lambda w: _phi(w).ravel(), z, sys.f(z), fd_step)
        cross = np.column_stack([
            fd_dir(lambda z: np.asarray(target(z)).ravel(), x, gcol, fd_step)
            for gcol in sys.g2(x).T
        ]).reshape(sys.p * sys.m1, sys.m2)
        cross_ok, sv2 = _rank_ge(cross, sys.m2, tol)
        min_cross = min(min_cross, sv2)

        check = DrdSampleCheck(low_zero, lg2_zero, lg1_ok, cross_ok)
        if not check.ok and passed:
            passed = False
            first_state = x.copy()
            first_check = check
    return DrdReport(
        declared=(r, q),
        n_samples=len(samples),
        passed=passed,
        first_failure_state=first_state,
        first_failure=first_check,
        min_lg1_sv=float(min_lg1),
        min_cross_sv=float(min_cross),
    )
