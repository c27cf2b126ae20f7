"""Angle wrapping, quaternion algebra and rotation-matrix helpers.

Quaternions are scalar-first (w, x, y, z) with the Hamilton product.
"""

from __future__ import annotations

import numpy as np


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi] via atan2; keeps trig well conditioned."""
    return float(np.arctan2(np.sin(theta), np.cos(theta)))


def rot2d(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def quat_mul(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Hamilton product q ⊗ p, scalar-first."""
    qw, qv = q[0], q[1:]
    pw, pv = p[0], p[1:]
    return np.concatenate((
        [qw * pw - qv @ pv],
        qw * pv + pw * qv + np.cross(qv, pv),
    ))


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix for a unit quaternion (homogeneous scalar-first formula)."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_to_rotmat_grads(q: np.ndarray) -> np.ndarray:
    """Partial derivatives dR/dq_i of the homogeneous formula, shape (4, 3, 3)."""
    w, x, y, z = q
    dw = 2.0 * np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]], dtype=float)
    dx = 2.0 * np.array([[0, y, z], [y, -2 * x, -w], [z, w, -2 * x]], dtype=float)
    dy = 2.0 * np.array([[-2 * y, x, w], [x, 0, z], [-w, z, -2 * y]], dtype=float)
    dz = 2.0 * np.array([[-2 * z, -w, x], [w, -2 * z, y], [x, y, 0]], dtype=float)
    return np.stack([dw, dx, dy, dz])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_rates_matrix(q: np.ndarray) -> np.ndarray:
    """Matrix G(q) with q̇ = G(q) ω for body rates: columns ½ q ⊗ (0, e_j), shape (4, 3)."""
    w, x, y, z = q
    return 0.5 * np.array([
        [-x, -y, -z],
        [w, -z, y],
        [z, w, -x],
        [-y, x, w],
    ])


def random_unit_quats(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform random unit quaternions via normalized Gaussians, shape (n, 4)."""
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def rotmat_from_zaxis_yaw(b3: np.ndarray, ref_yaw: float = 0.0) -> np.ndarray:
    """Rotation with third column b3 and heading taken from a reference yaw.

    b2 = b3 × c1 / ||b3 × c1|| with c1 = (cos ref_yaw, sin ref_yaw, 0); b1 = b2 × b3.
    Falls back to c1 = (0, 1, 0) when b3 is parallel to the reference direction.
    """
    b3 = np.asarray(b3, dtype=float)
    b3 = b3 / np.linalg.norm(b3)
    c1 = np.array([np.cos(ref_yaw), np.sin(ref_yaw), 0.0])
    u = np.cross(b3, c1)
    nu = np.linalg.norm(u)
    if nu < 1e-8:
        c1 = np.array([0.0, 1.0, 0.0])
        u = np.cross(b3, c1)
        nu = np.linalg.norm(u)
    b2 = u / nu
    b1 = np.cross(b2, b3)
    return np.column_stack([b1, b2, b3])


def rotmat_from_zaxis_yaw_jac(k: np.ndarray, ref_yaw: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """R_des(k) built from the unnormalized direction k, and dR_des/dk, shape (3, 3, 3).

    Chain: b3 = k/||k||, u = b3 × c1, b2 = u/||u||, b1 = b2 × b3. The Jacobian
    entries J[:, :, l] collect dR_des/dk_l.
    """
    k = np.asarray(k, dtype=float)
    nk = np.linalg.norm(k)
    b3 = k / nk
    db3 = (np.eye(3) - np.outer(b3, b3)) / nk            # (3, 3) = db3/dk
    c1 = np.array([np.cos(ref_yaw), np.sin(ref_yaw), 0.0])
    u = np.cross(b3, c1)
    nu = np.linalg.norm(u)
    if nu < 1e-8:
        c1 = np.array([0.0, 1.0, 0.0])
        u = np.cross(b3, c1)
        nu = np.linalg.norm(u)
    du = -skew(c1) @ db3                                  # d(b3×c1)/dk
    b2 = u / nu
    db2 = ((np.eye(3) - np.outer(b2, b2)) / nu) @ du
    b1 = np.cross(b2, b3)
    db1 = -skew(b3) @ db2 + skew(b2) @ db3
    R = np.column_stack([b1, b2, b3])
    J = np.zeros((3, 3, 3))
    for l in range(3):
        J[:, 0, l] = db1[:, l]
        J[:, 1, l] = db2[:, l]
        J[:, 2, l] = db3[:, l]
    return R, J
