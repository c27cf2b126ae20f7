"""Output-coordinate machinery: the integrator-chain surrogate, barrier
certificates h0 on output coordinates, and a smooth safety-enforcing
controller for that chain.

The chain surrogate is d/dt ŷ = A ŷ + B v with ŷ the stacked output
derivatives (y, L_f y, ..., L_f^{r-1} y); certificates are scalar fields on ŷ
paired with a smooth controller k̂ that keeps the margin

    ∂h0/∂ŷ (A ŷ + B k̂) + γ h0 − (1/ε) ||∂h0/∂ŷ B||²

strictly positive (checked by sampling, see verify_issf_linear).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import ControlAffineSystem
from .sampling import box_samples


# ---------------------------------------------------------------------------
# integrator chain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutputChainSpec:
    """Block shift pair (A, B) plus the output-coordinate map of the model."""

    p: int
    r: int
    A: np.ndarray
    B: np.ndarray
    ycoords: Callable[[np.ndarray], np.ndarray]
    ycoords_jac: Callable[[np.ndarray], np.ndarray]

    @property
    def dim(self) -> int:
        return self.p * self.r


def chain_matrices(p: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    """A is the upper block-shift (zero last block row), B selects the last block row."""
    A = np.zeros((p * r, p * r))
    if r > 1:
        A[: p * (r - 1), p:] = np.eye(p * (r - 1))
    B = np.zeros((p * r, p))
    B[p * (r - 1):, :] = np.eye(p)
    return A, B


def output_chain(sys: ControlAffineSystem) -> OutputChainSpec:
    """Chain spec for a model, stacking its tabulated Lie derivatives."""
    p, r = sys.p, sys.r
    A, B = chain_matrices(p, r)

    def ycoords(x: np.ndarray) -> np.ndarray:
        return np.concatenate([sys.lf_y[i](x) for i in range(r)])

    # outputs are positions and L_f y are velocity states for every model here,
    # so the coordinate Jacobian is a constant selector
    Y = _selector_jac(sys)

    return OutputChainSpec(p=p, r=r, A=A, B=B, ycoords=ycoords,
                           ycoords_jac=lambda x: Y)


def _selector_jac(sys: ControlAffineSystem) -> np.ndarray:
    p, r = sys.p, sys.r
    Y = np.zeros((p * r, sys.n))
    Y[:p, :p] = np.eye(p)
    if r == 2:
        vel = {"planar_quad": 3, "quad3d": 3, "quad3d_rates": 3}[sys.name]
        Y[p:, vel: vel + p] = np.eye(p)
    return Y


# ---------------------------------------------------------------------------
# scalar fields on output coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """Differentiable scalar function on chain coordinates with grad and Hessian."""

    dim: int
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    hess_is_constant: bool = False


def ellipse_h0(y: np.ndarray, center: np.ndarray, P: np.ndarray) -> float:
    """1 − (y − c)ᵀ P (y − c) for diagonal positive P."""
    P = np.asarray(P, dtype=float)
    if np.any(np.diag(P) <= 0):
        raise ValueError("ellipse weights must be positive")
    d = np.asarray(y, dtype=float) - np.asarray(center, dtype=float)
    return float(1.0 - d @ P @ d)


def ellipse_field(center, P) -> ScalarField:
    center = np.asarray(center, dtype=float)
    P = np.asarray(P, dtype=float)
    if np.any(np.diag(P) <= 0):
        raise ValueError("ellipse weights must be positive")
    return ScalarField(
        dim=center.size,
        value=lambda y: float(1.0 - (y - center) @ P @ (y - center)),
        grad=lambda y: -2.0 * P @ (y - center),
        hess=lambda y: -2.0 * P,
        hess_is_constant=True,
    )


def obstacle_h(y: np.ndarray, y_obs: np.ndarray, r_o: float) -> float:
    """||y − y_obs||² − r_o²."""
    if r_o <= 0:
        raise ValueError("obstacle radius must be positive")
    d = np.asarray(y, dtype=float) - np.asarray(y_obs, dtype=float)
    return float(d @ d - r_o**2)


def obstacle_field(y_obs, r_o: float) -> ScalarField:
    y_obs = np.asarray(y_obs, dtype=float)
    if r_o <= 0:
        raise ValueError("obstacle radius must be positive")
    dim = y_obs.size
    return ScalarField(
        dim=dim,
        value=lambda y: float((y - y_obs) @ (y - y_obs) - r_o**2),
        grad=lambda y: 2.0 * (y - y_obs),
        hess=lambda y: 2.0 * np.eye(dim),
        hess_is_constant=True,
    )


def geofence_h(y: np.ndarray, x_geo: float) -> float:
    """x_geo − x, a half-plane bound on the first coordinate."""
    return float(x_geo - np.asarray(y, dtype=float)[0])


def geofence_field(x_geo: float, dim: int = 3) -> ScalarField:
    grad = np.zeros(dim)
    grad[0] = -1.0
    return ScalarField(
        dim=dim,
        value=lambda y: float(x_geo - y[0]),
        grad=lambda y: grad.copy(),
        hess=lambda y: np.zeros((dim, dim)),
        hess_is_constant=True,
    )


def hocbf_extend(base: ScalarField, alpha_e: float) -> ScalarField:
    """High-order extension onto (y, ẏ): h0 = ∇h_b(y)ᵀ ẏ + α_e h_b(y).

    Requires a base with constant Hessian (true for the quadratic/linear bases
    here) so the extension's Hessian is exact.
    """
    if alpha_e <= 0:
        raise ValueError("alpha_e must be positive")
    if not base.hess_is_constant:
        raise ValueError("hocbf_extend needs a base with constant Hessian")
    p = base.dim

    def value(yhat):
        y, yd = yhat[:p], yhat[p:]
        return float(base.grad(y) @ yd + alpha_e * base.value(y))

    def grad(yhat):
        y, yd = yhat[:p], yhat[p:]
        return np.concatenate([base.hess(y) @ yd + alpha_e * base.grad(y), base.grad(y)])

    def hess(yhat):
        y = yhat[:p]
        Hb = base.hess(y)
        H = np.zeros((2 * p, 2 * p))
        H[:p, :p] = alpha_e * Hb
        H[:p, p:] = Hb
        H[p:, :p] = Hb
        return H

    return ScalarField(dim=2 * p, value=value, grad=grad, hess=hess)


def backstep_extend(base: ScalarField, k_v: "SmoothController", mu_b: float) -> ScalarField:
    """Backstepping extension onto (y, ẏ): h0 = h_b(y) − ||ẏ − k_v(y)||² / (2 μ_b)."""
    if mu_b <= 0:
        raise ValueError("mu_b must be positive")
    p = base.dim

    def value(yhat):
        y, yd = yhat[:p], yhat[p:]
        err = yd - k_v.value(y)
        return float(base.value(y) - err @ err / (2.0 * mu_b))

    def grad(yhat):
        y, yd = yhat[:p], yhat[p:]
        err = yd - k_v.value(y)
        Jv = k_v.jac(y)
        return np.concatenate([
            base.grad(y) + Jv.T @ err / mu_b,
            -err / mu_b,
        ])

    def hess(yhat):
        y, yd = yhat[:p], yhat[p:]
        err = yd - k_v.value(y)
        Jv = k_v.jac(y)
        Hv = k_v.hess(y)  # (p, p, p)
        H = np.zeros((2 * p, 2 * p))
        H[:p, :p] = base.hess(y) + (np.einsum("i,ijk->jk", err, Hv) - Jv.T @ Jv) / mu_b
        H[:p, p:] = Jv.T / mu_b
        H[p:, :p] = Jv / mu_b
        H[p:, p:] = -np.eye(p) / mu_b
        return H

    return ScalarField(dim=2 * p, value=value, grad=grad, hess=hess)


# ---------------------------------------------------------------------------
# chain controllers
# ---------------------------------------------------------------------------

class SmoothController:
    """Interface: smooth map from chain coordinates to the chain input v ∈ R^p."""

    def value(self, yhat: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jac(self, yhat: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, yhat: np.ndarray, step: float = 1e-5) -> np.ndarray:
        """Component Hessians (p, dim, dim); default central differences of jac."""
        J0 = self.jac(yhat)
        out = np.zeros((J0.shape[0], yhat.size, yhat.size))
        for l in range(yhat.size):
            e = np.zeros(yhat.size)
            e[l] = step
            out[:, :, l] = (self.jac(yhat + e) - self.jac(yhat - e)) / (2.0 * step)
        # symmetrize to damp finite-difference asymmetry
        return 0.5 * (out + np.transpose(out, (0, 2, 1)))


class AffineController(SmoothController):
    """v = K ŷ + c."""

    def __init__(self, K: np.ndarray, c: np.ndarray | None = None):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.c = np.zeros(self.K.shape[0]) if c is None else np.asarray(c, dtype=float)

    def value(self, yhat):
        return self.K @ yhat + self.c

    def jac(self, yhat):
        return self.K.copy()

    def hess(self, yhat, step=1e-5):
        return np.zeros((self.K.shape[0], yhat.size, yhat.size))


def zero_controller(p: int, dim: int) -> AffineController:
    return AffineController(np.zeros((p, dim)))


def goal_pd_controller(goal, kp: float, kd: float = 0.0, order: int = 1) -> AffineController:
    """-kp (y − goal) for order 1, -kp (y − goal) − kd ẏ for order 2."""
    goal = np.asarray(goal, dtype=float)
    p = goal.size
    if order == 1:
        return AffineController(-kp * np.eye(p), kp * goal)
    K = np.hstack([-kp * np.eye(p), -kd * np.eye(p)])
    return AffineController(K, kp * goal)


def _softplus(z: float, kappa: float) -> float:
    kz = kappa * z
    if kz > 30.0:
        return float(z)
    return float(np.log1p(np.exp(kz)) / kappa)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return float(1.0 / (1.0 + np.exp(-z)))
    ez = np.exp(z)
    return float(ez / (1.0 + ez))


class SoftplusSafeController(SmoothController):
    """Softplus-relaxed half-space filter on a chain nominal.

    k̂(ŷ) = k_nom(ŷ) + a σ with a = (∂h0/∂ŷ B)ᵀ,
    ψ = ∂h0/∂ŷ (A ŷ + B k_nom) + γ h0 − ||a||²/ε,
    σ = softplus_κ(−ψ) / max(||a||², κ²).

    The filtered margin is strictly positive wherever ||a||² ≥ κ²; elsewhere the
    max() cap trades the guarantee for smoothness and the sampler arbitrates.
    """

    def __init__(self, field: ScalarField, A: np.ndarray, B: np.ndarray,
                 gamma: float, epsilon: float, nominal: SmoothController,
                 kappa: float = 10.0):
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        self.field = field
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.gamma = float(gamma)
        self.epsilon = float(epsilon)
        self.nominal = nominal
        self.kappa = float(kappa)

    def _pieces(self, yhat):
        h = self.field.value(yhat)
        grad = self.field.grad(yhat)
        a = self.B.T @ grad
        s = float(a @ a)
        kn = self.nominal.value(yhat)
        psi = float(grad @ (self.A @ yhat + self.B @ kn) + self.gamma * h - s / self.epsilon)
        return h, grad, a, s, kn, psi

    def value(self, yhat):
        _, _, a, s, kn, psi = self._pieces(yhat)
        m = max(s, self.kappa**2)
        return kn + a * (_softplus(-psi, self.kappa) / m)

    def jac(self, yhat):
        _, grad, a, s, kn, psi = self._pieces(yhat)
        H = self.field.hess(yhat)
        Jn = self.nominal.jac(yhat)
        da = self.B.T @ H                                   # (p, dim)
        grad_s = 2.0 * da.T @ a
        grad_psi = (H @ (self.A @ yhat + self.B @ kn) + self.A.T @ grad
                    + Jn.T @ (self.B.T @ grad) + self.gamma * grad - grad_s / self.epsilon)
        u = _softplus(-psi, self.kappa)
        sig = _sigmoid(-self.kappa * psi)
        grad_u = -sig * grad_psi
        m = max(s, self.kappa**2)
        grad_m = grad_s if s >= self.kappa**2 else np.zeros_like(grad_s)
        grad_sigma = grad_u / m - (u / m**2) * grad_m
        return Jn + (u / m) * da + np.outer(a, grad_sigma)


def smooth_safe_khat(yhat: np.ndarray, field: ScalarField, A: np.ndarray, B: np.ndarray,
                     nominal: SmoothController, gamma: float, epsilon: float,
                     kappa: float = 10.0) -> np.ndarray:
    """Functional wrapper around SoftplusSafeController.value."""
    ctl = SoftplusSafeController(field, A, B, gamma, epsilon, nominal, kappa)
    return ctl.value(np.asarray(yhat, dtype=float))


# ---------------------------------------------------------------------------
# certificates and the sampled ISSf check
# ---------------------------------------------------------------------------

@dataclass
class BarrierCertificate:
    """Chain-level certificate: h0 with gradient, decay/robustness constants, and
    its smooth safety-enforcing controller k̂."""

    field: ScalarField
    gamma: float
    epsilon: float
    khat: SmoothController
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        if self.gamma <= 0 or self.epsilon <= 0:
            raise ValueError("gamma and epsilon must be positive")

    def h0(self, yhat: np.ndarray) -> float:
        return self.field.value(yhat)

    def grad_h0(self, yhat: np.ndarray) -> np.ndarray:
        return self.field.grad(yhat)

    def margin(self, yhat: np.ndarray) -> float:
        """Left minus right side of the chain safety inequality at ŷ."""
        grad = self.field.grad(yhat)
        a = self.B.T @ grad
        lhs = float(grad @ (self.A @ yhat + self.B @ self.khat.value(yhat)))
        return lhs + self.gamma * self.field.value(yhat) - float(a @ a) / self.epsilon


@dataclass
class IssfReport:
    passed: bool
    min_margin: float
    worst_point: np.ndarray
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "min_margin": float(self.min_margin),
            "worst_point": [float(v) for v in self.worst_point],
            "n_samples": int(self.n_samples),
            "seed": int(self.seed),
        }


def verify_issf_linear(cert: BarrierCertificate, box, n: int, seed: int = 0) -> IssfReport:
    """Min margin of the chain safety inequality over low-discrepancy + seeded
    uniform samples in the box; passes iff the minimum is strictly positive."""
    if n < 1:
        raise ValueError("need at least one sample")
    pts = box_samples(np.asarray(box, dtype=float), n, seed)
    margins = np.array([cert.margin(pt) for pt in pts])
    k = int(np.argmin(margins))
    return IssfReport(
        passed=bool(margins[k] > 0.0),
        min_margin=float(margins[k]),
        worst_point=pts[k].copy(),
        n_samples=n,
        seed=seed,
    )
