"""Core construction: least-squares pullback of chain inputs, the tracking
error it leaves behind, tracking Lyapunov functions certifying that error, and
the composite barrier h = h0 − V/μ with its parameter condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import ControlAffineSystem
from .numdiff import fd_grad
from .output_chain import BarrierCertificate, OutputChainSpec, SmoothController
from .rotations import quat_to_rotmat, quat_to_rotmat_grads, rotmat_from_zaxis_yaw_jac


class RankViolationError(RuntimeError):
    """The order-(r-1) decoupling block lost column rank at some state."""


class ParameterConditionError(ValueError):
    """The (γ, ε, μ, β, λ) compatibility inequality fails."""


# ---------------------------------------------------------------------------
# pullback and tracking error
# ---------------------------------------------------------------------------

def _guarded_gram(G: np.ndarray, x: np.ndarray) -> np.ndarray:
    gram = G.T @ G
    sv = np.linalg.svd(gram, compute_uv=False)
    if sv[0] <= 0.0 or sv[-1] <= sv[0] * 1e-12:
        raise RankViolationError(f"decoupling block rank-deficient at state {x}")
    return gram


def k1_pullback(x: np.ndarray, sys: ControlAffineSystem, chain: OutputChainSpec,
                khat: SmoothController) -> np.ndarray:
    """u1 = (L_g1 L_f^{r-1} y)† [k̂(ŷ) − L_f^r y] with the left pseudo-inverse
    from the normal equations (condition guard 1e12)."""
    x = np.asarray(x, dtype=float)
    G = sys.lg1_lfr1_y(x)
    gram = _guarded_gram(G, x)
    ktilde = khat.value(chain.ycoords(x)) - sys.lf_y[sys.r](x)
    return np.linalg.solve(gram, G.T @ ktilde)


def tracking_error(x: np.ndarray, sys: ControlAffineSystem, chain: OutputChainSpec,
                   khat: SmoothController) -> np.ndarray:
    """Projector residual e = (G G† − I)(k̂(ŷ) − L_f^r y): the part of the
    desired chain input the u1 channel cannot realize."""
    x = np.asarray(x, dtype=float)
    G = sys.lg1_lfr1_y(x)
    gram = _guarded_gram(G, x)
    ktilde = khat.value(chain.ycoords(x)) - sys.lf_y[sys.r](x)
    return G @ np.linalg.solve(gram, G.T @ ktilde) - ktilde


# ---------------------------------------------------------------------------
# tracking Lyapunov functions
# ---------------------------------------------------------------------------

@dataclass
class AttitudeContext:
    """Per-trajectory cache holding the last well-defined attitude target."""

    theta_des: float = 0.0
    R_des: np.ndarray = field(default_factory=lambda: np.eye(3))


@dataclass
class ClfEval:
    V: float
    grad: np.ndarray
    att_des: object  # θ_des (float) or R_des (3x3)
    ktilde: np.ndarray


class TrackingClf:
    """Interface: V ≥ β ||e||² with decay rate λ available through u2."""

    beta: float
    lam: float

    def evaluate(self, x: np.ndarray, ctx: AttitudeContext) -> ClfEval:
        raise NotImplementedError


class GeometricClf2d(TrackingClf):
    """V = ||k̃||² (1 − cos(θ_a − θ_des)) with θ_des = atan2(k̃_y, k̃_x).

    θ_a is the angle of the u1 actuation direction: the heading itself for the
    unicycle, θ + π/2 for the planar quadrotor whose thrust column is
    (−sin θ, cos θ).  Evaluated in the Cartesian form
    V = ||k̃||² − ||k̃|| (k̃ · w(θ_a)) to keep the gradient smooth.
    """

    def __init__(self, sys: ControlAffineSystem, chain: OutputChainSpec,
                 khat: SmoothController, lam: float, beta: float = 0.5,
                 angle_offset: float = 0.0, theta_index: int = 2, eta: float = 1e-8):
        self.sys = sys
        self.chain = chain
        self.khat = khat
        self.lam = float(lam)
        self.beta = float(beta)
        self.angle_offset = float(angle_offset)
        self.theta_index = theta_index
        self.eta = float(eta)

    def _ktilde(self, x: np.ndarray) -> np.ndarray:
        yhat = self.chain.ycoords(x)
        return self.khat.value(yhat) - self.sys.lf_y[self.sys.r](x)

    def evaluate(self, x: np.ndarray, ctx: AttitudeContext) -> ClfEval:
        x = np.asarray(x, dtype=float)
        yhat = self.chain.ycoords(x)
        kt = self.khat.value(yhat) - self.sys.lf_y[self.sys.r](x)
        nk = np.linalg.norm(kt)
        if nk <= self.eta:
            return ClfEval(V=0.0, grad=np.zeros(self.sys.n), att_des=ctx.theta_des, ktilde=kt)
        theta_des = float(np.arctan2(kt[1], kt[0]))
        ctx.theta_des = theta_des
        th_a = x[self.theta_index] + self.angle_offset
        w = np.array([np.cos(th_a), np.sin(th_a)])
        wp = np.array([-np.sin(th_a), np.cos(th_a)])
        V = float(nk**2 - nk * (kt @ w))
        dV_dk = 2.0 * kt - (kt @ w) * kt / nk - nk * w
        dV_dth = -nk * (kt @ wp)
        Jkt = self.khat.jac(yhat) @ self.chain.ycoords_jac(x)   # dk̃/dx, (p, n)
        grad = Jkt.T @ dV_dk
        grad[self.theta_index] += dV_dth
        return ClfEval(V=V, grad=grad, att_des=theta_des, ktilde=kt)


def geometric_clf_2d(x, sys: ControlAffineSystem, chain: OutputChainSpec,
                     khat: SmoothController, lam: float = 1.0,
                     ctx: AttitudeContext | None = None):
    """(V, grad_V, θ_des) of the unicycle-style geometric tracking CLF."""
    clf = GeometricClf2d(sys, chain, khat, lam)
    ev = clf.evaluate(np.asarray(x, dtype=float), ctx or AttitudeContext())
    return ev.V, ev.grad, ev.att_des


class PlanarBackstepClf(TrackingClf):
    """Backstepped CLF for the planar quadrotor:

    V = V0 + ||ω − k_ω||² / (2 μ2),  k_ω = θ̇_des − k_θ sin(θ_a − θ_des),

    with V0 the geometric attitude CLF and θ̇_des evaluated along the partial
    closed loop (u1 from the pullback).  θ̇_des is analytic through the chain
    controller's Jacobian; its state gradient uses central differences.
    """

    def __init__(self, sys: ControlAffineSystem, chain: OutputChainSpec,
                 khat: SmoothController, mu2: float, k_theta: float, lam: float,
                 beta: float = 0.5, eta: float = 1e-8, fd_step: float = 1e-5):
        if mu2 <= 0:
            raise ValueError("mu2 must be positive")
        self.sys = sys
        self.chain = chain
        self.khat = khat
        self.mu2 = float(mu2)
        self.k_theta = float(k_theta)
        self.lam = float(lam)
        self.beta = float(beta)
        self.eta = float(eta)
        self.fd_step = float(fd_step)
        self.geo = GeometricClf2d(sys, chain, khat, lam, beta,
                                  angle_offset=0.5 * np.pi, theta_index=2, eta=eta)

    def theta_des_dot(self, x: np.ndarray) -> float:
        """d/dt θ_des along the partial closed loop: cross(k̃, J_k̂ ŷ̇)/||k̃||²."""
        x = np.asarray(x, dtype=float)
        yhat = self.chain.ycoords(x)
        kt = self.khat.value(yhat) - self.sys.lf_y[2](x)
        s = float(kt @ kt)
        if s <= self.eta**2:
            return 0.0
        G = self.sys.lg1_lfr1_y(x)[:, 0]
        ydd = self.sys.lf_y[2](x) + G * float(G @ kt)       # realized acceleration
        yhat_dot = np.concatenate([yhat[2:4], ydd])
        kt_dot = self.khat.jac(yhat) @ yhat_dot
        return float((kt[0] * kt_dot[1] - kt[1] * kt_dot[0]) / s)

    def k_omega(self, x: np.ndarray) -> float:
        ev = self.geo.evaluate(np.asarray(x, dtype=float), AttitudeContext())
        delta = x[2] + 0.5 * np.pi - ev.att_des if np.linalg.norm(ev.ktilde) > self.eta else 0.0
        return self.theta_des_dot(x) - self.k_theta * np.sin(delta)

    def evaluate(self, x: np.ndarray, ctx: AttitudeContext) -> ClfEval:
        x = np.asarray(x, dtype=float)
        ev0 = self.geo.evaluate(x, ctx)
        kt = ev0.ktilde
        nk = np.linalg.norm(kt)
        if nk <= self.eta:
            return ClfEval(V=0.0, grad=np.zeros(self.sys.n), att_des=ctx.theta_des, ktilde=kt)
        theta_des = ev0.att_des
        delta = x[2] + 0.5 * np.pi - theta_des
        tdd = self.theta_des_dot(x)
        k_om = tdd - self.k_theta * np.sin(delta)
        err = x[5] - k_om
        V = ev0.V + err**2 / (2.0 * self.mu2)

        # ∇Δ = e_θ − ∇θ_des with ∇θ_des through the chain controller Jacobian
        Jkt = self.khat.jac(self.chain.ycoords(x)) @ self.chain.ycoords_jac(x)
        grad_theta_des = Jkt.T @ np.array([-kt[1], kt[0]]) / nk**2
        grad_delta = -grad_theta_des
        grad_delta[2] += 1.0
        grad_tdd = fd_grad(self.theta_des_dot, x, self.fd_step)
        grad_k_om = grad_tdd - self.k_theta * np.cos(delta) * grad_delta
        grad = ev0.grad - (err / self.mu2) * grad_k_om
        grad[5] += err / self.mu2
        return ClfEval(V=V, grad=grad, att_des=theta_des, ktilde=kt)


def backstepping_clf_planar(x, sys: ControlAffineSystem, chain: OutputChainSpec,
                            khat: SmoothController, mu2: float, lam: float,
                            k_theta: float, ctx: AttitudeContext | None = None):
    """(V, grad_V) of the backstepped planar-quadrotor tracking CLF."""
    clf = PlanarBackstepClf(sys, chain, khat, mu2, k_theta, lam)
    ev = clf.evaluate(np.asarray(x, dtype=float), ctx or AttitudeContext())
    return ev.V, ev.grad


class GeometricClf3d(TrackingClf):
    """V = (||k̃||²/2) tr(I − Rᵀ R_des) with R_des built from b3 = k̃/||k̃|| and a
    configured reference yaw.  k̃ = k̂(ŷ) − L_f² y points along the desired
    thrust direction (k̂ + g e_z for the quadrotor)."""

    def __init__(self, sys: ControlAffineSystem, chain: OutputChainSpec,
                 khat: SmoothController, lam: float, beta: float = 0.5,
                 ref_yaw: float = 0.0, eta: float = 1e-8):
        self.sys = sys
        self.chain = chain
        self.khat = khat
        self.lam = float(lam)
        self.beta = float(beta)
        self.ref_yaw = float(ref_yaw)
        self.eta = float(eta)

    def evaluate(self, x: np.ndarray, ctx: AttitudeContext) -> ClfEval:
        x = np.asarray(x, dtype=float)
        yhat = self.chain.ycoords(x)
        kt = self.khat.value(yhat) - self.sys.lf_y[2](x)
        nk = np.linalg.norm(kt)
        if nk <= self.eta:
            return ClfEval(V=0.0, grad=np.zeros(self.sys.n), att_des=ctx.R_des, ktilde=kt)
        q = x[6:10]
        R = quat_to_rotmat(q)
        R_des, dRdes_dk = rotmat_from_zaxis_yaw_jac(kt, self.ref_yaw)
        ctx.R_des = R_des
        s = nk**2
        c = 3.0 - float(np.sum(R * R_des))
        V = 0.5 * s * c

        grad = np.zeros(self.sys.n)
        dR = quat_to_rotmat_grads(q)                     # (4, 3, 3)
        grad[6:10] = -0.5 * s * np.einsum("ijk,jk->i", dR, R_des)
        m = np.einsum("jk,jkl->l", R, dRdes_dk)          # d tr(Rᵀ R_des)/dk̃
        dV_dk = c * kt - 0.5 * s * m
        Jkt = self.khat.jac(yhat) @ self.chain.ycoords_jac(x)
        grad += Jkt.T @ dV_dk
        return ClfEval(V=V, grad=grad, att_des=R_des, ktilde=kt)


def geometric_clf_3d(x, sys: ControlAffineSystem, chain: OutputChainSpec,
                     khat: SmoothController, lam: float = 1.0, ref_yaw: float = 0.0,
                     ctx: AttitudeContext | None = None):
    """(V, grad_V, R_des) of the rotation-matrix tracking CLF."""
    clf = GeometricClf3d(sys, chain, khat, lam, ref_yaw=ref_yaw)
    ev = clf.evaluate(np.asarray(x, dtype=float), ctx or AttitudeContext())
    return ev.V, ev.grad, ev.att_des


# ---------------------------------------------------------------------------
# parameter condition and composite barrier
# ---------------------------------------------------------------------------

def check_parameter_condition(gamma: float, epsilon: float, mu: float,
                              beta: float, lam: float) -> tuple[bool, float]:
    """Slack of λ ≥ γ + ε μ / (4 β); passes when the slack is nonnegative."""
    for name, val in (("gamma", gamma), ("epsilon", epsilon), ("mu", mu),
                      ("beta", beta), ("lam", lam)):
        if val <= 0:
            raise ParameterConditionError(f"{name} must be positive, got {val}")
    slack = lam - gamma - epsilon * mu / (4.0 * beta)
    return bool(slack >= 0.0), float(slack)


@dataclass
class DrdEval:
    """One-state evaluation of the composite barrier and its QP ingredients."""

    h: float
    h0: float
    V: float
    grad_h: np.ndarray
    e_norm: float
    lg2_V: np.ndarray
    in_decay_region: bool     # x ∈ 𝒟: u2 has authority over V̇


class DRDCBF:
    """Composite barrier h(x) = h0(ŷ(x)) − V(x)/μ.

    Construction validates the parameter condition λ ≥ γ + ε μ / (4 β); the
    runtime guarantee (ḣ ≥ −γ h along filtered trajectories) is audited by the
    verification module.
    """

    def __init__(self, sys: ControlAffineSystem, chain: OutputChainSpec,
                 cert: BarrierCertificate, clf: TrackingClf, mu: float,
                 region_tol: float = 1e-9):
        ok, slack = check_parameter_condition(cert.gamma, cert.epsilon, mu,
                                              clf.beta, clf.lam)
        if not ok:
            raise ParameterConditionError(
                "parameter condition lambda >= gamma + epsilon*mu/(4*beta) fails: "
                f"lambda={clf.lam}, gamma={cert.gamma}, epsilon={cert.epsilon}, "
                f"mu={mu}, beta={clf.beta} (slack {slack:.6g})")
        self.sys = sys
        self.chain = chain
        self.cert = cert
        self.clf = clf
        self.mu = float(mu)
        self.region_tol = float(region_tol)
        self.slack = slack

    @property
    def gamma(self) -> float:
        return self.cert.gamma

    def h(self, x: np.ndarray, ctx: AttitudeContext | None = None) -> float:
        ctx = ctx or AttitudeContext()
        yhat = self.chain.ycoords(np.asarray(x, dtype=float))
        return self.cert.h0(yhat) - self.clf.evaluate(x, ctx).V / self.mu

    def grad_h(self, x: np.ndarray, ctx: AttitudeContext | None = None) -> np.ndarray:
        return self.evaluate(x, ctx or AttitudeContext()).grad_h

    def evaluate(self, x: np.ndarray, ctx: AttitudeContext | None = None) -> DrdEval:
        x = np.asarray(x, dtype=float)
        ctx = ctx or AttitudeContext()
        yhat = self.chain.ycoords(x)
        h0 = self.cert.h0(yhat)
        ev = self.clf.evaluate(x, ctx)
        grad = self.chain.ycoords_jac(x).T @ self.cert.grad_h0(yhat) - ev.grad / self.mu
        lg2_V = ev.grad @ self.sys.g2(x)
        e = tracking_error(x, self.sys, self.chain, self.cert.khat)
        return DrdEval(
            h=float(h0 - ev.V / self.mu),
            h0=float(h0),
            V=float(ev.V),
            grad_h=grad,
            e_norm=float(np.linalg.norm(e)),
            lg2_V=np.atleast_1d(lg2_V),
            in_decay_region=bool(np.linalg.norm(np.atleast_1d(lg2_V)) > self.region_tol),
        )


@dataclass
class CorollaryResult:
    status: str          # "skipped" (x ∈ 𝒟), "vacuous", "checked_pass", "fail"
    lg1_h_norm: float
    drift_margin: float | None


def check_corollary_condition(x: np.ndarray, drd: DRDCBF,
                              ctx: AttitudeContext | None = None,
                              tol_lg: float = 1e-6) -> CorollaryResult:
    """Outside the decay region 𝒟, safety still holds if L_g1 h = 0 implies the
    drift inequality L_f h ≥ −γ h.  States inside 𝒟 are skipped; nonzero L_g1 h
    passes vacuously."""
    x = np.asarray(x, dtype=float)
    ctx = ctx or AttitudeContext()
    ev = drd.evaluate(x, ctx)
    if ev.in_decay_region:
        return CorollaryResult(status="skipped", lg1_h_norm=float("nan"), drift_margin=None)
    lg1_h = ev.grad_h @ drd.sys.g1(x)
    lg1_norm = float(np.linalg.norm(np.atleast_1d(lg1_h)))
    if lg1_norm > tol_lg:
        return CorollaryResult(status="vacuous", lg1_h_norm=lg1_norm, drift_margin=None)
    lf_h = float(ev.grad_h @ drd.sys.f(x))
    margin = lf_h + drd.gamma * ev.h
    status = "checked_pass" if margin >= 0.0 else "fail"
    return CorollaryResult(status=status, lg1_h_norm=lg1_norm, drift_margin=float(margin))
