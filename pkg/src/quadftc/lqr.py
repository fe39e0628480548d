"""LQR baseline about the spinning hover for the two-rotor case.

Design model state: ``x = [h1, h2, p, q, f1 - f̄, f2 - f̄]`` with ``f_i`` the
thrust of each working rotor in newtons and a first-order lag ``τ`` from
commanded to actual thrust. Inputs are thrust commands in newtons, so a unit
input weight reads literally as 1 N⁻². Altitude is held separately by
collective thrust.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .analysis import inner_loop_deriv, trim
from .indi import OuterGains, InnerGains, PositionLoop, reduced_attitude_step, ReducedAttitude
from .vehicle import FailureMode, InputError


class LQRError(RuntimeError):
    pass


@dataclass(frozen=True)
class LQRWeights:
    q_att: float = 20.0
    q_rate: float = 0.0
    r_input: float = 1.0
    tau: float = 0.030

    def __post_init__(self):
        if self.q_att < 0 or self.q_rate < 0:
            raise InputError("state weights must be non-negative")
        if self.r_input <= 0 or self.tau <= 0:
            raise InputError("input weight and tau must be positive")

    def Q(self):
        return np.diag([self.q_att, self.q_att, self.q_rate, self.q_rate, 0.0, 0.0])

    def R(self):
        return self.r_input * np.eye(2)


@dataclass
class LQRGain:
    K: np.ndarray
    P: np.ndarray
    A: np.ndarray
    B: np.ndarray
    x_trim: np.ndarray
    u_trim: np.ndarray
    residual: float

    @property
    def closed_loop_eigs(self):
        return np.linalg.eigvals(self.A - self.B @ self.K)


def relaxed_hover_model(params, failure, trm, tau):
    """``ẋ = f(x, f_cmd)`` of the 6-state design model (yaw rate frozen at trim)."""
    f_bar = 0.5 * params.mass * params.g

    def f(x, f_cmd):
        h1, h2, p, q, d1, d2 = x
        u = (f_bar + np.array([d1, d2])) / params.kappa
        x_in = np.array([h1, h2, p, q, trm.r_bar, 0.0, 0.0])
        xd = inner_loop_deriv(x_in, u, params, failure, trm.omega_bar, R33=1.0)
        return np.array([xd[0], xd[1], xd[2], xd[3],
                         (f_cmd[0] - d1) / tau, (f_cmd[1] - d2) / tau])

    return f


def linearize_relaxed_hover(params, failure, trm=None, tau=0.030, step=1e-6):
    """Central-difference Jacobians ``(A, B)`` at the spinning equilibrium."""
    if failure.mode is not FailureMode.DOUBLE_OPPOSING:
        raise InputError("the LQR baseline covers the two-rotor case only")
    trm = trm or trim(params, failure)
    f = relaxed_hover_model(params, failure, trm, tau)
    x0, u0 = np.zeros(6), np.zeros(2)
    A = np.zeros((6, 6))
    B = np.zeros((6, 2))
    for i in range(6):
        e = np.zeros(6)
        e[i] = step
        A[:, i] = (f(x0 + e, u0) - f(x0 - e, u0)) / (2 * step)
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        B[:, j] = (f(x0, u0 + e) - f(x0, u0 - e)) / (2 * step)
    return A, B


def _lyapunov(Acl, C):
    """Solve ``Acl.T X + X Acl + C = 0`` by vectorisation (small n only)."""
    n = Acl.shape[0]
    eye = np.eye(n)
    M = np.kron(eye, Acl.T) + np.kron(Acl.T, eye)
    X = np.linalg.solve(M, -C.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def _sign_function(H, tol=1e-13, max_iter=100):
    Z = H.copy()
    n = Z.shape[0]
    for _ in range(max_iter):
        Zi = np.linalg.inv(Z)
        c = abs(np.linalg.det(Z)) ** (-1.0 / n)  # determinant scaling
        Zn = 0.5 * (c * Z + Zi / c)
        if np.linalg.norm(Zn - Z, 1) <= tol * np.linalg.norm(Zn, 1):
            return Zn
        Z = Zn
    raise LQRError("sign-function iteration did not converge")


def riccati_residual(A, B, Q, R, P):
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q


def solve_care(A, B, Q, R, tol=1e-9, max_newton=50):
    """Stabilising solution of ``AᵀP + PA - PBR⁻¹BᵀP + Q = 0``.

    A matrix-sign-function pass gives the initial guess; Newton-Kleinman
    iterations then polish it until the residual is below ``tol``.
    """
    A, B, Q, R = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q, R))
    n = A.shape[0]
    G = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    W = _sign_function(H)
    lhs = np.vstack([W[:n, n:], W[n:, n:] + np.eye(n)])
    rhs = -np.vstack([W[:n, :n] + np.eye(n), W[n:, :n]])
    P = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    P = 0.5 * (P + P.T)
    for _ in range(max_newton):
        K = np.linalg.solve(R, B.T @ P)
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            raise LQRError("(A, B) not stabilisable or iteration lost stability")
        P = _lyapunov(Acl, Q + K.T @ R @ K)
        res = np.max(np.abs(riccati_residual(A, B, Q, R, P)))
        if res < tol:
            return P, res
    raise LQRError(f"Newton-Kleinman stalled at residual {res:.3e}")


def solve_lqr(A, B, weights):
    """LQR gain for ``(A, B)``; ``weights`` is :class:`LQRWeights` or ``(Q, R)``."""
    Q, R = (weights.Q(), weights.R()) if isinstance(weights, LQRWeights) else weights
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.T
    P, res = solve_care(A, B, Q, R)
    K = np.linalg.solve(np.atleast_2d(R), B.T @ P)
    return LQRGain(K, P, A, B, np.zeros(A.shape[0]), np.zeros(B.shape[1]), res)


def discretize(A, B, dt):
    """Zero-order-hold ``(Ad, Bd)`` from the augmented matrix exponential."""
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A * dt
    M[:n, n:] = B * dt
    E = expm(M)
    return E[:n, :n], E[:n, n:]


def lqr_step(gain, x):
    """``u = u_trim - K (x - x_trim)`` (thrust deviation commands, N)."""
    return gain.u_trim - gain.K @ (np.asarray(x, dtype=float) - gain.x_trim)


class LQRController:
    """Same outer loop as the INDI controller, LQR on the reduced attitude."""

    def __init__(self, params, failure, weights=None, outer=None, inner=None,
                 dt=1.0 / 500.0, outer_dt=1.0 / 120.0, omega_min=200.0, omega_max=1256.0):
        self.params, self.failure = params, failure
        self.weights = weights or LQRWeights()
        self.inner = inner or InnerGains()
        self.position = PositionLoop(outer or OuterGains(), outer_dt, params.g)
        self.dt = dt
        self.omega_min, self.omega_max = omega_min, omega_max
        self.trim = trim(params, failure)
        A, B = linearize_relaxed_hover(params, failure, self.trim, self.weights.tau)
        self.gain = solve_lqr(A, B, self.weights)
        Ad, Bd = discretize(A, B, dt)
        self.discrete_radius = float(np.max(np.abs(np.linalg.eigvals(Ad - Bd @ self.gain.K))))
        self.ra = ReducedAttitude()
        self.n_body = np.array([0.0, 0.0, -1.0])

    @property
    def n_d(self):
        return self.position.n_d

    @property
    def chi_abs(self):
        return self.inner.chi_abs

    def set_chi(self, chi_abs):
        self.inner.chi_abs = chi_abs  # only used for logging the internal states

    def reset(self, sensors, ref):
        self.position.reset()
        self.position.update(sensors.position, sensors.velocity, ref)

    def update(self, sensors, ref, outer_due=True):
        p = self.params
        if outer_due:
            self.position.update(sensors.position, sensors.velocity, ref)
        self.ra = reduced_attitude_step(self.ra, sensors.gyro, sensors.R, self.position.n_d,
                                        self.dt)
        g = self.inner
        nu1 = (-g.k_zp * (sensors.position[2] - ref.position[2])
               - g.k_zd * (sensors.velocity[2] - ref.velocity[2]) + ref.acceleration[2])
        R33 = sensors.R[2, 2]
        if abs(R33) < 1e-3:
            R33 = np.copysign(1e-3, R33)
        total = p.mass * (p.g - nu1) / R33
        idx = self.failure.index
        f_meas = p.kappa * sensors.rotor_speeds[idx] ** 2
        x = np.array([self.ra.h[0], self.ra.h[1], sensors.gyro[0], sensors.gyro[1],
                      f_meas[0] - 0.5 * total, f_meas[1] - 0.5 * total])
        f_cmd = 0.5 * total + lqr_step(self.gain, x)
        omega = np.sqrt(np.clip(f_cmd / p.kappa, self.omega_min ** 2, self.omega_max ** 2))
        cmd = np.zeros(4)
        cmd[idx] = omega
        return cmd
