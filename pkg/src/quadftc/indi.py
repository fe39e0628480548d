"""Cascaded fault-tolerant controller: PID position loop + INDI inner loop.

The outer loop turns position errors into a desired thrust direction
``n_d`` (inertial). The inner loop expresses ``n_d`` in body axes,
``h = Rᵀ n_d``, and drives a small set of outputs to zero with an
incremental inversion: ``u = B̂⁻¹ (ν - ÿ_f) + u_f`` where ``u`` are the
squared rotor speeds of the working rotors and ``_f`` marks signals passed
through identical low-pass filters.

Three variants share that skeleton:

* two opposing rotors left: outputs ``[Z, y2]``, ``y2 = h1 cos χ + h2 sin χ``
* one rotor lost: outputs ``[Z, h1 - n_x, h2 - n_y]``
* all four rotors: the same plus the yaw rate ``r``
"""

from dataclasses import dataclass, field

import numpy as np

from .mathutil import FilterBank
from .vehicle import PITCH_SIGN, ROLL_SIGN, YAW_SIGN, FailureMode, InputError


class SingularEffectiveness(ValueError):
    """The control-effectiveness matrix cannot be inverted at this state."""


DET_TOL = 1e-8
GEOM_TOL = 1e-6


@dataclass
class Reference:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0


@dataclass
class OuterGains:
    kp: float = 1.0
    ki: float = 0.1
    kd: float = 1.0
    integral_limit: float = 2.0  # m/s², bound on the integral contribution

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "integral_limit"):
            if getattr(self, name) <= 0:
                raise InputError(f"outer gain {name} must be positive")


@dataclass
class InnerGains:
    k_ap: float = 50.0
    k_ad: float = 30.0
    k_zp: float = 15.0
    k_zd: float = 10.0
    chi_abs: float = np.radians(105.0)
    k_p_psi: float = 5.0
    k_d_psi: float = 1.0
    k_r: float = 10.0

    def __post_init__(self):
        for name in ("k_ap", "k_ad", "k_zp", "k_zd", "k_p_psi", "k_d_psi", "k_r"):
            if getattr(self, name) <= 0:
                raise InputError(f"inner gain {name} must be positive")


def check_chi(params, chi_abs):
    if abs(np.sin(chi_abs - params.zeta)) < GEOM_TOL:
        raise InputError(f"|chi| = {np.degrees(chi_abs):.3f} deg is a singular output "
                         f"direction (zeta = {np.degrees(params.zeta):.3f} deg)")


# ---------------------------------------------------------------- outer loop


def outer_loop(P, V, ref, gains, integ_state, dt, g=9.81):
    """Horizontal PID plus vertical feed-through.

    Returns ``(a_ref, n_d, new_integ_state)``; ``integ_state`` is ∫e dt for
    the x/y errors, clamped so that ``ki ∫e`` never exceeds the limit.
    """
    e = np.asarray(P[:2]) - ref.position[:2]
    e_dot = np.asarray(V[:2]) - ref.velocity[:2]
    cap = gains.integral_limit / gains.ki
    integ = np.clip(np.asarray(integ_state, dtype=float) + e * dt, -cap, cap)
    a_xy = -gains.kp * e - gains.kd * e_dot - gains.ki * integ + ref.acceleration[:2]
    a_ref = np.array([a_xy[0], a_xy[1], ref.acceleration[2]])
    d = a_ref - np.array([0.0, 0.0, g])
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        raise InputError("a_ref equals gravity: thrust direction undefined")
    return a_ref, d / norm, integ


@dataclass
class PositionLoop:
    gains: OuterGains = field(default_factory=OuterGains)
    dt: float = 1.0 / 120.0
    g: float = 9.81
    integ: np.ndarray = field(default_factory=lambda: np.zeros(2))
    a_ref: np.ndarray = field(default_factory=lambda: np.zeros(3))
    n_d: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))

    def reset(self):
        self.integ = np.zeros(2)
        self.a_ref = np.zeros(3)
        self.n_d = np.array([0.0, 0.0, -1.0])

    def update(self, P, V, ref):
        self.a_ref, self.n_d, self.integ = outer_loop(P, V, ref, self.gains, self.integ,
                                                      self.dt, self.g)
        return self.n_d


# ----------------------------------------------------------- reduced attitude


@dataclass
class ReducedAttitude:
    h: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    lam: np.ndarray = field(default_factory=lambda: np.zeros(3))
    n_body: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))
    n_d: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))

    def h_dot(self, Omega):
        """ḣ = -Ω × h + λ."""
        return -np.cross(Omega, self.h) + self.lam


def reduced_attitude_step(ra, Omega, R, n_d_I, dt, track_lambda=False):
    """New reduced attitude for the current attitude and target direction.

    ``h`` is recomputed exactly as ``Rᵀ n_d``. ``λ = Rᵀ ṅ_d`` comes from a
    backward difference of ``n_d`` when ``track_lambda`` is set, else 0.
    """
    n_d_I = np.asarray(n_d_I, dtype=float)
    if abs(np.linalg.norm(n_d_I) - 1.0) > 1e-6:
        raise InputError("n_d must be a unit vector")
    h = R.T @ n_d_I
    lam = R.T @ (n_d_I - ra.n_d) / dt if track_lambda else np.zeros(3)
    return ReducedAttitude(h, lam, ra.n_body.copy(), n_d_I.copy())


def output_y2(ra, chi):
    """Projection of the body-frame target direction on the rotated axis (``chi`` signed)."""
    return ra.h[0] * np.cos(chi) + ra.h[1] * np.sin(chi)


def output_y2_dot(ra, Omega, chi):
    h1, h2, h3 = ra.h
    p, q, r = Omega
    return (np.cos(chi) * (-h3 * q + h2 * r + ra.lam[0])
            + np.sin(chi) * (h3 * p - h1 * r + ra.lam[1]))


# ------------------------------------------------------------- effectiveness


def control_effectiveness_drf(params, failure, R33_f, h3_f, chi_abs):
    """2x2 map from the working pair's ω² to ``[Z̈, ÿ2]``."""
    s = np.sin(params.zeta - chi_abs)
    if abs(R33_f) < GEOM_TOL or abs(h3_f) < GEOM_TOL or abs(s) < GEOM_TOL:
        raise SingularEffectiveness(f"R33={R33_f:.3g}, h3={h3_f:.3g}, sin(zeta-|chi|)={s:.3g}")
    B1 = -params.kappa * R33_f / params.mass
    B2 = -h3_f * params.G_p / np.cos(params.zeta) * s
    return np.array([[B1, B1], [B2, -B2]])


def control_effectiveness_srf(params, failure, R33_f, h3_f):
    """3x3 map from ω² of the three working rotors to ``[Z̈, ḧ1, ḧ2]``."""
    if abs(R33_f) < GEOM_TOL or abs(h3_f) < GEOM_TOL:
        raise SingularEffectiveness(f"R33={R33_f:.3g}, h3={h3_f:.3g}")
    idx = failure.index
    return np.vstack([-params.kappa * R33_f / params.mass * np.ones(len(idx)),
                      -h3_f * params.G_q * PITCH_SIGN[idx],
                      h3_f * params.G_p * ROLL_SIGN[idx]])


def control_effectiveness_nominal(params, R33_f, h3_f):
    if abs(R33_f) < GEOM_TOL or abs(h3_f) < GEOM_TOL:
        raise SingularEffectiveness(f"R33={R33_f:.3g}, h3={h3_f:.3g}")
    return np.vstack([-params.kappa * R33_f / params.mass * np.ones(4),
                      -h3_f * params.G_q * PITCH_SIGN,
                      h3_f * params.G_p * ROLL_SIGN,
                      params.G_r * YAW_SIGN])


# ------------------------------------------------------------------ INDI core


@dataclass
class ControlOutput:
    u: np.ndarray
    omega_cmd: np.ndarray
    nu: np.ndarray
    B: np.ndarray
    y_ddot_f: np.ndarray
    held: bool = False


def _relative_det(B):
    rows = np.prod(np.linalg.norm(B, axis=1))
    return abs(np.linalg.det(B)) / rows if rows > 0 else 0.0


def indi_step(B, nu, y_ddot_f, u_f, omega_min=0.0, omega_max=np.inf):
    """One incremental inversion. Raises SingularEffectiveness on rank loss."""
    B = np.asarray(B, dtype=float)
    rhs = np.asarray(nu, dtype=float) - np.asarray(y_ddot_f, dtype=float)
    if B.shape[0] == B.shape[1]:
        if _relative_det(B) < DET_TOL:
            raise SingularEffectiveness("effectiveness matrix is singular")
        du = np.linalg.solve(B, rhs)
    else:
        sv = np.linalg.svd(B, compute_uv=False)
        if sv[-1] < DET_TOL * sv[0]:
            raise SingularEffectiveness("effectiveness matrix is rank deficient")
        du = np.linalg.pinv(B) @ rhs
    u = du + np.asarray(u_f, dtype=float)
    omega = np.sqrt(np.clip(u, omega_min ** 2, omega_max ** 2))
    return ControlOutput(u, omega, np.asarray(nu, dtype=float), B,
                         np.asarray(y_ddot_f, dtype=float))


def pseudo_input_drf(xi, Z_ref, Zd_ref, Zdd_ref, gains):
    """ν for ``xi = [Z, Vz, y2, ẏ2]``."""
    return np.array([
        -gains.k_zp * (xi[0] - Z_ref) - gains.k_zd * (xi[1] - Zd_ref) + Zdd_ref,
        -gains.k_ap * xi[2] - gains.k_ad * xi[3],
    ])


def pseudo_input_srf(xi, Z_ref, Zd_ref, Zdd_ref, gains):
    """ν for ``xi = [Z, Vz, y2, ẏ2, y3, ẏ3]``."""
    return np.array([
        -gains.k_zp * (xi[0] - Z_ref) - gains.k_zd * (xi[1] - Zd_ref) + Zdd_ref,
        -gains.k_ap * xi[2] - gains.k_ad * xi[3],
        -gains.k_ap * xi[4] - gains.k_ad * xi[5],
    ])


def yaw_rate_reference(e_psi, e_psi_dot, gains):
    return -gains.k_p_psi * e_psi - gains.k_d_psi * e_psi_dot


@dataclass
class INDIMemory:
    """Filter bank plus the previous filtered derivative samples."""

    bank: FilterBank
    prev: dict = field(default_factory=dict)
    last_omega: np.ndarray = None
    ready: bool = False


def y_ddot_estimate(mem, accel_z_f, R33_f, rates_f, dt, g=9.81):
    """``[a_z,f R33,f + g, backward differences of the filtered rate channels]``.

    ``rates_f`` maps channel name to its filtered first derivative (for
    instance ``{"y2dot": ...}``); the previous samples live in ``mem.prev``.
    """
    out = [accel_z_f * R33_f + g]
    for name, value in rates_f.items():
        out.append((value - mem.prev.get(name, value)) / dt)
        mem.prev[name] = value
    return np.array(out)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


class INDIController:
    """State machine wrapping outer loop, filters and the INDI law.

    ``update`` returns 4 rotor-speed commands (0 for failed rotors).
    """

    def __init__(self, params, failure, outer=None, inner=None, dt=1.0 / 500.0,
                 outer_dt=1.0 / 120.0, cutoff=2 * np.pi * 15.0, damping=0.707,
                 omega_min=200.0, omega_max=1256.0, n_body=(0.0, 0.0, -1.0),
                 track_lambda=False):
        self.params = params
        self.failure = failure
        self.mode = failure.mode
        self.inner = inner or InnerGains()
        self.position = PositionLoop(outer or OuterGains(), outer_dt, params.g)
        self.dt = dt
        self.omega_min, self.omega_max = omega_min, omega_max
        self.track_lambda = track_lambda
        self.n_body = np.asarray(n_body, dtype=float)
        if self.mode is FailureMode.DOUBLE_OPPOSING:
            check_chi(params, self.inner.chi_abs)
            rates = ["y2dot"]
        elif self.mode is FailureMode.SINGLE_ROTOR:
            rates = ["h1dot", "h2dot"]
        else:
            rates = ["h1dot", "h2dot", "r"]
        self.rate_names = rates
        self.u_names = [f"u{i}" for i in failure.active]
        names = self.u_names + ["a_z", "R33", "h3"] + rates
        self.mem = INDIMemory(FilterBank(names, cutoff, damping, dt))
        self.ra = ReducedAttitude(n_body=self.n_body.copy())
        self.last = None

    # -- properties read by the simulator / logger
    @property
    def chi_abs(self):
        return self.inner.chi_abs

    @property
    def n_d(self):
        return self.position.n_d

    def set_chi(self, chi_abs):
        check_chi(self.params, chi_abs)
        self.inner.chi_abs = chi_abs

    # -- signal assembly
    def _raw_signals(self, s):
        p, q, r = s.gyro
        h1, h2, h3 = self.ra.h
        lam = self.ra.lam
        sig = {n: s.rotor_speeds[i - 1] ** 2 for n, i in zip(self.u_names, self.failure.active)}
        sig.update(a_z=s.accel[2], R33=s.R[2, 2], h3=h3)
        if self.mode is FailureMode.DOUBLE_OPPOSING:
            chi = self.failure.s_l * self.inner.chi_abs
            sig["y2dot"] = output_y2_dot(self.ra, s.gyro, chi)
        else:
            sig["h1dot"] = r * h2 - q * h3 + lam[0]
            sig["h2dot"] = -r * h1 + p * h3 + lam[1]
            if self.mode is FailureMode.NOMINAL:
                sig["r"] = r
        return sig

    def reset(self, sensors, ref):
        self.position.reset()
        self.position.update(sensors.position, sensors.velocity, ref)
        self.ra = reduced_attitude_step(ReducedAttitude(n_body=self.n_body.copy(),
                                                        n_d=self.position.n_d.copy()),
                                        sensors.gyro, sensors.R, self.position.n_d, self.dt)
        sig = self._raw_signals(sensors)
        self.mem.bank.reset(sig)
        self.mem.prev = {n: sig[n] for n in self.rate_names}
        self.mem.last_omega = sensors.rotor_speeds.copy()
        self.mem.ready = True

    def update(self, sensors, ref, outer_due=True):
        if not self.mem.ready:
            self.reset(sensors, ref)
        if outer_due:
            self.position.update(sensors.position, sensors.velocity, ref)
        self.ra = reduced_attitude_step(self.ra, sensors.gyro, sensors.R, self.position.n_d,
                                        self.dt, self.track_lambda)
        sig = self._raw_signals(sensors)
        f = self.mem.bank.step(sig)
        u_f = np.array([f[n] for n in self.u_names])
        y_dd = y_ddot_estimate(self.mem, f["a_z"], f["R33"],
                               {n: f[n] for n in self.rate_names}, self.dt, self.params.g)
        Z, Vz = sensors.position[2], sensors.velocity[2]
        zr, zdr, zddr = ref.position[2], ref.velocity[2], ref.acceleration[2]
        try:
            if self.mode is FailureMode.DOUBLE_OPPOSING:
                chi = self.failure.s_l * self.inner.chi_abs
                xi = [Z, Vz, output_y2(self.ra, chi), sig["y2dot"]]
                nu = pseudo_input_drf(xi, zr, zdr, zddr, self.inner)
                B = control_effectiveness_drf(self.params, self.failure, f["R33"], f["h3"],
                                              self.inner.chi_abs)
            else:
                h = self.ra.h
                xi = [Z, Vz, h[0] - self.n_body[0], sig["h1dot"],
                      h[1] - self.n_body[1], sig["h2dot"]]
                nu = pseudo_input_srf(xi, zr, zdr, zddr, self.inner)
                if self.mode is FailureMode.SINGLE_ROTOR:
                    B = control_effectiveness_srf(self.params, self.failure, f["R33"], f["h3"])
                else:
                    nu = np.append(nu, self.inner.k_r * (self._yaw_rate_ref(sensors, ref)
                                                         - sensors.gyro[2]))
                    B = control_effectiveness_nominal(self.params, f["R33"], f["h3"])
            out = indi_step(B, nu, y_dd, u_f, self.omega_min, self.omega_max)
        except SingularEffectiveness:
            self.last = ControlOutput(np.full(len(u_f), np.nan), self.mem.last_omega[
                self.failure.index], np.zeros(len(u_f)), np.zeros((len(u_f),) * 2), y_dd,
                held=True)
            return self.mem.last_omega.copy()
        self.last = out
        cmd = np.zeros(4)
        cmd[self.failure.index] = out.omega_cmd
        self.mem.last_omega = cmd
        return cmd.copy()

    def _yaw_rate_ref(self, sensors, ref):
        R = sensors.R
        phi = np.arctan2(R[2, 1], R[2, 2])
        theta = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
        psi = np.arctan2(R[1, 0], R[0, 0])
        _, q, r = sensors.gyro
        psi_dot = (q * np.sin(phi) + r * np.cos(phi)) / np.cos(theta)
        return yaw_rate_reference(_wrap(psi - ref.yaw), psi_dot, self.inner)


def srf_step(params, failure, ra_f, states_f, gains, n_body=(0.0, 0.0, -1.0)):
    """Stateless single-failure INDI step for already-filtered signals.

    ``states_f`` holds ``Z, Vz, h1dot, h2dot, y_ddot_f, u_f, R33_f`` and the
    reference triple ``Z_ref, Zd_ref, Zdd_ref``.
    """
    n_body = np.asarray(n_body)
    h = ra_f.h
    xi = [states_f["Z"], states_f["Vz"], h[0] - n_body[0], states_f["h1dot"],
          h[1] - n_body[1], states_f["h2dot"]]
    nu = pseudo_input_srf(xi, states_f.get("Z_ref", 0.0), states_f.get("Zd_ref", 0.0),
                          states_f.get("Zdd_ref", 0.0), gains)
    B = control_effectiveness_srf(params, failure, states_f["R33_f"], h[2])
    return indi_step(B, nu, states_f["y_ddot_f"], states_f["u_f"])


def nominal_step(params, B_inputs, nu, y_ddot_f, u_f):
    """Four-output INDI step; ``B_inputs = (R33_f, h3_f)``."""
    B = control_effectiveness_nominal(params, *B_inputs)
    return indi_step(B, nu, y_ddot_f, u_f)
