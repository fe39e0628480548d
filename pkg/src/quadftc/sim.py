"""Fixed-step 6-DOF simulation of the damaged quadrotor.

Frames: inertial NED-like (z along gravity), body frame x forward, z down.
The translational/rate states use classical RK4; attitude is advanced on
SO(3) with Runge-Kutta-Munthe-Kaas stages so that ``R`` never leaves the
group and the scheme stays fourth order.
"""

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .mathutil import cross3, expm_so3, integrate_rotation, orthonormality_error, reorthonormalize
from .vehicle import (NO_DISTURBANCE, RotorBank, aero_eval, body_force, body_moment,
                      rotor_step)

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    pass


@dataclass
class SimState:
    P: np.ndarray
    V: np.ndarray
    R: np.ndarray
    Omega: np.ndarray
    rotors: RotorBank
    t: float = 0.0

    def copy(self):
        return SimState(self.P.copy(), self.V.copy(), self.R.copy(), self.Omega.copy(),
                        self.rotors.copy(), self.t)


@dataclass
class LossOfControl:
    """Crash predicate thresholds (see README for the rationale)."""

    tilt: float = 0.95
    tilt_time: float = 0.3
    position_error: float = 10.0
    saturation_time: float = 1.0


@dataclass
class SimConfig:
    dt: float = 0.0005
    controller_rate: float = 500.0
    position_rate: float = 120.0
    log_rate: float = 100.0
    gyro_noise: float = 0.01
    accel_noise: float = 0.1
    rotor_noise: float = 0.0
    noise: bool = False
    seed: int = 0
    max_time: float = 60.0
    loss: LossOfControl = field(default_factory=LossOfControl)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.controller_rate * self.dt > 1.0 + 1e-12:
            raise ValueError("controller rate cannot exceed the physics rate")

    @property
    def controller_divider(self):
        return max(1, int(round(1.0 / (self.controller_rate * self.dt))))

    @property
    def log_divider(self):
        return max(1, int(round(1.0 / (self.log_rate * self.dt))))


@dataclass
class SensorFrame:
    gyro: np.ndarray
    accel: np.ndarray
    rotor_speeds: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    R: np.ndarray
    t: float


@dataclass
class StateDerivative:
    P_dot: np.ndarray
    V_dot: np.ndarray
    Omega: np.ndarray
    Omega_dot: np.ndarray


def dynamics_deriv(state, params, rotor_accels=None, dist=NO_DISTURBANCE, wind=np.zeros(3)):
    """Rigid-body equations of motion with rotor speeds frozen at their current value."""
    omega = state.rotors.omega
    if rotor_accels is None:
        rotor_accels = np.zeros(4)
    F_a, M_a = aero_eval(dist, state.R, state.V, state.Omega, wind, state.t)
    F = body_force(params, omega, F_a)
    M = body_moment(params, omega, rotor_accels, state.Omega, M_a)
    I = np.array([params.Ix, params.Iy, params.Iz])
    W = state.Omega
    V_dot = np.array([0.0, 0.0, params.g]) + state.R @ F / params.mass
    Omega_dot = (M - cross3(W, I * W)) / I
    return StateDerivative(state.V.copy(), V_dot, W.copy(), Omega_dot)


def _dexpinv(theta, w):
    # right-trivialized inverse differential of exp, truncated after the
    # second commutator (enough for a 4th-order RKMK scheme)
    c = cross3(theta, w)
    return w + 0.5 * c + cross3(theta, c) / 12.0


def sim_step(state, commands, dt, params, dist=NO_DISTURBANCE, wind=None):
    """Advance physics by ``dt``: RK4 on (P, V, Ω), RKMK4 on R, then the rotors.

    ``wind`` may be a constant vector or a callable ``wind(t)``.
    """
    if wind is None:
        wind_fn = lambda t: np.zeros(3)  # noqa: E731
    elif callable(wind):
        wind_fn = wind
    else:
        w = np.asarray(wind, dtype=float)
        wind_fn = lambda t: w  # noqa: E731

    rotors = state.rotors
    probe = replace(rotors, command=rotors.clamp(np.asarray(commands, dtype=float)))
    accels = probe.accelerations()
    t0 = state.t

    def stage(theta, dP, dV, dW, frac):
        s = SimState(state.P + dP, state.V + dV, state.R @ expm_so3(theta),
                     state.Omega + dW, rotors, t0 + frac * dt)
        return dynamics_deriv(s, params, accels, dist, wind_fn(s.t))

    zero = np.zeros(3)
    k1 = stage(zero, zero, zero, zero, 0.0)
    K1 = k1.Omega
    th2 = 0.5 * dt * K1
    k2 = stage(th2, 0.5 * dt * k1.P_dot, 0.5 * dt * k1.V_dot, 0.5 * dt * k1.Omega_dot, 0.5)
    K2 = _dexpinv(th2, k2.Omega)
    th3 = 0.5 * dt * K2
    k3 = stage(th3, 0.5 * dt * k2.P_dot, 0.5 * dt * k2.V_dot, 0.5 * dt * k2.Omega_dot, 0.5)
    K3 = _dexpinv(th3, k3.Omega)
    th4 = dt * K3
    k4 = stage(th4, dt * k3.P_dot, dt * k3.V_dot, dt * k3.Omega_dot, 1.0)
    K4 = _dexpinv(th4, k4.Omega)

    def comb(a, b, c, d):
        return (a + 2.0 * b + 2.0 * c + d) * (dt / 6.0)

    P = state.P + comb(k1.P_dot, k2.P_dot, k3.P_dot, k4.P_dot)
    V = state.V + comb(k1.V_dot, k2.V_dot, k3.V_dot, k4.V_dot)
    W = state.Omega + comb(k1.Omega_dot, k2.Omega_dot, k3.Omega_dot, k4.Omega_dot)
    R = integrate_rotation(state.R, comb(K1, K2, K3, K4) / dt, dt)
    new = SimState(P, V, R, W, rotor_step(rotors, commands, dt), t0 + dt)
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(V))
            and np.all(np.isfinite(W)) and np.all(np.isfinite(R))):
        raise SimulationError(f"non-finite state at t={new.t:.4f}")
    return new


def specific_force(state, params, dist=NO_DISTURBANCE, wind=np.zeros(3)):
    """What an ideal body-mounted accelerometer reads [m/s²]."""
    F_a, _ = aero_eval(dist, state.R, state.V, state.Omega, wind, state.t)
    return body_force(params, state.rotors.omega, F_a) / params.mass


TRACE_COLUMNS = (["t", "X", "Y", "Z", "Vx", "Vy", "Vz", "p", "q", "r", "h1", "h2", "h3",
                  "eta1", "eta2", "eta3", "y2"]
                 + [f"omega_cmd_{i}" for i in range(1, 5)]
                 + [f"omega_{i}" for i in range(1, 5)]
                 + ["wind", "crashed"])


@dataclass
class TraceLog:
    rows: list = field(default_factory=list)
    crashed: bool = False
    crash_time: float = float("nan")
    cause: str = ""
    max_orthonormality_error: float = 0.0
    columns: tuple = tuple(TRACE_COLUMNS)

    def as_array(self):
        if not self.rows:
            return np.zeros((0, len(self.columns)))
        return np.array(self.rows, dtype=float)

    def column(self, name):
        return self.as_array()[:, self.columns.index(name)]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format(v, ".10g") for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


class _CrashMonitor:
    def __init__(self, loss, omega_max, mask):
        self.loss = loss
        self.omega_max = omega_max
        self.mask = mask.astype(bool)
        self.tilt_since = None
        self.sat_since = None

    def check(self, t, tilt_err, pos_err, commands):
        loss = self.loss
        if not np.isfinite(tilt_err) or not np.isfinite(pos_err):
            return "numerical"
        if pos_err > loss.position_error:
            return "position"
        if tilt_err > loss.tilt:
            self.tilt_since = t if self.tilt_since is None else self.tilt_since
            if t - self.tilt_since > loss.tilt_time:
                return "tilt"
        else:
            self.tilt_since = None
        if np.any(commands[self.mask] >= self.omega_max - 1e-9):
            self.sat_since = t if self.sat_since is None else self.sat_since
            if t - self.sat_since > loss.saturation_time:
                return "actuator"
        else:
            self.sat_since = None
        return None


def run_scenario(config, params, failure, controller, scenario, rotor_kw=None):
    """Fly ``controller`` through ``scenario`` and return the decimated trace.

    ``scenario`` supplies ``duration``, ``initial_state(params, failure,
    rotor_kw)``, ``reference(t)``, ``wind(t)``, ``disturbance`` and
    ``apply_events(t, controller)``. A crash ends the run early; it is a
    result recorded on the trace, not an exception.
    """
    from .analysis import trace_diagnostics

    rotor_kw = rotor_kw or {}
    rng = np.random.default_rng(config.seed)
    dt = config.dt
    n_steps = int(round(min(scenario.duration, config.max_time) / dt))
    ctrl_div = config.controller_divider
    log_div = config.log_divider
    dist = scenario.disturbance

    state = scenario.initial_state(params, failure, rotor_kw)
    trace = TraceLog()
    monitor = _CrashMonitor(config.loss, state.rotors.omega_max, failure.mask)

    def sense(st, pos, vel):
        wind = scenario.wind(st.t)
        gyro = st.Omega.copy()
        acc = specific_force(st, params, dist, wind)
        rot = st.rotors.omega.copy()
        if config.noise:
            gyro = gyro + rng.normal(0.0, config.gyro_noise, 3)
            acc = acc + rng.normal(0.0, config.accel_noise, 3)
            if config.rotor_noise > 0:
                rot = (rot + rng.normal(0.0, config.rotor_noise, 4)) * st.rotors.mask
        return SensorFrame(gyro, acc, rot, pos.copy(), vel.copy(), st.R.copy(), st.t)

    pos_meas, vel_meas = state.P.copy(), state.V.copy()
    last_pos_idx = 0
    ref = scenario.reference(0.0)
    controller.reset(sense(state, pos_meas, vel_meas), ref)
    commands = state.rotors.command.copy()

    def record(st, cmd, crashed):
        ref_now = scenario.reference(st.t)
        diag = trace_diagnostics(st, params, failure, controller, ref_now)
        wind = scenario.wind(st.t)
        trace.rows.append([st.t, *st.P, *st.V, *st.Omega, *diag, *cmd, *st.rotors.omega,
                           float(np.linalg.norm(wind)), float(crashed)])

    for k in range(n_steps + 1):
        t = k * dt
        state.t = t
        if k % ctrl_div == 0:
            pos_idx = int(np.floor(t * config.position_rate + 1e-9))
            outer_due = k == 0 or pos_idx > last_pos_idx
            if outer_due:
                pos_meas, vel_meas = state.P.copy(), state.V.copy()
                last_pos_idx = pos_idx
            scenario.apply_events(t, controller)
            ref = scenario.reference(t)
            commands = np.asarray(controller.update(sense(state, pos_meas, vel_meas), ref,
                                                    outer_due), dtype=float)
            n_b = getattr(controller, "n_body", np.array([0.0, 0.0, -1.0]))
            h = state.R.T @ controller.n_d
            tilt_err = np.hypot(h[0] - n_b[0], h[1] - n_b[1])
            pos_err = np.linalg.norm(state.P - ref.position)
            cause = monitor.check(t, tilt_err, pos_err, commands)
            if cause:
                trace.crashed, trace.crash_time, trace.cause = True, t, cause
                record(state, commands, True)
                log.info("loss of control (%s) at t=%.3f", cause, t)
                break
        if k % log_div == 0:
            record(state, commands, False)
        if k == n_steps:
            break
        try:
            state = sim_step(state, commands, dt, params, dist, scenario.wind)
        except SimulationError as exc:
            trace.crashed, trace.crash_time, trace.cause = True, state.t, "numerical"
            log.warning("%s", exc)
            break
        trace.max_orthonormality_error = max(trace.max_orthonormality_error,
                                             orthonormality_error(state.R))
    return trace


__all__ = ["SimState", "SimConfig", "SensorFrame", "LossOfControl", "TraceLog",
           "dynamics_deriv", "sim_step", "specific_force", "run_scenario",
           "SimulationError", "TRACE_COLUMNS", "reorthonormalize"]
