"""Quadrotor parameters, rotor actuators and force/moment generation.

Rotor numbering (body frame, x forward/up the page, y right, z down)::

      1     2          rotor  roll arm     pitch arm    yaw sign
        \\ /            1      +b sinβ      +b cosβ       +σ
         X             2      -b sinβ      +b cosβ       -σ
        / \\            3      -b sinβ      -b cosβ       +σ
      4     3          4      +b sinβ      -b cosβ       -σ

Moments are kept in N·m here; division by inertia happens in the simulator.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np

ROLL_SIGN = np.array([1.0, -1.0, -1.0, 1.0])
PITCH_SIGN = np.array([1.0, 1.0, -1.0, -1.0])
YAW_SIGN = np.array([1.0, -1.0, 1.0, -1.0])


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants; defaults describe a small 410 g quadrotor.

    ``kappa`` is the hover thrust coefficient (thrust = kappa ω² [N]),
    ``sigma`` the rotor drag-to-thrust ratio [m], ``gamma`` the yaw damping
    coefficient [N·m·s].
    """

    Ix: float = 1.45e-3
    Iy: float = 1.26e-3
    Iz: float = 2.52e-3
    Ip: float = 8.0e-6
    mass: float = 0.410
    arm: float = 0.145
    beta: float = np.radians(52.6)
    gamma: float = 1.50e-3
    kappa: float = 1.90e-6
    sigma: float = 0.01
    g: float = 9.81

    def __post_init__(self):
        for name in ("Ix", "Iy", "Iz", "Ip", "mass", "arm", "gamma", "kappa", "sigma", "g"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise InputError(f"{name} must be strictly positive, got {v}")
        if not 0.0 < self.beta < np.pi / 2:
            raise InputError(f"beta must lie in (0, pi/2) rad, got {self.beta}")

    @property
    def inertia(self):
        return np.diag([self.Ix, self.Iy, self.Iz])

    @property
    def G_p(self):
        """Roll acceleration per unit of (ω₁² − ω₃²) [rad/s² per rad²/s²]."""
        return self.kappa * self.arm * np.sin(self.beta) / self.Ix

    @property
    def G_q(self):
        return self.kappa * self.arm * np.cos(self.beta) / self.Iy

    @property
    def G_r(self):
        return self.sigma * self.kappa / self.Iz

    @property
    def zeta(self):
        """Output direction angle at which y₂ loses all control effectiveness."""
        return np.arctan(self.Ix / self.Iy / np.tan(self.beta))

    @property
    def A_x(self):
        return (self.Iy - self.Iz) / self.Ix

    @property
    def A_y(self):
        return (self.Iz - self.Ix) / self.Iy

    @property
    def A_z(self):
        return (self.Ix - self.Iy) / self.Iz

    @property
    def a_x(self):
        return self.Ip / self.Ix

    @property
    def a_y(self):
        return self.Ip / self.Iy

    def allocation(self):
        """3x4 map from ω² to body moments [N·m] (rotor aerodynamics only)."""
        return self._allocation.copy()

    @cached_property
    def _allocation(self):
        k, b, s = self.kappa, self.arm, self.sigma
        return k * np.vstack([b * np.sin(self.beta) * ROLL_SIGN,
                              b * np.cos(self.beta) * PITCH_SIGN,
                              s * YAW_SIGN])


class FailureMode(str, Enum):
    DOUBLE_OPPOSING = "double_opposing"
    SINGLE_ROTOR = "single_rotor"
    NOMINAL = "nominal"


@dataclass(frozen=True)
class FailureConfig:
    """Which rotors still work.

    ``s_l`` is +1 when rotors 1 & 3 remain and -1 when 2 & 4 remain.
    ``s_n`` is the handedness of the surviving pair, chosen so that the
    trim yaw rate is ``-s_n m g σ / γ``: rotors 1 & 3 push the body to a
    positive yaw rate, hence ``s_n = -1`` for them.
    """

    mode: FailureMode
    active: tuple
    s_l: int = 1
    s_n: int = -1

    def __post_init__(self):
        active = tuple(sorted(self.active))
        object.__setattr__(self, "active", active)
        if self.mode is FailureMode.DOUBLE_OPPOSING:
            if active == (1, 3):
                ok = self.s_l == 1 and self.s_n == -1
            elif active == (2, 4):
                ok = self.s_l == -1 and self.s_n == 1
            else:
                ok = False
            if not ok:
                raise InputError(f"inconsistent double-opposing config {active}, "
                                 f"s_l={self.s_l}, s_n={self.s_n}")
        elif self.mode is FailureMode.SINGLE_ROTOR:
            if len(active) != 3 or not set(active) <= {1, 2, 3, 4}:
                raise InputError(f"single-rotor failure needs 3 active rotors, got {active}")
        elif len(active) != 4:
            raise InputError("nominal mode needs all 4 rotors")

    @classmethod
    def double(cls, remaining=(1, 3)):
        remaining = tuple(sorted(remaining))
        if remaining == (1, 3):
            return cls(FailureMode.DOUBLE_OPPOSING, remaining, s_l=1, s_n=-1)
        return cls(FailureMode.DOUBLE_OPPOSING, remaining, s_l=-1, s_n=1)

    @classmethod
    def single(cls, failed=4):
        return cls(FailureMode.SINGLE_ROTOR, tuple(i for i in (1, 2, 3, 4) if i != failed))

    @classmethod
    def nominal(cls):
        return cls(FailureMode.NOMINAL, (1, 2, 3, 4))

    @property
    def mask(self):
        m = np.zeros(4)
        m[[i - 1 for i in self.active]] = 1.0
        return m

    @property
    def index(self):
        return np.array(self.active) - 1


@dataclass
class RotorBank:
    """First-order rotor speed dynamics with saturation; inactive rotors stay at 0."""

    omega: np.ndarray
    command: np.ndarray
    mask: np.ndarray
    tau: float = 0.030
    omega_min: float = 200.0
    omega_max: float = 1256.0

    @classmethod
    def create(cls, failure, omega0=0.0, **kw):
        mask = failure.mask
        omega = mask * omega0
        return cls(omega=omega.copy(), command=omega.copy(), mask=mask, **kw)

    def copy(self):
        return replace(self, omega=self.omega.copy(), command=self.command.copy())

    def clamp(self, w):
        return np.clip(w, self.omega_min, self.omega_max) * self.mask

    def accelerations(self):
        """Rotor angular accelerations implied by the current command."""
        return (self.clamp(self.command) - self.omega) / self.tau * self.mask


def rotor_step(rotors, commands, dt):
    """Advance the rotor bank one step of ``dt`` towards ``commands`` [rad/s]."""
    commands = np.asarray(commands, dtype=float)
    if not np.all(np.isfinite(commands)):
        raise InputError(f"non-finite rotor command {commands}")
    if dt <= 0:
        raise InputError("dt must be positive")
    cmd = rotors.clamp(commands)
    omega = rotors.omega + (dt / rotors.tau) * (cmd - rotors.omega)
    out = rotors.copy()
    out.command = cmd
    out.omega = rotors.clamp(omega)
    return out


@dataclass
class AeroDisturbance:
    """Parametric stand-in for the unmodelled aerodynamic force and moment.

    Force: drag on the body-frame airspeed ``v = Rᵀ(V - wind)``, either
    linear (``-C v``) or quadratic (``-C |v| v``). Moment [N·m]: a constant
    bias, optional sinusoids, and an airspeed-proportional in-plane moment
    ``moment_coeff * (v × e_z)`` mimicking rotor flapping in edgewise flow.
    """

    enabled: bool = True
    drag: np.ndarray = field(default_factory=lambda: np.zeros(3))
    drag_law: str = "linear"
    moment_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment_coeff: float = 0.0
    sinusoids: list = field(default_factory=list)  # (amplitude vec3, freq Hz, phase rad)

    def __post_init__(self):
        self.drag = np.asarray(self.drag, dtype=float)
        self.moment_bias = np.asarray(self.moment_bias, dtype=float)
        if self.drag_law not in ("linear", "quadratic"):
            raise InputError(f"unknown drag law {self.drag_law!r}")


NO_DISTURBANCE = AeroDisturbance(enabled=False)


def aero_eval(dist, R, V, Omega, wind, t=0.0):
    """Aerodynamic disturbance ``(F_a [N], M_a [N·m])``, both in body axes."""
    if dist is None or not dist.enabled:
        return np.zeros(3), np.zeros(3)
    v = R.T @ (np.asarray(V) - np.asarray(wind))
    if dist.drag_law == "linear":
        F = -dist.drag * v
    else:
        F = -dist.drag * np.abs(v) * v
    M = dist.moment_bias.copy()
    if dist.moment_coeff:
        M += dist.moment_coeff * np.array([v[1], -v[0], 0.0])
    for amp, freq, phase in dist.sinusoids:
        M += np.asarray(amp) * np.sin(2 * np.pi * freq * t + phase)
    return F, M


def thrust(params, omega):
    return params.kappa * np.sum(np.asarray(omega) ** 2)


def body_force(params, omega, F_a=None):
    """Total body-frame force [N]: rotor thrust along -z_B plus ``F_a``."""
    F = np.array([0.0, 0.0, -thrust(params, omega)])
    if F_a is not None:
        F = F + F_a
    return F


def body_moment(params, omega, omega_dot, Omega, M_a=None):
    """Total body-frame moment [N·m].

    ``omega`` / ``omega_dot`` are the 4 rotor speeds and accelerations with
    failed rotors already at zero, so they drop out of every sum.
    """
    omega = np.asarray(omega)
    p, q, r = Omega
    M = params._allocation @ (omega ** 2)
    spin = YAW_SIGN @ omega
    M = M + params.Ip * np.array([q * spin, -p * spin, YAW_SIGN @ np.asarray(omega_dot)])
    M[2] -= params.gamma * r
    if M_a is not None:
        M = M + M_a
    return M
