"""Internal-dynamics analysis for the two-rotor (and single-rotor) cases.

Inner-loop state ordering used throughout: ``x = [h1, h2, p, q, r, Z, Vz]``.
For the double-failure case the normal form splits ``x`` into external
states ``xi = [Z, Vz, y2, ẏ2]`` and internal states ``eta`` with

    eta1 = -h1 sin χ + h2 cos χ
    eta2 = h3 (q cos ζ - s_l p sin ζ)
    eta3 = r + s_n μ Vz,        μ = m σ / (I_z h3)

where ``χ = s_l |χ|``. The ``h3`` factor on ``eta2`` is what makes the
linearised zero dynamics equal the familiar ``A1`` matrix for either sign
of ``h3``; ``μ`` carries ``I_z`` so that ``eta3`` is rotor-input free.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .mathutil import eig2_real_parts
from .vehicle import PITCH_SIGN, ROLL_SIGN, YAW_SIGN, FailureMode


class SingularOutputError(ValueError):
    """Raised when |χ| sits on ζ + kπ or h3 = 0 (transform not invertible)."""


Signs = namedtuple("Signs", "s_l s_n")

SING_TOL = 1e-9


@dataclass(frozen=True)
class TrimEquilibrium:
    r_bar: float
    omega_bar: float
    eta_bar: np.ndarray
    V_z: float = 0.0
    h3: float = -1.0


def chi_signed(failure, chi_abs):
    return failure.s_l * chi_abs


def mu(params, h3):
    return params.mass * params.sigma / (params.Iz * h3)


def trim(params, failure, V_z=0.0, h3=-1.0):
    """Spinning hover trim: yaw damping balances the surviving rotors' drag torque."""
    if params.gamma <= 0 or params.kappa <= 0:
        raise ValueError("gamma and kappa must be positive")
    r_bar = -failure.s_n * params.mass * params.g * params.sigma / params.gamma
    omega_bar = np.sqrt(params.mass * params.g / (2.0 * params.kappa))
    eta_bar = np.array([0.0, 0.0, r_bar + failure.s_n * mu(params, h3) * V_z])
    return TrimEquilibrium(r_bar, omega_bar, eta_bar, V_z, h3)


def _rate_coeffs(params, failure, trm):
    # roll/pitch rate cross-coupling at trim: ṗ ∋ Px q, q̇ ∋ Py p
    Px = params.A_x * trm.r_bar - 2.0 * params.a_x * trm.omega_bar * failure.s_n
    Py = params.A_y * trm.r_bar + 2.0 * params.a_y * trm.omega_bar * failure.s_n
    return Px, Py


@dataclass(frozen=True)
class A1Matrix:
    matrix: np.ndarray
    Lambda: float
    Delta: float
    chi_abs: float
    zeta: float

    @property
    def real_parts(self):
        return eig2_real_parts(self.matrix)

    @property
    def hurwitz(self):
        return max(self.real_parts) < 0.0


def a1(params, failure, chi_abs, trm):
    """Linearised (eta1, eta2) zero dynamics at the relaxed trim.

    ``A1 = s_l / sin(|χ|-ζ) * [[-r cos(|χ|-ζ), 1], [-r Λ, Δ]]`` with
    ``Λ = Py cos²ζ - Px sin²ζ`` and ``Δ = Py cos ζ cos|χ| - Px sin ζ sin|χ|``.
    """
    z = params.zeta
    s = np.sin(chi_abs - z)
    if abs(s) < SING_TOL:
        raise SingularOutputError(f"|chi|={np.degrees(chi_abs):.3f} deg is singular (zeta + k pi)")
    Px, Py = _rate_coeffs(params, failure, trm)
    Lam = Py * np.cos(z) ** 2 - Px * np.sin(z) ** 2
    Delta = Py * np.cos(z) * np.cos(chi_abs) - Px * np.sin(z) * np.sin(chi_abs)
    r = trm.r_bar
    M = (failure.s_l / s) * np.array([[-r * np.cos(chi_abs - z), 1.0],
                                      [-r * Lam, Delta]])
    return A1Matrix(M, Lam, Delta, chi_abs, z)


def r_B(params, chi_abs, h3=-1.0):
    """|B2| / min(|G_p|, |G_q|): effectiveness on y2 relative to the weaker axis."""
    z = params.zeta
    B2 = -h3 * params.G_p / np.cos(z) * np.sin(z - chi_abs)
    return abs(B2) / min(abs(params.G_p), abs(params.G_q))


ADMISSIBLE, UNSTABLE, LOW_EFFECTIVENESS, SINGULAR = (
    "admissible", "unstable", "low-effectiveness", "singular")


def verdict(real_parts, rB, singular=False):
    if singular:
        return SINGULAR
    if max(real_parts) >= 0.0:
        return UNSTABLE
    if rB < 1.0:
        return LOW_EFFECTIVENESS
    return ADMISSIBLE


def classify_chi(params, failure, chi_abs, trm=None):
    """Return ``(verdict, (re1, re2), r_B)`` for one value of |χ|."""
    trm = trm or trim(params, failure)
    rB = r_B(params, chi_abs, trm.h3)
    try:
        re = a1(params, failure, chi_abs, trm).real_parts
    except SingularOutputError:
        return SINGULAR, (np.nan, np.nan), rB
    return verdict(re, rB), re, rB


@dataclass
class ChiSweepResult:
    chi: np.ndarray
    real_parts: np.ndarray
    r_B: np.ndarray
    verdicts: list = field(default_factory=list)

    def admissible_intervals(self):
        """Contiguous admissible stretches of the grid as ``(lo, hi)`` in rad."""
        out, start = [], None
        ok = [v == ADMISSIBLE for v in self.verdicts]
        for i, flag in enumerate(ok):
            if flag and start is None:
                start = i
            if not flag and start is not None:
                out.append((self.chi[start], self.chi[i - 1]))
                start = None
        if start is not None:
            out.append((self.chi[start], self.chi[-1]))
        return out

    def is_admissible(self, chi_abs):
        return any(lo <= chi_abs <= hi for lo, hi in self.admissible_intervals())

    def to_csv(self, path=None):
        lines = ["chi_deg,re_lambda1,re_lambda2,r_B,verdict"]
        for c, (a, b), rb, v in zip(self.chi, self.real_parts, self.r_B, self.verdicts):
            lines.append(f"{np.degrees(c):.4f},{a:.10g},{b:.10g},{rb:.10g},{v}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def default_grid(params, step_deg=0.5):
    z = np.degrees(params.zeta)
    return np.radians(np.arange(z + step_deg, z + 180.0 - step_deg + 1e-9, step_deg))


def chi_sweep(params, failure, grid=None):
    grid = default_grid(params) if grid is None else np.asarray(grid, dtype=float)
    z = params.zeta
    if np.any(grid <= z) or np.any(grid >= z + np.pi):
        raise ValueError("sweep grid must lie strictly inside (zeta, zeta + pi)")
    trm = trim(params, failure)
    re, rb, verdicts = [], [], []
    for c in grid:
        v, parts, r = classify_chi(params, failure, c, trm)
        re.append(parts)
        rb.append(r)
        verdicts.append(v)
    return ChiSweepResult(grid, np.array(re), np.array(rb), verdicts)


# --------------------------------------------------------------------------
# inner-loop model and normal form


def inner_loop_deriv(x, u, params, failure, omega_bar, R33=1.0, h3=None,
                     lam=(0.0, 0.0), F_az=0.0, M_a=(0.0, 0.0, 0.0)):
    """``ẋ`` of the 7-state inner loop for the two-rotor case; ``M_a`` in rad/s²."""
    h1, h2, p, q, r, Z, Vz = x
    if h3 is None:
        h3 = -np.sqrt(max(0.0, 1.0 - h1 * h1 - h2 * h2))
    s_l, s_n = failure.s_l, failure.s_n
    du, su = u[0] - u[1], u[0] + u[1]
    return np.array([
        r * h2 - q * h3 + lam[0],
        -r * h1 + p * h3 + lam[1],
        params.A_x * r * q - 2 * params.a_x * q * omega_bar * s_n + M_a[0] + s_l * params.G_p * du,
        params.A_y * r * p + 2 * params.a_y * p * omega_bar * s_n + M_a[1] + params.G_q * du,
        params.A_z * p * q - params.gamma * r / params.Iz + M_a[2] - s_n * params.G_r * su,
        Vz,
        params.g + F_az - R33 * params.kappa * su / params.mass,
    ])


def _h3_of(h1, h2):
    rad = 1.0 - h1 * h1 - h2 * h2
    if rad <= 0.0:
        raise SingularOutputError("h1² + h2² >= 1 leaves h3 = 0")
    return -np.sqrt(rad)


def normal_form(x, chi_abs, params, failure, h3=None, lam=(0.0, 0.0)):
    """Map ``x = [h1, h2, p, q, r, Z, Vz]`` to ``(xi, eta)``."""
    h1, h2, p, q, r, Z, Vz = x
    h3 = _h3_of(h1, h2) if h3 is None else h3
    chi = chi_signed(failure, chi_abs)
    c, s = np.cos(chi), np.sin(chi)
    z = params.zeta
    xi = np.array([Z, Vz, h1 * c + h2 * s,
                   c * (-h3 * q + h2 * r + lam[0]) + s * (h3 * p - h1 * r + lam[1])])
    eta = np.array([-h1 * s + h2 * c,
                    h3 * (q * np.cos(z) - failure.s_l * p * np.sin(z)),
                    r + failure.s_n * mu(params, h3) * Vz])
    return xi, eta


def inverse_normal_form(xi, eta, chi_abs, params, failure, h3=None, lam=(0.0, 0.0)):
    """Recover ``x`` from ``(xi, eta)``; needs ``h3 sin(ζ - |χ|) != 0``."""
    chi = chi_signed(failure, chi_abs)
    c, s = np.cos(chi), np.sin(chi)
    z = params.zeta
    D = failure.s_l * np.sin(chi_abs - z)
    if abs(D) < SING_TOL:
        raise SingularOutputError("sin(zeta - |chi|) = 0")
    Z, Vz, y2, y2dot = xi
    e1, e2, e3 = eta
    h1 = y2 * c - e1 * s
    h2 = y2 * s + e1 * c
    h3 = _h3_of(h1, h2) if h3 is None else h3
    if abs(h3) < SING_TOL:
        raise SingularOutputError("h3 = 0")
    r = e3 - failure.s_n * mu(params, h3) * Vz
    # h3 (p s - q c) = b1 h3,  q cos ζ - s_l p sin ζ = e2 / h3
    b1 = (y2dot - lam[0] * c - lam[1] * s - r * e1) / h3
    w = e2 / h3
    p = (b1 * np.cos(z) + c * w) / D
    q = (s * w + failure.s_l * np.sin(z) * b1) / D
    return np.array([h1, h2, p, q, r, Z, Vz])


def normal_form_roundtrip(states, chi_abs, params, failure):
    """Largest component error of ``T⁻¹(T(x)) - x`` over a batch of states."""
    states = np.atleast_2d(states)
    err = 0.0
    for x in states:
        xi, eta = normal_form(x, chi_abs, params, failure)
        back = inverse_normal_form(xi, eta, chi_abs, params, failure)
        err = max(err, float(np.max(np.abs(back - x))))
    return err


def eta_rate(x, xdot, chi_abs, params, failure, h3):
    """Time derivative of the internal states along ``xdot`` (h3 held)."""
    chi = chi_signed(failure, chi_abs)
    z = params.zeta
    return np.array([
        -np.sin(chi) * xdot[0] + np.cos(chi) * xdot[1],
        h3 * (np.cos(z) * xdot[3] - failure.s_l * np.sin(z) * xdot[2]),
        xdot[4] + failure.s_n * mu(params, h3) * xdot[6],
    ])


def zero_dynamics_drf(eta, params, failure, chi_abs, trm, h3=-1.0, u=None):
    """``η̇`` with the outputs pinned at zero (``xi = 0``).

    Built by composing the inverse transform with the inner-loop model; the
    rotor inputs drop out (any ``u`` gives the same answer) as long as the
    thrust axis is vertical, i.e. ``R33 = -h3``.
    """
    x = inverse_normal_form(np.zeros(4), eta, chi_abs, params, failure, h3=h3)
    R33 = -h3
    if u is None:
        total = params.mass * params.g / (params.kappa * R33)
        u = np.array([0.5 * total, 0.5 * total])
    xdot = inner_loop_deriv(x, u, params, failure, trm.omega_bar, R33=R33, h3=h3)
    return eta_rate(x, xdot, chi_abs, params, failure, h3)


def zero_dynamics_equilibrium(params, failure, h3=-1.0):
    """η̄ solving η̇ = 0 at η1 = η2 = 0."""
    return np.array([0.0, 0.0, failure.s_n * params.mass * params.sigma * params.g
                     / (params.gamma * h3)])


def numeric_jacobian(f, x0, rel=1e-6):
    x0 = np.asarray(x0, dtype=float)
    J = np.zeros((len(f(x0)), len(x0)))
    for i in range(len(x0)):
        h = rel * max(1.0, abs(x0[i]))
        e = np.zeros_like(x0)
        e[i] = h
        J[:, i] = (f(x0 + e) - f(x0 - e)) / (2 * h)
    return J


def zero_dynamics_jacobian(params, failure, chi_abs, trm, h3=-1.0):
    eta_bar = zero_dynamics_equilibrium(params, failure, h3)
    return numeric_jacobian(
        lambda e: zero_dynamics_drf(e, params, failure, chi_abs, trm, h3), eta_bar)


def analytic_zero_dynamics_jacobian(params, failure, chi_abs, trm):
    J = np.zeros((3, 3))
    J[:2, :2] = a1(params, failure, chi_abs, trm).matrix
    J[2, 2] = -params.gamma / params.Iz
    return J


# --------------------------------------------------------------------------
# single rotor failure


def srf_input_columns(params, failure, R33=1.0):
    """Per-active-rotor input effect on (ṙ, V̇z, ṗ, q̇) [per rad²/s²]."""
    idx = failure.index
    return (params.G_r * YAW_SIGN[idx],
            -R33 * params.kappa / params.mass * np.ones(len(idx)),
            params.G_p * ROLL_SIGN[idx],
            params.G_q * PITCH_SIGN[idx])


def srf_mus(params, failure, h3=-1.0):
    """μ1, μ2, μ3 making ``η1 = r + μ1 Vz + μ2 p + μ3 q`` input-free."""
    if failure.mode is not FailureMode.SINGLE_ROTOR:
        raise ValueError("srf_mus needs a single-rotor failure config")
    g_r, g_v, g_p, g_q = srf_input_columns(params, failure, R33=-h3)
    A = np.column_stack([g_v, g_p, g_q])
    return np.linalg.solve(A, -g_r)


def srf_theta_pi(params, n_body, mus):
    nx, ny, h3 = n_body
    _, m2, m3 = mus
    theta = nx * m2 / h3 + ny * m3 / h3 + 1.0
    pi = params.A_z * nx * ny / h3 + params.A_x * ny * m2 + params.A_y * nx * m3
    return theta, pi


def zero_dynamics_srf(eta1, params, n_body, mus):
    """Scalar single-failure zero dynamics (yaw damping scaled by 1/I_z)."""
    theta, pi = srf_theta_pi(params, n_body, mus)
    if abs(theta) < SING_TOL:
        raise SingularOutputError("Theta = 0")
    h3 = n_body[2]
    return (-params.gamma / (params.Iz * theta) * eta1
            + pi / (h3 * theta ** 2) * eta1 ** 2 + params.g * mus[0])


def srf_equilibrium(params, n_body, mus):
    """Root of the SRF zero dynamics closest to the linear (Π = 0) solution."""
    theta, pi = srf_theta_pi(params, n_body, mus)
    h3 = n_body[2]
    a = pi / (h3 * theta ** 2)
    b = -params.gamma / (params.Iz * theta)
    c = params.g * mus[0]
    lin = -c / b
    if abs(a) < 1e-14:
        return lin
    roots = np.roots([a, b, c])
    roots = roots[np.isreal(roots)].real
    return roots[np.argmin(np.abs(roots - lin))]


def srf_slope(params, n_body, mus):
    """d(η̇1)/d(η1) at the SRF equilibrium; negative means locally stable."""
    theta, pi = srf_theta_pi(params, n_body, mus)
    e = srf_equilibrium(params, n_body, mus)
    return -params.gamma / (params.Iz * theta) + 2 * pi * e / (n_body[2] * theta ** 2)


# --------------------------------------------------------------------------
# trace helpers


def trace_diagnostics(state, params, failure, controller, reference):
    """(h1, h2, h3, eta1, eta2, eta3, y2) from the true state, for logging."""
    n_d = getattr(controller, "n_d", np.array([0.0, 0.0, -1.0]))
    h = state.R.T @ n_d
    chi_abs = getattr(controller, "chi_abs", np.radians(105.0))
    chi = chi_signed(failure, chi_abs)
    p, q, r = state.Omega
    z = params.zeta
    h3 = h[2] if abs(h[2]) > 1e-6 else -1e-6
    eta1 = -h[0] * np.sin(chi) + h[1] * np.cos(chi)
    eta2 = h3 * (q * np.cos(z) - failure.s_l * p * np.sin(z))
    eta3 = r + failure.s_n * mu(params, h3) * state.V[2]
    if failure.mode is FailureMode.DOUBLE_OPPOSING:
        y2 = h[0] * np.cos(chi) + h[1] * np.sin(chi)
    else:
        n_b = getattr(controller, "n_body", np.array([0.0, 0.0, -1.0]))
        y2 = h[0] - n_b[0]
    return (h[0], h[1], h[2], eta1, eta2, eta3, y2)
