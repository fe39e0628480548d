"""Small fixed-size linear algebra, rotation and filtering helpers.

Everything here works on plain numpy arrays of shape (3,) or (3, 3).
Angles are radians throughout.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


_EYE3 = np.eye(3)
_EYE3.flags.writeable = False


def skew(w):
    """Return the 3x3 matrix ``W`` such that ``W @ a == np.cross(w, a)``."""
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def cross3(a, b):
    """``np.cross`` for two 3-vectors without the axis bookkeeping overhead."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def expm_so3(phi):
    """Closed-form (Rodrigues) exponential of ``skew(phi)``."""
    phi = np.asarray(phi, dtype=float)
    angle = np.sqrt(phi @ phi)
    K = skew(phi)
    if angle < 1e-8:
        # second-order Taylor, exact to rounding at this size
        return _EYE3 + K + 0.5 * K @ K
    a = np.sin(angle) / angle
    b = (1.0 - np.cos(angle)) / angle**2
    return _EYE3 + a * K + b * K @ K


def reorthonormalize(R):
    """One Newton step of the polar decomposition, ``R (3I - RᵀR) / 2``.

    Converges quadratically for matrices already close to SO(3), which is
    always the case after a single integration step.
    """
    return 0.5 * R @ (3.0 * _EYE3 - R.T @ R)


def integrate_rotation(R, omega_body, dt):
    """Advance ``Ṙ = R skew(ω)`` over ``dt`` with ω held constant in body axes."""
    return reorthonormalize(R @ expm_so3(np.asarray(omega_body) * dt))


def orthonormality_error(R):
    return np.max(np.abs(R.T @ R - np.eye(3)))


def eig2_real_parts(A):
    """Real parts of the two eigenvalues of a 2x2 matrix, larger first.

    Uses the trace/determinant form so that a sign flip of the trace with an
    unchanged determinant maps the result to its exact negation.
    """
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    half = 0.5 * tr
    disc = half * half - det
    if disc < 0.0:
        return half, half
    root = np.sqrt(disc)
    return half + root, half - root


@dataclass
class LowPassFilter2:
    """Second-order low-pass filter, zero-order-hold discretized.

    ``H(s) = wc² / (s² + 2 ζ wc s + wc²)`` sampled at ``dt``. All filters
    built with the same ``(cutoff, damping, dt)`` share identical
    coefficients, which is what keeps the INDI channels time-aligned.
    """

    cutoff: float = 2 * np.pi * 15.0
    damping: float = 0.707
    dt: float = 1.0 / 500.0
    state: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        if self.cutoff <= 0 or self.dt <= 0 or self.damping <= 0:
            raise ValueError("cutoff, damping and dt must be positive")
        wc, z = self.cutoff, self.damping
        A = np.array([[0.0, 1.0], [-wc * wc, -2.0 * z * wc]])
        B = np.array([0.0, wc * wc])
        M = np.zeros((3, 3))
        M[:2, :2] = A * self.dt
        M[:2, 2] = B * self.dt
        E = expm(M)
        self._Ad = E[:2, :2]
        self._Bd = E[:2, 2]
        self.state = np.asarray(self.state, dtype=float).copy()

    def reset(self, value=0.0):
        """Put the filter at rest on ``value`` (output = value, rate = 0)."""
        self.state = np.array([float(value), 0.0])

    @property
    def output(self):
        return self.state[0]

    def step(self, sample):
        # ZOH: output at k reflects input held over [k-1, k)
        self.state = self._Ad @ self.state + self._Bd * sample
        return self.state[0]

    def coefficients(self):
        return self._Ad.copy(), self._Bd.copy()


def lowpass_step(f, sample):
    return f.step(sample)


class FilterBank:
    """A group of identical :class:`LowPassFilter2` channels keyed by name."""

    def __init__(self, names, cutoff, damping, dt):
        self.filters = {n: LowPassFilter2(cutoff, damping, dt) for n in names}

    def reset(self, values):
        for name, v in values.items():
            self.filters[name].reset(v)

    def step(self, samples):
        return {name: self.filters[name].step(v) for name, v in samples.items()}

    def __getitem__(self, name):
        return self.filters[name]
