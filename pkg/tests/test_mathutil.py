import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp
from scipy.spatial.transform import Rotation

from quadftc.mathutil import (LowPassFilter2, eig2_real_parts, expm_so3, integrate_rotation,
                              lowpass_step, orthonormality_error, skew)

vec = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_skew_examples():
    assert np.allclose(skew([0, 0, 1]) @ [1, 0, 0], [0, 1, 0])
    w = np.array([0.3, -1.2, 2.0])
    assert np.allclose(skew(w) @ w, 0.0)
    assert np.allclose(skew([1, 2, 3]) + skew([1, 2, 3]).T, 0.0)


@given(vec, vec)
def test_skew_matches_cross_and_is_linear(a, b):
    assert np.allclose(skew(a) @ b, np.cross(a, b), atol=1e-9)
    assert np.allclose(skew(a + b), skew(a) + skew(b))


def test_integrate_rotation_trivial_cases():
    assert np.array_equal(integrate_rotation(np.eye(3), np.zeros(3), 0.002), np.eye(3))
    R = integrate_rotation(np.eye(3), [0, 0, np.pi / 2], 1.0)
    assert np.allclose(R[:, 0], [0, 1, 0], atol=1e-12)


def test_integrate_rotation_against_fine_numeric_integration():
    rng = np.random.default_rng(3)
    for _ in range(5):
        R0 = Rotation.random(random_state=rng).as_matrix()
        w = rng.normal(size=3) * 3
        dt = 1e-3
        sol = solve_ivp(lambda t, y: (y.reshape(3, 3) @ skew(w)).ravel(), (0, dt), R0.ravel(),
                        method="DOP853", rtol=1e-13, atol=1e-14)
        assert np.max(np.abs(integrate_rotation(R0, w, dt) - sol.y[:, -1].reshape(3, 3))) < 1e-8


def test_expm_matches_scipy_rotvec():
    rng = np.random.default_rng(0)
    for _ in range(20):
        phi = rng.normal(size=3)
        assert np.allclose(expm_so3(phi), Rotation.from_rotvec(phi).as_matrix(), atol=1e-13)
    assert np.allclose(expm_so3([1e-10, 0, 0]), Rotation.from_rotvec([1e-10, 0, 0]).as_matrix())


@settings(max_examples=50)
@given(vec, st.floats(1e-4, 0.1))
def test_rotation_stays_orthonormal(w, dt):
    R = np.eye(3)
    for _ in range(50):
        R = integrate_rotation(R, w, dt)
    assert orthonormality_error(R) < 1e-9
    assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_eig2_examples():
    assert eig2_real_parts(np.array([[-1.0, 0], [0, -2]])) == (-1.0, -2.0)
    assert eig2_real_parts(np.array([[0.0, 1], [-1, 0]])) == (0.0, 0.0)
    # s² + 2s + 2 = 0 -> -1 ± j
    assert np.allclose(eig2_real_parts(np.array([[0.0, 1], [-2, -2]])), (-1, -1))


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=4))
def test_eig2_sums_to_trace_and_matches_numpy(v):
    A = np.array(v).reshape(2, 2)
    re = eig2_real_parts(A)
    assert abs(sum(re) - np.trace(A)) <= 1e-12 * max(1.0, abs(np.trace(A)), np.abs(A).max())
    ref = np.sort(np.linalg.eigvals(A).real)[::-1]
    assert np.allclose(re, ref, atol=1e-6 * max(1.0, np.abs(A).max()))


def test_filter_dc_gain_and_zero_input():
    f = LowPassFilter2()
    # at exactly 10/wc the 0.707-damped envelope is still ~1e-3; 20/wc is ample
    for _ in range(int(20 / f.cutoff / f.dt) + 1):
        y = lowpass_step(f, 3.7)
    assert abs(y - 3.7) < 1e-4 * 3.7
    g = LowPassFilter2()
    assert all(lowpass_step(g, 0.0) == 0.0 for _ in range(10))


def test_filter_step_response_matches_analytic_formula():
    wc, z, dt = 2 * np.pi * 15, 0.707, 1 / 512
    f = LowPassFilter2(wc, z, dt)
    wd = wc * np.sqrt(1 - z * z)
    phi = np.arccos(z)
    for k in range(1, 200):
        y = f.step(1.0)
        t = k * dt
        exact = 1 - np.exp(-z * wc * t) / np.sqrt(1 - z * z) * np.sin(wd * t + phi)
        assert abs(y - exact) < 1e-3


def test_identical_filters_give_identical_sequences():
    a, b = LowPassFilter2(), LowPassFilter2()
    sig = np.sin(np.linspace(0, 20, 300)) + np.random.default_rng(1).normal(size=300)
    assert [a.step(s) for s in sig] == [b.step(s) for s in sig]
    Aa, Ba = a.coefficients()
    Ab, Bb = b.coefficients()
    assert np.array_equal(Aa, Ab) and np.array_equal(Ba, Bb)


def test_filter_rejects_bad_parameters():
    with pytest.raises(ValueError):
        LowPassFilter2(cutoff=-1.0)
