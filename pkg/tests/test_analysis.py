"""Trim, |chi| admissibility, normal form and zero dynamics."""

from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadftc.analysis import (ADMISSIBLE, LOW_EFFECTIVENESS, SINGULAR, UNSTABLE, Signs,
                              SingularOutputError, TrimEquilibrium, a1,
                              analytic_zero_dynamics_jacobian, chi_sweep, classify_chi,
                              default_grid, inner_loop_deriv, inverse_normal_form,
                              normal_form, normal_form_roundtrip, numeric_jacobian, r_B,
                              srf_equilibrium, srf_mus, srf_slope, trim,
                              zero_dynamics_drf, zero_dynamics_equilibrium,
                              zero_dynamics_jacobian, zero_dynamics_srf)
from quadftc.scenario import trim_state
from quadftc.sim import dynamics_deriv
from quadftc.vehicle import FailureConfig, VehicleParams

P = VehicleParams()
DRF = FailureConfig.double()
TRM = trim(P, DRF)
deg = np.radians


def test_trim_near_quoted_values():
    assert abs(TRM.r_bar - 26.4) / 26.4 < 0.03
    assert abs(TRM.omega_bar - 1015.0) / 1015.0 < 0.02
    assert np.isclose(TRM.r_bar, 26.81, atol=0.01)


def test_trim_is_an_equilibrium_of_the_body_model():
    d = dynamics_deriv(trim_state(P, DRF), P)
    assert np.allclose(d.V_dot, 0.0, atol=1e-9)
    assert np.allclose(d.Omega_dot, 0.0, atol=1e-9)


def test_trim_scaling_and_validation():
    assert np.isclose(trim(replace(P, gamma=2 * P.gamma), DRF).r_bar, TRM.r_bar / 2)
    assert np.isclose(trim(P, FailureConfig.double((2, 4))).r_bar, -TRM.r_bar)


def test_trim_rejects_nonpositive_damping():
    with pytest.raises(ValueError):
        VehicleParams(gamma=0.0)
    duck = SimpleNamespace(**{k: getattr(P, k) for k in ("mass", "g", "sigma", "kappa", "Iz")},
                           gamma=0.0)
    with pytest.raises(ValueError):
        trim(duck, DRF)


def test_a1_without_rotation_has_only_the_coupling_entry():
    still = TrimEquilibrium(0.0, 0.0, np.zeros(3))
    for chi in (deg(90), deg(120)):
        M = a1(P, DRF, chi, still).matrix
        expect = np.zeros((2, 2))
        expect[0, 1] = DRF.s_l / np.sin(chi - P.zeta)
        assert np.allclose(M, expect, atol=1e-15)


def test_a1_singular_at_zeta():
    with pytest.raises(SingularOutputError):
        a1(P, DRF, P.zeta, TRM)
    assert classify_chi(P, DRF, P.zeta + np.pi)[0] == SINGULAR


def test_a1_real_parts_match_numpy():
    for c in default_grid(P, 5.0):
        M = a1(P, DRF, c, TRM).matrix
        ref = np.sort(np.linalg.eigvals(M).real)[::-1]
        assert np.allclose(a1(P, DRF, c, TRM).real_parts, ref, atol=1e-9)


def test_r_b_against_model_derivative():
    # B2 = d(y2'')/d(u1 - u2) taken through the inner-loop model numerically
    x0 = np.array([0.0, 0.0, 0.0, 0.0, TRM.r_bar, 0.0, 0.0])
    for chi in deg(np.array([60.0, 90.0, 105.0, 140.0])):
        def xi4(x):
            return normal_form(x, chi, P, DRF, h3=-1.0)[0][3]

        grad = numeric_jacobian(lambda x: np.array([xi4(x)]), x0)[0]
        du = 1e3
        f = lambda d: inner_loop_deriv(x0, [5e5 + d, 5e5 - d], P, DRF, TRM.omega_bar, h3=-1.0)
        B2 = grad @ (f(du) - f(-du)) / (4 * du)
        assert np.isclose(abs(B2) / min(P.G_p, P.G_q), r_B(P, chi), rtol=1e-6)


def test_r_b_shape():
    assert r_B(P, P.zeta) < 1e-12
    grid = np.linspace(P.zeta, P.zeta + np.pi, 3601)
    peak = grid[np.argmax([r_B(P, c) for c in grid])]
    assert np.isclose(peak, P.zeta + np.pi / 2, atol=1e-3)


def test_classification_examples():
    expected = {70: LOW_EFFECTIVENESS, 90: ADMISSIBLE, 105: ADMISSIBLE, 140: UNSTABLE,
                180: UNSTABLE}
    for d, v in expected.items():
        assert classify_chi(P, DRF, deg(d))[0] == v, d
    v, re, rb = classify_chi(P, DRF, deg(140))
    assert max(re) > 0 and rb > 1


def test_sweep_region_and_csv(tmp_path):
    res = chi_sweep(P, DRF)
    assert len(res.verdicts) == len(res.chi)
    (lo, hi), = res.admissible_intervals()
    assert 80 < np.degrees(lo) < 90 < 105 < np.degrees(hi) < 135
    text = res.to_csv(tmp_path / "region.csv")
    assert text.splitlines()[0] == "chi_deg,re_lambda1,re_lambda2,r_B,verdict"
    assert len(text.splitlines()) == len(res.chi) + 1
    with pytest.raises(ValueError):
        chi_sweep(P, DRF, grid=[P.zeta])


def test_sign_flip_negates_real_parts_exactly():
    flipped = Signs(DRF.s_l, -DRF.s_n)
    t2 = trim(P, flipped)
    worst = 0.0
    for c in default_grid(P):
        a = np.array(a1(P, DRF, c, TRM).real_parts)
        b = np.array(a1(P, flipped, c, t2).real_parts)
        worst = max(worst, np.max(np.abs(a + b[::-1])))
    assert worst < 1e-12


def test_mirror_pair_has_the_same_spectrum():
    other = FailureConfig.double((2, 4))
    t2 = trim(P, other)
    for c in default_grid(P, 7.0):
        assert np.allclose(a1(P, DRF, c, TRM).real_parts, a1(P, other, c, t2).real_parts)


def random_states(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        h = rng.uniform(-0.7, 0.7, 2)
        if h @ h < 0.9:
            out.append(np.concatenate([h, rng.normal(0, 5, 2), rng.normal(25, 5, 1),
                                       rng.normal(0, 2, 2)]))
    return np.array(out)


def test_normal_form_roundtrip_thousand_states():
    assert normal_form_roundtrip(random_states(1000), deg(105), P, DRF) < 1e-9


@settings(max_examples=60)
@given(st.floats(45.0, 215.0), st.integers(0, 10_000))
def test_roundtrip_any_nonsingular_chi(chi_deg, seed):
    chi = deg(chi_deg)
    if abs(np.sin(chi - P.zeta)) < 0.05:
        return
    assert normal_form_roundtrip(random_states(5, seed), chi, P, DRF) < 1e-8


def test_inverse_rejects_singular_points():
    with pytest.raises(SingularOutputError):
        inverse_normal_form(np.zeros(4), np.zeros(3), P.zeta, P, DRF)
    with pytest.raises(SingularOutputError):
        normal_form([0.8, 0.6, 0, 0, 0, 0, 0], deg(105), P, DRF)


def test_trim_maps_to_eta_bar():
    x_trim = np.array([0, 0, 0, 0, TRM.r_bar, 0, 0.0])
    xi, eta = normal_form(x_trim, deg(105), P, DRF)
    assert np.allclose(xi, 0.0)
    assert np.allclose(eta, TRM.eta_bar)
    assert np.allclose(eta, zero_dynamics_equilibrium(P, DRF))
    assert np.allclose(zero_dynamics_drf(eta, P, DRF, deg(105), TRM), 0.0, atol=1e-9)


def test_zero_dynamics_jacobian_matches_analytic():
    rng = np.random.default_rng(5)
    chis = rng.uniform(deg(83.0), deg(127.0), 20)
    for c in chis:
        J = zero_dynamics_jacobian(P, DRF, c, TRM)
        Ja = analytic_zero_dynamics_jacobian(P, DRF, c, TRM)
        assert np.max(np.abs(J - Ja)) <= 1e-6 * np.max(np.abs(Ja))


def test_zero_dynamics_do_not_depend_on_inputs():
    eta = TRM.eta_bar + np.array([0.05, -0.3, 1.0])
    a = zero_dynamics_drf(eta, P, DRF, deg(105), TRM)
    b = zero_dynamics_drf(eta, P, DRF, deg(105), TRM, u=np.array([1e5, 9e5]))
    assert np.allclose(a, b, atol=1e-9)


# ---------------------------------------------------------------- one rotor out

SRF = FailureConfig.single(4)
NB = np.array([0.0, 0.0, -1.0])


def test_srf_mus_reference_values():
    assert np.allclose(srf_mus(P, SRF), [1.627, -0.04995, 0.05677], rtol=2e-3)
    with pytest.raises(ValueError):
        srf_mus(P, DRF)


def test_srf_internal_state_is_input_free_in_the_body_model():
    mus = srf_mus(P, SRF)
    st0 = trim_state(P, SRF)

    def eta1_rate(omega_sq):
        s = st0.copy()
        s.rotors.omega = np.sqrt(omega_sq)
        d = dynamics_deriv(s, P)
        return d.Omega_dot[2] + mus[0] * d.V_dot[2] + mus[1] * d.Omega_dot[0] + mus[2] * d.Omega_dot[1]

    u0 = st0.rotors.omega ** 2
    st0.Omega[:] = 0.0
    base = eta1_rate(u0)
    for i in SRF.index:
        du = np.zeros(4)
        du[i] = 1e4
        assert abs(eta1_rate(u0 + du) - base) < 1e-10


def test_srf_equilibrium_stable():
    mus = srf_mus(P, SRF)
    e = srf_equilibrium(P, NB, mus)
    assert abs(zero_dynamics_srf(e, P, NB, mus)) < 1e-9
    slope = srf_slope(P, NB, mus)
    fd = numeric_jacobian(lambda x: np.array([zero_dynamics_srf(x[0], P, NB, mus)]), [e])[0, 0]
    assert slope < 0
    assert np.isclose(slope, fd, rtol=1e-6)
