import csv
import io
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from quadftc.analysis import trim
from quadftc.scenario import (ConfigError, DEFAULT_WAYPOINTS, RunSummary, Scenario,
                              ScenarioSpec, parse_config, run, smoothed_reference,
                              trim_state)
from quadftc.vehicle import FailureConfig, FailureMode, VehicleParams

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_minimal_config_takes_defaults():
    cfg = parse_config("scenario:\n  kind: hover\n")
    assert cfg.params == VehicleParams()
    assert cfg.failure == FailureConfig.double()
    assert np.isclose(cfg.inner.chi_abs, np.radians(105.0))
    assert cfg.inner.k_ap == 50 and cfg.outer.kp == 1.0
    assert cfg.controller == "indi"
    assert np.isclose(cfg.filter_cutoff, 2 * np.pi * 15)


def test_beta_given_in_degrees():
    cfg = parse_config("vehicle:\n  beta: 52.6\n")
    assert np.isclose(cfg.params.beta, 0.918043, atol=1e-6)


def test_negative_mass_names_field_and_line():
    with pytest.raises(ConfigError) as e:
        parse_config("scenario:\n  kind: hover\nvehicle:\n  mass: -0.41\n")
    msg = str(e.value)
    assert "vehicle.mass" in msg and ":4:" in msg


def test_yaml_and_schema_errors_are_located():
    with pytest.raises(ConfigError, match="YAML syntax"):
        parse_config("scenario: [unclosed\n")
    with pytest.raises(ConfigError, match=r":2:.*unknown field"):
        parse_config("scenario:\n  knd: hover\n")
    with pytest.raises(ConfigError, match="kind"):
        parse_config("scenario:\n  kind: loop_the_loop\n")
    with pytest.raises(ConfigError, match="expected float"):
        parse_config("gains:\n  outer:\n    kp: fast\n")
    with pytest.raises(ConfigError, match="chi_deg"):
        parse_config("gains:\n  inner:\n    chi_deg: %r\n" % np.degrees(VehicleParams().zeta))


def test_shipped_configs_parse():
    for p in sorted(CONFIGS.glob("*.yaml")):
        cfg = parse_config(p)
        assert cfg.scenario.kind in p.read_text()
    cfg = parse_config(CONFIGS / "srf_hover.yaml")
    assert cfg.failure.mode is FailureMode.SINGLE_ROTOR
    cfg = parse_config(CONFIGS / "chi_switch.yaml")
    assert np.allclose(np.degrees(cfg.scenario.chi_values), [90, 180])
    wr = parse_config("scenario:\n  kind: wind_ramp\n")
    assert wr.disturbance.enabled and wr.disturbance.moment_coeff > 0


def test_scenario_spec_validation():
    with pytest.raises(ConfigError):
        ScenarioSpec(duration=-1.0)
    with pytest.raises(ConfigError):
        ScenarioSpec(waypoints=[[0, 0, np.nan]])
    assert len(ScenarioSpec().waypoints) == len(DEFAULT_WAYPOINTS) == 7


def test_smoothed_reference_is_the_first_order_response():
    sched = [(0.0, np.zeros(3)), (1.0, np.array([3.0, 0, 0]))]
    assert np.allclose(smoothed_reference(sched, 0.0, 0.5).position, 0)
    assert np.allclose(smoothed_reference(sched, 0.0, 1.0).position, [3, 0, 0])
    tau = 1.0
    for t in (1.0, 1.5, 2.0, 4.0):
        r = smoothed_reference(sched, tau, t)
        assert np.isclose(r.position[0], 3 * (1 - np.exp(-(t - 1) / tau)))
    h = 1e-6
    r0, r1 = smoothed_reference(sched, tau, 2.0), smoothed_reference(sched, tau, 2.0 + h)
    assert np.isclose((r1.position[0] - r0.position[0]) / h, r0.velocity[0], rtol=1e-5)


def test_wind_ramp_schedule():
    sc = Scenario(ScenarioSpec(kind="wind_ramp", wind_delay=2, wind_rate=1.0, wind_end=20))
    assert sc.wind_speed(1.0) == 0.0
    assert np.isclose(sc.wind_speed(7.0), 5.0)
    assert sc.wind_speed(100.0) == 20.0
    assert np.allclose(sc.wind(7.0), [5.0, 0, 0])


def test_trim_states_balance_weight():
    p = VehicleParams()
    for fail in (FailureConfig.double(), FailureConfig.single(4), FailureConfig.nominal()):
        st = trim_state(p, fail)
        assert np.isclose(p.kappa * np.sum(st.rotors.omega ** 2), p.mass * p.g)
    assert np.isclose(trim_state(p, FailureConfig.double()).Omega[2],
                      trim(p, FailureConfig.double()).r_bar)


@pytest.fixture(scope="module")
def short_run():
    cfg = parse_config("sim:\n  noise: true\n  seed: 3\nscenario:\n  kind: step_transfer\n"
                       "  duration: 2.5\n")
    return run(cfg)


def test_row_count_and_columns(short_run):
    trace, summary, _ = short_run
    assert not trace.crashed
    assert len(trace.rows) == int(np.floor(2.5 / 0.01)) + 1
    head = trace.to_csv().splitlines()[0].split(",")
    assert head[:17] == ["t", "X", "Y", "Z", "Vx", "Vy", "Vz", "p", "q", "r", "h1", "h2", "h3",
                         "eta1", "eta2", "eta3", "y2"]
    assert head[-2:] == ["wind", "crashed"] and len(head) == 27


def test_summary_matches_recomputation_from_csv(short_run, tmp_path):
    trace, summary, scen = short_run
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    t = np.array([float(r["t"]) for r in rows])
    pos = np.array([[float(r[k]) for k in "XYZ"] for r in rows])
    ref = np.array([[0, 0, 0] if ti < 1.0 else [3, 0, 0] for ti in t], dtype=float)
    err = np.linalg.norm(pos - ref, axis=1)
    assert np.isclose(summary.rms_position_error, np.sqrt(np.mean(err ** 2)), rtol=1e-8)
    assert np.isclose(summary.final_position_error, err[-1], rtol=1e-6)
    eta1 = np.array([float(r["eta1"]) for r in rows])
    assert np.isclose(summary.max_abs_eta1, np.max(np.abs(eta1)), rtol=1e-8)


def test_summary_csv_format():
    s = RunSummary(True, "tilt", 3.5, 1, 2, 3, 4, 5, 6, 0.0)
    lines = s.to_csv(label="indi").splitlines()
    assert lines[0].startswith("label,crashed,cause")
    assert lines[1].startswith("indi,true,tilt,3.5")


def test_crashed_runs_summarize_pre_crash_rows_only():
    # the 3 m setpoint jump at t = 1 s trips a 0.5 m position limit at once
    cfg = parse_config("scenario:\n  kind: step_transfer\n  duration: 3\nsim:\n  loss:\n"
                       "    position_error: 0.5\n")
    trace, summary, _ = run(cfg)
    assert summary.crashed and summary.cause == "position"
    assert np.isclose(summary.crash_time, 1.0)
    assert len(trace.rows) == 101 and trace.rows[-1][-1] == 1.0
    assert summary.final_position_error < 1e-6


def test_seeded_runs_are_byte_identical():
    cfg = parse_config(CONFIGS / "chi_switch.yaml")
    cfg.scenario = replace(cfg.scenario, duration=1.0)
    a = run(cfg)[0].to_csv()
    b = run(cfg)[0].to_csv()
    assert a == b
