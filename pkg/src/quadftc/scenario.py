"""Scenario definitions, configuration loading and run summaries.

Configuration is YAML. Angles are given in degrees in the file (keys ending
in ``_deg`` plus the vehicle ``beta``) and converted to radians here, the
only place degrees exist.
"""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .analysis import trim
from .indi import INDIController, InnerGains, OuterGains, Reference, check_chi
from .lqr import LQRController, LQRWeights
from .sim import LossOfControl, SimConfig, SimState, run_scenario
from .vehicle import (YAW_SIGN, AeroDisturbance, FailureConfig, FailureMode, RotorBank,
                      VehicleParams)

KINDS = ("hover", "step_transfer", "waypoint_track", "wind_ramp", "chi_switch", "chi_sweep")

# illustrative 7-point box (A..G), metres, NED so negative Z is up
DEFAULT_WAYPOINTS = [(0.0, 0.0, 0.0), (2.0, 0.0, 0.0), (2.0, 2.0, 0.0), (0.0, 2.0, 0.0),
                     (0.0, 2.0, -1.0), (2.0, 2.0, -1.0), (0.0, 0.0, 0.0)]


class ConfigError(ValueError):
    pass


def wind_tunnel_disturbance():
    """Default aerodynamic load for wind_ramp runs.

    Linear drag 0.1 N·s/m per axis and an in-plane moment of 0.02 N·m per
    m/s of airspeed, a flapping-like effect the controllers only see
    through their sensors.
    """
    return AeroDisturbance(drag=np.full(3, 0.1), drag_law="linear", moment_coeff=0.02)


@dataclass
class ScenarioSpec:
    kind: str = "hover"
    duration: float = 10.0
    smoothing_tau: float = 0.0
    step_distance: float = 3.0
    step_time: float = 1.0
    step_axis: int = 0
    waypoints: list = field(default_factory=lambda: [list(w) for w in DEFAULT_WAYPOINTS])
    dwell: float = 3.0
    wind_start: float = 0.0
    wind_end: float = 20.0
    wind_rate: float = 1.0
    wind_delay: float = 2.0
    wind_direction: tuple = (1.0, 0.0, 0.0)
    chi_values: tuple = (np.radians(90.0), np.radians(180.0))
    switch_time: float = 5.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"scenario.kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("duration", "smoothing_tau", "step_time", "dwell", "wind_rate",
                     "wind_delay", "switch_time"):
            if not np.isfinite(getattr(self, name)) or getattr(self, name) < 0:
                raise ConfigError(f"scenario.{name} must be a non-negative number")
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 3 or not np.all(np.isfinite(wp)):
            raise ConfigError("scenario.waypoints must be a list of finite [x, y, z] triples")
        d = np.asarray(self.wind_direction, dtype=float)
        if d.shape != (3,) or np.linalg.norm(d) == 0:
            raise ConfigError("scenario.wind_direction must be a non-zero 3-vector")


def _setpoints(spec):
    """Piecewise-constant setpoint schedule as ``[(t_i, p_i)]``."""
    if spec.kind == "step_transfer":
        target = np.zeros(3)
        target[spec.step_axis] = spec.step_distance
        return [(0.0, np.zeros(3)), (spec.step_time, target)]
    if spec.kind == "waypoint_track":
        return [(i * spec.dwell, np.asarray(w, dtype=float))
                for i, w in enumerate(spec.waypoints)]
    return [(0.0, np.zeros(3))]


def smoothed_reference(schedule, tau, t):
    """First-order-filtered setpoint schedule, evaluated in closed form."""
    p = schedule[0][1].astype(float).copy()
    v = np.zeros(3)
    a = np.zeros(3)
    for (t_prev, p_prev), (t_i, p_i) in zip(schedule, schedule[1:]):
        if t < t_i:
            break
        jump = p_i - p_prev
        if tau > 0:
            e = np.exp(-(t - t_i) / tau)
            p += jump * (1.0 - e)
            v += jump * e / tau
            a -= jump * e / tau ** 2
        else:
            p += jump
    return Reference(p, v, a)


class Scenario:
    """Runtime view of a :class:`ScenarioSpec` as consumed by ``run_scenario``."""

    def __init__(self, spec, disturbance=None, params=None):
        self.spec = spec
        self.duration = spec.duration
        self.disturbance = disturbance or AeroDisturbance(enabled=False)
        self._schedule = _setpoints(spec)
        self._switched = False
        d = np.asarray(spec.wind_direction, dtype=float)
        self._wind_dir = d / np.linalg.norm(d)

    def reference(self, t):
        return smoothed_reference(self._schedule, self.spec.smoothing_tau, t)

    def wind_speed(self, t):
        s = self.spec
        if s.kind != "wind_ramp":
            return s.wind_start if s.wind_start else 0.0
        ramp = max(0.0, t - s.wind_delay) * s.wind_rate
        return float(min(s.wind_start + ramp, s.wind_end))

    def wind(self, t):
        return self.wind_speed(t) * self._wind_dir

    def apply_events(self, t, controller):
        s = self.spec
        if s.kind != "chi_switch":
            return
        if not self._switched and t + 1e-12 >= s.switch_time:
            controller.set_chi(s.chi_values[1])
            self._switched = True

    def initial_state(self, params, failure, rotor_kw=None):
        return trim_state(params, failure, **(rotor_kw or {}))


def trim_state(params, failure, **rotor_kw):
    """Hover state at the spinning trim for ``failure``, body aligned with -z."""
    bank = RotorBank.create(failure, 0.0, **rotor_kw)
    omega = np.zeros(4)
    r = 0.0
    weight_u = params.mass * params.g / params.kappa
    if failure.mode is FailureMode.DOUBLE_OPPOSING:
        tr = trim(params, failure)
        omega[failure.index] = tr.omega_bar
        r = tr.r_bar
    elif failure.mode is FailureMode.SINGLE_ROTOR:
        # the rotor diagonal to the failed one idles; the other two share the weight
        failed = ({1, 2, 3, 4} - set(failure.active)).pop()
        diag = (failed + 1) % 4 + 1
        u = np.zeros(4)
        u[diag - 1] = bank.omega_min ** 2
        others = [i - 1 for i in failure.active if i != diag]
        u[others] = 0.5 * (weight_u - u[diag - 1])
        omega = np.sqrt(u)
        r = params.sigma * params.kappa * (YAW_SIGN @ u) / params.gamma
    else:
        omega[:] = np.sqrt(weight_u / 4.0)
    bank.omega = omega * bank.mask
    bank.command = bank.omega.copy()
    return SimState(np.zeros(3), np.zeros(3), np.eye(3), np.array([0.0, 0.0, r]), bank, 0.0)


# ------------------------------------------------------------------ summary


@dataclass
class RunSummary:
    crashed: bool
    cause: str
    crash_time: float
    rms_position_error: float
    rms_x: float
    rms_y: float
    rms_z: float
    final_position_error: float
    max_abs_eta1: float
    max_wind_sustained: float

    CSV_FIELDS = ("crashed", "cause", "crash_time", "rms_position_error", "rms_x", "rms_y",
                  "rms_z", "final_position_error", "max_abs_eta1", "max_wind_sustained")

    def to_csv(self, path=None, label=None):
        head = (["label"] if label is not None else []) + list(self.CSV_FIELDS)
        vals = ([label] if label is not None else []) + [self._fmt(getattr(self, f))
                                                         for f in self.CSV_FIELDS]
        text = ",".join(head) + "\n" + ",".join(vals) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @staticmethod
    def _fmt(v):
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, str):
            return v
        return format(v, ".10g")


def summarize(trace, scenario):
    """Metrics over the pre-crash part of ``trace``."""
    arr = trace.as_array()
    if trace.crashed and len(arr) > 1:
        arr = arr[:-1]
    cols = trace.columns
    t = arr[:, cols.index("t")]
    pos = arr[:, [cols.index(c) for c in ("X", "Y", "Z")]]
    ref = np.array([scenario.reference(ti).position for ti in t])
    err = pos - ref
    per_axis = np.sqrt(np.mean(err ** 2, axis=0))
    norm = np.linalg.norm(err, axis=1)
    return RunSummary(
        crashed=bool(trace.crashed),
        cause=trace.cause or "none",
        crash_time=float(trace.crash_time),
        rms_position_error=float(np.sqrt(np.mean(norm ** 2))),
        rms_x=float(per_axis[0]), rms_y=float(per_axis[1]), rms_z=float(per_axis[2]),
        final_position_error=float(norm[-1]),
        max_abs_eta1=float(np.max(np.abs(arr[:, cols.index("eta1")]))),
        max_wind_sustained=float(arr[-1, cols.index("wind")]),
    )


# ------------------------------------------------------------------- config


@dataclass
class LQRSettings:
    q_att: float = 20.0
    q_rate: float = 0.0
    r_input: float = 1.0

    def __post_init__(self):
        if self.q_att < 0 or self.q_rate < 0:
            raise ConfigError("baseline.q_att and baseline.q_rate must be >= 0")
        if self.r_input <= 0:
            raise ConfigError("baseline.r_input must be > 0")


@dataclass
class RunConfig:
    params: VehicleParams = field(default_factory=VehicleParams)
    failure: FailureConfig = field(default_factory=FailureConfig.double)
    sim: SimConfig = field(default_factory=SimConfig)
    rotor_kw: dict = field(default_factory=dict)
    outer: OuterGains = field(default_factory=OuterGains)
    inner: InnerGains = field(default_factory=InnerGains)
    filter_cutoff: float = 2 * np.pi * 15.0
    filter_damping: float = 0.707
    baseline: LQRSettings = field(default_factory=LQRSettings)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    disturbance: AeroDisturbance = field(default_factory=lambda: AeroDisturbance(enabled=False))
    controller: str = "indi"
    n_body: tuple = (0.0, 0.0, -1.0)


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = k.start_mark.line + 1
            _line_map(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (i,)
            out[p] = v.start_mark.line + 1
            _line_map(v, p, out)
    return out


class _Section:
    """Typed access to one mapping of the config with line-located errors."""

    def __init__(self, data, path, lines, source):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(self._where(lines, path, source) + f"'{'.'.join(path)}' must be a mapping")
        self.data, self.path, self.lines, self.source = data, path, lines, source
        self.used = set()

    @staticmethod
    def _where(lines, path, source):
        line = lines.get(tuple(path))
        return f"{source}:{line}: " if line else f"{source}: "

    def error(self, key, msg):
        p = self.path + (key,)
        return ConfigError(self._where(self.lines, p, self.source) + f"'{'.'.join(p)}': {msg}")

    def get(self, key, default, kind=float):
        self.used.add(key)
        if key not in self.data:
            return default
        v = self.data[key]
        try:
            if kind is float:
                if isinstance(v, bool):
                    raise TypeError
                v = float(v)
                if not np.isfinite(v):
                    raise ValueError
            elif kind is int:
                if isinstance(v, bool) or int(v) != v:
                    raise TypeError
                v = int(v)
            elif kind is bool:
                if not isinstance(v, bool):
                    raise TypeError
            elif kind is str:
                if not isinstance(v, str):
                    raise TypeError
            elif kind == "vec3":
                v = np.asarray(v, dtype=float)
                if v.shape != (3,) or not np.all(np.isfinite(v)):
                    raise ValueError
            elif kind == "list":
                if not isinstance(v, list):
                    raise TypeError
        except (TypeError, ValueError):
            name = kind if isinstance(kind, str) else kind.__name__
            raise self.error(key, f"expected {name}, got {v!r}") from None
        return v

    def sub(self, key):
        self.used.add(key)
        return _Section(self.data.get(key), self.path + (key,), self.lines, self.source)

    def finish(self):
        extra = set(self.data) - self.used
        if extra:
            raise self.error(sorted(extra)[0], "unknown field")


def parse_config(source):
    """Load a run configuration from a YAML file path or YAML text.

    Missing sections take the defaults (Table I vehicle, Table II gains,
    |χ| = 105°). Raises :class:`ConfigError` with ``file:line`` context.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        name, text = str(source), Path(source).read_text()
    else:
        name, text = "<config>", str(source)
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{name}:{mark.line + 1}: " if mark else f"{name}: "
        raise ConfigError(loc + f"YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    lines = _line_map(node) if node is not None else {}
    root = _Section(data, (), lines, name)
    cfg = RunConfig()

    def build(section, cls, obj, convert=None):
        convert = convert or {}
        kw = {}
        for f in fields(cls):
            if f.name.startswith("_") or f.name in ("loss",):
                continue
            default = getattr(obj, f.name)
            if f.name in convert:
                key, fn, kind = convert[f.name]
                if key in section.data:
                    kw[f.name] = fn(section.get(key, None, kind))
                section.used.add(key)
                continue
            kind = type(default) if isinstance(default, (bool, int, float, str)) else None
            if kind is None:
                continue
            if kind is int and not isinstance(default, bool):
                kind = int
            kw[f.name] = section.get(f.name, default, kind)
        try:
            return replace(obj, **kw)
        except ValueError as exc:
            bad = next((k for k in kw if k in str(exc)), None)
            if bad is not None:
                key = next((c[0] for n, c in convert.items() if n == bad), bad)
                raise section.error(key, str(exc)) from None
            raise ConfigError(f"{name}: invalid '{'.'.join(section.path)}': {exc}") from None

    vs = root.sub("vehicle")
    cfg.params = build(vs, VehicleParams, cfg.params,
                       {"beta": ("beta", np.radians, float)})
    vs.finish()

    fs = root.sub("failure")
    mode = fs.get("mode", "double_opposing", str)
    try:
        if mode == "double_opposing":
            rem = fs.get("remaining", [1, 3], "list")
            cfg.failure = FailureConfig.double(tuple(int(i) for i in rem))
        elif mode == "single_rotor":
            cfg.failure = FailureConfig.single(fs.get("failed", 4, int))
        elif mode == "nominal":
            cfg.failure = FailureConfig.nominal()
        else:
            raise fs.error("mode", f"unknown failure mode {mode!r}")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise fs.error("mode", str(exc)) from None
    fs.finish()

    ss = root.sub("sim")
    ls = ss.sub("loss")
    loss = build(ls, LossOfControl, LossOfControl())
    ls.finish()
    cfg.sim = build(ss, SimConfig, cfg.sim)
    cfg.sim = replace(cfg.sim, loss=loss)
    ss.finish()

    rs = root.sub("rotors")
    for key, default in (("tau", 0.030), ("omega_min", 200.0), ("omega_max", 1256.0)):
        v = rs.get(key, default)
        if v <= 0 and key != "omega_min" or v < 0:
            raise rs.error(key, "must be positive")
        cfg.rotor_kw[key] = v
    if cfg.rotor_kw["omega_min"] >= cfg.rotor_kw["omega_max"]:
        raise rs.error("omega_min", "must be below omega_max")
    rs.finish()

    gs = root.sub("gains")
    os_ = gs.sub("outer")
    cfg.outer = build(os_, OuterGains, cfg.outer)
    os_.finish()
    is_ = gs.sub("inner")
    cfg.inner = build(is_, InnerGains, cfg.inner, {"chi_abs": ("chi_deg", np.radians, float)})
    is_.finish()
    gs.finish()

    fl = root.sub("filter")
    cfg.filter_cutoff = 2 * np.pi * fl.get("cutoff_hz", 15.0)
    cfg.filter_damping = fl.get("damping", 0.707)
    if cfg.filter_cutoff <= 0 or cfg.filter_damping <= 0:
        raise fl.error("cutoff_hz", "cutoff and damping must be positive")
    fl.finish()

    bs = root.sub("baseline")
    cfg.baseline = build(bs, LQRSettings, cfg.baseline)
    bs.finish()

    ds = root.sub("disturbance")
    dist = AeroDisturbance(enabled=ds.get("enabled", bool(ds.data), bool),
                           drag=ds.get("drag", np.zeros(3), "vec3"),
                           drag_law=ds.get("drag_law", "linear", str),
                           moment_bias=ds.get("moment_bias", np.zeros(3), "vec3"),
                           moment_coeff=ds.get("moment_coeff", 0.0))
    cfg.disturbance = dist
    ds.finish()
    default_wind = not ds.data

    sc = root.sub("scenario")
    spec_kw = {}
    for f in fields(ScenarioSpec):
        if f.name in ("chi_values", "waypoints", "wind_direction", "step_axis"):
            continue
        default = getattr(ScenarioSpec(), f.name)
        spec_kw[f.name] = sc.get(f.name, default, str if f.name == "kind" else float)
    if "waypoints" in sc.data:
        spec_kw["waypoints"] = sc.get("waypoints", None, "list")
    if "wind_direction" in sc.data:
        spec_kw["wind_direction"] = tuple(sc.get("wind_direction", None, "vec3"))
    axis = sc.get("step_axis", "x", str)
    if axis not in ("x", "y", "z"):
        raise sc.error("step_axis", "must be x, y or z")
    spec_kw["step_axis"] = "xyz".index(axis)
    if "chi_deg" in sc.data:
        vals = sc.get("chi_deg", None, "list")
        if len(vals) != 2:
            raise sc.error("chi_deg", "needs [before, after] values")
        spec_kw["chi_values"] = tuple(np.radians(float(v)) for v in vals)
    try:
        cfg.scenario = ScenarioSpec(**spec_kw)
    except ConfigError as exc:
        key = str(exc).split(".")[1].split(" ")[0] if "scenario." in str(exc) else "kind"
        raise sc.error(key, str(exc)) from None
    sc.finish()
    if default_wind and cfg.scenario.kind == "wind_ramp":
        cfg.disturbance = wind_tunnel_disturbance()

    cfg.controller = root.get("controller", "indi", str)
    if cfg.controller not in ("indi", "lqr"):
        raise root.error("controller", "must be 'indi' or 'lqr'")
    if "n_body" in root.data:
        cfg.n_body = tuple(root.get("n_body", None, "vec3"))
    root.finish()
    if cfg.failure.mode is FailureMode.DOUBLE_OPPOSING:
        try:
            check_chi(cfg.params, cfg.inner.chi_abs)
        except ValueError as exc:
            raise is_.error("chi_deg", str(exc)) from None
    return cfg


# ------------------------------------------------------------------ running


def build_controller(cfg, kind=None):
    kind = kind or cfg.controller
    dt = 1.0 / cfg.sim.controller_rate
    outer_dt = 1.0 / cfg.sim.position_rate
    limits = dict(omega_min=cfg.rotor_kw.get("omega_min", 200.0),
                  omega_max=cfg.rotor_kw.get("omega_max", 1256.0))
    if kind == "indi":
        return INDIController(cfg.params, cfg.failure, replace(cfg.outer), replace(cfg.inner),
                              dt=dt, outer_dt=outer_dt, cutoff=cfg.filter_cutoff,
                              damping=cfg.filter_damping, n_body=cfg.n_body, **limits)
    if kind == "lqr":
        w = LQRWeights(q_att=cfg.baseline.q_att, q_rate=cfg.baseline.q_rate,
                       r_input=cfg.baseline.r_input, tau=cfg.rotor_kw.get("tau", 0.030))
        return LQRController(cfg.params, cfg.failure, w, replace(cfg.outer),
                             replace(cfg.inner), dt=dt, outer_dt=outer_dt, **limits)
    raise ConfigError(f"unknown controller {kind!r}")


def run(cfg, controller_kind=None, seed=None):
    """Simulate ``cfg``; returns ``(trace, summary, scenario)``."""
    sim_cfg = cfg.sim if seed is None else replace(cfg.sim, seed=seed)
    scen = Scenario(cfg.scenario, cfg.disturbance, cfg.params)
    ctrl = build_controller(cfg, controller_kind)
    if cfg.scenario.kind == "chi_switch":
        ctrl.set_chi(cfg.scenario.chi_values[0])
    trace = run_scenario(sim_cfg, cfg.params, cfg.failure, ctrl, scen, cfg.rotor_kw)
    return trace, summarize(trace, scen), scen
