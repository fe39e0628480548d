"""Command-line front end: ``quadftc {run,sweep-chi,compare,print-trim}``."""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import chi_sweep, r_B, srf_equilibrium, srf_mus, srf_slope, trim
from .indi import check_chi
from .scenario import ConfigError, RunConfig, parse_config, run, trim_state
from .vehicle import FailureMode, InputError

log = logging.getLogger("quadftc")


def _load(args):
    cfg = parse_config(Path(args.config)) if args.config else RunConfig()
    if getattr(args, "controller", None):
        cfg.controller = args.controller
    if getattr(args, "chi_deg", None) is not None:
        chi = np.radians(args.chi_deg)
        check_chi(cfg.params, chi)
        cfg.inner = replace(cfg.inner, chi_abs=chi)
    if getattr(args, "seed", None) is not None:
        cfg.sim = replace(cfg.sim, seed=args.seed)
    return cfg


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sweep(cfg, out):
    if cfg.failure.mode is not FailureMode.DOUBLE_OPPOSING:
        raise InputError("chi sweep needs a double_opposing failure config")
    res = chi_sweep(cfg.params, cfg.failure)
    res.to_csv(out / "region.csv")
    spans = ", ".join(f"[{np.degrees(a):.1f}, {np.degrees(b):.1f}]"
                      for a, b in res.admissible_intervals()) or "none"
    print(f"admissible |chi| (deg): {spans}")
    return res


def cmd_run(args):
    cfg = _load(args)
    out = _out_dir(args)
    if cfg.scenario.kind == "chi_sweep":
        _sweep(cfg, out)
        return 0
    trace, summary, _ = run(cfg)
    trace.to_csv(out / "trace.csv")
    summary.to_csv(out / "summary.csv", label=cfg.controller)
    state = f"crashed ({summary.cause}) at t={summary.crash_time:.2f} s" if summary.crashed \
        else "completed"
    print(f"{cfg.scenario.kind} with {cfg.controller}: {state}; "
          f"rms position error {summary.rms_position_error:.3f} m")
    return 0


def cmd_sweep(args):
    _sweep(_load(args), _out_dir(args))
    return 0


def cmd_compare(args):
    cfg = _load(args)
    out = _out_dir(args)
    rows = []
    for kind in ("indi", "lqr"):
        trace, summary, _ = run(cfg, controller_kind=kind)
        trace.to_csv(out / f"trace_{kind}.csv")
        text = summary.to_csv(label=kind).splitlines()
        rows = rows or [text[0]]
        rows.append(text[1])
        print(f"{kind}: crashed={summary.crashed} cause={summary.cause} "
              f"max sustained wind={summary.max_wind_sustained:.2f} m/s")
    (out / "summary.csv").write_text("\n".join(rows) + "\n")
    return 0


def cmd_trim(args):
    cfg = _load(args)
    p = cfg.params
    print(f"zeta       = {np.degrees(p.zeta):.4f} deg")
    if cfg.failure.mode is FailureMode.DOUBLE_OPPOSING:
        tr = trim(p, cfg.failure)
        chi = cfg.inner.chi_abs
        print(f"r_bar      = {tr.r_bar:.4f} rad/s")
        print(f"omega_bar  = {tr.omega_bar:.4f} rad/s")
        print(f"r_B(|chi|={np.degrees(chi):.1f} deg) = {r_B(p, chi):.4f}")
        return 0
    st = trim_state(p, cfg.failure, **cfg.rotor_kw)
    print(f"rotor speeds = {np.array2string(st.rotors.omega, precision=2)} rad/s")
    print(f"yaw rate     = {st.Omega[2]:.4f} rad/s")
    if cfg.failure.mode is FailureMode.SINGLE_ROTOR:
        nb = np.asarray(cfg.n_body, dtype=float)
        mus = srf_mus(p, cfg.failure, nb[2])
        print(f"mu           = {np.array2string(mus, precision=5)}")
        print(f"eta1 equilibrium = {srf_equilibrium(p, nb, mus):.4f}, "
              f"slope = {srf_slope(p, nb, mus):.4f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="quadftc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out=True):
        p.add_argument("--config", type=str, default=None, help="YAML run configuration")
        if out:
            p.add_argument("--out", type=str, default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--controller", choices=("indi", "lqr"), default=None)
        p.add_argument("--chi-deg", dest="chi_deg", type=float, default=None)

    common(sub.add_parser("run", help="simulate the configured scenario"))
    common(sub.add_parser("sweep-chi", help="internal-dynamics sweep over |chi|"))
    common(sub.add_parser("compare", help="INDI vs LQR on one scenario"))
    common(sub.add_parser("print-trim", help="spinning-hover trim values"), out=False)
    return parser


HANDLERS = {"run": cmd_run, "sweep-chi": cmd_sweep, "compare": cmd_compare,
            "print-trim": cmd_trim}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return HANDLERS[args.verb](args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
