"""3 m sideways transfer with rotors 2 and 4 gone, at three output angles.

105 deg sits inside the admissible band and should fly the transfer
cleanly. 70 deg has too little authority on y2 and 140 deg has unstable
internal dynamics. Watch max|eta1|: it is the internal state that the
stability analysis is about.

    python3 demos/step_transfer.py [--out DIR]
"""
import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from quadftc import parse_config, run

cli = argparse.ArgumentParser()
cli.add_argument("--out", default=None, help="write one trace CSV per angle here")
args = cli.parse_args()

base = parse_config(Path(__file__).resolve().parents[1] / "configs" / "step_transfer.yaml")
for chi in (105, 70, 140):
    cfg = replace(base, inner=replace(base.inner, chi_abs=np.radians(chi)))
    trace, s, _ = run(cfg)
    status = f"crashed ({s.cause}) at {s.crash_time:.2f} s" if s.crashed else "no crash"
    print(f"|chi| = {chi:3d} deg: {status:28s} final error {s.final_position_error:5.2f} m  "
          f"max|eta1| {s.max_abs_eta1:.2f}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        trace.to_csv(Path(args.out) / f"step_chi{chi}.csv")
