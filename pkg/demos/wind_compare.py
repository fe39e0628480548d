"""INDI vs LQR in a slowly rising headwind.

Both controllers share the outer position loop; only the inner loop
differs. The wind ramps at 1 m/s per second after 2 s of calm, and each
run ends when the vehicle loses control. The wind at that moment is the
maximum sustained wind.

    python3 demos/wind_compare.py
"""
from pathlib import Path

from quadftc import parse_config, run

cfg = parse_config(Path(__file__).resolve().parents[1] / "configs" / "wind_ramp.yaml")
d = cfg.disturbance
print(f"drag {d.drag[0]} N s/m ({d.drag_law}), moment {d.moment_coeff} N m per m/s\n")

for kind in ("indi", "lqr"):
    trace, s, _ = run(cfg, controller_kind=kind)
    print(f"{kind:5s} held {s.max_wind_sustained:5.2f} m/s "
          f"(lost control: {s.cause} at t = {s.crash_time:.2f} s)")
