"""Fault-tolerant control laboratory for a quadrotor that lost one or two rotors.

Modules:
    mathutil  rotations, 2x2 eigenvalues, second-order low-pass filters
    vehicle   parameters, rotor actuators, forces and moments
    sim       6-DOF integrator, crash detection, trace logging
    indi      outer PID loop and the incremental inversion inner loop
    analysis  trim, normal form, zero dynamics, |chi| admissibility
    lqr       LQR baseline for the two-rotor case
    scenario  scenarios, YAML config, run summaries
    cli       command-line verbs
"""

from .analysis import chi_sweep, classify_chi, r_B, trim
from .indi import INDIController, InnerGains, OuterGains
from .lqr import LQRController, LQRWeights
from .scenario import RunConfig, ScenarioSpec, parse_config, run
from .sim import SimConfig, run_scenario
from .vehicle import AeroDisturbance, FailureConfig, VehicleParams

__version__ = "0.1.0"

__all__ = ["AeroDisturbance", "FailureConfig", "INDIController", "InnerGains",
           "LQRController", "LQRWeights", "OuterGains", "RunConfig", "ScenarioSpec",
           "SimConfig", "VehicleParams", "chi_sweep", "classify_chi", "parse_config",
           "r_B", "run", "run_scenario", "trim"]
