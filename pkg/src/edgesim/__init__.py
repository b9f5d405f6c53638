"""Discrete-event simulator for placing robot services across robot, edge and cloud nodes."""

from .calibrate import CalibrationTargets, FittedParams, apply_params, calibrate, fit_capacity, fit_latency
from .kpi import robot_load, summarize, symmetric_percent_difference
from .placement import Placement, Policy, brute_force_optimal, place, placement_cost
from .simcore import SimConfig, TraceLog, face_recognition_transaction, run_simulation, teleop_probe
from .topology import Topology, build_topology
from .workload import Workload, builtin_airport_scenario, load_scenario, validate_workload

__version__ = "0.1.0"

__all__ = [
    "CalibrationTargets",
    "FittedParams",
    "Placement",
    "Policy",
    "SimConfig",
    "Topology",
    "TraceLog",
    "Workload",
    "apply_params",
    "brute_force_optimal",
    "build_topology",
    "builtin_airport_scenario",
    "calibrate",
    "face_recognition_transaction",
    "fit_capacity",
    "fit_latency",
    "load_scenario",
    "place",
    "placement_cost",
    "robot_load",
    "run_simulation",
    "summarize",
    "symmetric_percent_difference",
    "teleop_probe",
    "validate_workload",
]
