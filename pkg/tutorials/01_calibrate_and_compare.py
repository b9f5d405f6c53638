"""Fit the model to the measured targets, then compare the four policies.

Run with:  python tutorials/01_calibrate_and_compare.py
"""

import statistics

from edgesim import (
    CalibrationTargets,
    Policy,
    apply_params,
    build_topology,
    builtin_airport_scenario,
    calibrate,
    load_scenario,
    place,
    robot_load,
    run_simulation,
)
from edgesim.simcore import SimConfig, probe_samples, transaction_samples

SAMPLES = 200

# The built-in scenario is a guide robot with an edge node next to the base
# station and a cloud node further out. Its link latencies, node speeds and
# payload sizes are placeholders until calibration overwrites them.
doc = builtin_airport_scenario()
params = calibrate(CalibrationTargets(), doc)
print(f"fitted in {params.iterations} coordinate-descent sweeps, residual {params.residual:.3f}")
print(f"  edge one-way      {params.edge_one_way_ms:.4f} ms")
print(f"  edge->cloud extra {params.cloud_extra_one_way_ms:.3f} ms")
print(f"  edge / cloud speed {params.edge_capacity:.3f} / {params.cloud_capacity:.3f} x robot core")
print(f"  internet link     {params.internet_bandwidth_mbps:.0f} mbps")
print(f"  feature payload   {params.feature_payload_bytes / 1e6:.2f} MB")
print()

doc = apply_params(doc, params)
w, t = load_scenario(doc), build_topology(doc)
cfg = SimConfig.from_scenario(doc)

# One simulation per policy yields all three measurements: teleop probes,
# face-recognition requests and robot utilisation samples.
horizon_ms = (SAMPLES - 1) * 1000.0 + 30_000.0
print(f"{'policy':8} {'rtt ms':>9} {'recog ms':>9} {'resp ms':>9} {'robot cpu':>13} {'mem GB':>7}")
for policy in (Policy.LOCAL, Policy.EDGE_ONLY, Policy.CLOUD_ONLY, Policy.HYBRID):
    trace = run_simulation(w, t, place(policy, w, t), duration_ms=horizon_ms, seed=42, config=cfg)
    rtt = statistics.fmean(probe_samples(trace, SAMPLES))
    tx = transaction_samples(trace, "face_recognition", SAMPLES)
    rec = statistics.fmean(a for a, _ in tx)
    resp = statistics.fmean(b for _, b in tx)
    low, high, mem = robot_load(trace)
    print(f"{policy.value:8} {rtt:9.3f} {rec:9.1f} {resp:9.1f} {low:6.1f}-{high:5.1f}% {mem:7.2f}")
