"""How background traffic reaches an application through a shared slice.

An isolated slice keeps its bandwidth share whatever else crosses the
link; a shared one only gets what is left. The probe here is the cloud
round trip carrying a 200 KB image, where serialization is visible.
"""

import statistics

from edgesim import Policy, build_topology, builtin_airport_scenario, load_scenario, place, run_simulation
from edgesim.simcore import SimConfig, probe_samples
from edgesim.topology import effective_bandwidth, with_background

doc = builtin_airport_scenario()
w = load_scenario(doc)
cfg = SimConfig(probe_bytes=200_000, probe_target_task="navigation")

for isolated in (True, False):
    doc["topology"]["slices"][0]["isolated"] = isolated
    t = build_topology(doc)
    p = place(Policy.CLOUD_ONLY, w, t)
    print(f"isolated={isolated}")
    for mbps in (0.0, 5.0, 10.0, 14.0):
        noisy = with_background(t, {"edge-cloud": mbps})
        bw = effective_bandwidth(noisy, "edge-cloud", "robot_slice")
        trace = run_simulation(w, noisy, p, duration_ms=60_000, seed=1, config=cfg)
        rtt = statistics.fmean(probe_samples(trace))
        print(f"  background {mbps:5.1f} mbps -> slice gets {bw:5.2f} mbps, mean RTT {rtt:8.1f} ms")
