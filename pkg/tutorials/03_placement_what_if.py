"""Ask the exhaustive placement search what it would do on a different network.

The static cost model sums idle-system pipeline latencies; the oracle
enumerates every assignment of the movable tasks and keeps the cheapest.
Here the Internet link is made progressively slower to see when the
matching stage stops being worth sending to the cloud.
"""

from edgesim import Policy, brute_force_optimal, build_topology, builtin_airport_scenario, load_scenario, place
from edgesim.placement import placement_cost

doc = builtin_airport_scenario()
w = load_scenario(doc)
hybrid = place(Policy.HYBRID, w, build_topology(doc)).assignment

for mbps in (300.0, 30.0, 3.0, 0.3):
    doc["topology"]["links"][1]["bandwidth_mbps"] = mbps
    t = build_topology(doc)
    best = brute_force_optimal(w, t)
    cost = placement_cost(best, w, t)
    moved = {k: v for k, v in best.assignment.items() if hybrid[k] != v}
    print(f"internet {mbps:6.1f} mbps: cost {cost.latency_cost_ms:8.1f} ms, "
          f"differs from hybrid on {moved or 'nothing'}")
