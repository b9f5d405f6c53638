"""Fit free model parameters so simulated KPIs reproduce measured targets."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

from scipy.optimize import minimize_scalar

from .errors import NonConvergence, NoRoot, TargetsError
from .kpi import symmetric_percent_difference
from .placement import CostModel, Policy, place
from .topology import Role, Topology, build_topology, effective_bandwidth, path_between, serialization_ms
from .workload import Workload, load_scenario

BISECTION_TOL = 1e-6
MAX_ITERATIONS = 200
IMPROVEMENT_TOL = 1e-4
MAX_RESIDUAL = 0.15
DEFAULT_IMAGE_BYTES = 200_000

_POLICY_KEYS = {"local": Policy.LOCAL, "edge": Policy.EDGE_ONLY, "cloud": Policy.CLOUD_ONLY,
                "hybrid": Policy.HYBRID}


@dataclass(frozen=True)
class CalibrationTargets:
    local_rtt_ms: float = 0.016
    cloud_rtt_ms: float = 38.0
    edge_vs_cloud_spd_pct: float = 183.548
    # policy -> (cpu_low_pct, cpu_high_pct, memory_gb)
    load_bands: Mapping = field(default_factory=lambda: {
        Policy.HYBRID: (12.0, 18.0, 0.51),
        Policy.LOCAL: (65.0, 80.0, 1.82),
        Policy.EDGE_ONLY: (28.0, 35.0, 0.95),
        Policy.CLOUD_ONLY: (12.0, 17.0, 0.51),
    })
    # policy -> (recognition_ms, response_ms)
    response_times: Mapping = field(default_factory=lambda: {
        Policy.HYBRID: (657.0, 698.0),
        Policy.LOCAL: (2354.0, 2383.0),
        Policy.EDGE_ONLY: (596.0, 615.0),
        Policy.CLOUD_ONLY: (587.0, 684.0),
    })
    image_payload_bytes: int = DEFAULT_IMAGE_BYTES

    def validate(self) -> None:
        for name in ("local_rtt_ms", "cloud_rtt_ms", "edge_vs_cloud_spd_pct"):
            if not getattr(self, name) > 0:
                raise TargetsError(f"target {name} must be positive")
        for pol, (rec, resp) in self.response_times.items():
            if not (rec > 0 and resp > 0):
                raise TargetsError(f"response_times {pol.value}: values must be positive")
            if resp < rec:
                raise TargetsError(f"response_times {pol.value}: response {resp} < recognition {rec}")
        for pol, (low, high, mem) in self.load_bands.items():
            if low > high or mem < 0:
                raise TargetsError(f"load_bands {pol.value}: need low <= high and memory >= 0")


def _policy_table(raw: Mapping, width: int, name: str) -> dict:
    out = {}
    for key, vals in raw.items():
        if key not in _POLICY_KEYS:
            raise TargetsError(f"{name}: unknown policy {key!r}")
        vals = tuple(float(v) for v in vals)
        if len(vals) != width:
            raise TargetsError(f"{name} {key}: expected {width} values")
        out[_POLICY_KEYS[key]] = vals
    return out


def targets_from_dict(d: Mapping) -> CalibrationTargets:
    base = CalibrationTargets()
    try:
        targets = CalibrationTargets(
            local_rtt_ms=float(d.get("local_rtt_ms", base.local_rtt_ms)),
            cloud_rtt_ms=float(d.get("cloud_rtt_ms", base.cloud_rtt_ms)),
            edge_vs_cloud_spd_pct=float(d.get("edge_vs_cloud_spd_pct", base.edge_vs_cloud_spd_pct)),
            load_bands=_policy_table(d["load_bands"], 3, "load_bands") if "load_bands" in d else base.load_bands,
            response_times=_policy_table(d["response_times"], 2, "response_times") if "response_times" in d else base.response_times,
            image_payload_bytes=int(d.get("image_payload_bytes", base.image_payload_bytes)),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise TargetsError(f"malformed targets: {exc}") from None
    targets.validate()
    return targets


def targets_to_dict(tg: CalibrationTargets) -> dict:
    return {
        "local_rtt_ms": tg.local_rtt_ms,
        "cloud_rtt_ms": tg.cloud_rtt_ms,
        "edge_vs_cloud_spd_pct": tg.edge_vs_cloud_spd_pct,
        "load_bands": {p.value: list(v) for p, v in tg.load_bands.items()},
        "response_times": {p.value: list(v) for p, v in tg.response_times.items()},
        "image_payload_bytes": tg.image_payload_bytes,
    }


def load_targets(path) -> CalibrationTargets:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TargetsError(f"{path}: {exc}") from None
    if not isinstance(raw, Mapping):
        raise TargetsError(f"{path}: targets must be a JSON object")
    return targets_from_dict(raw)


@dataclass(frozen=True)
class FittedParams:
    edge_one_way_ms: float
    cloud_extra_one_way_ms: float
    edge_capacity: float
    cloud_capacity: float
    image_payload_bytes: int
    feature_payload_bytes: int
    display_overhead_ms: float
    internet_bandwidth_mbps: float
    loopback_ms: float
    residual: float
    iterations: int = 0

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FittedParams":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(**raw)


# ---------------------------------------------------------------------------
# latency
# ---------------------------------------------------------------------------

def invert_spd(reference: float, target_pct: float, tol: float = BISECTION_TOL) -> float:
    """The x in (0, reference) with spd(reference, x) == target_pct, by bisection."""
    if not 0.0 < target_pct < 200.0:
        raise NoRoot(f"symmetric percent difference {target_pct} is outside (0, 200)")
    lo, hi = 0.0, reference  # spd falls from 200 at lo to 0 at hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = symmetric_percent_difference(reference, mid) - target_pct
        if abs(f) < tol:
            return mid
        if f > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _chain(t: Topology) -> tuple:
    robot = t.robot.id
    edge = t.nodes_with_role(Role.EDGE)[0].id
    cloud = t.nodes_with_role(Role.CLOUD)[0].id
    first = path_between(t, robot, edge)
    second = path_between(t, edge, cloud)
    if len(first) != 1 or len(second) != 1:
        raise TargetsError("calibration expects a robot-edge-cloud line topology")
    return robot, edge, cloud, first[0], second[0]


def fit_latency(targets: CalibrationTargets, topology: Topology, probe_bytes: int = 64,
                slice_id: str | None = None) -> tuple:
    """(edge_one_way_ms, cloud_extra_one_way_ms) reproducing the RTT targets.

    Probe serialization on each hop is subtracted so the simulated mean RTT
    lands on the target rather than slightly above it.
    """
    slice_id = slice_id if slice_id is not None else topology.default_slice_id
    edge_rtt = invert_spd(targets.cloud_rtt_ms, targets.edge_vs_cloud_spd_pct)
    _, _, _, radio, wan = _chain(topology)
    ser_radio = serialization_ms(probe_bytes, effective_bandwidth(topology, radio, slice_id))
    ser_wan = serialization_ms(probe_bytes, effective_bandwidth(topology, wan, slice_id))
    edge_one_way = edge_rtt / 2.0 - ser_radio
    cloud_extra = targets.cloud_rtt_ms / 2.0 - edge_rtt / 2.0 - ser_wan
    if edge_one_way <= 0 or cloud_extra <= 0:
        raise NoRoot("latency targets imply a non-positive link latency")
    return edge_one_way, cloud_extra


# ---------------------------------------------------------------------------
# capacities and transfer parameters
# ---------------------------------------------------------------------------

def _face_topics(w: Workload, pipeline_id: str) -> tuple:
    pl = w.pipeline(pipeline_id)
    ids = pl.task_ids
    feature = w.link_topic(ids[0], ids[1]) if len(ids) > 1 else None
    return pl, feature


def apply_params(doc: Mapping, params: FittedParams, pipeline_id: str | None = None) -> dict:
    """Scenario document with fitted values written in."""
    out = copy.deepcopy(dict(doc))
    topo = build_topology(out)
    _, edge, cloud, radio, wan = _chain(topo)
    tsec = out["topology"]
    tsec["loopback_latency_ms"] = params.loopback_ms
    for node in tsec["nodes"]:
        if node["id"] == edge:
            node["capacity_per_core"] = params.edge_capacity
        elif node["id"] == cloud:
            node["capacity_per_core"] = params.cloud_capacity
    for link in tsec["links"]:
        if link["id"] == radio:
            link["one_way_latency_ms"] = params.edge_one_way_ms
        elif link["id"] == wan:
            link["one_way_latency_ms"] = params.cloud_extra_one_way_ms
            link["bandwidth_mbps"] = params.internet_bandwidth_mbps
    pipeline_id = pipeline_id or out.get("simulation", {}).get("face_pipeline", "face_recognition")
    w = load_scenario(out)
    pl, feature = _face_topics(w, pipeline_id)
    wsec = out["workload"]
    for p in wsec["pipelines"]:
        if p["id"] == pl.id:
            p["payload_bytes"] = params.image_payload_bytes
    for topic in wsec["topics"]:
        if topic["name"] == pl.trigger_topic:
            topic["message_size_bytes"] = params.image_payload_bytes
        elif topic["name"] == feature:
            topic["message_size_bytes"] = params.feature_payload_bytes
    out.setdefault("simulation", {})["display_overhead_ms"] = params.display_overhead_ms
    return out


@dataclass(frozen=True)
class CapacityFit:
    edge_capacity: float
    cloud_capacity: float
    image_payload_bytes: int
    feature_payload_bytes: int
    display_overhead_ms: float
    internet_bandwidth_mbps: float
    residual: float
    iterations: int


class _ResponseModel:
    """Idle-system recognition and response predictions as a function of the transfer parameters."""

    def __init__(self, doc: Mapping, targets: CalibrationTargets, pipeline_id: str):
        self.doc = doc
        self.targets = targets
        self.pipeline_id = pipeline_id
        self.hybrid_split = bool(doc.get("placement", {}).get("hybrid_split", True))

    def predict(self, bw: float, overhead: float, feature_bytes: float) -> dict:
        trial = copy.deepcopy(dict(self.doc))
        for link in trial["topology"]["links"]:
            if link["id"] == self._wan:
                link["bandwidth_mbps"] = bw
        for topic in trial["workload"]["topics"]:
            if topic["name"] == self._feature:
                topic["message_size_bytes"] = max(1, int(round(feature_bytes)))
        t = build_topology(trial)
        w = load_scenario(trial)
        model = CostModel(w, t)
        out = {}
        for pol in self.targets.response_times:
            placement = place(pol, w, t, hybrid_split=self.hybrid_split)
            rec, back = model.pipeline_timing(self.pipeline_id, placement.assignment)
            out[pol] = (rec, rec + back + overhead)
        return out

    def prepare(self) -> None:
        t = build_topology(self.doc)
        w = load_scenario(self.doc)
        self._wan = _chain(t)[4]
        _, self._feature = _face_topics(w, self.pipeline_id)
        if self._feature is None:
            raise TargetsError(f"pipeline {self.pipeline_id!r} needs two stages joined by a topic")

    def errors(self, pred: dict) -> list:
        errs = []
        for pol, (rec, resp) in self.targets.response_times.items():
            prec, presp = pred[pol]
            errs.append((prec - rec) / rec)
            errs.append((presp - resp) / resp)
        return errs


def fit_capacity(targets: CalibrationTargets, doc: Mapping, pipeline_id: str = "face_recognition") -> CapacityFit:
    """Capacities from the recognition rows, transfers by coordinate descent.

    ``doc`` is a scenario document whose latencies are already fitted.
    The least-squares objective covers recognition and response of every row; the image
    payload stays fixed because only its ratio to bandwidth is identified.
    """
    for pol in _POLICY_KEYS.values():
        if pol not in targets.response_times:
            raise TargetsError(f"response_times lacks the {pol.value} row")
    t0 = build_topology(doc)
    w0 = load_scenario(doc)
    _, edge, cloud, _, wan = _chain(t0)
    robot_ms = targets.response_times[Policy.LOCAL][0]
    robot_cap = t0.robot.capacity_per_core
    edge_cap = robot_cap * robot_ms / targets.response_times[Policy.EDGE_ONLY][0]
    cloud_cap = robot_cap * robot_ms / targets.response_times[Policy.CLOUD_ONLY][0]

    work = copy.deepcopy(dict(doc))
    for node in work["topology"]["nodes"]:
        if node["id"] == edge:
            node["capacity_per_core"] = edge_cap
        elif node["id"] == cloud:
            node["capacity_per_core"] = cloud_cap
    pl, feature = _face_topics(w0, pipeline_id)
    for topic in work["workload"]["topics"]:
        if topic["name"] == pl.trigger_topic:
            topic["message_size_bytes"] = targets.image_payload_bytes
    for p in work["workload"]["pipelines"]:
        if p["id"] == pipeline_id:
            p["payload_bytes"] = targets.image_payload_bytes

    model = _ResponseModel(work, targets, pipeline_id)
    model.prepare()

    # search space: log10 bandwidth, overhead ms, log10 feature bytes
    bounds = [(0.0, 5.0), (0.0, 500.0), (1.0, 8.0)]
    x = [
        math.log10(t0.link(wan).bandwidth_mbps),
        float(doc.get("simulation", {}).get("display_overhead_ms", 20.0)),
        math.log10(w0.topic(feature).message_size_bytes),
    ]
    x = [min(max(v, lo), hi) for v, (lo, hi) in zip(x, bounds)]

    def unpack(v):
        return 10.0 ** v[0], v[1], 10.0 ** v[2]

    def sse(v):
        return sum(e * e for e in model.errors(model.predict(*unpack(v))))

    def residual(v):
        return max(abs(e) for e in model.errors(model.predict(*unpack(v))))

    current = residual(x)
    iterations = 0
    for iterations in range(1, MAX_ITERATIONS + 1):
        for i, (lo, hi) in enumerate(bounds):
            def along(val, i=i):
                trial = list(x)
                trial[i] = val
                return sse(trial)
            res = minimize_scalar(along, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
            if res.fun <= along(x[i]):
                x[i] = float(res.x)
        new = residual(x)
        improvement = current - new
        current = new
        if improvement < IMPROVEMENT_TOL:
            break

    bw, overhead, feature_bytes = unpack(x)
    fit = CapacityFit(
        edge_capacity=edge_cap,
        cloud_capacity=cloud_cap,
        image_payload_bytes=targets.image_payload_bytes,
        feature_payload_bytes=max(1, int(round(feature_bytes))),
        display_overhead_ms=overhead,
        internet_bandwidth_mbps=bw,
        residual=current,
        iterations=iterations,
    )
    if fit.residual > MAX_RESIDUAL:
        raise NonConvergence(f"calibration residual {fit.residual:.4f} exceeds {MAX_RESIDUAL}", fit.residual)
    return fit


def _with_latency(doc: Mapping, radio: str, wan: str, edge_one_way: float, cloud_extra: float,
                  loopback: float) -> dict:
    out = copy.deepcopy(dict(doc))
    out["topology"]["loopback_latency_ms"] = loopback
    for link in out["topology"]["links"]:
        if link["id"] == radio:
            link["one_way_latency_ms"] = edge_one_way
        elif link["id"] == wan:
            link["one_way_latency_ms"] = cloud_extra
    return out


def calibrate(targets: CalibrationTargets, doc: Mapping) -> FittedParams:
    """Fit latencies, then capacities and transfer parameters, on ``doc``.

    The latency fit subtracts probe serialization, which depends on the
    fitted Internet bandwidth, so it is repeated once that is known.
    """
    targets.validate()
    t = build_topology(doc)
    sim = doc.get("simulation", {})
    probe_bytes = int(sim.get("probe_bytes", 64))
    pipeline_id = sim.get("face_pipeline", "face_recognition")
    _, _, _, radio, wan = _chain(t)
    loopback = targets.local_rtt_ms / 2.0

    edge_one_way, cloud_extra = fit_latency(targets, t, probe_bytes)
    cap = fit_capacity(targets, _with_latency(doc, radio, wan, edge_one_way, cloud_extra, loopback), pipeline_id)
    params = FittedParams(
        edge_one_way_ms=edge_one_way,
        cloud_extra_one_way_ms=cloud_extra,
        edge_capacity=cap.edge_capacity,
        cloud_capacity=cap.cloud_capacity,
        image_payload_bytes=cap.image_payload_bytes,
        feature_payload_bytes=cap.feature_payload_bytes,
        display_overhead_ms=cap.display_overhead_ms,
        internet_bandwidth_mbps=cap.internet_bandwidth_mbps,
        loopback_ms=loopback,
        residual=cap.residual,
        iterations=cap.iterations,
    )
    warm = apply_params(doc, params, pipeline_id)
    edge_one_way, cloud_extra = fit_latency(targets, build_topology(warm), probe_bytes)
    cap = fit_capacity(targets, _with_latency(warm, radio, wan, edge_one_way, cloud_extra, loopback), pipeline_id)
    params = replace(params, edge_one_way_ms=edge_one_way, cloud_extra_one_way_ms=cloud_extra,
                     feature_payload_bytes=cap.feature_payload_bytes,
                     display_overhead_ms=cap.display_overhead_ms,
                     internet_bandwidth_mbps=cap.internet_bandwidth_mbps,
                     iterations=params.iterations + cap.iterations)
    return replace(params, residual=model_residual(targets, apply_params(doc, params, pipeline_id), pipeline_id))


def model_residual(targets: CalibrationTargets, doc: Mapping, pipeline_id: str = "face_recognition") -> float:
    """Largest relative error of the idle-system model against every target."""
    probe_bytes = int(doc.get("simulation", {}).get("probe_bytes", 64))
    t = build_topology(doc)
    errs = [abs(r - tgt) / tgt for r, tgt in _model_rtts(t, targets, probe_bytes)]
    model = _ResponseModel(doc, targets, pipeline_id)
    model.prepare()
    wan_bw = t.link(model._wan).bandwidth_mbps
    overhead = float(doc.get("simulation", {}).get("display_overhead_ms", 0.0))
    feature = load_scenario(doc).topic(model._feature).message_size_bytes
    errs += [abs(e) for e in model.errors(model.predict(wan_bw, overhead, feature))]
    return max(errs)


def _model_rtts(t: Topology, targets: CalibrationTargets, probe_bytes: int) -> list:
    from .topology import expected_transfer_ms

    robot, edge, cloud, _, _ = _chain(t)
    edge_rtt_target = invert_spd(targets.cloud_rtt_ms, targets.edge_vs_cloud_spd_pct)
    return [
        (2 * expected_transfer_ms(t, robot, robot, probe_bytes), targets.local_rtt_ms),
        (2 * expected_transfer_ms(t, robot, edge, probe_bytes), edge_rtt_target),
        (2 * expected_transfer_ms(t, robot, cloud, probe_bytes), targets.cloud_rtt_ms),
    ]
