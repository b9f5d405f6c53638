"""Pub/sub service graph (ROS-node analog) and request pipelines."""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass
from typing import Mapping, NamedTuple

from .errors import (
    CyclicPipeline,
    InvalidWorkload,
    OrphanSubscription,
    ScenarioError,
    UnknownTaskInPipeline,
)

FRACTION_TOLERANCE = 1e-9


class TaskClass(str, enum.Enum):
    LATENCY_CRITICAL = "LatencyCritical"
    DATA_HEAVY = "DataHeavy"
    ANCHOR = "Anchor"


class WorkDist(str, enum.Enum):
    FIXED = "fixed"
    LOGNORMAL = "lognormal"
    EXPONENTIAL = "exponential"


class Arrival(str, enum.Enum):
    PERIODIC = "periodic"
    POISSON = "poisson"


@dataclass(frozen=True)
class Topic:
    name: str
    message_size_bytes: int
    publish_rate_hz: float
    arrival: Arrival = Arrival.PERIODIC


@dataclass(frozen=True)
class ServiceTask:
    id: str
    task_class: TaskClass
    work_per_request: float
    memory_gb: float = 0.0
    publishes: frozenset = frozenset()
    subscribes: frozenset = frozenset()
    pinned_to_robot: bool = False
    work_dist: WorkDist = WorkDist.FIXED
    work_cv: float = 0.0


@dataclass(frozen=True)
class RequestPipeline:
    id: str
    stages: tuple  # ((task_id, fraction), ...)
    trigger_topic: str
    response_topic: str
    payload_bytes: int

    @property
    def task_ids(self) -> list:
        return [tid for tid, _ in self.stages]


@dataclass(frozen=True)
class Workload:
    topics: tuple
    tasks: tuple
    pipelines: tuple

    def topic(self, name: str) -> Topic:
        for t in self.topics:
            if t.name == name:
                return t
        raise KeyError(name)

    def task(self, task_id: str) -> ServiceTask:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def pipeline(self, pipeline_id: str) -> RequestPipeline:
        for p in self.pipelines:
            if p.id == pipeline_id:
                return p
        raise KeyError(pipeline_id)

    def publishers(self, topic: str) -> list:
        return sorted(t.id for t in self.tasks if topic in t.publishes)

    def subscribers(self, topic: str) -> list:
        return sorted(t.id for t in self.tasks if topic in t.subscribes)

    def stage_fraction(self, task_id: str) -> float:
        """Share of a task's work charged per message (first pipeline wins)."""
        for p in self.pipelines:
            for tid, frac in p.stages:
                if tid == task_id:
                    return frac
        return 1.0

    def reactive_outputs(self, task_id: str) -> set:
        """Topics a task publishes only in response to pipeline input."""
        out = set()
        for p in self.pipelines:
            ids = p.task_ids
            for k, tid in enumerate(ids):
                if tid != task_id:
                    continue
                if k + 1 < len(ids):
                    lt = self.link_topic(tid, ids[k + 1])
                    if lt is not None:
                        out.add(lt)
                else:
                    out.add(p.response_topic)
        return out & set(self.task(task_id).publishes)

    def timer_outputs(self, task_id: str) -> list:
        """Topics a task publishes on its own clock at the topic rate."""
        return sorted(set(self.task(task_id).publishes) - self.reactive_outputs(task_id))

    def link_topic(self, upstream: str, downstream: str) -> str | None:
        """Topic carrying data from one stage task to the next, if any."""
        up = self.task(upstream)
        down = self.task(downstream)
        shared = sorted(up.publishes & down.subscribes)
        return shared[0] if shared else None


class Violation(NamedTuple):
    kind: str
    member: str
    detail: str

    def __str__(self):
        return f"{self.kind}: {self.member}: {self.detail}"


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _stage_cycles(w: Workload) -> list:
    graph = {}
    for p in w.pipelines:
        ids = p.task_ids
        for a, b in zip(ids, ids[1:]):
            graph.setdefault(a, set()).add(b)
            graph.setdefault(b, set())
    # iterative DFS colouring; one cycle reported per back edge root
    white, grey, black = 0, 1, 2
    colour = {n: white for n in graph}
    cycles = []
    for root in sorted(graph):
        if colour[root] != white:
            continue
        stack = [(root, iter(sorted(graph[root])))]
        colour[root] = grey
        path = [root]
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = black
                stack.pop()
                path.pop()
            elif colour[nxt] == grey:
                cycles.append(path[path.index(nxt):] + [nxt])
            elif colour[nxt] == white:
                colour[nxt] = grey
                path.append(nxt)
                stack.append((nxt, iter(sorted(graph[nxt]))))
    return cycles


def validate_workload(w: Workload) -> list:
    """Return every invariant violation; an empty list means valid."""
    out = []
    names = set()
    for t in w.topics:
        if t.name in names:
            out.append(Violation("DuplicateId", t.name, "topic name repeated"))
        names.add(t.name)
        if t.message_size_bytes <= 0 or not t.publish_rate_hz > 0:
            out.append(Violation("InvalidTopic", t.name, "size and rate must be positive"))

    task_ids = set()
    for task in w.tasks:
        if task.id in task_ids:
            out.append(Violation("DuplicateId", task.id, "task id repeated"))
        task_ids.add(task.id)
        if (task.task_class == TaskClass.ANCHOR) != task.pinned_to_robot:
            out.append(Violation("InconsistentClass", task.id, "Anchor tasks and only Anchor tasks are pinned"))
        if task.publishes & task.subscribes:
            out.append(Violation("SelfLoop", task.id, f"publishes and subscribes {sorted(task.publishes & task.subscribes)}"))
        if task.work_per_request < 0 or task.memory_gb < 0 or task.work_cv < 0:
            out.append(Violation("InvalidTask", task.id, "work, memory and work_cv must be >= 0"))
        for topic in sorted(task.publishes | task.subscribes):
            if topic not in names:
                out.append(Violation("UnknownTopic", task.id, f"topic {topic!r} is not declared"))

    published = set()
    for task in w.tasks:
        published |= task.publishes
    for task in sorted(w.tasks, key=lambda x: x.id):
        for topic in sorted(task.subscribes - published):
            out.append(Violation("OrphanSubscription", task.id, f"nobody publishes {topic!r}"))

    for p in w.pipelines:
        unknown = [tid for tid in p.task_ids if tid not in task_ids]
        for tid in unknown:
            out.append(Violation("UnknownTaskInPipeline", p.id, f"stage task {tid!r} does not exist"))
        if not p.stages:
            out.append(Violation("InvalidPipeline", p.id, "no stages"))
        if any(not (0.0 < f <= 1.0) for _, f in p.stages):
            out.append(Violation("InvalidPipeline", p.id, "stage fractions must be in (0, 1]"))
        total = sum(f for _, f in p.stages)
        if p.stages and abs(total - 1.0) > FRACTION_TOLERANCE:
            out.append(Violation("InvalidPipeline", p.id, f"stage fractions sum to {total:g}, not 1"))
        for topic in (p.trigger_topic, p.response_topic):
            if topic not in names:
                out.append(Violation("UnknownTopic", p.id, f"topic {topic!r} is not declared"))
        if p.payload_bytes <= 0:
            out.append(Violation("InvalidPipeline", p.id, "payload_bytes must be positive"))

    for cyc in _stage_cycles(w):
        out.append(Violation("CyclicPipeline", cyc[0], "stage order cycles through " + " -> ".join(cyc)))
    return out


# ---------------------------------------------------------------------------
# scenario documents
# ---------------------------------------------------------------------------

def _topic_from_dict(d: Mapping) -> Topic:
    return Topic(
        name=str(d["name"]),
        message_size_bytes=int(d["message_size_bytes"]),
        publish_rate_hz=float(d["publish_rate_hz"]),
        arrival=Arrival(d.get("arrival", "periodic")),
    )


def _task_from_dict(d: Mapping) -> ServiceTask:
    return ServiceTask(
        id=str(d["id"]),
        task_class=TaskClass(d["class"]),
        work_per_request=float(d["work_per_request"]),
        memory_gb=float(d.get("memory_gb", 0.0)),
        publishes=frozenset(d.get("publishes", ())),
        subscribes=frozenset(d.get("subscribes", ())),
        pinned_to_robot=bool(d.get("pinned_to_robot", False)),
        work_dist=WorkDist(d.get("work_dist", "fixed")),
        work_cv=float(d.get("work_cv", 0.0)),
    )


def _pipeline_from_dict(d: Mapping) -> RequestPipeline:
    stages = []
    for s in d["stages"]:
        if isinstance(s, Mapping):
            stages.append((str(s["task"]), float(s["fraction"])))
        else:
            tid, frac = s
            stages.append((str(tid), float(frac)))
    return RequestPipeline(
        id=str(d["id"]),
        stages=tuple(stages),
        trigger_topic=str(d["trigger_topic"]),
        response_topic=str(d["response_topic"]),
        payload_bytes=int(d["payload_bytes"]),
    )


def workload_from_dict(section: Mapping) -> Workload:
    try:
        return Workload(
            topics=tuple(_topic_from_dict(d) for d in section.get("topics", ())),
            tasks=tuple(_task_from_dict(d) for d in section.get("tasks", ())),
            pipelines=tuple(_pipeline_from_dict(d) for d in section.get("pipelines", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed workload section: {exc!r}") from None


def load_scenario(config: Mapping) -> Workload:
    """Parse the workload section of a scenario document and validate it."""
    if not isinstance(config, Mapping):
        raise ScenarioError("scenario document must be a mapping")
    w = workload_from_dict(config.get("workload", config))
    problems = validate_workload(w)
    if problems:
        by_kind = {v.kind for v in problems}
        # most specific error first
        if "UnknownTaskInPipeline" in by_kind:
            raise UnknownTaskInPipeline(str(next(v for v in problems if v.kind == "UnknownTaskInPipeline")))
        if "OrphanSubscription" in by_kind:
            raise OrphanSubscription(str(next(v for v in problems if v.kind == "OrphanSubscription")))
        if "CyclicPipeline" in by_kind:
            raise CyclicPipeline(str(next(v for v in problems if v.kind == "CyclicPipeline")))
        raise InvalidWorkload(problems)
    return w


def workload_to_dict(w: Workload) -> dict:
    return {
        "topics": [
            {
                "name": t.name,
                "message_size_bytes": t.message_size_bytes,
                "publish_rate_hz": t.publish_rate_hz,
                "arrival": t.arrival.value,
            }
            for t in w.topics
        ],
        "tasks": [
            {
                "id": t.id,
                "class": t.task_class.value,
                "work_per_request": t.work_per_request,
                "memory_gb": t.memory_gb,
                "publishes": sorted(t.publishes),
                "subscribes": sorted(t.subscribes),
                "pinned_to_robot": t.pinned_to_robot,
                "work_dist": t.work_dist.value,
                "work_cv": t.work_cv,
            }
            for t in w.tasks
        ],
        "pipelines": [
            {
                "id": p.id,
                "stages": [{"task": tid, "fraction": f} for tid, f in p.stages],
                "trigger_topic": p.trigger_topic,
                "response_topic": p.response_topic,
                "payload_bytes": p.payload_bytes,
            }
            for p in w.pipelines
        ],
    }


# On-board face recognition time on the robot (ms); with robot capacity 1.0
# this is also the pipeline's work in compute-unit-seconds.
ROBOT_FACE_RECOGNITION_MS = 2354.0
FACE_WORK = ROBOT_FACE_RECOGNITION_MS / 1000.0

_AIRPORT = {
    "name": "airport-guide",
    "topology": {
        "nodes": [
            {"id": "robot", "role": "Robot", "cores": 4, "capacity_per_core": 1.0,
             "memory_gb": 4.0, "baseline_load_fraction": 0.07},
            {"id": "edge", "role": "Edge", "cores": 26, "capacity_per_core": 4.0,
             "memory_gb": 256.0, "baseline_load_fraction": 0.0},
            {"id": "cloud", "role": "Cloud", "cores": 64, "capacity_per_core": 8.0,
             "memory_gb": 64.0, "baseline_load_fraction": 0.0},
        ],
        "links": [
            {"id": "robot-edge", "a": "robot", "b": "edge", "one_way_latency_ms": 0.815,
             "bandwidth_mbps": 10000.0, "jitter_cv": 0.1},
            {"id": "edge-cloud", "a": "edge", "b": "cloud", "one_way_latency_ms": 18.185,
             "bandwidth_mbps": 30.0, "jitter_cv": 0.1},
        ],
        "slices": [
            {"id": "robot_slice", "nodes": ["robot", "edge", "cloud"],
             "links": ["robot-edge", "edge-cloud"], "bandwidth_share": 0.5, "isolated": True},
        ],
        "background_traffic_mbps": {},
        "loopback_latency_ms": 0.008,
    },
    "workload": {
        "topics": [
            {"name": "camera/image_raw", "message_size_bytes": 2_000_000, "publish_rate_hz": 15.0},
            {"name": "face_event", "message_size_bytes": 200_000, "publish_rate_hz": 1.0},
            {"name": "scan", "message_size_bytes": 40_000, "publish_rate_hz": 10.0},
            {"name": "cmd_vel", "message_size_bytes": 64, "publish_rate_hz": 10.0},
            {"name": "teleop/ping", "message_size_bytes": 64, "publish_rate_hz": 1.0},
            {"name": "teleop/echo", "message_size_bytes": 64, "publish_rate_hz": 1.0},
            {"name": "face_features", "message_size_bytes": 10_000, "publish_rate_hz": 1.0},
            {"name": "face_identity", "message_size_bytes": 1_000, "publish_rate_hz": 1.0},
            {"name": "greeting", "message_size_bytes": 2_000, "publish_rate_hz": 1.0},
        ],
        "tasks": [
            {"id": "camera_driver", "class": "Anchor", "work_per_request": 0.011, "memory_gb": 0.12,
             "publishes": ["camera/image_raw", "face_event"], "pinned_to_robot": True,
             "work_dist": "lognormal", "work_cv": 1.0},
            {"id": "lidar_driver", "class": "Anchor", "work_per_request": 0.006, "memory_gb": 0.06,
             "publishes": ["scan"], "pinned_to_robot": True,
             "work_dist": "lognormal", "work_cv": 1.0},
            {"id": "display", "class": "Anchor", "work_per_request": 0.002, "memory_gb": 0.13,
             "publishes": ["teleop/ping"],
             "subscribes": ["cmd_vel", "face_identity", "greeting", "teleop/echo"],
             "pinned_to_robot": True, "work_dist": "lognormal", "work_cv": 1.0},
            {"id": "teleop_echo", "class": "LatencyCritical", "work_per_request": 0.006, "memory_gb": 0.05,
             "publishes": ["teleop/echo"], "subscribes": ["teleop/ping"]},
            {"id": "navigation", "class": "LatencyCritical", "work_per_request": 0.010, "memory_gb": 0.45,
             "publishes": ["cmd_vel"], "subscribes": ["scan"],
             "work_dist": "lognormal", "work_cv": 0.3},
            {"id": "face_detect", "class": "DataHeavy", "work_per_request": FACE_WORK, "memory_gb": 0.30,
             "publishes": ["face_features"], "subscribes": ["face_event"],
             "work_dist": "lognormal", "work_cv": 0.1},
            {"id": "face_match", "class": "DataHeavy", "work_per_request": FACE_WORK, "memory_gb": 0.41,
             "publishes": ["face_identity"], "subscribes": ["face_features"],
             "work_dist": "lognormal", "work_cv": 0.1},
            {"id": "personalization_responder", "class": "DataHeavy", "work_per_request": 0.010,
             "memory_gb": 0.10, "publishes": ["greeting"], "subscribes": ["face_identity"]},
        ],
        "pipelines": [
            {"id": "face_recognition",
             "stages": [{"task": "face_detect", "fraction": 0.3}, {"task": "face_match", "fraction": 0.7}],
             "trigger_topic": "face_event", "response_topic": "face_identity", "payload_bytes": 200_000},
            {"id": "navigation", "stages": [{"task": "navigation", "fraction": 1.0}],
             "trigger_topic": "scan", "response_topic": "cmd_vel", "payload_bytes": 40_000},
            {"id": "teleop", "stages": [{"task": "teleop_echo", "fraction": 1.0}],
             "trigger_topic": "teleop/ping", "response_topic": "teleop/echo", "payload_bytes": 64},
            {"id": "personalization", "stages": [{"task": "personalization_responder", "fraction": 1.0}],
             "trigger_topic": "face_identity", "response_topic": "greeting", "payload_bytes": 1_000},
        ],
    },
    "placement": {"hybrid_split": True},
    "simulation": {
        "display_overhead_ms": 20.0,
        "probe_bytes": 64,
        "probe_target_task": "navigation",
        "face_pipeline": "face_recognition",
        "sample_interval_ms": 1000.0,
    },
}


def builtin_airport_scenario() -> dict:
    """The airport guide-robot scenario as a fresh, mutable document."""
    return copy.deepcopy(_AIRPORT)
