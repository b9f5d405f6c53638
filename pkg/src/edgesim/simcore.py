"""Deterministic discrete-event engine.

Messages cross links store-and-forward (lognormal latency per hop plus
serialization at the slice's effective bandwidth). Each node runs its jobs
under processor sharing over its cores, or FIFO when configured so. Three
experiment drivers sit on top: teleoperation probes, face-recognition
transactions and robot utilisation sampling.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import heapq
import io
import math
from dataclasses import dataclass
from typing import Mapping

from .errors import NotInSlice
from .placement import Placement
from .rng import RngStream, lognormal_mean_cv
from .topology import ComputeNode, Discipline, Topology, effective_bandwidth, path_between, serialization_ms
from .workload import Arrival, ServiceTask, WorkDist, Workload


class EventKind(str, enum.Enum):
    MESSAGE_PUBLISHED = "MessagePublished"
    MESSAGE_ARRIVED = "MessageArrived"
    SERVICE_STARTED = "ServiceStarted"
    SERVICE_COMPLETED = "ServiceCompleted"
    PROBE_SENT = "ProbeSent"
    PROBE_ECHOED = "ProbeEchoed"
    SAMPLE_TICK = "SampleTick"


TRACE_HEADER = ("timestamp_ms", "kind", "task", "node", "link", "bytes")


@dataclass(frozen=True)
class SimConfig:
    display_overhead_ms: float = 20.0
    probe_bytes: int = 64
    probe_rate_hz: float = 1.0
    probe_target_task: str | None = "navigation"
    sample_interval_ms: float = 1000.0

    @classmethod
    def from_scenario(cls, doc: Mapping) -> "SimConfig":
        sim = doc.get("simulation", {}) if isinstance(doc, Mapping) else {}
        base = cls()
        return cls(
            display_overhead_ms=float(sim.get("display_overhead_ms", base.display_overhead_ms)),
            probe_bytes=int(sim.get("probe_bytes", base.probe_bytes)),
            probe_rate_hz=float(sim.get("probe_rate_hz", base.probe_rate_hz)),
            probe_target_task=sim.get("probe_target_task", base.probe_target_task),
            sample_interval_ms=float(sim.get("sample_interval_ms", base.sample_interval_ms)),
        )


@dataclass
class RequestRecord:
    start_ms: float
    recognition_end_ms: float | None = None
    response_end_ms: float | None = None


@dataclass
class TraceLog:
    records: list
    utilization: dict          # node id -> [(t_ms, fraction), ...]
    in_flight: list            # MessagePublished records never delivered
    probe_rtts: list           # (sent_ms, rtt_ms) in completion order
    requests: dict             # pipeline id -> [RequestRecord] in start order
    assignment: Mapping[str, str]
    resident_memory_gb: dict   # node id -> sum of placed task memory
    robot_id: str
    display_overhead_ms: float
    horizon_ms: float
    published: int = 0
    arrived: int = 0

    def kinds(self, kind: EventKind) -> list:
        return [r for r in self.records if r[1] == kind.value]

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for ts, kind, task, node, link, nbytes in self.records:
            writer.writerow((repr(ts), kind, task, node, link, nbytes))
        return buf.getvalue()

    @property
    def digest(self) -> int:
        """64-bit checksum of the ordered record stream."""
        h = hashlib.blake2b(digest_size=8)
        h.update(self.csv_text().encode())
        return int.from_bytes(h.digest(), "big")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.csv_text())

    def conservation_holds(self) -> bool:
        return self.published == self.arrived + len(self.in_flight)


# ---------------------------------------------------------------------------
# link and compute primitives
# ---------------------------------------------------------------------------

def transit_time(t: Topology, link_id: str, slice_id: str, payload_bytes: float, rng) -> float:
    """One-hop transit: lognormal latency sample plus serialization (ms)."""
    sl = t.slice(slice_id)
    if link_id not in sl.member_links:
        raise NotInSlice(f"link {link_id!r} is not a member of slice {slice_id!r}")
    lk = t.link(link_id)
    latency = lognormal_mean_cv(rng, lk.one_way_latency_ms, lk.jitter_cv)
    return latency + serialization_ms(payload_bytes, effective_bandwidth(t, link_id, slice_id))


def service_time(task: ServiceTask, stage_fraction: float, node: ComputeNode, concurrent: int = 1) -> float:
    """Compute time (ms) of one request under processor sharing.

    ``concurrent`` is the number of jobs sharing the node, this one included.
    """
    share = min(1.0, node.cores / max(1, concurrent))
    return task.work_per_request * stage_fraction / (node.capacity_per_core * share) * 1000.0


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

_EPS_WORK = 1e-7  # unit-ms

# internal event codes; heap entries are (time, seq, code, payload)
_TIMER, _ARRIVE, _NODE_CHECK, _PROBE_SEND, _PROBE_AT_HOST, _PROBE_BACK, _SAMPLE = range(7)


class _NodeState:
    __slots__ = ("id", "cap", "cores", "fifo", "baseline", "jobs", "last", "busy", "version", "sampled_busy")

    def __init__(self, node: ComputeNode):
        self.id = node.id
        self.cap = node.capacity_per_core
        self.cores = node.cores
        self.fifo = node.discipline == Discipline.FIFO
        self.baseline = node.baseline_load_fraction
        self.jobs = {}  # job id -> [remaining unit-ms, payload]; insertion order = arrival order
        self.last = 0.0
        self.busy = 0.0  # integral of busy cores over time (core-ms)
        self.version = 0
        self.sampled_busy = 0.0

    def advance(self, now: float) -> None:
        dt = now - self.last
        if dt > 0.0 and self.jobs:
            n = len(self.jobs)
            if self.fifo:
                step = self.cap * dt
                for k, job in enumerate(self.jobs.values()):
                    if k >= self.cores:
                        break
                    job[0] -= step
            else:
                step = self.cap * min(1.0, self.cores / n) * dt
                for job in self.jobs.values():
                    job[0] -= step
            self.busy += dt * min(n, self.cores)
        self.last = now

    def next_completion(self) -> float | None:
        if not self.jobs:
            return None
        if self.fifo:
            served = list(self.jobs.values())[: self.cores]
            return self.last + max(0.0, min(j[0] for j in served)) / self.cap
        rate = self.cap * min(1.0, self.cores / len(self.jobs))
        return self.last + max(0.0, min(j[0] for j in self.jobs.values())) / rate

    def finished(self) -> list:
        if self.fifo:
            served = list(self.jobs.items())[: self.cores]
        else:
            served = list(self.jobs.items())
        return [jid for jid, job in served if job[0] <= _EPS_WORK]


class _Engine:
    def __init__(self, w: Workload, t: Topology, p: Placement, slice_id: str | None,
                 duration_ms: float, seed: int, config: SimConfig):
        self.w, self.t, self.p = w, t, p
        self.slice_id = slice_id if slice_id is not None else t.default_slice_id
        self.horizon = float(duration_ms)
        self.cfg = config
        self.rng = RngStream(seed)
        self.robot = t.robot.id
        self.nodes = {n.id: _NodeState(n) for n in t.nodes}
        self.heap = []
        self.seq = 0
        self.records = []
        self.msg_seq = 0
        self.job_seq = 0
        self.in_flight = {}
        self.published = 0
        self.arrived = 0
        self.probe_rtts = []
        self.requests = {pl.id: [] for pl in w.pipelines}
        self.utilization = {n.id: [] for n in t.nodes}

        self.tasks = {task.id: task for task in w.tasks}
        self.node_of = dict(p.assignment)
        self.frac = {task.id: w.stage_fraction(task.id) for task in w.tasks}
        self.subscribers = {tp.name: w.subscribers(tp.name) for tp in w.topics}
        self.topic_bytes = {tp.name: tp.message_size_bytes for tp in w.topics}
        self.pipes = {pl.id: pl for pl in w.pipelines}
        # trigger topic -> [(pipeline id, first stage task)]
        self.triggers = {}
        for pl in w.pipelines:
            self.triggers.setdefault(pl.trigger_topic, []).append((pl.id, pl.stages[0][0]))
        # (pipeline id, stage index) -> topic that stage publishes on completion
        self.stage_out = {}
        for pl in w.pipelines:
            ids = pl.task_ids
            for k, tid in enumerate(ids):
                topic = w.link_topic(tid, ids[k + 1]) if k + 1 < len(ids) else pl.response_topic
                if topic is not None and topic in self.tasks[tid].publishes:
                    self.stage_out[(pl.id, k)] = topic
        self._paths = {}
        self._bw = {}
        for lk in t.links:
            try:
                self._bw[lk.id] = effective_bandwidth(t, lk.id, self.slice_id)
            except NotInSlice:
                pass

    # -- bookkeeping --------------------------------------------------------
    def push(self, time: float, code: int, payload) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (time, self.seq, code, payload))

    def log(self, ts, kind, task="", node="", link="", nbytes=0) -> tuple:
        rec = (ts, kind, task, node, link, nbytes)
        self.records.append(rec)
        return rec

    def path(self, a: str, b: str) -> list:
        key = (a, b)
        out = self._paths.get(key)
        if out is None:
            out = self._paths[key] = path_between(self.t, a, b)
        return out

    def transit(self, a: str, b: str, nbytes: float) -> float:
        if a == b:
            return self.t.loopback_latency_ms
        total = 0.0
        for lid in self.path(a, b):
            if lid not in self._bw:
                raise NotInSlice(f"link {lid!r} is not a member of slice {self.slice_id!r}")
            lk = self.t.link(lid)
            total += lognormal_mean_cv(self.rng.link(lid), lk.one_way_latency_ms, lk.jitter_cv)
            total += serialization_ms(nbytes, self._bw[lid])
        return total

    def draw_work(self, task: ServiceTask, node_id: str) -> float:
        mean = task.work_per_request * self.frac[task.id] * 1000.0  # unit-ms
        if mean <= 0.0 or task.work_dist == WorkDist.FIXED:
            return mean
        rng = self.rng.node(node_id)
        if task.work_dist == WorkDist.EXPONENTIAL:
            return rng.expovariate(1.0 / mean)
        return lognormal_mean_cv(rng, mean, task.work_cv)

    # -- compute ------------------------------------------------------------
    def start_job(self, now: float, task_id: str, ctx) -> None:
        node_id = self.node_of[task_id]
        task = self.tasks[task_id]
        self.log(now, "ServiceStarted", task_id, node_id)
        work = self.draw_work(task, node_id)
        if work <= 0.0:
            self.complete_job(now, task_id, node_id, ctx)
            return
        st = self.nodes[node_id]
        st.advance(now)
        self.job_seq += 1
        st.jobs[self.job_seq] = [work, (task_id, ctx)]
        self.reschedule(st)

    def reschedule(self, st: _NodeState) -> None:
        st.version += 1
        nxt = st.next_completion()
        if nxt is not None:
            self.push(nxt, _NODE_CHECK, (st.id, st.version))

    def on_node_check(self, now: float, node_id: str, version: int) -> None:
        st = self.nodes[node_id]
        if version != st.version:
            return
        st.advance(now)
        done = st.finished()
        if not done:
            nxt = st.next_completion()
            if nxt is not None and nxt <= now:
                # float residue: finish the job closest to completion
                done = [min(st.jobs, key=lambda j: st.jobs[j][0])]
        finished = [(jid, st.jobs.pop(jid)[1]) for jid in done]
        self.reschedule(st)
        for _, (task_id, ctx) in finished:
            self.complete_job(now, task_id, node_id, ctx)

    def complete_job(self, now: float, task_id: str, node_id: str, ctx) -> None:
        self.log(now, "ServiceCompleted", task_id, node_id)
        if ctx is None:
            return
        pid, rid, k = ctx
        pl = self.pipes[pid]
        if k == len(pl.stages) - 1:
            req = self.requests[pid][rid]
            if req.recognition_end_ms is None:
                req.recognition_end_ms = now
        topic = self.stage_out.get((pid, k))
        if topic is not None:
            self.publish(now, task_id, topic, ctx)

    # -- messaging ----------------------------------------------------------
    def publish(self, now: float, task_id: str, topic: str, ctx) -> None:
        src = self.node_of[task_id]
        new_reqs = {}
        for sub in self.subscribers[topic]:
            dctx = None
            resp = None
            nbytes = self.topic_bytes[topic]
            if ctx is not None:
                pid, rid, k = ctx
                pl = self.pipes[pid]
                if self.stage_out.get((pid, k)) == topic:
                    if k + 1 < len(pl.stages) and pl.stages[k + 1][0] == sub:
                        dctx = (pid, rid, k + 1)
                    elif k + 1 == len(pl.stages) and self.node_of[sub] == self.robot:
                        resp = (pid, rid)
            if dctx is None:
                for pid, first in self.triggers.get(topic, ()):
                    if first != sub:
                        continue
                    rid = new_reqs.get(pid)
                    if rid is None:
                        rid = new_reqs[pid] = len(self.requests[pid])
                        self.requests[pid].append(RequestRecord(start_ms=now))
                    dctx = (pid, rid, 0)
                    nbytes = self.pipes[pid].payload_bytes
                    break
            dst = self.node_of[sub]
            link = "+".join(self.path(src, dst))
            rec = self.log(now, "MessagePublished", sub, src, link, nbytes)
            self.msg_seq += 1
            self.published += 1
            self.in_flight[self.msg_seq] = rec
            arrive = now + self.transit(src, dst, nbytes)
            self.push(arrive, _ARRIVE, (self.msg_seq, sub, dst, link, nbytes, dctx, resp))

    def on_arrive(self, now: float, payload) -> None:
        mid, sub, dst, link, nbytes, dctx, resp = payload
        del self.in_flight[mid]
        self.arrived += 1
        self.log(now, "MessageArrived", sub, dst, link, nbytes)
        if resp is not None:
            req = self.requests[resp[0]][resp[1]]
            if req.response_end_ms is None:
                req.response_end_ms = now
        self.start_job(now, sub, dctx)

    def on_timer(self, now: float, task_id: str, topic: str) -> None:
        task = self.tasks[task_id]
        if task.work_per_request > 0.0:
            self.start_job(now, task_id, None)
        self.publish(now, task_id, topic, None)
        tp = self.w.topic(topic)
        if tp.arrival == Arrival.POISSON:
            gap = self.rng.substream("topic:" + topic).expovariate(tp.publish_rate_hz / 1000.0)
        else:
            gap = 1000.0 / tp.publish_rate_hz
        self.push(now + gap, _TIMER, (task_id, topic))

    # -- probes -------------------------------------------------------------
    def probe_host(self) -> str | None:
        target = self.cfg.probe_target_task
        if target is None or target not in self.node_of:
            return None
        return self.node_of[target]

    def on_probe_send(self, now: float, k: int, host: str) -> None:
        self.log(now, "ProbeSent", "", self.robot, "+".join(self.path(self.robot, host)), self.cfg.probe_bytes)
        self.push(now + self.transit(self.robot, host, self.cfg.probe_bytes), _PROBE_AT_HOST, (now, host))
        self.push((k + 1) * 1000.0 / self.cfg.probe_rate_hz, _PROBE_SEND, (k + 1, host))

    def on_probe_at_host(self, now: float, sent: float, host: str) -> None:
        self.push(now + self.transit(host, self.robot, self.cfg.probe_bytes), _PROBE_BACK, (sent, host))

    def on_probe_back(self, now: float, sent: float, host: str) -> None:
        self.log(now, "ProbeEchoed", "", self.robot, "+".join(self.path(host, self.robot)), self.cfg.probe_bytes)
        self.probe_rtts.append((sent, now - sent))

    # -- sampling -----------------------------------------------------------
    def on_sample(self, now: float) -> None:
        interval = self.cfg.sample_interval_ms
        for node_id in sorted(self.nodes):
            st = self.nodes[node_id]
            st.advance(now)
            used = (st.busy - st.sampled_busy) / (st.cores * interval)
            st.sampled_busy = st.busy
            self.utilization[node_id].append((now, min(1.0, st.baseline + used)))
        self.log(now, "SampleTick")
        self.push(now + interval, _SAMPLE, None)

    # -- main loop ----------------------------------------------------------
    def run(self) -> TraceLog:
        for task in sorted(self.tasks.values(), key=lambda x: x.id):
            for topic in self.w.timer_outputs(task.id):
                tp = self.w.topic(topic)
                first = 0.0
                if tp.arrival == Arrival.POISSON:
                    first = self.rng.substream("topic:" + topic).expovariate(tp.publish_rate_hz / 1000.0)
                self.push(first, _TIMER, (task.id, topic))
        host = self.probe_host()
        if host is not None and self.cfg.probe_rate_hz > 0:
            self.push(0.0, _PROBE_SEND, (0, host))
        if self.cfg.sample_interval_ms > 0:
            self.push(self.cfg.sample_interval_ms, _SAMPLE, None)

        heap = self.heap
        horizon = self.horizon
        while heap and heap[0][0] <= horizon:
            now, _, code, payload = heapq.heappop(heap)
            if code == _NODE_CHECK:
                self.on_node_check(now, *payload)
            elif code == _ARRIVE:
                self.on_arrive(now, payload)
            elif code == _TIMER:
                self.on_timer(now, *payload)
            elif code == _SAMPLE:
                self.on_sample(now)
            elif code == _PROBE_SEND:
                self.on_probe_send(now, *payload)
            elif code == _PROBE_AT_HOST:
                self.on_probe_at_host(now, *payload)
            else:
                self.on_probe_back(now, *payload)

        memory = {}
        for task_id, node_id in sorted(self.node_of.items()):
            memory[node_id] = memory.get(node_id, 0.0) + self.tasks[task_id].memory_gb
        return TraceLog(
            records=self.records,
            utilization=self.utilization,
            in_flight=[self.in_flight[m] for m in sorted(self.in_flight)],
            probe_rtts=self.probe_rtts,
            requests=self.requests,
            assignment=dict(self.node_of),
            resident_memory_gb=memory,
            robot_id=self.robot,
            display_overhead_ms=self.cfg.display_overhead_ms,
            horizon_ms=horizon,
            published=self.published,
            arrived=self.arrived,
        )


def run_simulation(w: Workload, t: Topology, p: Placement, slice_id: str | None = None,
                   duration_ms: float = 10_000.0, seed: int = 42,
                   config: SimConfig | None = None) -> TraceLog:
    """Simulate one placement until ``duration_ms`` and return its trace."""
    if not duration_ms > 0:
        raise ValueError("duration_ms must be > 0")
    return _Engine(w, t, p, slice_id, duration_ms, seed, config or SimConfig()).run()


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def teleop_probe(w: Workload, t: Topology, p: Placement, slice_id: str | None = None,
                 n_samples: int = 1000, rate_hz: float = 1.0, seed: int = 42,
                 config: SimConfig | None = None) -> list:
    """Round-trip times (ms) between the robot and the navigation host."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    cfg = config or SimConfig()
    cfg = SimConfig(**{**cfg.__dict__, "probe_rate_hz": rate_hz})
    if cfg.probe_target_task not in p.assignment:
        raise ValueError(f"probe target task {cfg.probe_target_task!r} is not placed")
    horizon = (n_samples - 1) * 1000.0 / rate_hz + 10_000.0
    trace = run_simulation(w, t, p, slice_id, horizon, seed, cfg)
    return probe_samples(trace, n_samples)


def probe_samples(trace: TraceLog, n_samples: int | None = None) -> list:
    rtts = [rtt for _, rtt in sorted(trace.probe_rtts)]
    return rtts if n_samples is None else rtts[:n_samples]


def face_recognition_transaction(w: Workload, t: Topology, p: Placement, slice_id: str | None = None,
                                 n_requests: int = 1000, seed: int = 42,
                                 config: SimConfig | None = None,
                                 pipeline_id: str = "face_recognition") -> list:
    """(recognition_ms, response_ms) for the first ``n_requests`` requests."""
    if n_requests < 1:
        raise ValueError("n_requests must be >= 1")
    pl = w.pipeline(pipeline_id)
    rate = w.topic(pl.trigger_topic).publish_rate_hz
    horizon = (n_requests - 1) * 1000.0 / rate + 30_000.0
    trace = run_simulation(w, t, p, slice_id, horizon, seed, config)
    return transaction_samples(trace, pipeline_id, n_requests)


def transaction_samples(trace: TraceLog, pipeline_id: str, n_requests: int | None = None) -> list:
    out = []
    for req in trace.requests.get(pipeline_id, ()):
        if req.recognition_end_ms is None or req.response_end_ms is None:
            continue
        recognition = req.recognition_end_ms - req.start_ms
        response = req.response_end_ms - req.start_ms + trace.display_overhead_ms
        out.append((recognition, response))
        if n_requests is not None and len(out) == n_requests:
            break
    return out


def latency_along(t: Topology, a: str, b: str) -> float:
    """Mean one-way latency along the fewest-hop path (no serialization)."""
    if a == b:
        return t.loopback_latency_ms
    return math.fsum(t.link(lid).one_way_latency_ms for lid in path_between(t, a, b))
