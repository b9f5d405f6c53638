"""Task placement policies, a static cost estimator and a brute-force oracle."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Mapping

from .errors import InconsistentClass, Infeasible, NoFeasible, TooLarge
from .topology import Role, Topology, expected_transfer_ms
from .workload import ServiceTask, TaskClass, Workload

#: Enumeration guard for :func:`brute_force_optimal`.
MAX_ORACLE_TASKS = 12


class Policy(str, enum.Enum):
    LOCAL = "local"
    EDGE_ONLY = "edge"
    CLOUD_ONLY = "cloud"
    HYBRID = "hybrid"
    ORACLE = "oracle"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {name!r} (expected one of: {valid})") from None


# canonical row order in reports
POLICY_ORDER = [Policy.LOCAL, Policy.EDGE_ONLY, Policy.CLOUD_ONLY, Policy.HYBRID, Policy.ORACLE]


@dataclass(frozen=True)
class Placement:
    assignment: Mapping[str, str]
    policy: Policy

    def node_of(self, task_id: str) -> str:
        return self.assignment[task_id]

    def tasks_on(self, node_id: str) -> list:
        return sorted(t for t, n in self.assignment.items() if n == node_id)


@dataclass(frozen=True)
class PlacementCost:
    latency_cost_ms: float
    robot_cpu_fraction: float
    feasible: bool = True

    def key(self):
        return (self.latency_cost_ms, self.robot_cpu_fraction)


INFEASIBLE = PlacementCost(math.inf, math.inf, False)


def classify_task(task: ServiceTask) -> TaskClass:
    if (task.task_class == TaskClass.ANCHOR) != task.pinned_to_robot:
        raise InconsistentClass(
            f"task {task.id!r}: class {task.task_class.value} with pinned_to_robot={task.pinned_to_robot}"
        )
    return task.task_class


def memory_violations(assignment: Mapping[str, str], w: Workload, t: Topology) -> list:
    used = {}
    for task in w.tasks:
        node = assignment[task.id]
        used[node] = used.get(node, 0.0) + task.memory_gb
    out = []
    for node_id in sorted(used):
        cap = t.node(node_id).memory_gb
        if used[node_id] > cap + 1e-12:
            out.append(f"node {node_id!r}: {used[node_id]:.3f} GB assigned > {cap:.3f} GB")
    return out


def check_placement(p: Placement, w: Workload, t: Topology) -> list:
    """Invariant violations of a placement (empty when valid)."""
    problems = []
    task_ids = {task.id for task in w.tasks}
    if set(p.assignment) != task_ids:
        problems.append("assignment is not total over the workload's tasks")
        return problems
    robot = t.robot.id
    for task in w.tasks:
        if task.pinned_to_robot and p.assignment[task.id] != robot:
            problems.append(f"anchor {task.id!r} is not on the robot")
    node_ids = {n.id for n in t.nodes}
    for tid, nid in p.assignment.items():
        if nid not in node_ids:
            problems.append(f"task {tid!r} placed on unknown node {nid!r}")
    if not problems:
        problems.extend(memory_violations(p.assignment, w, t))
    return problems


def _first_with_role(t: Topology, role: Role, policy: Policy) -> str:
    nodes = t.nodes_with_role(role)
    if not nodes:
        raise Infeasible(f"policy {policy.value!r} needs a {role.value} node")
    return nodes[0].id


def _split_first_stages(w: Workload) -> set:
    """DataHeavy tasks that open a multi-stage pipeline (the detect stages)."""
    out = set()
    for p in w.pipelines:
        if len(p.stages) < 2:
            continue
        first = w.task(p.stages[0][0])
        if first.task_class == TaskClass.DATA_HEAVY:
            out.add(first.id)
    return out


def place(policy: Policy | str, w: Workload, t: Topology, hybrid_split: bool = True) -> Placement:
    """Assign every task to a node according to ``policy``."""
    policy = Policy.parse(policy) if isinstance(policy, str) else policy
    if policy == Policy.ORACLE:
        return brute_force_optimal(w, t)

    robot = t.robot.id
    assignment = {}
    if policy == Policy.LOCAL:
        assignment = {task.id: robot for task in w.tasks}
    elif policy in (Policy.EDGE_ONLY, Policy.CLOUD_ONLY):
        role = Role.EDGE if policy == Policy.EDGE_ONLY else Role.CLOUD
        target = _first_with_role(t, role, policy)
        for task in w.tasks:
            assignment[task.id] = robot if classify_task(task) == TaskClass.ANCHOR else target
    else:
        edge = _first_with_role(t, Role.EDGE, policy)
        cloud = _first_with_role(t, Role.CLOUD, policy)
        split = _split_first_stages(w) if hybrid_split else set()
        for task in w.tasks:
            cls = classify_task(task)
            if cls == TaskClass.ANCHOR:
                assignment[task.id] = robot
            elif cls == TaskClass.LATENCY_CRITICAL or task.id in split:
                assignment[task.id] = edge
            else:
                assignment[task.id] = cloud

    problems = memory_violations(assignment, w, t)
    if problems:
        raise Infeasible(f"{policy.value}: " + "; ".join(problems))
    return Placement(assignment=assignment, policy=policy)


# ---------------------------------------------------------------------------
# static cost estimator
# ---------------------------------------------------------------------------

class CostModel:
    """Precomputed per-workload data for repeated cost evaluation.

    Latency cost sums, over every pipeline, the upload of the trigger payload
    to the first stage, each stage's idle compute time, the transfers between
    consecutive stages and the return of the response to the robot.
    Queueing is ignored.
    """

    def __init__(self, w: Workload, t: Topology, slice_id: str | None = None):
        self.w = w
        self.t = t
        self.slice_id = slice_id if slice_id is not None else t.default_slice_id
        self.robot = t.robot.id
        self._transfer_cache = {}
        self._cap = {n.id: n.capacity_per_core for n in t.nodes}
        self._pipes = []
        for p in w.pipelines:
            pubs = w.publishers(p.trigger_topic)
            hops = []
            ids = p.task_ids
            for a, b in zip(ids, ids[1:]):
                lt = w.link_topic(a, b)
                hops.append(w.topic(lt).message_size_bytes if lt else p.payload_bytes)
            self._pipes.append({
                "pipeline": p,
                "source": pubs[0] if pubs else None,
                "stages": [(tid, w.task(tid).work_per_request * frac) for tid, frac in p.stages],
                "hop_bytes": hops,
                "response_bytes": w.topic(p.response_topic).message_size_bytes,
            })
        self._util = {task.id: self._steady_cores(task) for task in w.tasks}

    def transfer(self, src: str, dst: str, nbytes: float) -> float:
        key = (src, dst, nbytes)
        val = self._transfer_cache.get(key)
        if val is None:
            val = expected_transfer_ms(self.t, src, dst, nbytes, self.slice_id)
            self._transfer_cache[key] = val
        return val

    def compute_ms(self, work: float, node: str) -> float:
        return work / self._cap[node] * 1000.0

    def pipeline_timing(self, pipeline_id: str, assignment: Mapping[str, str]) -> tuple:
        """(recognition_ms, return_ms) of one idle-system request."""
        for entry in self._pipes:
            if entry["pipeline"].id == pipeline_id:
                return self._timing(entry, assignment)
        raise KeyError(pipeline_id)

    def _timing(self, entry, assignment):
        p = entry["pipeline"]
        src = assignment[entry["source"]] if entry["source"] else self.robot
        nodes = [assignment[tid] for tid, _ in entry["stages"]]
        total = self.transfer(src, nodes[0], p.payload_bytes)
        for (_, work), node in zip(entry["stages"], nodes):
            total += self.compute_ms(work, node)
        for a, b, nbytes in zip(nodes, nodes[1:], entry["hop_bytes"]):
            total += self.transfer(a, b, nbytes)
        back = self.transfer(nodes[-1], self.robot, entry["response_bytes"])
        return total, back

    def _steady_cores(self, task: ServiceTask) -> float:
        """Mean compute demand of a task in compute-units (core-equivalents at 1.0)."""
        w = self.w
        rate = sum(w.topic(name).publish_rate_hz for name in task.subscribes)
        rate += sum(w.topic(name).publish_rate_hz for name in w.timer_outputs(task.id))
        return rate * task.work_per_request * w.stage_fraction(task.id)

    def robot_cpu_fraction(self, assignment: Mapping[str, str]) -> float:
        node = self.t.node(self.robot)
        demand = sum(self._util[tid] for tid, nid in assignment.items() if nid == self.robot)
        return min(1.0, node.baseline_load_fraction + demand / (node.cores * node.capacity_per_core))

    def cost(self, assignment: Mapping[str, str]) -> PlacementCost:
        latency = 0.0
        for entry in self._pipes:
            rec, back = self._timing(entry, assignment)
            latency += rec + back
        return PlacementCost(latency, self.robot_cpu_fraction(assignment), True)


def placement_cost(p: Placement, w: Workload, t: Topology, slice_id: str | None = None) -> PlacementCost:
    if check_placement(p, w, t):
        return INFEASIBLE
    return CostModel(w, t, slice_id).cost(p.assignment)


def brute_force_optimal(w: Workload, t: Topology, slice_id: str | None = None) -> Placement:
    """Exhaustive search over node assignments of all non-Anchor tasks.

    Minimises latency cost, then robot CPU fraction, then the assignment
    listed in task-id order compared lexicographically by node id.
    """
    movable = sorted(task.id for task in w.tasks if classify_task(task) != TaskClass.ANCHOR)
    if len(movable) > MAX_ORACLE_TASKS:
        raise TooLarge(f"{len(movable)} movable tasks exceed the oracle limit of {MAX_ORACLE_TASKS}")
    robot = t.robot.id
    node_ids = sorted(n.id for n in t.nodes)
    anchors = {task.id: robot for task in w.tasks if task.id not in movable}
    model = CostModel(w, t, slice_id)

    best_key = None
    best = None
    for combo in itertools.product(node_ids, repeat=len(movable)):
        assignment = dict(anchors)
        assignment.update(zip(movable, combo))
        if memory_violations(assignment, w, t):
            continue
        c = model.cost(assignment)
        key = (c.latency_cost_ms, c.robot_cpu_fraction, combo)
        if best_key is None or key < best_key:
            best_key, best = key, assignment
    if best is None:
        raise NoFeasible("no assignment satisfies the memory constraints")
    return Placement(assignment=best, policy=Policy.ORACLE)
