"""Robot / edge / cloud infrastructure graph and the network slice overlay."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import (
    DanglingReference,
    DisconnectedGraph,
    DuplicateId,
    NoPath,
    NotInSlice,
    ScenarioError,
    UnknownSlice,
)

#: Floor applied to non-isolated effective bandwidth (mbps).
BANDWIDTH_FLOOR_MBPS = 0.1


class Role(str, enum.Enum):
    ROBOT = "Robot"
    EDGE = "Edge"
    CLOUD = "Cloud"


class Discipline(str, enum.Enum):
    PS = "ps"
    FIFO = "fifo"


@dataclass(frozen=True)
class ComputeNode:
    id: str
    role: Role
    cores: int
    capacity_per_core: float
    memory_gb: float
    baseline_load_fraction: float = 0.0
    discipline: Discipline = Discipline.PS


@dataclass(frozen=True)
class NetworkLink:
    id: str
    endpoint_a: str
    endpoint_b: str
    one_way_latency_ms: float
    bandwidth_mbps: float
    jitter_cv: float = 0.0

    def other(self, node_id: str) -> str:
        return self.endpoint_b if node_id == self.endpoint_a else self.endpoint_a


@dataclass(frozen=True)
class NetworkSlice:
    id: str
    member_nodes: frozenset
    member_links: frozenset
    bandwidth_share: float = 1.0
    isolated: bool = True


@dataclass(frozen=True)
class Topology:
    nodes: tuple
    links: tuple
    slices: tuple
    background_traffic_mbps: Mapping[str, float] = field(default_factory=dict)
    # same-node delivery latency; not part of any link
    loopback_latency_ms: float = 0.008

    def node(self, node_id: str) -> ComputeNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def link(self, link_id: str) -> NetworkLink:
        for lk in self.links:
            if lk.id == link_id:
                return lk
        raise KeyError(link_id)

    def slice(self, slice_id: str) -> NetworkSlice:
        for s in self.slices:
            if s.id == slice_id:
                return s
        raise UnknownSlice(slice_id)

    def nodes_with_role(self, role: Role) -> list:
        return sorted((n for n in self.nodes if n.role == role), key=lambda n: n.id)

    @property
    def robot(self) -> ComputeNode:
        return self.nodes_with_role(Role.ROBOT)[0]

    @property
    def default_slice_id(self) -> str | None:
        return self.slices[0].id if self.slices else None


# ---------------------------------------------------------------------------
# construction / serialization
# ---------------------------------------------------------------------------

def _require(section: Mapping, key: str, where: str):
    try:
        return section[key]
    except (KeyError, TypeError):
        raise ScenarioError(f"{where}: missing field {key!r}") from None


def _node_from_dict(d: Mapping) -> ComputeNode:
    nid = _require(d, "id", "node")
    try:
        role = Role(_require(d, "role", f"node {nid}"))
        discipline = Discipline(d.get("discipline", "ps"))
    except ValueError as exc:
        raise ScenarioError(f"node {nid}: {exc}") from None
    node = ComputeNode(
        id=str(nid),
        role=role,
        cores=int(_require(d, "cores", f"node {nid}")),
        capacity_per_core=float(_require(d, "capacity_per_core", f"node {nid}")),
        memory_gb=float(d.get("memory_gb", 0.0)),
        baseline_load_fraction=float(d.get("baseline_load_fraction", 0.0)),
        discipline=discipline,
    )
    if node.cores < 1:
        raise ScenarioError(f"node {nid}: cores must be a positive integer")
    if not node.capacity_per_core > 0:
        raise ScenarioError(f"node {nid}: capacity_per_core must be > 0")
    if node.memory_gb < 0:
        raise ScenarioError(f"node {nid}: memory_gb must be >= 0")
    if not 0.0 <= node.baseline_load_fraction <= 1.0:
        raise ScenarioError(f"node {nid}: baseline_load_fraction must be in [0, 1]")
    return node


def _link_from_dict(d: Mapping) -> NetworkLink:
    lid = _require(d, "id", "link")
    link = NetworkLink(
        id=str(lid),
        endpoint_a=str(_require(d, "a", f"link {lid}")),
        endpoint_b=str(_require(d, "b", f"link {lid}")),
        one_way_latency_ms=float(_require(d, "one_way_latency_ms", f"link {lid}")),
        bandwidth_mbps=float(_require(d, "bandwidth_mbps", f"link {lid}")),
        jitter_cv=float(d.get("jitter_cv", 0.0)),
    )
    if link.one_way_latency_ms < 0 or not link.bandwidth_mbps > 0 or link.jitter_cv < 0:
        raise ScenarioError(f"link {lid}: latency/jitter must be >= 0 and bandwidth > 0")
    return link


def _slice_from_dict(d: Mapping) -> NetworkSlice:
    return NetworkSlice(
        id=str(_require(d, "id", "slice")),
        member_nodes=frozenset(str(x) for x in d.get("nodes", ())),
        member_links=frozenset(str(x) for x in d.get("links", ())),
        bandwidth_share=float(d.get("bandwidth_share", 1.0)),
        isolated=bool(d.get("isolated", True)),
    )


def build_topology(config: Mapping) -> Topology:
    """Build and validate a :class:`Topology` from a scenario document.

    ``config`` may be the whole scenario document or just its ``topology``
    section.
    """
    section = config.get("topology", config) if isinstance(config, Mapping) else None
    if not isinstance(section, Mapping):
        raise ScenarioError("topology section must be a mapping")

    nodes = tuple(_node_from_dict(d) for d in section.get("nodes", ()))
    links = tuple(_link_from_dict(d) for d in section.get("links", ()))
    slices = tuple(_slice_from_dict(d) for d in section.get("slices", ()))

    for kind, items in (("node", nodes), ("link", links), ("slice", slices)):
        seen = set()
        for item in items:
            if item.id in seen:
                raise DuplicateId(f"duplicate {kind} id {item.id!r}")
            seen.add(item.id)

    node_ids = {n.id for n in nodes}
    link_ids = {lk.id for lk in links}
    pairs = set()
    for lk in links:
        for end in (lk.endpoint_a, lk.endpoint_b):
            if end not in node_ids:
                raise DanglingReference(f"link {lk.id!r} names unknown node {end!r}")
        if lk.endpoint_a == lk.endpoint_b:
            raise ScenarioError(f"link {lk.id!r} connects node {lk.endpoint_a!r} to itself")
        pair = frozenset((lk.endpoint_a, lk.endpoint_b))
        if pair in pairs:
            raise ScenarioError(f"more than one link between {sorted(pair)}")
        pairs.add(pair)

    for s in slices:
        for nid in s.member_nodes:
            if nid not in node_ids:
                raise DanglingReference(f"slice {s.id!r} names unknown node {nid!r}")
        for lid in s.member_links:
            if lid not in link_ids:
                raise DanglingReference(f"slice {s.id!r} names unknown link {lid!r}")

    background = {str(k): float(v) for k, v in section.get("background_traffic_mbps", {}).items()}
    for lid, mbps in background.items():
        if lid not in link_ids:
            raise DanglingReference(f"background traffic names unknown link {lid!r}")
        if mbps < 0:
            raise ScenarioError(f"background traffic on {lid!r} must be >= 0")

    robots = [n for n in nodes if n.role == Role.ROBOT]
    if len(robots) != 1:
        raise ScenarioError(f"exactly one Robot node required, found {len(robots)}")

    topo = Topology(
        nodes=nodes,
        links=links,
        slices=slices,
        background_traffic_mbps=background,
        loopback_latency_ms=float(section.get("loopback_latency_ms", 0.008)),
    )
    if topo.loopback_latency_ms < 0:
        raise ScenarioError("loopback_latency_ms must be >= 0")
    _check_connected(topo)
    for s in slices:
        problems = validate_slice(topo, s.id)
        if problems:
            raise ScenarioError("; ".join(problems))
    return topo


def _check_connected(t: Topology) -> None:
    start = t.robot.id
    seen = {start}
    queue = deque([start])
    adj = _adjacency(t)
    while queue:
        cur = queue.popleft()
        for _, nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    missing = sorted(n.id for n in t.nodes if n.id not in seen)
    if missing:
        raise DisconnectedGraph(f"nodes unreachable from the robot: {missing}")


def topology_to_dict(t: Topology) -> dict:
    return {
        "nodes": [
            {
                "id": n.id,
                "role": n.role.value,
                "cores": n.cores,
                "capacity_per_core": n.capacity_per_core,
                "memory_gb": n.memory_gb,
                "baseline_load_fraction": n.baseline_load_fraction,
                "discipline": n.discipline.value,
            }
            for n in t.nodes
        ],
        "links": [
            {
                "id": lk.id,
                "a": lk.endpoint_a,
                "b": lk.endpoint_b,
                "one_way_latency_ms": lk.one_way_latency_ms,
                "bandwidth_mbps": lk.bandwidth_mbps,
                "jitter_cv": lk.jitter_cv,
            }
            for lk in t.links
        ],
        "slices": [
            {
                "id": s.id,
                "nodes": sorted(s.member_nodes),
                "links": sorted(s.member_links),
                "bandwidth_share": s.bandwidth_share,
                "isolated": s.isolated,
            }
            for s in t.slices
        ],
        "background_traffic_mbps": dict(sorted(t.background_traffic_mbps.items())),
        "loopback_latency_ms": t.loopback_latency_ms,
    }


def with_background(t: Topology, traffic: Mapping[str, float]) -> Topology:
    return replace(t, background_traffic_mbps=dict(traffic))


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------

def _adjacency(t: Topology) -> dict:
    adj = {n.id: [] for n in t.nodes}
    for lk in sorted(t.links, key=lambda x: x.id):
        adj[lk.endpoint_a].append((lk.id, lk.endpoint_b))
        adj[lk.endpoint_b].append((lk.id, lk.endpoint_a))
    return adj


def path_between(t: Topology, a: str, b: str) -> list:
    """Fewest-hop path from ``a`` to ``b`` as a list of link ids.

    The search always runs from the lexicographically smaller endpoint so
    that ``path_between(t, b, a)`` is exactly the reverse of
    ``path_between(t, a, b)`` even when several shortest paths exist.
    """
    ids = {n.id for n in t.nodes}
    for x in (a, b):
        if x not in ids:
            raise KeyError(f"unknown node {x!r}")
    if a == b:
        return []
    if b < a:
        return list(reversed(path_between(t, b, a)))

    adj = _adjacency(t)
    prev = {a: None}
    queue = deque([a])
    while queue:
        cur = queue.popleft()
        if cur == b:
            break
        for lid, nxt in adj[cur]:
            if nxt not in prev:
                prev[nxt] = (lid, cur)
                queue.append(nxt)
    if b not in prev:
        raise NoPath(f"no path between {a!r} and {b!r}")
    out = []
    cur = b
    while prev[cur] is not None:
        lid, cur = prev[cur]
        out.append(lid)
    return out[::-1]


def path_latency_ms(t: Topology, a: str, b: str) -> float:
    return sum(t.link(lid).one_way_latency_ms for lid in path_between(t, a, b))


def effective_bandwidth(t: Topology, link: str, slice: str) -> float:
    """Bandwidth (mbps) a slice may use on one of its links."""
    sl = t.slice(slice)
    if link not in sl.member_links:
        raise NotInSlice(f"link {link!r} is not a member of slice {slice!r}")
    lk = t.link(link)
    share = lk.bandwidth_mbps * sl.bandwidth_share
    if sl.isolated:
        return share
    return max(BANDWIDTH_FLOOR_MBPS, share - t.background_traffic_mbps.get(link, 0.0))


def validate_slice(t: Topology, slice: str) -> list:
    sl = t.slice(slice)
    problems = []
    if not (0.0 < sl.bandwidth_share <= 1.0) or math.isnan(sl.bandwidth_share):
        problems.append(f"slice {sl.id!r}: bandwidth_share {sl.bandwidth_share} not in (0, 1]")
    known_links = {lk.id: lk for lk in t.links}
    for lid in sorted(sl.member_links):
        lk = known_links.get(lid)
        if lk is None:
            problems.append(f"slice {sl.id!r}: unknown link {lid!r}")
            continue
        for end in (lk.endpoint_a, lk.endpoint_b):
            if end not in sl.member_nodes:
                problems.append(f"slice {sl.id!r}: link {lid!r} endpoint {end!r} is not a member node")
    return problems


def serialization_ms(payload_bytes: float, bandwidth_mbps: float) -> float:
    return payload_bytes * 8.0 / (bandwidth_mbps * 1e6) * 1000.0


def expected_transfer_ms(t: Topology, src: str, dst: str, payload_bytes: float,
                         slice: str | None = None) -> float:
    """Mean store-and-forward transfer time from ``src`` to ``dst``.

    Each hop contributes its mean latency plus serialization at the slice's
    effective bandwidth. Same-node delivery costs the loopback latency.
    """
    if src == dst:
        return t.loopback_latency_ms
    slice = slice if slice is not None else t.default_slice_id
    total = 0.0
    for lid in path_between(t, src, dst):
        total += t.link(lid).one_way_latency_ms
        total += serialization_ms(payload_bytes, effective_bandwidth(t, lid, slice))
    return total
