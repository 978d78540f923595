"""Route selection through the ground mesh and broadcast flooding.

Unicast traffic to or from the spacecraft goes through the station with
the best contact: a currently visible one if any, else the earliest
upcoming pass.  Ground paths are minimum-hop BFS with lexicographic
neighbor expansion so every choice is deterministic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

from .config import BROADCAST_ID, ISS_NODE_ID


class NoRouteError(RuntimeError):
    pass


class PassOracle(Protocol):
    """Visibility source for contact-station selection."""

    def is_visible(self, station_id: str, t: float) -> bool: ...

    def next_aos(self, station_id: str, t: float) -> float | None:
        """Earliest acquisition-of-signal at or after t; None if none ahead."""
        ...


@dataclass(frozen=True)
class MeshTopology:
    stations: frozenset[str]
    edges: frozenset[frozenset[str]]

    def __post_init__(self):
        for pair in self.edges:
            if len(pair) != 2 or not pair <= self.stations:
                raise ValueError(f"edge references unknown station: {set(pair)}")

    @classmethod
    def of(cls, stations, edges) -> "MeshTopology":
        return cls(stations=frozenset(stations),
                   edges=frozenset(frozenset(e) for e in edges))

    def neighbors(self, node: str) -> list[str]:
        out = []
        for pair in self.edges:
            if node in pair:
                (other,) = pair - {node}
                out.append(other)
        return sorted(out)


@dataclass(frozen=True)
class Route:
    hops: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.hops)) != len(self.hops):
            raise ValueError("route contains a repeated node")
        if ISS_NODE_ID in self.hops[1:-1]:
            raise ValueError("spacecraft may appear only at a route end")


def select_contact_station(stations, t: float, oracle: PassOracle) -> str:
    """Station to uplink through at time t; lexicographic tie-break."""
    visible = sorted(s for s in stations if oracle.is_visible(s, t))
    if visible:
        return visible[0]
    best_aos = None
    best_station = None
    for s in sorted(stations):
        aos = oracle.next_aos(s, t)
        if aos is None:
            continue
        if best_aos is None or aos < best_aos:
            best_aos, best_station = aos, s
    if best_station is None:
        raise NoRouteError("no station has an upcoming contact window")
    return best_station


def bfs_path(topology: MeshTopology, src: str, dst: str) -> Route:
    """Minimum-hop path with deterministic lexicographic expansion."""
    if src not in topology.stations or dst not in topology.stations:
        raise NoRouteError(f"unknown station in {src} -> {dst}")
    if src == dst:
        return Route(hops=(src,))
    parent: dict[str, str] = {src: src}
    frontier = deque([src])
    while frontier:
        node = frontier.popleft()
        for nb in topology.neighbors(node):
            if nb in parent:
                continue
            parent[nb] = node
            if nb == dst:
                hops = [dst]
                while hops[-1] != src:
                    hops.append(parent[hops[-1]])
                return Route(hops=tuple(reversed(hops)))
            frontier.append(nb)
    raise NoRouteError(f"{dst} unreachable from {src}")


def route_to_iss(topology: MeshTopology, src: str, t: float,
                 oracle: PassOracle) -> Route:
    contact = select_contact_station(topology.stations, t, oracle)
    ground = bfs_path(topology, src, contact)
    return Route(hops=ground.hops + (ISS_NODE_ID,))


def route_from_iss(topology: MeshTopology, dst: str, t: float,
                   oracle: PassOracle) -> Route:
    contact = select_contact_station(topology.stations, t, oracle)
    ground = bfs_path(topology, contact, dst)
    return Route(hops=(ISS_NODE_ID,) + ground.hops)


@dataclass
class BroadcastState:
    """Per-node record of already-processed broadcast bundle ids."""

    received: dict[str, set[str]] = field(default_factory=dict)

    def seen(self, node: str, bundle_id: str) -> bool:
        return bundle_id in self.received.get(node, set())

    def mark(self, node: str, bundle_id: str) -> None:
        self.received.setdefault(node, set()).add(bundle_id)


def flood(bundle, topology: MeshTopology, state: BroadcastState,
          at: str) -> list[tuple[str, object]]:
    """Forwarding decisions for a broadcast bundle arriving at a node.

    First arrival forwards to every neighbor not already in the hop
    list; repeat arrivals forward nothing.
    """
    if bundle.destination != BROADCAST_ID:
        raise ValueError("flood applies only to broadcast bundles")
    if state.seen(at, bundle.bundle_id):
        return []
    state.mark(at, bundle.bundle_id)
    return [(nb, bundle) for nb in topology.neighbors(at)
            if nb not in bundle.hop_list]
