"""Static ICS network structure: node inventory, levels, VLANs, reachability.

The network covers the engineering level (2) and plant level (1) of a layered
reference architecture.  Level 2 holds workstations and servers, level 1 holds
local workstations and the PLC field bus.  Each level has an operations VLAN
and a quarantine VLAN that starts empty; quarantine membership is a mutable
per-node attribute owned by the episode state, not by the topology.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .config import ConfigError, TopologyConfig


class NodeKind(IntEnum):
    WORKSTATION = 0
    SERVER = 1
    PLC = 2


KIND_NAMES = {NodeKind.WORKSTATION: "workstation", NodeKind.SERVER: "server", NodeKind.PLC: "plc"}


class Vlan(IntEnum):
    OPERATIONS = 0
    QUARANTINE = 1


class Zone(IntEnum):
    """Firewalled network segment. PLCs sit on the level 1 field bus."""

    LEVEL2 = 0
    LEVEL1 = 1
    FIELDBUS = 2


# Operations-VLAN traffic rules: intra-level both ways, level 2 may reach
# level 1, level 1 may reach the field bus.  No direct level 2 -> PLC path.
DEFAULT_REACHABILITY: frozenset[tuple[int, int]] = frozenset(
    {
        (Zone.LEVEL2, Zone.LEVEL2),
        (Zone.LEVEL2, Zone.LEVEL1),
        (Zone.LEVEL1, Zone.LEVEL1),
        (Zone.LEVEL1, Zone.FIELDBUS),
        (Zone.FIELDBUS, Zone.FIELDBUS),
    }
)


@dataclass(frozen=True)
class Segment:
    """A contiguous run of same-kind node ids in the canonical ordering."""

    kind: NodeKind
    level: int
    start: int
    stop: int  # exclusive

    @property
    def node_ids(self) -> range:
        return range(self.start, self.stop)


class NetworkTopology:
    """Immutable node inventory plus the zone reachability table.

    Node ids are dense 0..N-1 in a fixed order: level-2 workstations,
    servers, level-1 workstations, PLCs.
    """

    def __init__(self, config: TopologyConfig):
        if config.l2_workstations < 0 or config.servers < 0 or config.l1_workstations < 0 or config.plcs < 0:
            raise ConfigError("topology counts must be >= 0")
        if config.plcs == 0:
            raise ConfigError("topology needs at least one PLC")
        if config.l2_workstations + config.l1_workstations == 0:
            raise ConfigError("topology needs at least one workstation")
        if not 1 <= config.plc_shutdown_threshold <= config.plcs:
            raise ConfigError("plc_shutdown_threshold must lie in [1, plcs]")

        self.config = config
        segments = []
        cursor = 0
        for kind, level, count in (
            (NodeKind.WORKSTATION, 2, config.l2_workstations),
            (NodeKind.SERVER, 2, config.servers),
            (NodeKind.WORKSTATION, 1, config.l1_workstations),
            (NodeKind.PLC, 1, config.plcs),
        ):
            segments.append(Segment(kind, level, cursor, cursor + count))
            cursor += count
        self.segments: tuple[Segment, ...] = tuple(s for s in segments if s.stop > s.start)
        self.n_nodes = cursor

        self.kind = np.zeros(self.n_nodes, dtype=np.int8)
        self.level = np.zeros(self.n_nodes, dtype=np.int8)
        self.zone = np.zeros(self.n_nodes, dtype=np.int8)
        for seg in self.segments:
            self.kind[seg.start : seg.stop] = seg.kind
            self.level[seg.start : seg.stop] = seg.level
            zone = Zone.FIELDBUS if seg.kind == NodeKind.PLC else (Zone.LEVEL2 if seg.level == 2 else Zone.LEVEL1)
            self.zone[seg.start : seg.stop] = zone
        self.kind.setflags(write=False)
        self.level.setflags(write=False)
        self.zone.setflags(write=False)

        self.reachability = DEFAULT_REACHABILITY
        self.plc_shutdown_threshold = config.plc_shutdown_threshold
        self.counts = {
            NodeKind.WORKSTATION: config.l2_workstations + config.l1_workstations,
            NodeKind.SERVER: config.servers,
            NodeKind.PLC: config.plcs,
        }

        self.it_ids = np.flatnonzero(self.kind != NodeKind.PLC)
        self.plc_ids = np.flatnonzero(self.kind == NodeKind.PLC)
        self.l2_workstation_ids = np.flatnonzero((self.kind == NodeKind.WORKSTATION) & (self.level == 2))

    def kind_of(self, node_id: int) -> NodeKind:
        return NodeKind(int(self.kind[node_id]))

    def is_plc(self, node_id: int) -> bool:
        return self.kind[node_id] == NodeKind.PLC


def build_topology(config: TopologyConfig) -> NetworkTopology:
    """Validate a topology config and freeze the node inventory."""
    return NetworkTopology(config)


def attacker_reachable(
    topology: NetworkTopology,
    from_node: int,
    to_node: int,
    vlan: np.ndarray | None = None,
) -> bool:
    """True iff attacker traffic may flow from one node to another.

    ``vlan`` is the current per-node VLAN array from the episode state;
    omitted, every node is assumed to sit on its operations VLAN.  A
    quarantined endpoint blocks traffic in both directions.
    """
    n = topology.n_nodes
    if not (0 <= from_node < n and 0 <= to_node < n):
        raise IndexError(f"node id out of range: {from_node}, {to_node} (n={n})")
    if vlan is not None and (vlan[from_node] == Vlan.QUARANTINE or vlan[to_node] == Vlan.QUARANTINE):
        return False
    return (int(topology.zone[from_node]), int(topology.zone[to_node])) in topology.reachability
