"""Defender action semantics and the per-node compromise state machine.

Actions are multi-step: submission registers a pending action on the target
node, the per-step tick decrements timers, and the verb's effect (and its
cost charge) land on the completion step.  One pending defender action per
node; a conflicting submission degrades to a rejected no-op so learned
policies cannot crash an episode.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np

from .config import DynamicsConfig
from .topology import KIND_NAMES, NetworkTopology, NodeKind, Vlan


class CompromiseLevel(IntEnum):
    SECURE = 0
    USER_ACCESS = 1
    ESCALATED = 2
    ENTRENCHED = 3


class PlcStatus(IntEnum):
    NOMINAL = 0
    DISRUPTED = 1
    DESTROYED = 2


WORKSTATION_VERBS = ("scan_host", "deep_scan", "change_password", "isolate", "deisolate", "reboot", "reimage")
SERVER_VERBS = ("scan_host", "deep_scan", "change_password", "reboot", "reimage", "restore_backup")
PLC_VERBS = ("restart_plc", "restore_logic")

VERBS_BY_KIND = {
    NodeKind.WORKSTATION: WORKSTATION_VERBS,
    NodeKind.SERVER: SERVER_VERBS,
    NodeKind.PLC: PLC_VERBS,
}

INVESTIGATION_VERBS = ("scan_host", "deep_scan")
# Completing any of these kills attacker actions in flight on the node.
ATTACKER_CANCELLING_VERBS = ("reboot", "reimage", "isolate")

NOOP_INDEX = 0


class Ack(Enum):
    NOOP = "noop"
    ACCEPTED = "accepted"
    REJECTED_BUSY = "rejected_busy"


@dataclass(frozen=True)
class DefenderAction:
    index: int
    verb: str
    target: int  # -1 for the global no-op
    kind: NodeKind | None
    cost: float
    duration: int


@dataclass
class PendingAction:
    action: DefenderAction
    remaining: int


@dataclass(frozen=True)
class CompletedAction:
    node: int
    kind: NodeKind
    verb: str
    cost: float


def action_table(topology: NetworkTopology, dynamics: DynamicsConfig) -> list[DefenderAction]:
    """Deterministic flat action enumeration.

    Index 0 is the global no-op; then each node in id order contributes its
    kind's verbs in fixed verb order.
    """
    table = [DefenderAction(0, "noop", -1, None, 0.0, 0)]
    for node_id in range(topology.n_nodes):
        kind = topology.kind_of(node_id)
        for verb in VERBS_BY_KIND[kind]:
            spec = dynamics.spec(KIND_NAMES[kind], verb)
            table.append(DefenderAction(len(table), verb, node_id, kind, spec.cost, spec.duration))
    return table


class NodeStates:
    """Mutable per-node episode state: compromise, PLC status, VLAN, timers."""

    def __init__(self, topology: NetworkTopology):
        self.topology = topology
        n = topology.n_nodes
        self.compromise = np.zeros(n, dtype=np.int8)  # IT nodes only
        self.plc_status = np.zeros(n, dtype=np.int8)  # PLC nodes only
        self.vlan = np.full(n, Vlan.OPERATIONS, dtype=np.int8)
        self.pending: dict[int, PendingAction] = {}

    def compromised_counts(self) -> tuple[int, int]:
        """(workstations, servers) currently in any non-secure state."""
        comp = self.compromise > CompromiseLevel.SECURE
        ws = int(np.count_nonzero(comp & (self.topology.kind == NodeKind.WORKSTATION)))
        srv = int(np.count_nonzero(comp & (self.topology.kind == NodeKind.SERVER)))
        return ws, srv

    def off_nominal_plcs(self) -> int:
        return int(np.count_nonzero(self.plc_status[self.topology.plc_ids] != PlcStatus.NOMINAL))


def submit_action(nodes: NodeStates, action: DefenderAction) -> Ack:
    if action.index == NOOP_INDEX:
        return Ack.NOOP
    if action.target in nodes.pending:
        return Ack.REJECTED_BUSY
    nodes.pending[action.target] = PendingAction(action, action.duration)
    return Ack.ACCEPTED


def tick_defender(nodes: NodeStates) -> list[CompletedAction]:
    """Advance all pending defender actions one step; apply effects at zero.

    Returns the completions of this step in node-id order (the cost of each
    is charged right here, by the caller's reward computation).
    """
    completed = []
    for node_id in sorted(nodes.pending):
        slot = nodes.pending[node_id]
        slot.remaining -= 1
        if slot.remaining > 0:
            continue
        action = slot.action
        del nodes.pending[node_id]
        _apply_effect(nodes, node_id, action.verb)
        completed.append(CompletedAction(node_id, action.kind, action.verb, action.cost))
    return completed


def _apply_effect(nodes: NodeStates, node_id: int, verb: str) -> None:
    effect = EFFECTS[verb]
    if effect is not None:
        effect(nodes, node_id)


def _change_password(nodes: NodeStates, node_id: int) -> None:
    # Escalated and entrenched intruders resist the password change.
    if nodes.compromise[node_id] == CompromiseLevel.USER_ACCESS:
        nodes.compromise[node_id] = CompromiseLevel.SECURE


def _reboot(nodes: NodeStates, node_id: int) -> None:
    if nodes.compromise[node_id] == CompromiseLevel.USER_ACCESS:
        nodes.compromise[node_id] = CompromiseLevel.SECURE


def _reimage(nodes: NodeStates, node_id: int) -> None:
    nodes.compromise[node_id] = CompromiseLevel.SECURE


def _isolate(nodes: NodeStates, node_id: int) -> None:
    nodes.vlan[node_id] = Vlan.QUARANTINE


def _deisolate(nodes: NodeStates, node_id: int) -> None:
    nodes.vlan[node_id] = Vlan.OPERATIONS


def _restart_plc(nodes: NodeStates, node_id: int) -> None:
    if nodes.plc_status[node_id] == PlcStatus.DISRUPTED:
        nodes.plc_status[node_id] = PlcStatus.NOMINAL


def _restore_logic(nodes: NodeStates, node_id: int) -> None:
    # The only way back from a destroyed PLC; also clears a disruption.
    nodes.plc_status[node_id] = PlcStatus.NOMINAL


EFFECTS = {
    "scan_host": None,  # findings are emitted by the observation channel
    "deep_scan": None,
    "change_password": _change_password,
    "reboot": _reboot,
    "reimage": _reimage,
    "isolate": _isolate,
    "deisolate": _deisolate,
    "restore_backup": _reimage,  # rebuild from backup: any compromise cleared
    "restart_plc": _restart_plc,
    "restore_logic": _restore_logic,
}
