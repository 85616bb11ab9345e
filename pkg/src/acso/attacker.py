"""Baseline APT agent: a stochastic finite state machine over attack tactics.

The machine walks a cumulative criteria ladder each step (discovery needs a
foothold, escalation needs enough recon, and so on up to execution) and
regresses automatically when the defender takes a criterion away.  Each
tactic has a stochastic sub-policy that launches at most ``budget`` timed
actions; actions resolve after their duration and are cancelled if the
defender reboots, reimages or isolates an involved node first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .config import GOALS, VECTORS, AttackerConfig
from .dynamics import CompromiseLevel, NodeStates, PlcStatus
from .topology import NodeKind, Vlan, attacker_reachable


class Tactic(IntEnum):
    INITIAL_ACCESS = 0
    DISCOVERY = 1
    PRIVILEGE_ESCALATION = 2
    LATERAL_MOVEMENT = 3
    PERSISTENCE = 4
    STAGING = 5
    EXECUTION = 6


TACTIC_NAMES = {
    Tactic.INITIAL_ACCESS: "initial_access",
    Tactic.DISCOVERY: "discovery",
    Tactic.PRIVILEGE_ESCALATION: "privilege_escalation",
    Tactic.LATERAL_MOVEMENT: "lateral_movement",
    Tactic.PERSISTENCE: "persistence",
    Tactic.STAGING: "staging",
    Tactic.EXECUTION: "execution",
}


@dataclass
class AttackerPending:
    kind: str  # recon_scan | escalate | lateral | persist | stage | plc_fire
    source: int
    target: int  # -1 for plc_fire (fires the staged set at completion)
    remaining: int


@dataclass(frozen=True)
class AttackerEvent:
    kind: str
    source: int
    target: int
    success: bool


@dataclass
class AttackerState:
    goal: str
    vector: str
    tactic: Tactic = Tactic.DISCOVERY
    known: set[int] = field(default_factory=set)
    footholds: dict[int, int] = field(default_factory=dict)  # node -> CompromiseLevel value
    staged: set[int] = field(default_factory=set)
    pending: list[AttackerPending] = field(default_factory=list)

    def __post_init__(self) -> None:
        assert self.goal in GOALS and self.vector in VECTORS

    def cancel_involving(self, node_id: int) -> None:
        self.pending = [p for p in self.pending if p.source != node_id and p.target != node_id]

    def unstage(self, plc_id: int) -> None:
        self.staged.discard(plc_id)


def sync_belief(attacker: AttackerState, nodes: NodeStates) -> None:
    """Refresh foothold beliefs from ground truth, restricted to known nodes."""
    topology = nodes.topology
    attacker.footholds = {
        n: int(nodes.compromise[n])
        for n in sorted(attacker.known)
        if topology.kind[n] != NodeKind.PLC and nodes.compromise[n] >= CompromiseLevel.USER_ACCESS
    }


def update_tactic(attacker: AttackerState, nodes: NodeStates, config: AttackerConfig) -> Tactic:
    """Walk the exit-criteria ladder from the bottom; regress implicitly."""
    k3 = config.k3_staged if config.k3_staged is not None else nodes.topology.plc_shutdown_threshold
    footholds = attacker.footholds
    level = nodes.topology.level
    criteria = (
        len(footholds) > 0,  # -> discovery
        len(attacker.known) >= config.k1_known,  # -> privilege escalation
        any(lv >= CompromiseLevel.ESCALATED for lv in footholds.values()),  # -> lateral movement
        any(level[n] == 1 for n in footholds),  # -> persistence
        sum(1 for lv in footholds.values() if lv >= CompromiseLevel.ENTRENCHED) >= config.k2_entrenched,  # -> staging
        len(attacker.staged) >= k3,  # -> execution
    )
    tactic = Tactic.INITIAL_ACCESS
    for criterion in criteria:
        if not criterion:
            break
        tactic = Tactic(tactic + 1)
    attacker.tactic = tactic
    return tactic


def attacker_step(
    attacker: AttackerState,
    nodes: NodeStates,
    config: AttackerConfig,
    rng: np.random.Generator,
) -> list[AttackerEvent]:
    """Resolve due attacker actions, then maybe launch a new one."""
    events = _tick_pending(attacker, nodes, config, rng)
    if len(attacker.pending) < config.budget:
        act_p = config.act_prob.get(TACTIC_NAMES[attacker.tactic], 0.0)
        if act_p > 0.0 and rng.random() < act_p:
            launch = _select_action(attacker, nodes, config, rng)
            if launch is not None:
                attacker.pending.append(launch)
    return events


def _tick_pending(
    attacker: AttackerState,
    nodes: NodeStates,
    config: AttackerConfig,
    rng: np.random.Generator,
) -> list[AttackerEvent]:
    events: list[AttackerEvent] = []
    still_pending: list[AttackerPending] = []
    for slot in attacker.pending:
        slot.remaining -= 1
        if slot.remaining > 0:
            still_pending.append(slot)
            continue
        events.extend(_resolve(slot, attacker, nodes, config, rng))
    attacker.pending = still_pending
    return events


def _acts_from(attacker: AttackerState, nodes: NodeStates, node_id: int) -> bool:
    """A usable source: compromised, believed held, and not quarantined."""
    return (
        node_id in attacker.footholds
        and nodes.compromise[node_id] >= CompromiseLevel.USER_ACCESS
        and nodes.vlan[node_id] == Vlan.OPERATIONS
    )


def _resolve(
    slot: AttackerPending,
    attacker: AttackerState,
    nodes: NodeStates,
    config: AttackerConfig,
    rng: np.random.Generator,
) -> list[AttackerEvent]:
    topology = nodes.topology
    kind = slot.kind

    if kind == "plc_fire":
        if not any(_acts_from(attacker, nodes, n) for n in sorted(attacker.footholds)):
            return [AttackerEvent("plc_fire", slot.source, -1, False)]
        status = PlcStatus.DESTROYED if attacker.goal == "destroy_equipment" else PlcStatus.DISRUPTED
        events = []
        for plc in sorted(attacker.staged):
            if nodes.plc_status[plc] != PlcStatus.DESTROYED:
                nodes.plc_status[plc] = status
            events.append(AttackerEvent("plc_fire", slot.source, plc, True))
        return events

    source_ok = _acts_from(attacker, nodes, slot.source)
    if kind == "recon_scan":
        ok = source_ok and attacker_reachable(topology, slot.source, slot.target, nodes.vlan)
        if ok:
            attacker.known.add(slot.target)
        return [AttackerEvent(kind, slot.source, slot.target, ok)]

    if kind == "escalate":
        ok = source_ok and nodes.compromise[slot.target] == CompromiseLevel.USER_ACCESS
        ok = ok and rng.random() < config.escalate_success[attacker.vector]
        if ok:
            nodes.compromise[slot.target] = CompromiseLevel.ESCALATED
        return [AttackerEvent(kind, slot.source, slot.target, ok)]

    if kind == "lateral":
        ok = (
            source_ok
            and attacker_reachable(topology, slot.source, slot.target, nodes.vlan)
            and nodes.compromise[slot.target] == CompromiseLevel.SECURE
            and rng.random() < config.lateral_success
        )
        if ok:
            nodes.compromise[slot.target] = CompromiseLevel.USER_ACCESS
            attacker.known.add(slot.target)
        return [AttackerEvent(kind, slot.source, slot.target, ok)]

    if kind == "persist":
        ok = (
            source_ok
            and nodes.compromise[slot.target] == CompromiseLevel.ESCALATED
            and rng.random() < config.persist_success
        )
        if ok:
            nodes.compromise[slot.target] = CompromiseLevel.ENTRENCHED
        return [AttackerEvent(kind, slot.source, slot.target, ok)]

    if kind == "stage":
        ok = (
            source_ok
            and topology.level[slot.source] == 1
            and attacker_reachable(topology, slot.source, slot.target, nodes.vlan)
            and rng.random() < config.stage_success
        )
        if ok:
            attacker.staged.add(slot.target)
            attacker.known.add(slot.target)
        return [AttackerEvent(kind, slot.source, slot.target, ok)]

    raise ValueError(f"unknown attacker action kind: {kind}")


def _active_footholds(attacker: AttackerState, nodes: NodeStates) -> list[int]:
    return [n for n in sorted(attacker.footholds) if _acts_from(attacker, nodes, n)]


def _busy_targets(attacker: AttackerState) -> set[int]:
    return {p.target for p in attacker.pending} | {p.source for p in attacker.pending}


def _select_action(
    attacker: AttackerState,
    nodes: NodeStates,
    config: AttackerConfig,
    rng: np.random.Generator,
) -> AttackerPending | None:
    """Pick the tactic's primary action, falling back down a recon chain.

    Fallbacks keep the machine productive when the primary sub-policy has no
    valid target (e.g. lateral movement before any level 1 node is known).
    """
    tactic = attacker.tactic
    chain = {
        Tactic.INITIAL_ACCESS: (),
        Tactic.DISCOVERY: ("scan",),
        Tactic.PRIVILEGE_ESCALATION: ("escalate", "scan"),
        Tactic.LATERAL_MOVEMENT: ("lateral", "scan", "escalate"),
        Tactic.PERSISTENCE: ("persist", "escalate", "lateral", "scan"),
        Tactic.STAGING: ("stage", "persist", "escalate", "lateral", "scan"),
        Tactic.EXECUTION: ("fire",),
    }[tactic]
    for move in chain:
        launch = _SELECTORS[move](attacker, nodes, config, rng)
        if launch is not None:
            return launch
    return None


def _pick(rng: np.random.Generator, items: list[int]) -> int:
    return int(items[rng.integers(len(items))])


def _select_scan(attacker, nodes, config, rng) -> AttackerPending | None:
    sources = _active_footholds(attacker, nodes)
    if not sources:
        return None
    busy = _busy_targets(attacker)
    candidates = []
    for target in range(nodes.topology.n_nodes):
        if target in attacker.known or target in busy:
            continue
        if any(attacker_reachable(nodes.topology, s, target, nodes.vlan) for s in sources):
            candidates.append(target)
    if not candidates:
        return None
    target = _pick(rng, candidates)
    reachers = [s for s in sources if attacker_reachable(nodes.topology, s, target, nodes.vlan)]
    return AttackerPending("recon_scan", _pick(rng, reachers), target, config.durations["recon_scan"])


def _select_escalate(attacker, nodes, config, rng) -> AttackerPending | None:
    busy = _busy_targets(attacker)
    candidates = [
        n
        for n in _active_footholds(attacker, nodes)
        if nodes.compromise[n] == CompromiseLevel.USER_ACCESS and n not in busy
    ]
    if not candidates:
        return None
    node = _pick(rng, candidates)
    return AttackerPending("escalate", node, node, config.durations["escalate"])


def _select_lateral(attacker, nodes, config, rng) -> AttackerPending | None:
    sources = _active_footholds(attacker, nodes)
    if not sources:
        return None
    busy = _busy_targets(attacker)
    topology = nodes.topology
    candidates = []
    for target in sorted(attacker.known):
        if target in busy or topology.kind[target] == NodeKind.PLC:
            continue
        if nodes.compromise[target] != CompromiseLevel.SECURE:
            continue
        if any(attacker_reachable(topology, s, target, nodes.vlan) for s in sources):
            candidates.append(target)
    if not candidates:
        return None
    if config.prefer_level1_targets:
        low = [t for t in candidates if topology.level[t] == 1]
        candidates = low or candidates
    target = _pick(rng, candidates)
    reachers = [s for s in sources if attacker_reachable(topology, s, target, nodes.vlan)]
    return AttackerPending("lateral", _pick(rng, reachers), target, config.durations["lateral"])


def _select_persist(attacker, nodes, config, rng) -> AttackerPending | None:
    busy = _busy_targets(attacker)
    candidates = [
        n
        for n in _active_footholds(attacker, nodes)
        if nodes.compromise[n] == CompromiseLevel.ESCALATED and n not in busy
    ]
    if not candidates:
        return None
    node = _pick(rng, candidates)
    return AttackerPending("persist", node, node, config.durations["persist"])


def _select_stage(attacker, nodes, config, rng) -> AttackerPending | None:
    topology = nodes.topology
    sources = [n for n in _active_footholds(attacker, nodes) if topology.level[n] == 1]
    if not sources:
        return None
    busy = _busy_targets(attacker)
    candidates = []
    for plc in topology.plc_ids:
        plc = int(plc)
        if plc in attacker.staged or plc in busy:
            continue
        if any(attacker_reachable(topology, s, plc, nodes.vlan) for s in sources):
            candidates.append(plc)
    if not candidates:
        return None
    target = _pick(rng, candidates)
    reachers = [s for s in sources if attacker_reachable(topology, s, target, nodes.vlan)]
    return AttackerPending("stage", _pick(rng, reachers), target, config.durations["stage"])


def _select_fire(attacker, nodes, config, rng) -> AttackerPending | None:
    if not attacker.staged:
        return None
    if any(p.kind == "plc_fire" for p in attacker.pending):
        return None
    sources = _active_footholds(attacker, nodes)
    if not sources:
        return None
    return AttackerPending("plc_fire", _pick(rng, sources), -1, config.durations["plc_fire"])


_SELECTORS = {
    "scan": _select_scan,
    "escalate": _select_escalate,
    "lateral": _select_lateral,
    "persist": _select_persist,
    "stage": _select_stage,
    "fire": _select_fire,
}
