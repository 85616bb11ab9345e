"""Defender-side observation channel: noisy per-node alert bits and the
rolling history window.

Each step every observed node contributes a fixed-width binary vector:
workstations 16 bits, servers 14, PLCs 7.  Action completions, quarantine
membership and PLC status bits are deterministic; scan findings carry a
false-negative rate, passive IDS alerts carry per-event detection rates and
a per-node false-positive rate.  Scans never produce findings on secure
nodes - false positives enter only through the passive IDS channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacker import AttackerEvent
from .config import ObservationConfig
from .dynamics import (
    CompletedAction,
    CompromiseLevel,
    NodeStates,
    PLC_VERBS,
    PlcStatus,
    SERVER_VERBS,
    WORKSTATION_VERBS,
)
from .topology import NetworkTopology, NodeKind, Vlan

IDS_BITS = ("ids_auth_anomaly", "ids_network_signature", "ids_process_anomaly", "ids_file_integrity")

WORKSTATION_BITS = (
    tuple(f"done_{v}" for v in WORKSTATION_VERBS)
    + IDS_BITS
    + ("finding_user", "finding_admin", "quarantined", "reserved_0", "reserved_1")
)
SERVER_BITS = (
    tuple(f"done_{v}" for v in SERVER_VERBS)
    + IDS_BITS
    + ("finding_user", "finding_admin", "quarantined", "reserved_0")
)
PLC_BITS = (
    tuple(f"done_{v}" for v in PLC_VERBS)
    + ("status_disrupted", "status_destroyed", "ids_alert", "reserved_0", "reserved_1")
)

BITS_BY_KIND = {
    NodeKind.WORKSTATION: WORKSTATION_BITS,
    NodeKind.SERVER: SERVER_BITS,
    NodeKind.PLC: PLC_BITS,
}
assert len(WORKSTATION_BITS) == 16 and len(SERVER_BITS) == 14 and len(PLC_BITS) == 7


def ids_bit_for_event(event_kind: str, vector: str) -> str:
    """Which IDS alert an attacker action trips; depends on attack vector."""
    if event_kind == "recon_scan":
        return "ids_network_signature"
    if event_kind == "escalate":
        return "ids_auth_anomaly" if vector == "credential_theft" else "ids_process_anomaly"
    if event_kind == "lateral":
        return "ids_auth_anomaly" if vector == "credential_theft" else "ids_network_signature"
    if event_kind in ("persist", "stage"):
        return "ids_file_integrity"
    raise ValueError(f"no IT IDS bit for event kind {event_kind!r}")


@dataclass(frozen=True)
class NodeLayout:
    node: int
    kind: NodeKind
    offset: int
    width: int


class ObservationSpec:
    """Frame layout for one topology: which nodes are observed and where
    each node's bits live in the flattened step frame."""

    def __init__(self, topology: NetworkTopology, config: ObservationConfig):
        self.topology = topology
        self.config = config
        self.tau = config.tau

        observed = []
        for node_id in range(topology.n_nodes):
            if (
                not config.include_l1_workstations
                and topology.kind[node_id] == NodeKind.WORKSTATION
                and topology.level[node_id] == 1
            ):
                continue
            observed.append(node_id)
        self.observed_ids = np.asarray(observed, dtype=np.int64)

        self.layout: list[NodeLayout] = []
        self._entry_of: dict[int, NodeLayout] = {}
        cursor = 0
        for node_id in observed:
            kind = topology.kind_of(node_id)
            width = len(BITS_BY_KIND[kind])
            entry = NodeLayout(node_id, kind, cursor, width)
            self.layout.append(entry)
            self._entry_of[node_id] = entry
            cursor += width
        self.frame_width = cursor
        self.flat_size = self.tau * self.frame_width

        # Index arrays for the vectorized deterministic bits.
        it_entries = [e for e in self.layout if e.kind != NodeKind.PLC]
        plc_entries = [e for e in self.layout if e.kind == NodeKind.PLC]
        self.it_obs_ids = np.asarray([e.node for e in it_entries], dtype=np.int64)
        self.quar_pos = np.asarray(
            [e.offset + BITS_BY_KIND[e.kind].index("quarantined") for e in it_entries], dtype=np.int64
        )
        self.plc_obs_ids = np.asarray([e.node for e in plc_entries], dtype=np.int64)
        self.disrupted_pos = np.asarray(
            [e.offset + PLC_BITS.index("status_disrupted") for e in plc_entries], dtype=np.int64
        )
        self.destroyed_pos = np.asarray(
            [e.offset + PLC_BITS.index("status_destroyed") for e in plc_entries], dtype=np.int64
        )
        # False-positive sweep: each hit node raises one alert bit (a random
        # one of the four IDS bits for IT nodes, the single bit for PLCs).
        self._fp_base = np.asarray(
            [
                e.offset
                + (PLC_BITS.index("ids_alert") if e.kind == NodeKind.PLC else BITS_BY_KIND[e.kind].index(IDS_BITS[0]))
                for e in self.layout
            ],
            dtype=np.int64,
        )
        self._fp_is_it = np.asarray([e.kind != NodeKind.PLC for e in self.layout], dtype=bool)

    def bit_index(self, node_id: int, bit_name: str) -> int:
        entry = self._entry_of[node_id]
        return entry.offset + BITS_BY_KIND[entry.kind].index(bit_name)

    def is_observed(self, node_id: int) -> bool:
        return node_id in self._entry_of

    def to_schema_dict(self) -> dict:
        return {
            "tau": self.tau,
            "frame_width": self.frame_width,
            "flat_size": self.flat_size,
            "bits": {
                "workstation": list(WORKSTATION_BITS),
                "server": list(SERVER_BITS),
                "plc": list(PLC_BITS),
            },
            "nodes": [
                {"node": e.node, "kind": e.kind.name.lower(), "offset": e.offset, "width": e.width}
                for e in self.layout
            ],
        }


def emit_observation(
    spec: ObservationSpec,
    nodes: NodeStates,
    completed: list[CompletedAction],
    events: list[AttackerEvent],
    vector: str,
    rng: np.random.Generator,
) -> np.ndarray:
    """Build this step's frame (uint8 bits, length ``spec.frame_width``).

    Draw order is fixed - completions, then attacker events, then the
    false-positive sweep - so a seeded stream replays bit-identically.
    """
    cfg = spec.config
    frame = np.zeros(spec.frame_width, dtype=np.uint8)

    for done in completed:
        if not spec.is_observed(done.node):
            continue
        frame[spec.bit_index(done.node, f"done_{done.verb}")] = 1
        if done.verb in ("scan_host", "deep_scan"):
            fn = cfg.fn_scan if done.verb == "scan_host" else cfg.fn_deep_scan
            level = nodes.compromise[done.node]
            if level == CompromiseLevel.USER_ACCESS and rng.random() >= fn:
                frame[spec.bit_index(done.node, "finding_user")] = 1
            elif level >= CompromiseLevel.ESCALATED and rng.random() >= fn:
                frame[spec.bit_index(done.node, "finding_admin")] = 1

    for event in events:
        target = event.target
        if target < 0 or not spec.is_observed(target):
            continue
        detect_p = cfg.ids_detection.get(event.kind, 0.0)
        if detect_p <= 0.0 or rng.random() >= detect_p:
            continue
        if nodes.topology.kind[target] == NodeKind.PLC:
            frame[spec.bit_index(target, "ids_alert")] = 1
        else:
            frame[spec.bit_index(target, ids_bit_for_event(event.kind, vector))] = 1

    if cfg.ids_fp > 0.0:
        hits = np.flatnonzero(rng.random(len(spec.layout)) < cfg.ids_fp)
        for i in hits:
            base = int(spec._fp_base[i])
            frame[base + int(rng.integers(len(IDS_BITS))) if spec._fp_is_it[i] else base] = 1

    frame[spec.quar_pos] = (nodes.vlan[spec.it_obs_ids] == Vlan.QUARANTINE).astype(np.uint8)
    frame[spec.disrupted_pos] = (nodes.plc_status[spec.plc_obs_ids] == PlcStatus.DISRUPTED).astype(np.uint8)
    frame[spec.destroyed_pos] = (nodes.plc_status[spec.plc_obs_ids] == PlcStatus.DESTROYED).astype(np.uint8)
    return frame


class ObservationWindow:
    """Ring of the last tau step frames; zero-padded before step tau."""

    def __init__(self, tau: int, width: int):
        self.tau = tau
        self.width = width
        self._buf = np.zeros((tau, width), dtype=np.float32)
        self._count = 0

    def reset(self) -> None:
        self._buf[:] = 0.0
        self._count = 0

    def push(self, frame: np.ndarray) -> None:
        if frame.shape != (self.width,):
            raise ValueError(f"frame width {frame.shape} does not match window width ({self.width},)")
        self._buf[self._count % self.tau] = frame
        self._count += 1

    def array2d(self) -> np.ndarray:
        """(tau, width) copy, oldest frame first."""
        if self._count < self.tau:
            out = np.zeros((self.tau, self.width), dtype=np.float32)
            if self._count:
                out[self.tau - self._count :] = self._buf[: self._count]
            return out
        order = (self._count + np.arange(self.tau)) % self.tau
        return self._buf[order]

    def flat(self) -> np.ndarray:
        """Flattened immutable snapshot of length tau * width."""
        return self.array2d().reshape(-1)

    def recent(self, k: int) -> np.ndarray:
        """(k, width) copy of the k most recent frames, oldest first."""
        return self.array2d()[-k:]

    def last_frame(self) -> np.ndarray:
        if self._count == 0:
            return np.zeros(self.width, dtype=np.float32)
        return self._buf[(self._count - 1) % self.tau].copy()

    def sparse(self) -> tuple[np.ndarray, np.ndarray]:
        """(frame_idx, bit_idx) int32 coordinate arrays of the set bits."""
        rows, cols = np.nonzero(self.array2d())
        return rows.astype(np.int32), cols.astype(np.int32)
