"""Stochastic rules-based defender: the demonstration generator and the
hand-built evaluation baseline.

The expert sees exactly what a learned policy sees - the observation window,
nothing else.  Its playbook, applied in priority order each step:

1. recover any PLC whose status bits show it off-nominal (and restart any
   PLC that raised an IDS alert, wiping a possibly staged payload);
2. scan a node whose recent alert score crosses the investigate threshold,
   skipping nodes scanned within the cooldown (with investigation disabled,
   the same trigger goes straight to the remediation ladder);
3. remediate a node with an open scan finding, walking the remediation
   ladder (password change, then reboot, then reimage; an admin-level
   finding jumps straight to reimage);
4. otherwise run the hygiene sweep: scan the least recently scanned node.

Ties inside a rule break uniformly at random.  Within an episode the expert
remembers only what it could deduce from its own submissions and the bits
it has seen: which nodes are still busy, each node's ladder rung, scan
recency, and open findings.
"""

from __future__ import annotations

import numpy as np

from .config import ExpertConfig
from .dynamics import DefenderAction
from .observation import BITS_BY_KIND, IDS_BITS, ObservationSpec
from .topology import NodeKind


class ExpertPolicy:
    name = "expert"

    def __init__(self, config: ExpertConfig, spec: ObservationSpec, action_table: list[DefenderAction]):
        self.config = config
        self.spec = spec
        self._rng = np.random.default_rng(0)

        self._action_index: dict[tuple[int, str], int] = {}
        self._duration: dict[tuple[int, str], int] = {}
        for a in action_table:
            if a.target >= 0:
                self._action_index[(a.target, a.verb)] = a.index
                self._duration[(a.target, a.verb)] = a.duration

        # Precomputed bit positions per observed node.
        self._it_nodes: list[int] = []
        self._plc_nodes: list[int] = []
        self._ids_pos: dict[int, np.ndarray] = {}
        self._finding_user_pos: dict[int, int] = {}
        self._finding_admin_pos: dict[int, int] = {}
        self._disrupted_pos: dict[int, int] = {}
        self._destroyed_pos: dict[int, int] = {}
        self._plc_alert_pos: list[int] = []
        self._l1_workstations: list[int] = []
        for entry in spec.layout:
            if entry.kind == NodeKind.PLC:
                self._plc_nodes.append(entry.node)
                self._disrupted_pos[entry.node] = spec.bit_index(entry.node, "status_disrupted")
                self._destroyed_pos[entry.node] = spec.bit_index(entry.node, "status_destroyed")
                self._plc_alert_pos.append(spec.bit_index(entry.node, "ids_alert"))
            else:
                self._it_nodes.append(entry.node)
                bits = BITS_BY_KIND[entry.kind]
                self._ids_pos[entry.node] = np.asarray(
                    [entry.offset + bits.index(name) for name in IDS_BITS], dtype=np.int64
                )
                self._finding_user_pos[entry.node] = spec.bit_index(entry.node, "finding_user")
                self._finding_admin_pos[entry.node] = spec.bit_index(entry.node, "finding_admin")
                if entry.kind == NodeKind.WORKSTATION and spec.topology.level[entry.node] == 1:
                    self._l1_workstations.append(entry.node)
        self._l1_set = set(self._l1_workstations)
        self.reset(0)

    def reset(self, seed: int) -> None:
        self._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(3,))))
        self._t = 0
        self._busy_until: dict[int, int] = {}
        self._ladder_pos: dict[int, int] = {}
        self._last_remediation: dict[int, int] = {}
        self._scanned_at: dict[int, int] = {}
        self._open_finding: dict[int, int] = {}  # node -> 1 user, 2 admin

    def _free(self, node: int) -> bool:
        return self._busy_until.get(node, -1) <= self._t

    def action(self, window) -> int:
        cfg = self.config
        last = window.last_frame()
        recent = window.recent(cfg.alert_window)
        self._t += 1

        # Findings are sticky until a remediation completes.
        for node in self._it_nodes:
            if last[self._finding_admin_pos[node]]:
                self._open_finding[node] = 2
            elif last[self._finding_user_pos[node]] and self._open_finding.get(node, 0) < 2:
                self._open_finding[node] = 1

        rules = (self._rule_plc(last), self._rule_scan(recent), self._rule_remediate())
        candidates = next((r for r in rules if r), [])
        if not candidates and cfg.sweep:
            candidates = self._rule_sweep()
        if not candidates:
            return 0
        if cfg.epsilon > 0.0 and self._rng.random() < cfg.epsilon:
            pool = [c for r in rules for c in r] or candidates
            node, verb = pool[self._rng.integers(len(pool))]
        else:
            node, verb = candidates[self._rng.integers(len(candidates))]
        return self._submit(node, verb)

    def _rule_plc(self, last: np.ndarray) -> list[tuple[int, str]]:
        out = []
        for node, alert_pos in zip(self._plc_nodes, self._plc_alert_pos):
            if not self._free(node):
                continue
            if last[self._destroyed_pos[node]]:
                out.append((node, "restore_logic"))
            elif last[self._disrupted_pos[node]]:
                out.append((node, "restart_plc"))
            elif self.config.restart_plc_on_alert and last[alert_pos]:
                # an alerted PLC may carry a staged payload; a restart is cheap
                out.append((node, "restart_plc"))
        return out

    def _rule_scan(self, recent: np.ndarray) -> list[tuple[int, str]]:
        cfg = self.config
        plc_spill = 0.0
        if cfg.plc_alert_to_l1_weight > 0.0 and self._plc_alert_pos:
            plc_spill = cfg.plc_alert_to_l1_weight * float(recent[:, self._plc_alert_pos].sum())
        out = []
        for node in self._it_nodes:
            if not self._free(node):
                continue
            if self._t - self._scanned_at.get(node, -(10**9)) < cfg.scan_cooldown:
                continue
            if self._open_finding.get(node, 0):
                continue  # already past investigation; remediation owns it
            score = float(recent[:, self._ids_pos[node]].sum())
            if node in self._l1_set:
                score += plc_spill
            if score >= cfg.alert_threshold:
                verb = "scan_host" if cfg.investigate_before_remediate else cfg.ladder[self._rung(node)]
                out.append((node, verb))
        return out

    def _rule_remediate(self) -> list[tuple[int, str]]:
        cfg = self.config
        out = []
        for node, level in sorted(self._open_finding.items()):
            if level == 0 or not self._free(node):
                continue
            if level == 2 and cfg.admin_finding_to_reimage:
                out.append((node, "reimage"))
                continue
            out.append((node, cfg.ladder[self._rung(node)]))
        return out

    def _rung(self, node: int) -> int:
        # findings long after the last remediation are a fresh incident, not
        # evidence that the previous remediation failed
        if self._t - self._last_remediation.get(node, -(10**9)) > 2 * self.config.scan_cooldown:
            return 0
        return min(self._ladder_pos.get(node, 0), len(self.config.ladder) - 1)

    def _rule_sweep(self) -> list[tuple[int, str]]:
        stalest, best = None, None
        for node in self._it_nodes:
            if not self._free(node) or self._open_finding.get(node, 0):
                continue
            last_scan = self._scanned_at.get(node, -(10**9))
            if self._t - last_scan < self.config.scan_cooldown:
                continue
            if best is None or last_scan < best:
                stalest, best = node, last_scan
        return [] if stalest is None else [(stalest, "scan_host")]

    def _submit(self, node: int, verb: str) -> int:
        duration = self._duration[(node, verb)]
        self._busy_until[node] = self._t + duration
        if verb in ("scan_host", "deep_scan"):
            self._scanned_at[node] = self._t
        elif verb in self.config.ladder or verb == "reimage":
            rung = self.config.ladder.index(verb) if verb in self.config.ladder else len(self.config.ladder) - 1
            self._ladder_pos[node] = min(rung + 1, len(self.config.ladder) - 1)
            self._last_remediation[node] = self._t
            self._open_finding[node] = 0
        return self._action_index[(node, verb)]
