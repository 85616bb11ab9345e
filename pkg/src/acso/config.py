"""Run configuration: dataclass sections mirroring the JSON config file.

Every section has working defaults; a config file only needs to name the
fields it overrides.  ``RunConfig.from_dict`` rejects unknown keys so typos
fail loudly (CLI exit code 2).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


GOALS = ("disrupt_process", "destroy_equipment")
VECTORS = ("credential_theft", "remote_exploit")


@dataclass(frozen=True)
class TopologyConfig:
    l2_workstations: int = 25
    servers: int = 3
    l1_workstations: int = 5
    plcs: int = 50
    plc_shutdown_threshold: int = 25


@dataclass(frozen=True)
class VerbSpec:
    cost: float
    duration: int


def _default_verb_table() -> dict[str, dict[str, VerbSpec]]:
    # Only reboot(workstation)=0.01 and reimage(server)=0.05 are externally
    # anchored costs; the rest are tunable defaults.
    return {
        "workstation": {
            "scan_host": VerbSpec(0.0, 1),
            "deep_scan": VerbSpec(0.005, 4),
            "change_password": VerbSpec(0.005, 1),
            "isolate": VerbSpec(0.02, 1),
            "deisolate": VerbSpec(0.0, 1),
            "reboot": VerbSpec(0.01, 2),
            "reimage": VerbSpec(0.03, 8),
        },
        "server": {
            "scan_host": VerbSpec(0.0, 1),
            "deep_scan": VerbSpec(0.005, 4),
            "change_password": VerbSpec(0.005, 1),
            "reboot": VerbSpec(0.01, 2),
            "reimage": VerbSpec(0.05, 12),
            "restore_backup": VerbSpec(0.04, 8),
        },
        "plc": {
            "restart_plc": VerbSpec(0.02, 1),
            "restore_logic": VerbSpec(0.03, 6),
        },
    }


@dataclass
class DynamicsConfig:
    """Per-kind verb cost/duration tables."""

    verbs: dict[str, dict[str, VerbSpec]] = field(default_factory=_default_verb_table)

    def spec(self, kind_name: str, verb: str) -> VerbSpec:
        return self.verbs[kind_name][verb]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DynamicsConfig":
        table = _default_verb_table()
        for kind_name, overrides in data.items():
            if kind_name not in table:
                raise ConfigError(f"unknown node kind in dynamics config: {kind_name!r}")
            for verb, entry in overrides.items():
                if verb not in table[kind_name]:
                    raise ConfigError(f"unknown verb for {kind_name}: {verb!r}")
                base = table[kind_name][verb]
                cost = float(entry.get("cost", base.cost))
                duration = int(entry.get("duration", base.duration))
                if duration < 1:
                    raise ConfigError(f"duration must be >= 1 for {kind_name}.{verb}")
                if cost < 0:
                    raise ConfigError(f"cost must be >= 0 for {kind_name}.{verb}")
                extra = set(entry) - {"cost", "duration"}
                if extra:
                    raise ConfigError(f"unknown keys in dynamics.{kind_name}.{verb}: {sorted(extra)}")
                table[kind_name][verb] = VerbSpec(cost, duration)
        return cls(table)

    def to_dict(self) -> dict[str, Any]:
        return {
            kind: {verb: {"cost": vs.cost, "duration": vs.duration} for verb, vs in verbs.items()}
            for kind, verbs in self.verbs.items()
        }


def _default_act_prob() -> dict[str, float]:
    # Tuned so a no-op defender sees a median campaign of ~2,000-2,500 steps
    # and >95% of campaigns reach shutdown before the 5,000-step limit.
    return {
        "initial_access": 0.0,
        "discovery": 0.12,
        "privilege_escalation": 0.12,
        "lateral_movement": 0.08,
        "persistence": 0.12,
        "staging": 0.035,
        "execution": 1.0,
    }


def _default_escalate_success() -> dict[str, float]:
    return {"credential_theft": 0.15, "remote_exploit": 0.25}


def _default_attack_durations() -> dict[str, int]:
    return {"recon_scan": 1, "escalate": 2, "lateral": 3, "persist": 2, "stage": 2, "plc_fire": 1}


@dataclass
class AttackerConfig:
    k1_known: int = 4
    k2_entrenched: int = 3
    k3_staged: int | None = None  # None -> topology plc_shutdown_threshold
    budget: int = 1
    act_prob: dict[str, float] = field(default_factory=_default_act_prob)
    escalate_success: dict[str, float] = field(default_factory=_default_escalate_success)
    lateral_success: float = 0.2
    persist_success: float = 0.5
    stage_success: float = 0.5
    durations: dict[str, int] = field(default_factory=_default_attack_durations)
    goal: str | None = None  # fixed goal, or None to sample per episode
    vector: str | None = None
    prefer_level1_targets: bool = True

    def __post_init__(self) -> None:
        if self.goal is not None and self.goal not in GOALS:
            raise ConfigError(f"attacker.goal must be one of {GOALS}, got {self.goal!r}")
        if self.vector is not None and self.vector not in VECTORS:
            raise ConfigError(f"attacker.vector must be one of {VECTORS}, got {self.vector!r}")
        for name, p in self.act_prob.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"attacker.act_prob[{name!r}] out of [0,1]")


def _default_ids_detection() -> dict[str, float]:
    return {
        "recon_scan": 0.1,
        "escalate": 0.3,
        "lateral": 0.3,
        "persist": 0.3,
        "stage": 0.4,
        "plc_fire": 0.5,
    }


@dataclass
class ObservationConfig:
    tau: int = 256
    fn_scan: float = 0.2
    fn_deep_scan: float = 0.05
    ids_fp: float = 0.01
    ids_detection: dict[str, float] = field(default_factory=_default_ids_detection)
    include_l1_workstations: bool = True


@dataclass
class RewardConfig:
    plc_penalty: float = 0.04  # per off-nominal PLC; 0.04 * 25 == full shutdown
    shaping_a: float = -0.05  # workstation delta weight; negative rewards cleanup
    shaping_b: float = -0.05  # server delta weight
    shaping_weight: float = 1.0


@dataclass
class ExpertConfig:
    alert_threshold: float = 1.0
    alert_window: int = 16
    scan_cooldown: int = 8
    investigate_before_remediate: bool = True
    ladder: tuple[str, ...] = ("change_password", "reboot", "reimage")
    admin_finding_to_reimage: bool = True
    # A PLC alert means someone is staging from the plant level: spread its
    # weight onto every level 1 workstation's score (the only possible
    # sources) so they get investigated.
    plc_alert_to_l1_weight: float = 1.0
    restart_plc_on_alert: bool = True
    # Idle steps go to a hygiene sweep: scan the least recently scanned IT
    # node (lowest id on ties, so the round is deterministic).  Scans are
    # telemetry queries with zero operational cost; only the action slot
    # is spent.
    sweep: bool = True
    epsilon: float = 0.05


@dataclass
class QNetConfig:
    arch: str = "attention"  # "attention" | "conv"
    latent: int = 32
    temporal_blocks: int = 2
    conv_kernel: int = 5
    temporal_heads: int = 4
    global_blocks: int = 2
    global_heads: int = 4
    head_hidden: int = 32
    conv_channels: tuple[int, ...] = (32, 32, 16, 16)

    def __post_init__(self) -> None:
        if self.arch not in ("attention", "conv"):
            raise ConfigError(f"qnet.arch must be attention|conv, got {self.arch!r}")
        if self.latent % self.temporal_heads or self.latent % self.global_heads:
            raise ConfigError("qnet.latent must be divisible by the head counts")


@dataclass
class TrainConfig:
    n_step: int = 4
    buffer_capacity: int = 100_000
    batch_size: int = 32
    lr: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    target_update: int = 2000  # env steps between policy->target copies
    update_every: int = 4
    warmup_steps: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 200_000
    alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    beta_episodes: int = 500  # per-episode annealing
    priority_eps: float = 1e-3
    huber_delta: float = 1.0
    margin_delta: float = 0.8
    margin_lambda: float = 1.0
    margin_form: str = "standard"  # "standard" | "doubled" (candidate Q counted twice)
    demo_protect: bool = True
    demo_fraction_cap: float = 0.5
    pretrain_updates: int = 3000
    pretrain_lr: float = 1e-3
    pretrain_target_sync: int = 500
    # demo entries with rare verbs are duplicated at ingestion with factor
    # (max_class_count / class_count) ** exponent, capped; 0 disables.
    # Expert data is dominated by scans and no-ops, and an agent that never
    # learns the rare remediation verbs cannot hold the network.
    pretrain_oversample: float = 0.5
    pretrain_oversample_cap: int = 25
    holdout_fraction: float = 0.1
    train_episodes: int = 200
    eval_every: int = 10
    eval_episodes: int = 10
    eval_seed_base: int = 900_000
    seed: int = 1

    def __post_init__(self) -> None:
        if self.margin_form not in ("standard", "doubled"):
            raise ConfigError(f"rl.margin_form must be standard|doubled, got {self.margin_form!r}")


@dataclass
class RunConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    attacker: AttackerConfig = field(default_factory=AttackerConfig)
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    qnet: QNetConfig = field(default_factory=QNetConfig)
    rl: TrainConfig = field(default_factory=TrainConfig)
    horizon: int = 5000
    gamma: float = 0.999
    mode: str = "eval"  # "eval" | "train"; train adds the shaping term to rewards

    def __post_init__(self) -> None:
        if self.mode not in ("eval", "train"):
            raise ConfigError(f"mode must be eval|train, got {self.mode!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        sections = {
            "topology": TopologyConfig,
            "attacker": AttackerConfig,
            "observation": ObservationConfig,
            "reward": RewardConfig,
            "expert": ExpertConfig,
            "qnet": QNetConfig,
            "rl": TrainConfig,
        }
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key == "dynamics":
                kwargs[key] = DynamicsConfig.from_dict(value)
            elif key in sections:
                kwargs[key] = _build_section(sections[key], key, value)
            elif key in ("horizon", "gamma", "mode"):
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config section or field: {key!r}")
        try:
            return cls(**kwargs)
        except TypeError as exc:  # bad field types surface here
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, DynamicsConfig):
                out[f.name] = value.to_dict()
            elif dataclasses.is_dataclass(value):
                out[f.name] = _section_dict(value)
            else:
                out[f.name] = value
        return out

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config root must be a JSON object: {path}")
        return cls.from_dict(data)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _build_section(section_cls: type, name: str, value: dict[str, Any]) -> Any:
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    allowed = {f.name for f in dataclasses.fields(section_cls)}
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"unknown fields in {name!r}: {sorted(unknown)}")
    coerced = dict(value)
    for f in dataclasses.fields(section_cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            # JSON has no tuples; tuple-typed fields arrive as lists
            if isinstance(f.default, tuple) or (
                f.default_factory is not dataclasses.MISSING and isinstance(f.default_factory(), tuple)  # type: ignore[misc]
            ):
                coerced[f.name] = tuple(coerced[f.name])
    try:
        return section_cls(**coerced)
    except TypeError as exc:
        raise ConfigError(f"bad section {name!r}: {exc}") from exc


def _section_dict(obj: Any) -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out
