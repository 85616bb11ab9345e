import hypothesis
import numpy as np
import pytest

from acso.config import AttackerConfig, ObservationConfig, RunConfig, TopologyConfig

hypothesis.settings.register_profile("fast", max_examples=30, deadline=None)
hypothesis.settings.load_profile("fast")


PAPER_TOPOLOGY = TopologyConfig(l2_workstations=25, servers=3, l1_workstations=5, plcs=50, plc_shutdown_threshold=25)
GRID_TOPOLOGY = TopologyConfig(l2_workstations=10, servers=3, l1_workstations=3, plcs=30, plc_shutdown_threshold=25)
TINY_TOPOLOGY = TopologyConfig(l2_workstations=3, servers=1, l1_workstations=1, plcs=6, plc_shutdown_threshold=4)


def tiny_run_config(**overrides) -> RunConfig:
    """Small fast config for episode-level tests; aggressive attacker."""
    base = dict(
        topology=TINY_TOPOLOGY,
        observation=ObservationConfig(tau=16),
        attacker=AttackerConfig(
            k1_known=3,
            k2_entrenched=1,
            act_prob={
                "initial_access": 0.0,
                "discovery": 0.9,
                "privilege_escalation": 0.9,
                "lateral_movement": 0.9,
                "persistence": 0.9,
                "staging": 0.9,
                "execution": 1.0,
            },
            escalate_success={"credential_theft": 0.5, "remote_exploit": 0.6},
            lateral_success=0.6,
            persist_success=0.7,
            stage_success=0.7,
            durations={"recon_scan": 1, "escalate": 1, "lateral": 1, "persist": 1, "stage": 1, "plc_fire": 1},
        ),
        horizon=200,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
