import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acso.config import ConfigError, TopologyConfig
from acso.topology import NodeKind, Vlan, Zone, attacker_reachable, build_topology
from conftest import GRID_TOPOLOGY, PAPER_TOPOLOGY


def test_paper_topology_node_count():
    topo = build_topology(PAPER_TOPOLOGY)
    assert topo.n_nodes == 83
    assert topo.counts[NodeKind.WORKSTATION] == 30
    assert topo.counts[NodeKind.SERVER] == 3
    assert topo.counts[NodeKind.PLC] == 50


def test_grid_search_topology_node_count():
    assert build_topology(GRID_TOPOLOGY).n_nodes == 46


def test_zero_plcs_rejected():
    with pytest.raises(ConfigError):
        build_topology(TopologyConfig(plcs=0))


def test_zero_workstations_rejected():
    with pytest.raises(ConfigError):
        build_topology(TopologyConfig(l2_workstations=0, l1_workstations=0))


def test_threshold_must_fit_plc_count():
    with pytest.raises(ConfigError):
        build_topology(TopologyConfig(plcs=10, plc_shutdown_threshold=11))


def test_node_ordering_is_canonical():
    topo = build_topology(PAPER_TOPOLOGY)
    # level-2 workstations, servers, level-1 workstations, PLCs
    assert list(topo.kind[:25]) == [NodeKind.WORKSTATION] * 25
    assert list(topo.level[:25]) == [2] * 25
    assert list(topo.kind[25:28]) == [NodeKind.SERVER] * 3
    assert list(topo.kind[28:33]) == [NodeKind.WORKSTATION] * 5
    assert list(topo.level[28:33]) == [1] * 5
    assert list(topo.kind[33:]) == [NodeKind.PLC] * 50
    assert list(topo.level[33:]) == [1] * 50


def test_plcs_level1_servers_level2():
    topo = build_topology(PAPER_TOPOLOGY)
    assert all(topo.level[topo.plc_ids] == 1)
    assert all(topo.level[topo.kind == NodeKind.SERVER] == 2)


def _reachable_oracle(topo, a, b, vlan):
    """Independent spelling of the default firewall rules."""
    if vlan[a] == Vlan.QUARANTINE or vlan[b] == Vlan.QUARANTINE:
        return False
    za, zb = Zone(int(topo.zone[a])), Zone(int(topo.zone[b]))
    if za == zb:
        return True  # reflexive inside a zone's operations VLAN
    if za == Zone.LEVEL2 and zb == Zone.LEVEL1:
        return True
    if za == Zone.LEVEL1 and zb == Zone.FIELDBUS:
        return True
    return False


def test_reachability_examples():
    topo = build_topology(PAPER_TOPOLOGY)
    vlan = np.zeros(topo.n_nodes, dtype=np.int8)
    l2_ws, server, l1_ws, plc = 0, 25, 28, 33
    assert attacker_reachable(topo, l2_ws, server, vlan)  # same VLAN and level
    assert attacker_reachable(topo, l2_ws, l1_ws, vlan)  # level 2 down to level 1
    assert not attacker_reachable(topo, l2_ws, plc, vlan)  # no direct path to PLCs
    assert attacker_reachable(topo, l1_ws, plc, vlan)  # must pivot through level 1
    assert not attacker_reachable(topo, l1_ws, l2_ws, vlan)  # no upward path
    vlan[server] = Vlan.QUARANTINE
    assert not attacker_reachable(topo, l2_ws, server, vlan)  # quarantine isolates
    assert not attacker_reachable(topo, server, l2_ws, vlan)


def test_reachability_exhaustive_pairwise():
    topo = build_topology(TopologyConfig(l2_workstations=2, servers=1, l1_workstations=2, plcs=3, plc_shutdown_threshold=2))
    rng = np.random.default_rng(0)
    vlan = (rng.random(topo.n_nodes) < 0.3).astype(np.int8)
    for a in range(topo.n_nodes):
        for b in range(topo.n_nodes):
            assert attacker_reachable(topo, a, b, vlan) == _reachable_oracle(topo, a, b, vlan), (a, b)


def test_quarantined_endpoint_never_reachable():
    topo = build_topology(GRID_TOPOLOGY)
    vlan = np.full(topo.n_nodes, Vlan.QUARANTINE, dtype=np.int8)
    for a in range(0, topo.n_nodes, 7):
        for b in range(0, topo.n_nodes, 5):
            assert not attacker_reachable(topo, a, b, vlan)


topo_configs = st.builds(
    TopologyConfig,
    l2_workstations=st.integers(1, 12),
    servers=st.integers(0, 4),
    l1_workstations=st.integers(0, 6),
    plcs=st.integers(1, 20),
    plc_shutdown_threshold=st.just(1),
)


@given(topo_configs)
def test_build_is_pure_and_counts_sum(config):
    a = build_topology(config)
    b = build_topology(config)
    assert np.array_equal(a.kind, b.kind)
    assert np.array_equal(a.level, b.level)
    assert sum(a.counts.values()) == a.n_nodes
