import numpy as np
import pytest

from acso.replay import MinTree, NStepAssembler, PrioritizedBuffer, ReplayEntry, SparseWindow, SumTree, densify


def _entry(tag: int, is_demo=False) -> ReplayEntry:
    w = SparseWindow(2, 4, np.array([0], dtype=np.int32), np.array([tag % 4], dtype=np.int32))
    return ReplayEntry(w, tag, float(tag), w, False, 1, is_demo)


def test_sum_tree_total_and_prefix():
    tree = SumTree(8)
    values = [3.0, 1.0, 4.0, 1.0, 5.0]
    for i, v in enumerate(values):
        tree[i] = v
    assert tree.total == pytest.approx(14.0)
    # prefix masses walk the leaves in order
    assert tree.find_prefix(0.5) == 0
    assert tree.find_prefix(3.5) == 1
    assert tree.find_prefix(7.9) == 2
    assert tree.find_prefix(8.9) == 3
    assert tree.find_prefix(13.9) == 4


def test_min_tree_tracks_minimum():
    tree = MinTree(4)
    tree[0], tree[1], tree[2] = 3.0, 0.5, 9.0
    assert tree.minimum == 0.5
    tree[1] = 7.0
    assert tree.minimum == 3.0


def test_sparse_window_roundtrip(rng):
    dense = (rng.random((6, 9)) < 0.3).astype(np.float32)

    class FakeWindow:
        tau, width = 6, 9

        def sparse(self):
            r, c = np.nonzero(dense)
            return r.astype(np.int32), c.astype(np.int32)

    sw = SparseWindow.from_window(FakeWindow())
    assert np.array_equal(sw.to_dense(), dense)
    assert np.array_equal(densify([sw, sw])[1], dense)


def test_sampling_frequencies_match_probabilities(rng):
    buffer = PrioritizedBuffer(capacity=16, alpha=0.6, priority_eps=0.0)
    for i in range(10):
        buffer.add(_entry(i))
    buffer.update_priorities(np.arange(10), np.arange(1.0, 11.0))
    probs = buffer.probabilities()
    expected = np.arange(1.0, 11.0) ** 0.6
    expected /= expected.sum()
    assert np.allclose(probs, expected, atol=1e-12)

    draws = 100_000
    counts = np.zeros(10)
    batches = draws // 50
    for _ in range(batches):
        idx, _, _ = buffer.sample(50, beta=0.4, rng=rng)
        np.add.at(counts, idx, 1)
    freq = counts / draws
    assert np.abs(freq - expected).max() < 0.01


def test_uniform_priorities_beta_one_gives_unit_weights(rng):
    buffer = PrioritizedBuffer(capacity=8, alpha=0.6, priority_eps=0.0)
    for i in range(6):
        buffer.add(_entry(i))
    buffer.update_priorities(np.arange(6), np.full(6, 2.5))
    _, _, weights = buffer.sample(32, beta=1.0, rng=rng)
    assert np.allclose(weights, 1.0, atol=1e-12)


def test_demo_entries_never_evicted(rng):
    buffer = PrioritizedBuffer(capacity=8, alpha=0.6, demo_protect=True)
    for i in range(3):
        buffer.add_demo(_entry(i, is_demo=True))
    for i in range(100):
        buffer.add(_entry(100 + i))
    demos = [e for e in buffer._entries if e is not None and e.is_demo]
    assert len(demos) == 3 and {e.action for e in demos} == {0, 1, 2}
    assert len(buffer) == 8  # ring filled the remaining five slots


def test_agent_ring_wraps_only_agent_region():
    buffer = PrioritizedBuffer(capacity=4, alpha=0.6)
    buffer.add_demo(_entry(0, is_demo=True))
    for i in range(1, 8):
        buffer.add(_entry(i))
    actions = sorted(e.action for e in buffer._entries)
    assert 0 in actions  # the demo survived all wraparounds
    assert len(actions) == 4


def test_assembler_n_step_sums_match_log_recomputation(rng):
    gamma, n = 0.9, 3
    assembler = NStepAssembler(n, gamma)
    rewards = rng.standard_normal(12).tolist()
    windows = [
        SparseWindow(1, 4, np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.int32)) for _ in range(13)
    ]
    entries = []
    for t, r in enumerate(rewards):
        done = t == len(rewards) - 1
        entries.extend(assembler.push(windows[t], t, r, windows[t + 1], done))
    assert len(entries) == len(rewards)
    for e in entries:
        t = e.action  # action doubles as the start index in this fixture
        expected = sum(gamma**k * rewards[t + k] for k in range(e.steps))
        assert e.reward_n == pytest.approx(expected, abs=1e-12)
        assert e.done == (t + e.steps == len(rewards))
        assert e.steps == min(n, len(rewards) - t)


def test_assembler_terminal_flush(rng):
    assembler = NStepAssembler(4, 1.0)
    w = SparseWindow(1, 2, np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.int32))
    out = []
    out.extend(assembler.push(w, 0, 1.0, w, False))
    out.extend(assembler.push(w, 1, 1.0, w, True))
    assert len(out) == 2
    assert all(e.done for e in out)
    assert out[0].reward_n == pytest.approx(2.0) and out[0].steps == 2
    assert out[1].reward_n == pytest.approx(1.0) and out[1].steps == 1
