"""Q-value architectures over the observation window.

``AttentionQNet`` embeds each node's alert history with a per-kind temporal
encoder (conv1d alternating with multi-head self-attention over the time
axis, parameters shared across all nodes of a kind), mixes the stacked node
latents through residual global attention blocks, and maps each
contextualized node vector to that node's per-verb Q-values through a
per-kind head.  Its parameter count depends on the kind set, widths and
depths - never on how many nodes the network protects.

``ConvBaselineQNet`` is the flat baseline: temporal convolutions over the
whole frame followed by one fully connected layer, so its size grows with
the node count.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .config import QNetConfig
from .dynamics import VERBS_BY_KIND
from .numerics import Tensor
from .observation import BITS_BY_KIND, ObservationSpec
from .topology import KIND_NAMES, NodeKind


class _QNetBase:
    params: dict[str, Tensor]
    spec: ObservationSpec
    config: QNetConfig

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) ^ set(state)
        if missing:
            raise ValueError(f"checkpoint does not match architecture: {sorted(missing)}")
        for name, p in self.params.items():
            if p.data.shape != state[name].shape:
                raise ValueError(f"shape mismatch for {name}: {p.data.shape} vs {state[name].shape}")
            p.data[...] = state[name]

    def clone(self) -> "_QNetBase":
        twin = type(self)(self.spec, self.config, seed=0)
        twin.load_state(self.state_dict())
        return twin

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if x.ndim != 3 or x.shape[1] != self.spec.tau or x.shape[2] != self.spec.frame_width:
            raise ValueError(
                f"window batch shape {x.shape} does not match (*, {self.spec.tau}, {self.spec.frame_width})"
            )
        return x


def _mha(h: Tensor, params: dict[str, Tensor], prefix: str, heads: int) -> Tensor:
    q = nm.affine(h, params[f"{prefix}.wq"], params[f"{prefix}.bq"])
    k = nm.affine(h, params[f"{prefix}.wk"], params[f"{prefix}.bk"])
    v = nm.affine(h, params[f"{prefix}.wv"], params[f"{prefix}.bv"])
    y = nm.scaled_dot_product_attention(q, k, v, heads)
    return nm.affine(y, params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def _init_mha(params: dict[str, Tensor], prefix: str, d: int, rng: np.random.Generator) -> None:
    # attention projections start a bit tighter than the plain xavier limit
    gain = 1.0 / np.sqrt(2.0)
    for mat in ("wq", "wk", "wv", "wo"):
        params[f"{prefix}.{mat}"] = nm.xavier_uniform(rng, (d, d), gain=gain)
    for vec in ("bq", "bk", "bv", "bo"):
        params[f"{prefix}.{vec}"] = nm.zeros((d,))


def _init_ln(params: dict[str, Tensor], prefix: str, d: int) -> None:
    params[f"{prefix}.g"] = nm.ones((d,))
    params[f"{prefix}.b"] = nm.zeros((d,))


class AttentionQNet(_QNetBase):
    def __init__(self, spec: ObservationSpec, config: QNetConfig, seed: int = 0):
        if len(spec.observed_ids) != spec.topology.n_nodes:
            raise ValueError("attention net needs every topology node observed")
        self.spec = spec
        self.config = config
        topology = spec.topology
        rng = np.random.default_rng(seed)
        d = config.latent
        self.params: dict[str, Tensor] = {}

        self._segments = []  # (kind_name, n_nodes, col_index_array, width, start, stop)
        for seg in topology.segments:
            width = len(BITS_BY_KIND[seg.kind])
            cols = []
            for node in seg.node_ids:
                offset = spec.bit_index(node, BITS_BY_KIND[seg.kind][0])
                cols.extend(range(offset, offset + width))
            self._segments.append(
                (KIND_NAMES[seg.kind], seg.stop - seg.start, np.asarray(cols, dtype=np.int64), width, seg.start, seg.stop)
            )

        kinds_present = sorted({name for name, *_ in self._segments})
        widths = {KIND_NAMES[k]: len(BITS_BY_KIND[k]) for k in NodeKind}
        for kname in kinds_present:
            p = self.params
            p[f"{kname}.in.w"] = nm.xavier_uniform(rng, (widths[kname], d))
            p[f"{kname}.in.b"] = nm.zeros((d,))
            p[f"{kname}.time_emb"] = nm.small_normal(rng, (spec.tau, d))
            for i in range(config.temporal_blocks):
                p[f"{kname}.t{i}.conv.w"] = nm.xavier_uniform(rng, (config.conv_kernel, d, d))
                p[f"{kname}.t{i}.conv.b"] = nm.zeros((d,))
                _init_ln(p, f"{kname}.t{i}.ln1", d)
                _init_mha(p, f"{kname}.t{i}.attn", d, rng)
                _init_ln(p, f"{kname}.t{i}.ln2", d)
            n_verbs = len(VERBS_BY_KIND[_kind_from_name(kname)])
            p[f"{kname}.head.w1"] = nm.xavier_uniform(rng, (d, config.head_hidden))
            p[f"{kname}.head.b1"] = nm.zeros((config.head_hidden,))
            p[f"{kname}.head.w2"] = nm.xavier_uniform(rng, (config.head_hidden, n_verbs))
            p[f"{kname}.head.b2"] = nm.zeros((n_verbs,))

        for j in range(config.global_blocks):
            _init_mha(self.params, f"global.g{j}.attn", d, rng)
            _init_ln(self.params, f"global.g{j}.ln1", d)
            self.params[f"global.g{j}.ff.w"] = nm.xavier_uniform(rng, (d, d))
            self.params[f"global.g{j}.ff.b"] = nm.zeros((d,))
            _init_ln(self.params, f"global.g{j}.ln2", d)

        self.params["noop.w1"] = nm.xavier_uniform(rng, (d, config.head_hidden))
        self.params["noop.b1"] = nm.zeros((config.head_hidden,))
        self.params["noop.w2"] = nm.xavier_uniform(rng, (config.head_hidden, 1))
        self.params["noop.b2"] = nm.zeros((1,))

    def forward(self, x: np.ndarray) -> Tensor:
        x = self._check_input(x)
        batch = x.shape[0]
        cfg = self.config
        p = self.params
        xt = nm.constant(x)

        latents = []
        for kname, n_nodes, cols, width, _, _ in self._segments:
            xs = nm.gather_cols(xt, cols)  # (B, tau, n*w)
            xs = nm.reshape(xs, (batch, self.spec.tau, n_nodes, width))
            xs = nm.transpose(xs, (0, 2, 1, 3))
            xs = nm.reshape(xs, (batch * n_nodes, self.spec.tau, width))
            h = nm.affine(xs, p[f"{kname}.in.w"], p[f"{kname}.in.b"])
            h = nm.badd(h, p[f"{kname}.time_emb"])
            for i in range(cfg.temporal_blocks):
                c = nm.relu(nm.conv1d(h, p[f"{kname}.t{i}.conv.w"], p[f"{kname}.t{i}.conv.b"]))
                h = nm.layernorm(nm.add(h, c), p[f"{kname}.t{i}.ln1.g"], p[f"{kname}.t{i}.ln1.b"])
                a = _mha(h, p, f"{kname}.t{i}.attn", cfg.temporal_heads)
                h = nm.layernorm(nm.add(h, a), p[f"{kname}.t{i}.ln2.g"], p[f"{kname}.t{i}.ln2.b"])
            pooled = h[:, -1, :]  # final-position token summarizes the history
            latents.append(nm.reshape(pooled, (batch, n_nodes, cfg.latent)))

        g = nm.concat(latents, axis=1)  # (B, N, d) in node-id order
        for j in range(cfg.global_blocks):
            a = _mha(g, p, f"global.g{j}.attn", cfg.global_heads)
            g = nm.layernorm(nm.add(g, a), p[f"global.g{j}.ln1.g"], p[f"global.g{j}.ln1.b"])
            f = nm.relu(nm.affine(g, p[f"global.g{j}.ff.w"], p[f"global.g{j}.ff.b"]))
            g = nm.layernorm(nm.add(g, f), p[f"global.g{j}.ln2.g"], p[f"global.g{j}.ln2.b"])

        noop_h = nm.relu(nm.affine(nm.tmean(g, axis=1), p["noop.w1"], p["noop.b1"]))
        outputs = [nm.affine(noop_h, p["noop.w2"], p["noop.b2"])]
        for kname, n_nodes, _, _, start, stop in self._segments:
            gs = g[:, start:stop, :]
            h1 = nm.relu(nm.affine(gs, p[f"{kname}.head.w1"], p[f"{kname}.head.b1"]))
            qs = nm.affine(h1, p[f"{kname}.head.w2"], p[f"{kname}.head.b2"])
            outputs.append(nm.reshape(qs, (batch, n_nodes * qs.shape[-1])))
        return nm.concat(outputs, axis=1)


class ConvBaselineQNet(_QNetBase):
    def __init__(self, spec: ObservationSpec, config: QNetConfig, seed: int = 0):
        self.spec = spec
        self.config = config
        rng = np.random.default_rng(seed)
        n_actions = 1 + sum(
            len(VERBS_BY_KIND[spec.topology.kind_of(n)]) for n in range(spec.topology.n_nodes)
        )
        self.n_actions = n_actions
        self.params = {}
        c_prev = spec.frame_width
        for i, c_out in enumerate(config.conv_channels):
            self.params[f"conv{i}.w"] = nm.xavier_uniform(rng, (config.conv_kernel, c_prev, c_out))
            self.params[f"conv{i}.b"] = nm.zeros((c_out,))
            c_prev = c_out
        self.params["fc.w"] = nm.xavier_uniform(rng, (spec.tau * c_prev, n_actions))
        self.params["fc.b"] = nm.zeros((n_actions,))

    def forward(self, x: np.ndarray) -> Tensor:
        x = self._check_input(x)
        h = nm.constant(x)
        for i in range(len(self.config.conv_channels)):
            h = nm.relu(nm.conv1d(h, self.params[f"conv{i}.w"], self.params[f"conv{i}.b"]))
        flat = nm.reshape(h, (x.shape[0], -1))
        return nm.affine(flat, self.params["fc.w"], self.params["fc.b"])


def _kind_from_name(name: str) -> NodeKind:
    for kind, kname in KIND_NAMES.items():
        if kname == name:
            return kind
    raise KeyError(name)


def build_qnet(spec: ObservationSpec, config: QNetConfig, seed: int = 0) -> _QNetBase:
    cls = AttentionQNet if config.arch == "attention" else ConvBaselineQNet
    return cls(spec, config, seed=seed)


def q_forward(net: _QNetBase, windows: np.ndarray) -> np.ndarray:
    """Batch Q-values without graph construction; (B, tau, W) -> (B, A)."""
    with nm.no_grad():
        return net.forward(windows).data


def greedy_action(net: _QNetBase, window2d: np.ndarray) -> int:
    """Argmax over the action table; ties break to the lowest index."""
    q = q_forward(net, window2d[None])
    return int(np.argmax(q[0]))
