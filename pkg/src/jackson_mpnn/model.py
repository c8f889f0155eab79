"""Message-passing network for graph-level regression on queueing networks.

Node features are ``x_v = [Lambda_v, mu_v]`` and the arc feature is the routing
probability ``e_vw = [r_vw]``. Hidden states start as the zero-padded node
features and are refined ``T`` times with a tied affine message function

    m_v = sum over arcs (w, v) of  A(e_wv) h_w + b(e_wv)

and a tied GRU update. The attention readout sums
``sigmoid(i([h_v, x_v])) * j(h_v)`` over the nodes of each graph, batch-normalizes
the resulting graph vectors and maps them to a scalar with a small head ``f``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import BatchTooSmall, ShapeMismatch
from .nn import autodiff as ad
from .nn.layers import GRU_NAMES, BatchNormState, batch_norm, gru_backward, gru_forward, gru_step, mlp
from .nn.params import ParamSpec, ParamStore, init_params

NODE_FEATURES = 2


@dataclass
class ModelConfig:
    hidden_dim: int = 16
    steps: int = 8
    readout: str = "attention"  # attention | simple
    aggregate: str = "incoming"  # incoming | outgoing
    message_width: int = 16
    attention_width: int = 16
    head_width: int = 16

    def __post_init__(self):
        if self.hidden_dim < NODE_FEATURES:
            raise ValueError(f"hidden_dim must be >= {NODE_FEATURES}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.readout not in ("attention", "simple"):
            raise ValueError(f"unknown readout {self.readout!r}")
        if self.aggregate not in ("incoming", "outgoing"):
            raise ValueError(f"unknown aggregation {self.aggregate!r}")

    def to_dict(self):
        return asdict(self)


class GraphBatch:
    """Several networks packed into one disjoint union.

    Attributes: ``x`` (N, 2) node features, ``src``/``dst`` (E,) global arc
    endpoints, ``e`` (E, 1) routing, ``graph_index`` (N,), ``labels`` (G,) or None.
    """

    def __init__(self, networks, labels=None):
        networks = list(networks)
        if not networks:
            raise ValueError("a batch needs at least one network")
        xs, srcs, dsts, es, gidx = [], [], [], [], []
        offset = 0
        for g, net in enumerate(networks):
            xs.append(np.column_stack([net.external_intensity, net.service_rate]))
            srcs.append(net.arcs[:, 0] + offset)
            dsts.append(net.arcs[:, 1] + offset)
            es.append(net.routing)
            gidx.append(np.full(net.node_count, g, dtype=np.int64))
            offset += net.node_count
        self.x = np.concatenate(xs)
        self.src = np.concatenate(srcs).astype(np.int64)
        self.dst = np.concatenate(dsts).astype(np.int64)
        self.e = np.concatenate(es).reshape(-1, 1)
        self.graph_index = np.concatenate(gidx)
        self.n_graphs = len(networks)
        self.n_nodes = offset
        self.labels = None if labels is None else np.asarray(labels, dtype=np.float64).reshape(-1)
        if self.labels is not None and self.labels.size != self.n_graphs:
            raise ShapeMismatch("one label per graph is required")
        E = self.src.size
        self.in_matrix = sp.csr_matrix((np.ones(E), (self.dst, np.arange(E))), shape=(offset, E))
        self.out_matrix = sp.csr_matrix((np.ones(E), (self.src, np.arange(E))), shape=(offset, E))
        self.graph_matrix = sp.csr_matrix(
            (np.ones(offset), (self.graph_index, np.arange(offset))), shape=(self.n_graphs, offset)
        )

    @property
    def n_arcs(self):
        return self.src.size


def param_specs(cfg: ModelConfig) -> list[ParamSpec]:
    d, mw, aw, hw = cfg.hidden_dim, cfg.message_width, cfg.attention_width, cfg.head_width
    specs = []

    def dense(prefix, n_in, n_out):
        specs.append(ParamSpec(f"{prefix}.W", (n_out, n_in), "weight"))
        specs.append(ParamSpec(f"{prefix}.b", (n_out,), "bias"))

    dense("msg.A.0", 1, mw)
    dense("msg.A.1", mw, d * d)
    dense("msg.b.0", 1, mw)
    dense("msg.b.1", mw, d)
    for name in GRU_NAMES:
        if name.startswith("W_"):
            shape, kind = (d, d), "weight"
        elif name.startswith("U_"):
            shape, kind = (d, d), "weight"
        else:
            shape, kind = (d,), "bias"
        specs.append(ParamSpec(f"gru.{name}", shape, kind))
    if cfg.readout == "attention":
        dense("att.i.0", d + NODE_FEATURES, aw)
        dense("att.i.1", aw, d)
        dense("att.j.0", d, aw)
        dense("att.j.1", aw, d)
        specs.append(ParamSpec("bn.gamma", (d,), "gamma"))
        specs.append(ParamSpec("bn.beta", (d,), "beta"))
    dense("head.0", d, hw)
    dense("head.1", hw, 1)
    return specs


PARAM_GROUPS = {
    "message A-net": ["msg.A."],
    "message b-net": ["msg.b."],
    "GRU": ["gru."],
    "attention i": ["att.i."],
    "attention j": ["att.j."],
    "batch-norm gamma/beta": ["bn."],
    "inference head": ["head."],
}


def _layers(P, prefix, n):
    return [(P[f"{prefix}.{k}.W"], P[f"{prefix}.{k}.b"]) for k in range(n)]


def init_hidden(x, hidden_dim: int) -> np.ndarray:
    """Zero-pad node features to the hidden width: ``[Lambda, mu, 0, ..., 0]``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] > hidden_dim:
        raise ShapeMismatch(f"hidden_dim {hidden_dim} is smaller than the feature length {x.shape[-1]}")
    pad = [(0, 0)] * (x.ndim - 1) + [(0, hidden_dim - x.shape[-1])]
    return np.pad(x, pad)


def message_matrices(e, P, d):
    """``A(e)`` for every arc, shape (E, d, d), and ``b(e)``, shape (E, d)."""
    A = ad.reshape(mlp(e, _layers(P, "msg.A", 2)), (-1, d, d))
    b = mlp(e, _layers(P, "msg.b", 2))
    return A, b


def message(h_w, e_wv, P) -> ad.Tensor:
    """Message sent along one arc (or a stack of arcs): ``A(e) h_w + b(e)``."""
    h_w = ad.as_tensor(h_w)
    single = h_w.value.ndim == 1
    e = np.asarray(e_wv, dtype=np.float64).reshape(-1, 1)
    d = h_w.shape[-1]
    A, b = message_matrices(e, P, d)
    h2 = ad.reshape(h_w, (1, d)) if single else h_w
    out = ad.add(ad.batched_matvec(A, h2), b)
    return ad.reshape(out, (d,)) if single else out


def _senders(batch, cfg):
    """(sender index per arc, receiver aggregation matrix, sender scatter matrix)."""
    if cfg.aggregate == "incoming":
        return batch.src, batch.in_matrix, batch.out_matrix
    return batch.dst, batch.out_matrix, batch.in_matrix


def propagate_unfused(batch: GraphBatch, P, cfg: ModelConfig, scale=None) -> ad.Tensor:
    """Message passing built from individual taped operations (reference path)."""
    d = cfg.hidden_dim
    h = ad.Tensor(init_hidden(node_features(batch, scale), d))
    if cfg.steps == 0:
        return h
    sender, collect, _ = _senders(batch, cfg)
    A, b = message_matrices(batch.e, P, d)
    gru = {k: P[f"gru.{k}"] for k in GRU_NAMES}
    for _ in range(cfg.steps):
        msgs = ad.add(ad.batched_matvec(A, ad.take_rows(h, sender, batch.n_nodes)), b)
        h = gru_step(gru, h, ad.sparse_matmul(collect, msgs))
    return h


def _message_passing(A, b, h0, sender, collect, scatter, gru_params, steps):
    """All ``steps`` rounds as one taped op with backpropagation through time."""
    A, b = ad.as_tensor(A), ad.as_tensor(b)
    gru_params = [ad.as_tensor(p) for p in gru_params]
    Av, bv = A.value, b.value
    weights = [p.value for p in gru_params]
    collect_t = collect.T.tocsr()
    h = h0
    sent, caches = [], []
    for _ in range(steps):
        hs = h[sender]
        m = collect @ (np.matmul(Av, hs[:, :, None])[:, :, 0] + bv)
        h, cache = gru_forward(weights, h, m)
        sent.append(hs)
        caches.append(cache)
    for c in ad._counters:
        c["message"] += Av.shape[0] * Av.shape[1] * steps

    def back(g):
        dA_rows, db = [], np.zeros_like(bv)
        dparams = [np.zeros_like(w) for w in weights]
        dh = g
        for t in reversed(range(steps)):
            dh_prev, dm, grads = gru_backward(weights, caches[t], dh)
            for acc, gp in zip(dparams, grads):
                acc += gp
            dmsg = collect_t @ dm
            db += dmsg
            dA_rows.append(dmsg)
            dh = dh_prev + scatter @ np.matmul(dmsg[:, None, :], Av)[:, 0, :]
        dA = np.matmul(np.stack(dA_rows[::-1], axis=2), np.stack(sent, axis=1))
        return (dA, db, *dparams)

    return ad._node("message_passing", h, (A, b, *gru_params), back)


def node_features(batch: GraphBatch, scale=None) -> np.ndarray:
    """Node features divided by the per-feature input scale (if any)."""
    return batch.x if scale is None else batch.x / scale


def propagate(batch: GraphBatch, P, cfg: ModelConfig, scale=None) -> ad.Tensor:
    """Run ``cfg.steps`` rounds of message passing; returns final node states (N, d)."""
    d = cfg.hidden_dim
    h0 = init_hidden(node_features(batch, scale), d)
    if cfg.steps == 0:
        return ad.Tensor(h0)
    sender, collect, scatter = _senders(batch, cfg)
    A, b = message_matrices(batch.e, P, d)
    gru = [P[f"gru.{k}"] for k in GRU_NAMES]
    return _message_passing(A, b, h0, sender, collect, scatter, gru, cfg.steps)


def graph_embedding(batch: GraphBatch, h, P, cfg: ModelConfig, scale=None) -> ad.Tensor:
    """Attention-gated sum of node embeddings per graph (before batch norm)."""
    gate_in = ad.concat([h, ad.Tensor(node_features(batch, scale))], axis=1)
    gate = ad.sigmoid(mlp(gate_in, _layers(P, "att.i", 2)))
    value = mlp(h, _layers(P, "att.j", 2))
    return ad.sparse_matmul(batch.graph_matrix, ad.mul(gate, value))


def readout_simple(batch: GraphBatch, h, P) -> ad.Tensor:
    """``f(sum_v h_v)`` per graph."""
    pooled = ad.sparse_matmul(batch.graph_matrix, h)
    return ad.reshape(mlp(pooled, _layers(P, "head", 2)), (-1,))


def forward(batch: GraphBatch, P, cfg: ModelConfig, bn: BatchNormState | None = None, training=False, scale=None):
    """Predictions (G,) in the standardized label space.

    ``P`` maps parameter names to tensors or arrays. In training mode the
    batch-norm layer uses batch statistics (and needs at least two graphs).
    ``scale`` divides the node features before they enter the network.
    """
    if training and batch.n_graphs < 2:
        raise BatchTooSmall(f"training mode needs at least 2 graphs per batch, got {batch.n_graphs}")
    h = propagate(batch, P, cfg, scale)
    if cfg.readout == "simple":
        return readout_simple(batch, h, P)
    z = normalized_embedding(batch, h, P, cfg, bn, training, scale)
    return ad.reshape(mlp(z, _layers(P, "head", 2)), (-1,))


def normalized_embedding(batch, h, P, cfg, bn, training, scale=None):
    if bn is None:
        raise ValueError("the attention readout needs a BatchNormState")
    R = graph_embedding(batch, h, P, cfg, scale)
    bn.training = bool(training)
    return batch_norm(bn, R, P["bn.gamma"], P["bn.beta"])


def embed(batch: GraphBatch, P, cfg: ModelConfig, bn: BatchNormState | None = None, scale=None) -> np.ndarray:
    """Graph vectors (G, d) fed to the inference head, in inference mode."""
    h = propagate(batch, P, cfg, scale)
    if cfg.readout == "simple":
        return ad.sparse_matmul(batch.graph_matrix, h).value
    return normalized_embedding(batch, h, P, cfg, bn, False, scale).value


def raw_embedding(batch: GraphBatch, P, cfg: ModelConfig, scale=None) -> np.ndarray:
    """Graph vectors before batch normalization (attention readout only)."""
    h = propagate(batch, P, cfg, scale)
    return graph_embedding(batch, h, P, cfg, scale).value


class MPNN:
    """Parameters, batch-norm statistics and configuration of one model."""

    def __init__(self, cfg: ModelConfig | None = None, rng: np.random.Generator | None = None, store=None):
        self.cfg = cfg or ModelConfig()
        if store is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            store = init_params(param_specs(self.cfg), rng)
        self.store: ParamStore = store
        self.bn = BatchNormState.create(self.cfg.hidden_dim)
        self.input_scale = np.ones(NODE_FEATURES)
        self._bind_bn()

    def _bind_bn(self):
        if "bn.gamma" in self.store:
            self.bn.gamma = self.store["bn.gamma"]
            self.bn.beta = self.store["bn.beta"]

    def forward(self, batch, leaves=None, training=False):
        P = self.store.values if leaves is None else leaves
        return forward(batch, P, self.cfg, self.bn, training, self.input_scale)

    def predict(self, batch) -> np.ndarray:
        return self.forward(batch).value.copy()

    def embed(self, batch) -> np.ndarray:
        return embed(batch, self.store.values, self.cfg, self.bn, self.input_scale)

    def calibrate_batch_norm(self, batches) -> None:
        """Set the running statistics to the population statistics of the graph
        vectors over ``batches`` (evaluated with the current parameters)."""
        if self.cfg.readout != "attention":
            return
        R = np.concatenate([raw_embedding(b, self.store.values, self.cfg, self.input_scale) for b in batches])
        self.bn.running_mean = R.mean(axis=0)
        self.bn.running_var = R.var(axis=0, ddof=1)

    def state_arrays(self) -> dict:
        arrays = {f"param/{k}": v for k, v in self.store.values.items()}
        arrays["bn/running_mean"] = self.bn.running_mean
        arrays["bn/running_var"] = self.bn.running_var
        arrays["input_scale"] = self.input_scale
        return arrays

    def optimizer_arrays(self) -> dict:
        arrays = {f"adam.m/{k}": v for k, v in self.store.m.items()}
        arrays.update({f"adam.v/{k}": v for k, v in self.store.v.items()})
        return arrays

    def load_arrays(self, arrays: dict, step: int = 0):
        store = ParamStore()
        for spec in param_specs(self.cfg):
            key = f"param/{spec.name}"
            if key not in arrays:
                raise KeyError(f"checkpoint is missing parameter {spec.name!r}")
            if tuple(arrays[key].shape) != tuple(spec.shape):
                raise ShapeMismatch(f"parameter {spec.name!r} has shape {arrays[key].shape}, expected {spec.shape}")
            store.add(spec.name, arrays[key])
            if f"adam.m/{spec.name}" in arrays:
                store.m[spec.name] = np.array(arrays[f"adam.m/{spec.name}"])
                store.v[spec.name] = np.array(arrays[f"adam.v/{spec.name}"])
        store.step = int(step)
        self.store = store
        self.bn.running_mean = np.array(arrays["bn/running_mean"])
        self.bn.running_var = np.array(arrays["bn/running_var"])
        if "input_scale" in arrays:
            self.input_scale = np.array(arrays["input_scale"])
        self._bind_bn()

    def copy(self) -> "MPNN":
        new = MPNN(self.cfg, store=self.store.copy())
        new.bn.running_mean = self.bn.running_mean.copy()
        new.bn.running_var = self.bn.running_var.copy()
        new.input_scale = self.input_scale.copy()
        return new


def fit_input_scale(networks) -> np.ndarray:
    """Per-feature root-mean-square of ``[Lambda, mu]`` over all nodes."""
    x = np.concatenate([np.column_stack([n.external_intensity, n.service_rate]) for n in networks])
    rms = np.sqrt(np.mean(x * x, axis=0))
    return np.where(rms > 0, rms, 1.0)
