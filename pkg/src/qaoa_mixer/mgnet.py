"""MG-Net: a cost estimator and a mixer generator trained in two stages.

Stage 1 fits the estimator ``C(G_C, G_M, x_p) -> y_hat`` to QAOA labels with
``lambda_e * MSE + lambda_r * ranking``.  Stage 2 freezes it and trains the
generator so that the estimator's predicted cost of the generated mixer is
as low as possible.  Gradients reach the generator through a soft mixer
graph: node features are operator-type probabilities and edge weights are
parameter-sharing probabilities.  Hard, canonical mixers are produced only
at inference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .errors import InputError, InvariantViolation, NumericError
from .mixer import (
    FEATURE_WIDTH,
    OPERATOR_TYPES,
    EncodedGraph,
    MixerSpec,
    depth_embedding,
    encode_mixer,
    groups_from_edges,
)
from .nn import Tape, Tensor

log = logging.getLogger(__name__)

__all__ = [
    "GraphBatch",
    "batch_graphs",
    "EstimatorSample",
    "CostEstimator",
    "MixerGenerator",
    "SoftMixer",
    "TrainReport",
    "estimator_forward",
    "train_estimator",
    "generator_forward",
    "train_generator",
    "spearman",
]

HIDDEN = 128
DEPTH_DIM = 128
HEAD_WIDTHS = (256, 64)


@dataclass
class GraphBatch:
    """Padded batch of encoded graphs."""

    feats: np.ndarray  # (B, N, d)
    adj: np.ndarray  # (B, N, N)
    mask: np.ndarray  # (B, N)
    outputs: np.ndarray  # (B, n_qubits) node index of each qubit's output node

    def __len__(self):
        return self.feats.shape[0]

    def subset(self, idx) -> "GraphBatch":
        return GraphBatch(self.feats[idx], self.adj[idx], self.mask[idx], self.outputs[idx])


def _feature_columns(kind: str, n_qubits: int, width: int, qubit_features: bool) -> np.ndarray:
    keep = np.ones(width)
    if kind == "problem" and not qubit_features:
        # qubit incidence columns carry labels, not structure
        keep[3: 3 + n_qubits] = 0.0
    return keep


def batch_graphs(graphs: Sequence[EncodedGraph], symmetrize: bool = True,
                 qubit_features: bool = False) -> GraphBatch:
    """Stack graphs into zero-padded arrays.

    Problem DAGs are symmetrized (``A + A^T``) so that messages travel both
    ways along each wire.  Qubit-incidence columns are dropped unless
    ``qubit_features`` is set, which keeps the networks invariant under
    relabeling of the qubits.
    """
    if not graphs:
        raise InputError("empty graph batch")
    width = graphs[0].features.shape[1]
    n_nodes = max(g.num_nodes for g in graphs)
    n_out = max(len(g.output_nodes()) for g in graphs)
    B = len(graphs)
    feats = np.zeros((B, n_nodes, width))
    adj = np.zeros((B, n_nodes, n_nodes))
    mask = np.zeros((B, n_nodes))
    outputs = np.zeros((B, n_out), dtype=int)
    for b, g in enumerate(graphs):
        if g.features.shape[1] != width:
            raise InputError("graphs in one batch must share the feature width")
        k = g.num_nodes
        keep = _feature_columns(g.kind, g.n_qubits, width, qubit_features)
        feats[b, :k] = g.features * keep
        a = g.adjacency
        if symmetrize and g.kind == "problem":
            a = a + a.T
        adj[b, :k, :k] = a
        mask[b, :k] = 1.0
        out = g.output_nodes()
        outputs[b, : len(out)] = out
    return GraphBatch(feats, adj, mask, outputs)


@dataclass
class EstimatorSample:
    problem: EncodedGraph
    mixer: EncodedGraph
    p: int
    label: float
    group: int = 0  # instance id, used to split train/test by instance


class _Module:
    """Named parameter container with checkpoint helpers."""

    kind = "module"

    def __init__(self, params: dict[str, Tensor], config: dict):
        self.params = params
        self.config = config

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.params.items()}

    def digest(self) -> str:
        return nn.params_digest(self.params)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def set_trainable(self, flag: bool):
        for t in self.params.values():
            t.requires_grad = flag
            t.tracked = flag

    def save(self, path):
        nn.save_checkpoint(path, self.params, {"kind": self.kind, "config": self.config})

    @classmethod
    def load(cls, path):
        import json
        from pathlib import Path

        meta = json.loads(Path(path).read_text()).get("meta", {})
        if meta.get("kind") != cls.kind:
            raise InputError(f"checkpoint holds a {meta.get('kind')!r}, expected {cls.kind!r}")
        model = cls(seed=0, **meta["config"])
        tensors, _ = nn.load_checkpoint(path, expected=model.shapes())
        model.params = tensors
        return model


def _gnn(params: dict[str, Tensor], prefix: str, feats, adj) -> Tensor:
    h = nn.graph_conv(feats, adj, params[f"{prefix}.0.ws"], params[f"{prefix}.0.wn"],
                      params[f"{prefix}.0.b"], activate=True)
    return nn.graph_conv(h, adj, params[f"{prefix}.1.ws"], params[f"{prefix}.1.wn"],
                         params[f"{prefix}.1.b"], activate=False)


def _add_gnn(params: dict, prefix: str, d_in: int, rng: np.random.Generator):
    for k, (a, b) in enumerate([(d_in, HIDDEN), (HIDDEN, HIDDEN)]):
        ws, wn, bias = nn.init_graph_conv(a, b, rng)
        params[f"{prefix}.{k}.ws"], params[f"{prefix}.{k}.wn"], params[f"{prefix}.{k}.b"] = ws, wn, bias


def _add_mlp(params: dict, prefix: str, widths: Sequence[int], rng: np.random.Generator):
    for k, (w, b) in enumerate(nn.init_mlp(widths, rng)):
        params[f"{prefix}.{k}.w"], params[f"{prefix}.{k}.b"] = w, b


def _mlp(params: dict, prefix: str, x) -> Tensor:
    layers = []
    k = 0
    while f"{prefix}.{k}.w" in params:
        layers.append((params[f"{prefix}.{k}.w"], params[f"{prefix}.{k}.b"]))
        k += 1
    return nn.mlp_forward(x, layers)


# ---------------------------------------------------------------------------
# cost estimator
# ---------------------------------------------------------------------------


class CostEstimator(_Module):
    """Problem GNN and mixer GNN (two GraphConv layers each, mean-pooled) plus depth features."""

    kind = "estimator"

    def __init__(self, seed: int = 0, width: int = FEATURE_WIDTH, d_p: int = DEPTH_DIM):
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        _add_gnn(params, "problem", width, rng)
        _add_gnn(params, "mixer", width, rng)
        _add_mlp(params, "head", (2 * HIDDEN + d_p, *HEAD_WIDTHS, 1), rng)
        super().__init__(params, {"width": width, "d_p": d_p})

    def forward(self, problems: GraphBatch, mixer_feats, mixer_adj, mixer_mask, xp) -> Tensor:
        width = self.config["width"]
        if problems.feats.shape[-1] != width or np.shape(getattr(mixer_feats, "data", mixer_feats))[-1] != width:
            raise InputError(f"node features must have width {width}")
        x_c = nn.masked_mean(_gnn(self.params, "problem", problems.feats, problems.adj), problems.mask)
        x_m = nn.masked_mean(_gnn(self.params, "mixer", mixer_feats, mixer_adj), mixer_mask)
        z = nn.concat([x_c, x_m, np.asarray(xp, dtype=float)], axis=-1)
        out = _mlp(self.params, "head", z)
        return nn.reshape(out, (out.shape[0],))


def _depth_features(ps: Sequence[int], d_p: int) -> np.ndarray:
    return np.stack([depth_embedding(p, d_p) for p in ps])


def estimator_forward(model: CostEstimator, g_c, g_m, p) -> np.ndarray | float:
    """Predicted minimum cost.  Accepts single graphs and depth or lists of each."""
    single = isinstance(g_c, EncodedGraph)
    gcs = [g_c] if single else list(g_c)
    gms = [g_m] if single else list(g_m)
    ps = [p] if single else list(p)
    if not (len(gcs) == len(gms) == len(ps)):
        raise InputError("problem graphs, mixer graphs and depths must align")
    pb = batch_graphs(gcs)
    mb = batch_graphs(gms)
    y = model.forward(pb, mb.feats, mb.adj, mb.mask, _depth_features(ps, model.config["d_p"])).data
    return float(y[0]) if single else y.copy()


@dataclass
class TrainReport:
    loss_trace: list[float]
    mse_trace: list[float] = field(default_factory=list)
    rank_trace: list[float] = field(default_factory=list)
    eval_trace: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def train_estimator(samples: Sequence[EstimatorSample], epochs: int = 250, lr: float = 1e-4,
                    lambda_e: float = 1.0, lambda_r: float = 1.0, seed: int = 0,
                    batch_size: int = 32, model: CostEstimator | None = None,
                    ) -> tuple[CostEstimator, TrainReport]:
    """Stage 1: Adam on ``lambda_e * L_e + lambda_r * L_r`` over shuffled mini-batches."""
    if not samples:
        raise InputError("the estimator needs a nonempty dataset")
    if epochs < 1:
        raise InputError("epochs must be at least 1")
    model = model or CostEstimator(seed=seed)
    model.set_trainable(True)
    pb = batch_graphs([s.problem for s in samples])
    mb = batch_graphs([s.mixer for s in samples])
    xp = _depth_features([s.p for s in samples], model.config["d_p"])
    y = np.array([s.label for s in samples], dtype=float)
    rng = np.random.default_rng(seed)
    state = nn.AdamState(lr=lr)
    report = TrainReport(loss_trace=[])
    if len(samples) < 2 and lambda_r:
        msg = "single-sample dataset: ranking term undefined, training on MSE only"
        log.warning(msg)
        report.warnings.append(msg)
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        tot = mse_tot = rank_tot = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start: start + batch_size]
            model.zero_grad()
            with Tape() as tape:
                pred = model.forward(pb.subset(idx), mb.feats[idx], mb.adj[idx], mb.mask[idx], xp[idx])
                l_e = nn.mse_loss(pred, y[idx])
                loss = nn.scale(l_e, lambda_e)
                l_r = None
                if lambda_r and len(idx) >= 2:
                    l_r = nn.ranking_loss(pred, y[idx])
                    loss = nn.add(loss, nn.scale(l_r, lambda_r))
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite estimator loss at epoch {epoch}", trace=report.loss_trace)
            tape.backward(loss)
            nn.adam_step(model.params, state)
            w = len(idx) / len(order)
            tot += w * value
            mse_tot += w * l_e.item()
            rank_tot += w * (l_r.item() if l_r is not None else 0.0)
        report.loss_trace.append(tot)
        report.mse_trace.append(mse_tot)
        report.rank_trace.append(rank_tot)
    return model, report


# ---------------------------------------------------------------------------
# mixer generator
# ---------------------------------------------------------------------------


@dataclass
class SoftMixer:
    """Differentiable mixer: ``type_probs (B, n, |types|)``, ``share_probs (B, n, n)``."""

    type_probs: Tensor
    share_probs: Tensor

    def graph_inputs(self, width: int = FEATURE_WIDTH):
        """Soft ``G_M``: features, adjacency and mask as consumed by the estimator."""
        B, n, t = self.type_probs.shape
        feats = nn.concat([self.type_probs, np.zeros((B, n, width - t))], axis=-1)
        return feats, self.share_probs, np.ones((B, n))

    def argmax_specs(self) -> list[MixerSpec]:
        types = self.type_probs.data.argmax(axis=-1)
        share = self.share_probs.data > 0.5
        return [_spec_from(types[b], share[b]) for b in range(types.shape[0])]


def _spec_from(type_idx: np.ndarray, share: np.ndarray) -> MixerSpec:
    share = np.asarray(share, dtype=int)
    share = np.maximum(share, share.T)
    np.fill_diagonal(share, 0)
    return MixerSpec("".join(OPERATOR_TYPES[t] for t in type_idx), groups_from_edges(share))


def _pair_scatter(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    iu, ju = np.triu_indices(n, k=1)
    scatter = np.zeros((len(iu), n * n))
    scatter[np.arange(len(iu)), iu * n + ju] = 1.0
    scatter[np.arange(len(iu)), ju * n + iu] = 1.0
    return iu, ju, scatter


class MixerGenerator(_Module):
    """Type branch and link branch over ``G_C``; output nodes extended with ``x_p``."""

    kind = "generator"

    def __init__(self, seed: int = 0, width: int = FEATURE_WIDTH, d_p: int = DEPTH_DIM):
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        _add_gnn(params, "type_gnn", width, rng)
        _add_gnn(params, "link_gnn", width, rng)
        _add_mlp(params, "type_head", (HIDDEN + d_p, 64, len(OPERATOR_TYPES)), rng)
        _add_mlp(params, "link_head", (HIDDEN + d_p, 64, 2), rng)
        super().__init__(params, {"width": width, "d_p": d_p})

    def _node_features(self, prefix: str, problems: GraphBatch, xp: np.ndarray) -> Tensor:
        h = _gnn(self.params, prefix, problems.feats, problems.adj)
        B, n = problems.outputs.shape
        flat = nn.reshape(h, (B * h.shape[1], HIDDEN))
        rows = (np.arange(B)[:, None] * h.shape[1] + problems.outputs).ravel()
        out = nn.reshape(nn.take(flat, rows, axis=0), (B, n, HIDDEN))
        depth = np.repeat(xp[:, None, :], n, axis=1)
        return nn.concat([out, depth], axis=-1)

    def logits(self, problems: GraphBatch, xp: np.ndarray) -> tuple[Tensor, Tensor]:
        """Type logits ``(B, n, 2)`` and link logits ``(B, n(n-1)/2, 2)`` for pairs ``i < j``."""
        B, n = problems.outputs.shape
        x_type = self._node_features("type_gnn", problems, xp)
        type_logits = _mlp(self.params, "type_head", x_type)
        x_link = self._node_features("link_gnn", problems, xp)
        iu, ju, _ = _pair_scatter(n)
        pair = nn.mul(nn.take(x_link, iu, axis=1), nn.take(x_link, ju, axis=1))
        link_logits = _mlp(self.params, "link_head", pair)
        return type_logits, link_logits

    def sample(self, problems: GraphBatch, xp: np.ndarray, temperature: float,
               rng: np.random.Generator | None, hard: bool) -> SoftMixer:
        B, n = problems.outputs.shape
        type_logits, link_logits = self.logits(problems, xp)
        types = nn.gumbel_softmax(type_logits, temperature, rng, hard=hard)
        links = nn.gumbel_softmax(link_logits, temperature, rng, hard=hard)
        _, _, scatter = _pair_scatter(n)
        share_pairs = nn.take(links, [1], axis=2)  # class 1 = shared parameter
        share = nn.reshape(nn.matmul(nn.reshape(share_pairs, (B, -1)), scatter), (B, n, n))
        return SoftMixer(types, share)


def generator_forward(model: MixerGenerator, g_c, p, mode: str = "hard",
                      rng: np.random.Generator | None = None, temperature: float = 1.0):
    """Generate mixers for one or many ``(G_C, p)`` inputs.

    ``mode="hard"`` returns canonical :class:`MixerSpec` objects (argmax when
    ``rng`` is None, Gumbel samples otherwise).  ``mode="soft"`` returns a
    :class:`SoftMixer` of probabilities.
    """
    if mode not in ("soft", "hard"):
        raise InputError(f"mode must be 'soft' or 'hard', got {mode!r}")
    single = isinstance(g_c, EncodedGraph)
    gcs = [g_c] if single else list(g_c)
    ps = [p] * len(gcs) if np.isscalar(p) else list(p)
    if len(ps) != len(gcs):
        raise InputError("one depth per problem graph is required")
    pb = batch_graphs(gcs)
    xp = _depth_features(ps, model.config["d_p"])
    soft = model.sample(pb, xp, temperature, rng, hard=(mode == "hard"))
    if mode == "soft":
        return soft
    specs = soft.argmax_specs()
    return specs[0] if single else specs


def train_generator(generator: MixerGenerator, estimator: CostEstimator,
                    problems: Sequence[EncodedGraph], depths: Sequence[int], epochs: int = 250,
                    lr: float = 1e-4, seed: int = 0, temperature: float = 1.0,
                    batch_size: int = 32) -> tuple[MixerGenerator, TrainReport]:
    """Stage 2: minimize the frozen estimator's predicted cost of generated soft mixers.

    ``loss_trace`` holds the epoch-mean training loss (with Gumbel noise);
    ``eval_trace`` holds the noise-free objective over all ``(problem, depth)``
    pairs, evaluated before training and after each epoch.
    """
    if not problems or not depths:
        raise InputError("the generator needs problems and depths")
    if epochs < 1:
        raise InputError("epochs must be at least 1")
    before = estimator.digest()
    estimator.set_trainable(False)
    generator.set_trainable(True)
    pairs = [(g, p) for g in problems for p in depths]
    pb = batch_graphs([g for g, _ in pairs])
    xp = _depth_features([p for _, p in pairs], generator.config["d_p"])
    rng = np.random.default_rng(seed)
    state = nn.AdamState(lr=lr)
    report = TrainReport(loss_trace=[])

    def objective(idx, noise):
        soft = generator.sample(pb.subset(idx), xp[idx], temperature, noise, hard=False)
        feats, adj, mask = soft.graph_inputs(estimator.config["width"])
        return nn.mean_all(estimator.forward(pb.subset(idx), feats, adj, mask, xp[idx]))

    everything = np.arange(len(pairs))
    try:
        report.eval_trace.append(objective(everything, None).item())
        for epoch in range(epochs):
            order = rng.permutation(len(pairs))
            tot = 0.0
            for start in range(0, len(order), batch_size):
                idx = order[start: start + batch_size]
                generator.zero_grad()
                with Tape() as tape:
                    loss = objective(idx, rng)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(f"non-finite generator loss at epoch {epoch}",
                                       trace=report.loss_trace)
                tape.backward(loss)
                nn.adam_step(generator.params, state)
                tot += value * len(idx) / len(order)
            report.loss_trace.append(tot)
            report.eval_trace.append(objective(everything, None).item())
    finally:
        estimator.set_trainable(True)
        estimator.zero_grad()
    if estimator.digest() != before:
        raise InvariantViolation("estimator parameters changed during generator training")
    return generator, report


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(a, b).statistic)


def encode_specs(specs: Sequence[MixerSpec]) -> list[EncodedGraph]:
    return [encode_mixer(s) for s in specs]
