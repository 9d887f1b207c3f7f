"""Hierarchical attentional graph encoder.

Per meta-path, process-node states are updated K times by an attention-
weighted sum aggregator with a trainable self-loop scale, all intermediate
layer states of the target are fused by a dense concatenation MLP, and the
per-path embeddings are combined through learned pairwise path attention
into a single graph embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ShapeMismatch
from .events import EntityKind
from .graphs import ProgramSnapshot
from .metapaths import ALL_METAPATHS, MetaPath, MetaPathContext, compute_contexts
from .optim import ParamSet, ParamTape, xavier_init


@dataclass
class EncoderConfig:
    """Architecture hyper-parameters (defaults follow the layer/width sweep)."""

    input_dim: int
    layers: int = 3
    hidden: int = 500
    attn_dim: int = 64
    leaky_slope: float = 0.2
    restart_prob: float = 0.15
    rwr_tol: float = 1e-9
    rwr_max_iter: int = 200
    metapaths: tuple = field(default=ALL_METAPATHS)

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("layers and hidden must be >= 1")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": self.layers,
            "hidden": self.hidden,
            "attn_dim": self.attn_dim,
            "leaky_slope": self.leaky_slope,
            "restart_prob": self.restart_prob,
            "rwr_tol": self.rwr_tol,
            "rwr_max_iter": self.rwr_max_iter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})

    def layer_in_dim(self, k: int) -> int:
        return self.input_dim if k == 1 else self.hidden

    def dense_in_dim(self) -> int:
        return self.input_dim + self.layers * self.hidden


def init_encoder_params(cfg: EncoderConfig, seed: int) -> ParamSet:
    """All trainable tensors, registered in a fixed deterministic order."""
    rng = np.random.default_rng(seed)
    ps = ParamSet()
    for i in range(len(cfg.metapaths)):
        for k in range(1, cfg.layers + 1):
            din = cfg.layer_in_dim(k)
            ps.add(f"mp{i}.layer{k}.W", xavier_init((din, cfg.hidden), rng))
            # small positive bias keeps rectifier units alive early in training
            ps.add(f"mp{i}.layer{k}.b", np.full(cfg.hidden, 0.05))
            ps.add(f"mp{i}.layer{k}.eps", np.array(0.0))
        ps.add(f"mp{i}.dense.W", xavier_init((cfg.dense_in_dim(), cfg.hidden), rng))
        ps.add(f"mp{i}.dense.b", np.full(cfg.hidden, 0.05))
    ps.add("attn.W", xavier_init((cfg.hidden, cfg.attn_dim), rng))
    ps.add("attn.b", xavier_init((2 * cfg.attn_dim,), rng))
    return ps


def node_aggregate(
    s: ProgramSnapshot,
    ctx: MetaPathContext,
    h_prev: dict[int, Node],
    tape: ParamTape,
    k: int,
    mp_index: int,
) -> Node:
    """One layer update for one node: (1+eps)*self + alpha-weighted neighbors,
    then the layer MLP. Neighbor terms are summed in entity-canonical order so
    the result is bit-stable under node relabeling."""
    one_plus_eps = ad.add_const(tape.node(f"mp{mp_index}.layer{k}.eps"), 1.0)
    agg = ad.smul(one_plus_eps, h_prev[ctx.target])
    if ctx.neighbors:
        pairs = sorted(
            zip(ctx.neighbors, ctx.alpha), key=lambda p: s.canonical_key(p[0])
        )
        agg = ad.add(agg, ad.addn([ad.smul(float(a), h_prev[u]) for u, a in pairs]))
    return ad.relu(
        ad.linear(agg, tape.node(f"mp{mp_index}.layer{k}.W"), tape.node(f"mp{mp_index}.layer{k}.b"))
    )


def layer_dense_aggregate(hs: list[Node], tape: ParamTape, mp_index: int) -> Node:
    """Fuse the K+1 intermediate states by concatenation + MLP."""
    return ad.relu(
        ad.linear(ad.concat(hs), tape.node(f"mp{mp_index}.dense.W"), tape.node(f"mp{mp_index}.dense.b"))
    )


def path_attention(zs: list[Node], tape: ParamTape, cfg: EncoderConfig) -> Node:
    """Softmax path weights from mean pairwise attention scores.

    Score of path i against path j is a gated bilinear form on the projected
    pair; each path's logit is its mean score against all paths (itself
    included), resolving the pairwise form into one weight per path.
    """
    b = tape.node("attn.b")
    W = tape.node("attn.W")
    qs = [ad.linear(z, W) for z in zs]
    logits = []
    for qi in qs:
        scores = [
            ad.leaky_relu(ad.dot(b, ad.concat([qi, qj])), cfg.leaky_slope) for qj in qs
        ]
        logits.append(ad.mean_scalars(scores))
    return ad.softmax(ad.stack(logits))


def encode_on_tape(
    s: ProgramSnapshot,
    features: np.ndarray,
    tape: ParamTape,
    cfg: EncoderConfig,
    contexts: dict[tuple[int, MetaPath], MetaPathContext] | None = None,
) -> Node:
    """Full encoder forward pass recorded on a tape; returns the graph node."""
    if features.shape[1] != cfg.input_dim:
        raise ShapeMismatch(
            f"feature width {features.shape[1]} != configured input_dim {cfg.input_dim}"
        )
    if contexts is None:
        contexts = compute_contexts(s, cfg.restart_prob, cfg.rwr_tol, cfg.rwr_max_iter)

    procs = sorted(
        (i for i, e in enumerate(s.nodes) if e.kind is EntityKind.PROCESS),
        key=s.canonical_key,
    )
    target = s.target_node
    zs = []
    for i, mp in enumerate(cfg.metapaths):
        h = {v: ad.constant(features[v]) for v in procs}
        history = [h[target]]
        for k in range(1, cfg.layers + 1):
            h = {v: node_aggregate(s, contexts[(v, mp)], h, tape, k, i) for v in procs}
            history.append(h[target])
        zs.append(layer_dense_aggregate(history, tape, i))

    beta = path_attention(zs, tape, cfg)
    return ad.addn([ad.smul(ad.index(beta, i), z) for i, z in enumerate(zs)])


def encode(
    s: ProgramSnapshot,
    features: np.ndarray,
    ps: ParamSet,
    cfg: EncoderConfig,
    contexts: dict | None = None,
) -> np.ndarray:
    """Graph embedding as a plain array (inference path)."""
    tape = ParamTape(ps)
    return encode_on_tape(s, features, tape, cfg, contexts).value
