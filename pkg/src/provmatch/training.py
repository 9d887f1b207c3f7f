"""Siamese similarity training over program snapshots.

Both towers share one ParamSet: each pair is encoded twice on the same tape,
fused by cosine similarity, and trained against +/-1 pair labels with a
squared loss and Adam.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .encoder import EncoderConfig, encode_on_tape, init_encoder_params
from .errors import InsufficientData
from .graphs import ProgramSnapshot, snapshot_features
from .metapaths import compute_contexts
from .optim import ParamSet, ParamTape, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainingPair:
    g1: ProgramSnapshot
    g2: ProgramSnapshot
    label: int  # +1 same program, -1 different programs


@dataclass
class TrainConfig:
    hash_dim: int = 16
    layers: int = 2
    hidden: int = 32
    attn_dim: int = 16
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    pairs_per_epoch: int = 128
    pos_ratio: float = 0.5
    seed: int = 0
    restart_prob: float = 0.15
    early_stop_patience: int = 5
    early_stop_min_delta: float = 1e-5
    # every N epochs, score the parameters by the snapshot matching margin on
    # the training corpus and keep the best copy (0 disables selection)
    select_margin_every: int = 0

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            input_dim=6 + self.hash_dim,
            layers=self.layers,
            hidden=self.hidden,
            attn_dim=self.attn_dim,
            restart_prob=self.restart_prob,
        )

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    pairs_per_epoch: int = 0
    wall_time: float = 0.0
    seed: int = 0
    config: dict = field(default_factory=dict)
    stopped_early: bool = False
    margin_history: list = field(default_factory=list)  # (epoch, margin)
    selected_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "pairs_per_epoch": self.pairs_per_epoch,
            "wall_time": self.wall_time,
            "seed": self.seed,
            "config": self.config,
            "stopped_early": self.stopped_early,
            "margin_history": [[e, m] for e, m in self.margin_history],
            "selected_epoch": self.selected_epoch,
        }


def cosine_sim(h1: np.ndarray, h2: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; a degenerate (near-zero) norm yields 0."""
    value, degenerate = cosine_sim_flagged(h1, h2)
    if degenerate:
        log.warning("degenerate embedding in cosine similarity; returning 0")
    return value

def cosine_sim_flagged(h1: np.ndarray, h2: np.ndarray) -> tuple[float, bool]:
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    n1 = np.linalg.norm(h1)
    n2 = np.linalg.norm(h2)
    if n1 < 1e-12 or n2 < 1e-12:
        return 0.0, True
    return float(np.clip(np.dot(h1, h2) / (n1 * n2), -1.0, 1.0)), False


def _snapshot_id(s: ProgramSnapshot) -> tuple:
    return (s.program_key, s.window)


class SnapshotCache:
    """Per-snapshot features and meta-path contexts, computed once."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self._feats: dict[int, np.ndarray] = {}
        self._ctx: dict[int, dict] = {}

    def features(self, s: ProgramSnapshot) -> np.ndarray:
        key = id(s)
        if key not in self._feats:
            self._feats[key] = snapshot_features(s, self.cfg.hash_dim)
        return self._feats[key]

    def contexts(self, s: ProgramSnapshot) -> dict:
        key = id(s)
        if key not in self._ctx:
            self._ctx[key] = compute_contexts(s, self.cfg.restart_prob)
        return self._ctx[key]


def pair_loss(
    pairs: list[TrainingPair],
    ps: ParamSet,
    cfg: TrainConfig,
    cache: SnapshotCache | None = None,
    accumulate_grads: bool = True,
) -> float:
    """Sum of squared (similarity - label) over the batch; one backward pass
    populates every parameter gradient through both shared towers."""
    if not pairs:
        raise InsufficientData("empty pair batch")
    if cache is None:
        cache = SnapshotCache(cfg)
    enc_cfg = cfg.encoder_config()
    tape = ParamTape(ps)
    embeddings: dict[tuple, ad.Node] = {}

    def tower(s: ProgramSnapshot) -> ad.Node:
        key = _snapshot_id(s)
        if key not in embeddings:
            embeddings[key] = encode_on_tape(
                s, cache.features(s), tape, enc_cfg, cache.contexts(s)
            )
        return embeddings[key]

    terms = [
        ad.square(ad.add_const(ad.cosine(tower(p.g1), tower(p.g2)), -float(p.label)))
        for p in pairs
    ]
    loss = ad.addn(terms)
    if accumulate_grads:
        tape.backward(loss)
    return float(loss.value)


def snapshot_match_margin(
    snapshots: list[ProgramSnapshot],
    ps: ParamSet,
    cfg: TrainConfig,
    cache: SnapshotCache | None = None,
) -> float:
    """Median over snapshots of (best same-program similarity) minus (best
    other-program similarity). Computed on the training corpus only; a higher
    margin means embeddings separate programs more cleanly."""
    from .encoder import encode

    if cache is None:
        cache = SnapshotCache(cfg)
    enc_cfg = cfg.encoder_config()
    embs = [encode(s, cache.features(s), ps, enc_cfg, cache.contexts(s)) for s in snapshots]
    keys = [s.program_key for s in snapshots]
    n = len(snapshots)
    sims = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            value, _ = cosine_sim_flagged(embs[i], embs[j])
            sims[i, j] = sims[j, i] = value
    margins = []
    for i in range(n):
        same = [sims[i, j] for j in range(n) if j != i and keys[j] == keys[i]]
        other = [sims[i, j] for j in range(n) if keys[j] != keys[i]]
        if same and other:
            margins.append(max(same) - max(other))
    if not margins:
        return 0.0
    return float(np.median(margins))


def sample_pairs(
    snapshots: list[ProgramSnapshot],
    n_pairs: int,
    pos_ratio: float = 0.5,
    seed: int = 0,
) -> list[TrainingPair]:
    """Deterministic balanced pair sampling without duplicate unordered pairs."""
    by_key: dict[str, list[ProgramSnapshot]] = {}
    for s in snapshots:
        by_key.setdefault(s.program_key, []).append(s)
    keys = sorted(by_key)
    multi = [k for k in keys if len(by_key[k]) >= 2]
    n_pos = int(round(n_pairs * pos_ratio))
    n_neg = n_pairs - n_pos
    if n_pos > 0 and not multi:
        raise InsufficientData("no program has two snapshots for positive pairs")
    if n_neg > 0 and len(keys) < 2:
        raise InsufficientData("need at least two programs for negative pairs")

    rng = np.random.default_rng(seed)
    seen: set[frozenset] = set()
    pairs: list[TrainingPair] = []

    def try_add(a: ProgramSnapshot, b: ProgramSnapshot, label: int) -> bool:
        key = frozenset((_snapshot_id(a), _snapshot_id(b)))
        if key in seen:
            return False
        seen.add(key)
        pairs.append(TrainingPair(a, b, label))
        return True

    attempts = 0
    budget = 200 * n_pairs + 200
    got_pos = 0
    while got_pos < n_pos:
        attempts += 1
        if attempts > budget:
            raise InsufficientData("cannot fill positive pair quota without duplicates")
        k = multi[rng.integers(len(multi))]
        i, j = rng.choice(len(by_key[k]), size=2, replace=False)
        if try_add(by_key[k][i], by_key[k][j], +1):
            got_pos += 1
    got_neg = 0
    while got_neg < n_neg:
        attempts += 1
        if attempts > budget:
            raise InsufficientData("cannot fill negative pair quota without duplicates")
        ka, kb = rng.choice(len(keys), size=2, replace=False)
        a = by_key[keys[ka]]
        b = by_key[keys[kb]]
        if try_add(a[rng.integers(len(a))], b[rng.integers(len(b))], -1):
            got_neg += 1
    return pairs


def train(
    snapshots: list[ProgramSnapshot],
    cfg: TrainConfig,
    epochs: int | None = None,
    ps: ParamSet | None = None,
) -> tuple[ParamSet, TrainReport]:
    """Adam-optimized Siamese training loop with early stopping."""
    epochs = cfg.epochs if epochs is None else epochs
    if ps is None:
        ps = init_encoder_params(cfg.encoder_config(), cfg.seed)
    report = TrainReport(seed=cfg.seed, config=cfg.to_dict(), pairs_per_epoch=cfg.pairs_per_epoch)
    cache = SnapshotCache(cfg)
    t_start = time.monotonic()
    best = np.inf
    stale = 0
    best_margin = -np.inf
    best_ps: ParamSet | None = None

    def consider_selection(epoch: int) -> None:
        nonlocal best_margin, best_ps
        margin = snapshot_match_margin(snapshots, ps, cfg, cache)
        report.margin_history.append((epoch, margin))
        log.info("epoch %d: matching margin %.4f", epoch, margin)
        if margin > best_margin:
            best_margin = margin
            best_ps = ps.copy()
            report.selected_epoch = epoch

    for epoch in range(epochs):
        pairs = sample_pairs(snapshots, cfg.pairs_per_epoch, cfg.pos_ratio, cfg.seed + epoch)
        total = 0.0
        for lo in range(0, len(pairs), cfg.batch_size):
            batch = pairs[lo : lo + cfg.batch_size]
            ps.zero_grad()
            loss = pair_loss(batch, ps, cfg, cache)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss {loss} at epoch {epoch}, batch offset {lo}"
                )
            adam_step(ps, lr=cfg.lr)
            total += loss
        mean_loss = total / len(pairs)
        report.epoch_losses.append(mean_loss)
        log.info("epoch %d: mean pair loss %.6f", epoch, mean_loss)
        if cfg.select_margin_every > 0 and (
            (epoch + 1) % cfg.select_margin_every == 0 or epoch == epochs - 1
        ):
            consider_selection(epoch)
        if best - mean_loss < cfg.early_stop_min_delta:
            stale += 1
            if stale >= cfg.early_stop_patience:
                report.stopped_early = True
                break
        else:
            stale = 0
        best = min(best, mean_loss)
    if best_ps is not None:
        ps = best_ps
    report.wall_time = time.monotonic() - t_start
    return ps, report
