"""Benchmark harnesses: fake-ID and unknown-program detection protocols,
plus the raw-feature MLP baseline used for relative-ordering comparisons."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .detection import EmbeddingDatabase, register, score_program, threshold_from_scores
from .errors import InsufficientData, SingleClass
from .graphs import DEFAULT_WINDOW, ProgramSnapshot, build_snapshots, snapshot_features
from .metrics import EvalResult, evaluate
from .optim import ParamSet, ParamTape, adam_step, xavier_init
from .synth import (
    default_profiles,
    generate_corpus,
    seed_fake_programs,
    snapshot_raw_features,
    unknown_split,
)
from .training import TrainConfig, train
from .encoder import encode

log = logging.getLogger(__name__)


@dataclass
class BenchConfig:
    """The standard desk-scale corpus and model settings."""

    n_programs: int = 50
    days: int = 10
    train_days: int = 8
    n_fakes: int = 20
    window_length: int = DEFAULT_WINDOW
    seed: int = 7
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        hash_dim=128, layers=2, hidden=64, attn_dim=16,
        epochs=100, pairs_per_epoch=256, batch_size=32, lr=3e-4,
        pos_ratio=0.65, early_stop_patience=300, select_margin_every=10,
    ))


# --- raw-feature MLP baseline ---

def _stratified_split(labels: np.ndarray, rng: np.random.Generator,
                      groups: list | None) -> tuple[np.ndarray, np.ndarray]:
    n = len(labels)
    if groups is None:
        train_mask = np.zeros(n, dtype=bool)
        for cls in (0, 1):
            idx = np.flatnonzero(labels == cls)
            rng.shuffle(idx)
            train_mask[idx[: len(idx) // 2]] = True
        return train_mask, ~train_mask
    # group-aware: keep all samples of one group on the same side
    by_group: dict = {}
    for i, g in enumerate(groups):
        by_group.setdefault(g, []).append(i)
    group_label = {g: int(round(np.mean(labels[ix]))) for g, ix in by_group.items()}
    train_mask = np.zeros(n, dtype=bool)
    for cls in (0, 1):
        gs = sorted(g for g, lab in group_label.items() if lab == cls)
        rng.shuffle(gs)
        for g in gs[: len(gs) // 2]:
            train_mask[by_group[g]] = True
    return train_mask, ~train_mask


def mlp_baseline(
    features: np.ndarray,
    labels,
    seed: int = 0,
    hidden: int = 16,
    epochs: int = 400,
    lr: float = 1e-2,
    groups: list | None = None,
) -> EvalResult:
    """Two-layer perceptron on raw feature vectors: trains on a deterministic
    stratified half, evaluates on the held-out half."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(features) != len(labels) or features.ndim != 2:
        raise InsufficientData("features must be a 2-D array matching labels")
    if not (np.any(labels == 1) and np.any(labels == 0)):
        raise SingleClass("baseline needs both classes")

    rng = np.random.default_rng(seed)
    train_mask, test_mask = _stratified_split(labels, rng, groups)
    if not (np.any(labels[train_mask] == 1) and np.any(labels[train_mask] == 0)
            and np.any(labels[test_mask] == 1) and np.any(labels[test_mask] == 0)):
        raise SingleClass("split left a side with one class")

    mu = features[train_mask].mean(axis=0)
    sd = features[train_mask].std(axis=0)
    sd[sd < 1e-9] = 1.0
    x_train = (features[train_mask] - mu) / sd
    x_test = (features[test_mask] - mu) / sd
    y_train = labels[train_mask].astype(np.float64).reshape(-1, 1)

    ps = ParamSet()
    ps.add("W1", xavier_init((features.shape[1], hidden), rng))
    ps.add("b1", np.zeros(hidden))
    ps.add("W2", xavier_init((hidden, 1), rng))
    ps.add("b2", np.zeros(1))

    for _ in range(epochs):
        ps.zero_grad()
        tape = ParamTape(ps)
        h = ad.relu(ad.linear(ad.constant(x_train), tape.node("W1"), tape.node("b1")))
        pred = ad.linear(h, tape.node("W2"), tape.node("b2"))
        loss = ad.smul(1.0 / len(x_train),
                       ad.vsum(ad.square(ad.sub(pred, ad.constant(y_train)))))
        tape.backward(loss)
        adam_step(ps, lr=lr)

    h = np.maximum(x_test @ ps["W1"].value + ps["b1"].value, 0.0)
    scores = (h @ ps["W2"].value + ps["b2"].value).ravel()
    return evaluate(scores, labels[test_mask], threshold=0.5)


# --- protocol harnesses ---

def _split_by_day(events, train_days: int, window_length: int):
    t0 = (min(ev.timestamp for ev in events) // window_length) * window_length
    boundary = t0 + train_days * window_length
    return (
        [ev for ev in events if ev.timestamp < boundary],
        [ev for ev in events if ev.timestamp >= boundary],
    )


def _train_and_index(train_snaps: list[ProgramSnapshot], cfg: TrainConfig):
    ps, report = train(train_snaps, cfg)
    enc_cfg = cfg.encoder_config()
    db = EmbeddingDatabase("bench", cfg.hidden)
    for s in train_snaps:
        register(db, s, ps, enc_cfg, cfg.hash_dim)
    return ps, enc_cfg, db, report


def _mean_train_profile(train_snaps) -> dict[str, np.ndarray]:
    acc: dict[str, list[np.ndarray]] = {}
    for s in train_snaps:
        acc.setdefault(s.program_key, []).append(snapshot_raw_features(s))
    return {k: np.mean(v, axis=0) for k, v in acc.items()}


def run_fake_protocol(cfg: BenchConfig | None = None) -> dict:
    """Seed fake IDs into the test days and score each test snapshot by its
    similarity to the program it claims to be. Higher detection score =
    more likely fake."""
    cfg = cfg or BenchConfig()
    t_start = time.monotonic()
    profiles = default_profiles(cfg.n_programs, cfg.seed)
    names = {p.name.lower() for p in profiles}
    events, _ = generate_corpus(profiles, cfg.days, cfg.seed, cfg.window_length)
    train_events, test_events = _split_by_day(events, cfg.train_days, cfg.window_length)
    test_events, fake_labels = seed_fake_programs(
        test_events, cfg.n_fakes, cfg.seed + 1, cfg.window_length, eligible=names
    )
    fake_set = {(d["claimed_key"], tuple(d["window"])) for d in fake_labels}

    # helper child processes are context, not detection targets
    train_snaps = [
        s for s in build_snapshots(train_events, cfg.window_length)
        if s.program_key in names
    ]
    test_snaps = [
        s for s in build_snapshots(test_events, cfg.window_length)
        if s.program_key in names
    ]
    ps, enc_cfg, db, report = _train_and_index(train_snaps, cfg.train)

    db_keys = {rec.program_key for rec in db.records}
    profile_mean = _mean_train_profile(train_snaps)
    scores, labels, feats = [], [], []
    for s in test_snaps:
        if s.program_key not in db_keys:
            continue
        emb = encode(s, snapshot_features(s, cfg.train.hash_dim), ps, enc_cfg)
        sim = score_program(db, emb)[s.program_key]
        scores.append(-sim)
        labels.append(1 if (s.program_key, s.window) in fake_set else 0)
        raw = snapshot_raw_features(s)
        claimed = profile_mean[s.program_key]
        feats.append(np.concatenate([raw, claimed, np.abs(raw - claimed)]))

    # operating threshold from benign self-match scores on the training side
    self_scores = [
        score_program(db, rec.embedding)[rec.program_key] for rec in db.records
    ]
    op_threshold = -threshold_from_scores(self_scores, target_tpr=0.99)

    matcher = evaluate(scores, labels, threshold=op_threshold)
    baseline = mlp_baseline(np.asarray(feats), labels, seed=cfg.seed)
    log.info("fake protocol: matcher AUC %.4f, baseline AUC %.4f", matcher.auc, baseline.auc)
    return {
        "protocol": "fake",
        "matcher": matcher,
        "baseline": baseline,
        "n_test": len(labels),
        "n_fakes": int(sum(labels)),
        "train_report": report,
        "wall_time": time.monotonic() - t_start,
    }


def run_unknown_protocol(cfg: BenchConfig | None = None) -> dict:
    """Train on half the programs only; unknown-program snapshots should fall
    below every known program in similarity. Higher score = more anomalous."""
    cfg = cfg or BenchConfig()
    t_start = time.monotonic()
    profiles = default_profiles(cfg.n_programs, cfg.seed)
    names = [p.name.lower() for p in profiles]
    known, unknown = unknown_split(names, cfg.seed + 2)
    known_set, unknown_set = set(known), set(unknown)

    events, _ = generate_corpus(profiles, cfg.days, cfg.seed, cfg.window_length)
    train_events, test_events = _split_by_day(events, cfg.train_days, cfg.window_length)
    train_snaps = [
        s for s in build_snapshots(train_events, cfg.window_length)
        if s.program_key in known_set
    ]
    test_snaps = [
        s for s in build_snapshots(test_events, cfg.window_length)
        if s.program_key in known_set | unknown_set
    ]
    # margin selection optimizes identity verification; novelty rejection of
    # never-trained programs keeps improving to the end, so train fully here
    train_cfg = replace(cfg.train, select_margin_every=0)
    ps, enc_cfg, db, report = _train_and_index(train_snaps, train_cfg)

    scores, labels, feats, groups = [], [], [], []
    for s in test_snaps:
        emb = encode(s, snapshot_features(s, cfg.train.hash_dim), ps, enc_cfg)
        best = max(score_program(db, emb).values())
        scores.append(-best)
        labels.append(1 if s.program_key in unknown_set else 0)
        feats.append(snapshot_raw_features(s))
        groups.append(s.program_key)

    self_scores = [
        score_program(db, rec.embedding)[rec.program_key] for rec in db.records
    ]
    op_threshold = -threshold_from_scores(self_scores, target_tpr=0.99)

    matcher = evaluate(scores, labels, threshold=op_threshold)
    baseline = mlp_baseline(np.asarray(feats), labels, seed=cfg.seed, groups=groups)
    log.info("unknown protocol: matcher AUC %.4f, baseline AUC %.4f", matcher.auc, baseline.auc)
    return {
        "protocol": "unknown",
        "matcher": matcher,
        "baseline": baseline,
        "n_test": len(labels),
        "n_unknown": int(sum(labels)),
        "train_report": report,
        "wall_time": time.monotonic() - t_start,
    }
