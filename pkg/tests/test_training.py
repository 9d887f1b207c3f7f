"""Siamese pair training: similarity, pair loss, sampling, and the loop."""

import numpy as np
import pytest

from provmatch.encoder import init_encoder_params
from provmatch.errors import InsufficientData
from provmatch.events import EntityKind, RelationKind, SystemEntity, SystemEvent
from provmatch.graphs import build_snapshots
from provmatch.optim import ParamTape
from provmatch.synth import default_profiles, generate_corpus
from provmatch.training import (
    SnapshotCache,
    TrainConfig,
    TrainingPair,
    cosine_sim,
    pair_loss,
    sample_pairs,
    snapshot_match_margin,
    train,
)

P, F = EntityKind.PROCESS, EntityKind.FILE
ACC = RelationKind.FILE_ACCESS

SMALL = TrainConfig(hash_dim=8, layers=1, hidden=6, attn_dim=4, seed=3)


def corpus_snapshots(n_programs=4, days=3, seed=2):
    profiles = default_profiles(n_programs, seed)
    events, _ = generate_corpus(profiles, days, seed)
    names = {p.name for p in profiles}
    return [s for s in build_snapshots(events) if s.program_key in names]


def two_snapshots_same_program():
    p = SystemEntity("p1", P, "p1.exe", "h1")
    f = SystemEntity("/a", F, "/a", "h1")
    events = [SystemEvent(1, p, f, ACC), SystemEvent(86_500, p, f, ACC)]
    snaps = build_snapshots(events)
    assert len(snaps) == 2
    return snaps


# --- cosine similarity ---

def test_cosine_sim_examples():
    assert cosine_sim(np.array([1.0, 0.0]), np.array([3.0, 0.0])) == pytest.approx(1.0)
    assert cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)
    assert cosine_sim(np.array([1.0, 1.0]), np.array([-1.0, -1.0])) == pytest.approx(-1.0)


def test_cosine_sim_degenerate_and_clipped():
    assert cosine_sim(np.zeros(3), np.ones(3)) == 0.0
    v = np.array([1e-200, 1e-200])
    assert cosine_sim(v, v) == 0.0  # below the norm floor counts as degenerate
    out = cosine_sim(np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    assert -1.0 <= out <= 1.0


# --- pair loss ---

def test_pair_loss_identical_pair_labels():
    s1, s2 = two_snapshots_same_program()
    ps = init_encoder_params(SMALL.encoder_config(), 3)
    # the two windows have identical structure, so sim(s1, s2) == 1
    same = pair_loss([TrainingPair(s1, s2, +1)], ps, SMALL, accumulate_grads=False)
    assert same == pytest.approx(0.0, abs=1e-12)
    opposite = pair_loss([TrainingPair(s1, s2, -1)], ps, SMALL, accumulate_grads=False)
    assert opposite == pytest.approx(4.0, abs=1e-12)


def test_pair_loss_is_sum_over_batch():
    s1, s2 = two_snapshots_same_program()
    ps = init_encoder_params(SMALL.encoder_config(), 3)
    one = pair_loss([TrainingPair(s1, s2, -1)], ps, SMALL, accumulate_grads=False)
    three = pair_loss([TrainingPair(s1, s2, -1)] * 3, ps, SMALL, accumulate_grads=False)
    assert three == pytest.approx(3 * one, rel=1e-12)


def test_pair_loss_rejects_empty_batch():
    ps = init_encoder_params(SMALL.encoder_config(), 3)
    with pytest.raises(InsufficientData):
        pair_loss([], ps, SMALL)


def test_pair_loss_gradients_match_finite_differences():
    snaps = corpus_snapshots()
    pairs = sample_pairs(snaps, 4, 0.5, seed=1)
    cfg = SMALL
    ps = init_encoder_params(cfg.encoder_config(), 5)
    cache = SnapshotCache(cfg)
    ps.zero_grad()
    pair_loss(pairs, ps, cfg, cache)

    h = 1e-5
    rng = np.random.default_rng(0)
    checked = 0
    for name in ps.names():
        flat_v = np.atleast_1d(ps[name].value.ravel())
        flat_g = np.atleast_1d(np.asarray(ps[name].grad).ravel())
        # spot-check a few coordinates of every tensor
        for idx in rng.choice(flat_v.size, size=min(3, flat_v.size), replace=False):
            orig = flat_v[idx]
            flat_v[idx] = orig + h
            fp = pair_loss(pairs, ps, cfg, accumulate_grads=False)
            flat_v[idx] = orig - h
            fm = pair_loss(pairs, ps, cfg, accumulate_grads=False)
            flat_v[idx] = orig
            numeric = (fp - fm) / (2 * h)
            denom = max(abs(numeric), abs(flat_g[idx]), 1e-6)
            assert abs(numeric - flat_g[idx]) / denom < 1e-4, name
            checked += 1
    assert checked >= 30


# --- pair sampling ---

def test_sample_pairs_deterministic():
    snaps = corpus_snapshots()
    a = sample_pairs(snaps, 12, 0.5, seed=9)
    b = sample_pairs(snaps, 12, 0.5, seed=9)
    ids = lambda ps: [(p.g1.program_key, p.g1.window, p.g2.program_key, p.g2.window, p.label) for p in ps]
    assert ids(a) == ids(b)
    c = sample_pairs(snaps, 12, 0.5, seed=10)
    assert ids(a) != ids(c)


def test_sample_pairs_quota_and_labels():
    snaps = corpus_snapshots()
    for ratio, n in ((0.5, 10), (0.75, 8), (0.0, 6), (1.0, 4)):
        pairs = sample_pairs(snaps, n, ratio, seed=2)
        assert len(pairs) == n
        n_pos = sum(1 for p in pairs if p.label == +1)
        assert n_pos == int(round(n * ratio))
        for p in pairs:
            assert p.label in (+1, -1)
            same = p.g1.program_key == p.g2.program_key
            assert same == (p.label == +1)


def test_sample_pairs_no_duplicate_unordered_pairs():
    snaps = corpus_snapshots(n_programs=5, days=4)
    pairs = sample_pairs(snaps, 30, 0.5, seed=0)
    seen = {
        frozenset([(p.g1.program_key, p.g1.window), (p.g2.program_key, p.g2.window)])
        for p in pairs
    }
    assert len(seen) == 30


def test_sample_pairs_insufficient_data():
    s1, s2 = two_snapshots_same_program()
    # one program only: negatives impossible
    with pytest.raises(InsufficientData):
        sample_pairs([s1, s2], 4, 0.5, seed=0)
    # single snapshot per program: positives impossible
    snaps = corpus_snapshots(n_programs=3, days=2)
    singles = []
    seen = set()
    for s in snaps:
        if s.program_key not in seen:
            seen.add(s.program_key)
            singles.append(s)
    with pytest.raises(InsufficientData):
        sample_pairs(singles, 4, 0.5, seed=0)


# --- training loop ---

def test_train_zero_epochs_returns_initial_params():
    snaps = corpus_snapshots()
    ps, report = train(snaps, SMALL, epochs=0)
    init = init_encoder_params(SMALL.encoder_config(), SMALL.seed)
    assert report.epoch_losses == []
    for name in init.names():
        assert np.array_equal(ps[name].value, init[name].value)


def test_train_deterministic_given_seed():
    snaps = corpus_snapshots()
    cfg = TrainConfig(hash_dim=8, layers=1, hidden=6, attn_dim=4,
                      epochs=2, pairs_per_epoch=8, batch_size=4, seed=11)
    ps1, r1 = train(snaps, cfg)
    ps2, r2 = train(snaps, cfg)
    assert r1.epoch_losses == r2.epoch_losses
    for name in ps1.names():
        assert np.array_equal(ps1[name].value, ps2[name].value)


def test_train_loss_decreases_substantially():
    snaps = corpus_snapshots(n_programs=20, days=4, seed=6)
    cfg = TrainConfig(hash_dim=16, layers=1, hidden=16, attn_dim=8,
                      epochs=50, pairs_per_epoch=32, batch_size=16,
                      lr=3e-3, seed=1, early_stop_patience=100)
    _, report = train(snaps, cfg)
    assert report.epoch_losses[-1] < 0.5 * report.epoch_losses[0], report.epoch_losses


def test_train_early_stopping_flag():
    s1, s2 = two_snapshots_same_program()
    # positives only on an identical pair: loss is exactly 0 every epoch
    cfg = TrainConfig(hash_dim=8, layers=1, hidden=6, attn_dim=4,
                      epochs=30, pairs_per_epoch=1, batch_size=1,
                      pos_ratio=1.0, early_stop_patience=2)
    _, report = train([s1, s2], cfg)
    assert report.stopped_early
    assert len(report.epoch_losses) < 30


def test_match_margin_bounds_and_degenerate_input():
    snaps = corpus_snapshots()
    ps = init_encoder_params(SMALL.encoder_config(), 3)
    m = snapshot_match_margin(snaps, ps, SMALL)
    assert -2.0 <= m <= 2.0
    # margin needs at least one program with two snapshots
    singles = []
    seen = set()
    for s in snaps:
        if s.program_key not in seen:
            seen.add(s.program_key)
            singles.append(s)
    assert snapshot_match_margin(singles, ps, SMALL) == 0.0


def test_margin_selection_returns_best_epoch_params():
    snaps = corpus_snapshots()
    cfg = TrainConfig(hash_dim=8, layers=1, hidden=6, attn_dim=4,
                      epochs=4, pairs_per_epoch=8, batch_size=4, seed=2,
                      early_stop_patience=100, select_margin_every=1)
    ps, report = train(snaps, cfg)
    assert len(report.margin_history) == 4
    best_epoch, best_margin = max(report.margin_history, key=lambda em: em[1])
    assert report.selected_epoch == best_epoch
    # the returned parameters reproduce the best recorded margin exactly
    assert snapshot_match_margin(snaps, ps, cfg) == best_margin


def test_train_report_contents():
    snaps = corpus_snapshots()
    cfg = TrainConfig(hash_dim=8, layers=1, hidden=6, attn_dim=4,
                      epochs=2, pairs_per_epoch=6, batch_size=3, seed=4)
    _, report = train(snaps, cfg)
    d = report.to_dict()
    assert d["pairs_per_epoch"] == 6
    assert d["seed"] == 4
    assert d["config"]["hidden"] == 6
    assert len(d["epoch_losses"]) == 2
    assert d["wall_time"] > 0
