"""Acceptance gate: ten end-to-end checks, one summary line each.

The benchmark checks train real models on the standard 50-program corpus and
take several minutes each on one CPU core.
"""

import time

import numpy as np
import pytest

from provmatch import autodiff as ad
from provmatch.bench import BenchConfig, run_fake_protocol, run_unknown_protocol
from provmatch.detection import EmbeddingDatabase, EmbeddingRecord, verdict
from provmatch.encoder import (
    EncoderConfig,
    encode,
    init_encoder_params,
    layer_dense_aggregate,
    node_aggregate,
    path_attention,
)
from provmatch.events import EntityKind, RelationKind, SystemEntity
from provmatch.graphs import ProgramSnapshot, build_snapshots
from provmatch.metapaths import ALL_METAPATHS, compute_contexts, neighbor_set, metapath_edge_weight, rwr_alpha
from provmatch.optim import ParamSet, ParamTape, xavier_init
from provmatch.synth import default_profiles, generate_corpus
from provmatch.training import SnapshotCache, TrainConfig, cosine_sim, pair_loss, sample_pairs, train

P, F, I = EntityKind.PROCESS, EntityKind.FILE, EntityKind.SOCKET
FORK, ACC, CON = RelationKind.FORK, RelationKind.FILE_ACCESS, RelationKind.SOCKET_CONNECT


def check(criterion, ok: bool, label: str):
    criterion(bool(ok), label)
    assert ok, label


def snap(nodes, edges, target=0):
    ents = [SystemEntity(f"id{i}_{n}", k, n, "h1") for i, (n, k) in enumerate(nodes)]
    return ProgramSnapshot("prog", (0, 86400), ents, list(edges), target)


def random_snapshot(rng, n_proc=None, n_file=2, n_sock=2):
    n_proc = n_proc or int(rng.integers(2, 7))
    nodes = [(f"p{i}", P) for i in range(n_proc)]
    nodes += [(f"/f{i}", F) for i in range(n_file)]
    nodes += [(f"s{i}", I) for i in range(n_sock)]
    edges = []
    for u in range(n_proc):
        for v in range(n_proc):
            if u != v and rng.random() < 0.3:
                edges.append((u, v, FORK, int(rng.integers(1, 4))))
        for f in range(n_file):
            if rng.random() < 0.5:
                edges.append((u, n_proc + f, ACC, int(rng.integers(1, 4))))
        for s in range(n_sock):
            if rng.random() < 0.4:
                edges.append((u, n_proc + n_file + s, CON, int(rng.integers(1, 3))))
    if not edges:
        edges = [(0, n_proc, ACC, 1)]
    return snap(nodes, edges)


def numpy_encode(s, X, ps, cfg):
    """Independent straight-line forward pass in plain numpy."""
    contexts = compute_contexts(s, cfg.restart_prob, cfg.rwr_tol, cfg.rwr_max_iter)
    procs = [i for i, e in enumerate(s.nodes) if e.kind is P]
    zs = []
    for i, mp in enumerate(cfg.metapaths):
        h = {v: X[v].astype(np.float64) for v in procs}
        hist = [h[s.target_node]]
        for k in range(1, cfg.layers + 1):
            W = ps[f"mp{i}.layer{k}.W"].value
            b = ps[f"mp{i}.layer{k}.b"].value
            eps = float(ps[f"mp{i}.layer{k}.eps"].value)
            nh = {}
            for v in procs:
                ctx = contexts[(v, mp)]
                agg = (1.0 + eps) * h[v]
                for u, a in zip(ctx.neighbors, ctx.alpha):
                    agg = agg + a * h[u]
                nh[v] = np.maximum(agg @ W + b, 0.0)
            h = nh
            hist.append(h[s.target_node])
        Wd, bd = ps[f"mp{i}.dense.W"].value, ps[f"mp{i}.dense.b"].value
        zs.append(np.maximum(np.concatenate(hist) @ Wd + bd, 0.0))
    qs = [z @ ps["attn.W"].value for z in zs]
    logits = []
    for qi in qs:
        vals = [float(ps["attn.b"].value @ np.concatenate([qi, qj])) for qj in qs]
        logits.append(np.mean([v if v > 0 else cfg.leaky_slope * v for v in vals]))
    e = np.exp(np.asarray(logits) - max(logits))
    beta = e / e.sum()
    return sum(b * z for b, z in zip(beta, zs))


# --- expensive shared fixtures ---

@pytest.fixture(scope="session")
def protocol_results():
    """Both benchmark protocols across three corpus seeds."""
    out = {}
    for seed in (7, 8, 9):
        cfg = BenchConfig(seed=seed)
        t0 = time.monotonic()
        fake = run_fake_protocol(cfg)
        fake["runtime"] = time.monotonic() - t0
        unknown = run_unknown_protocol(cfg)
        out[seed] = {"fake": fake, "unknown": unknown}
    return out


@pytest.fixture(scope="session")
def standard_train_snapshots():
    cfg = BenchConfig()
    profiles = default_profiles(cfg.n_programs, cfg.seed)
    names = {p.name for p in profiles}
    events, _ = generate_corpus(profiles, cfg.days, cfg.seed, cfg.window_length)
    return [s for s in build_snapshots(events, cfg.window_length) if s.program_key in names]


# --- criteria ---

def test_criterion_1_full_model_gradient_integrity(criterion):
    t0 = time.monotonic()
    rng = np.random.default_rng(31)
    snaps = [random_snapshot(rng, n_proc=2, n_file=1, n_sock=1) for _ in range(4)]
    # relabel into two programs x two windows so both pair labels are possible
    snaps = [
        ProgramSnapshot(f"prog{i % 2}", (i * 86400, (i + 1) * 86400), s.nodes, s.edges, s.target_node)
        for i, s in enumerate(snaps)
    ]
    pairs = sample_pairs(snaps, 2, pos_ratio=0.5, seed=1)
    cfg = TrainConfig(hash_dim=8, layers=2, hidden=8, attn_dim=4)
    ps = init_encoder_params(cfg.encoder_config(), 5)
    cache = SnapshotCache(cfg)
    ps.zero_grad()
    pair_loss(pairs, ps, cfg, cache)

    h = 1e-5
    worst = 0.0
    for name in ps.names():
        flat_v = np.atleast_1d(ps[name].value.ravel())
        flat_g = np.atleast_1d(np.asarray(ps[name].grad).ravel())
        for idx in range(flat_v.size):
            orig = flat_v[idx]
            flat_v[idx] = orig + h
            fp = pair_loss(pairs, ps, cfg, accumulate_grads=False)
            flat_v[idx] = orig - h
            fm = pair_loss(pairs, ps, cfg, accumulate_grads=False)
            flat_v[idx] = orig
            numeric = (fp - fm) / (2 * h)
            denom = max(abs(numeric), abs(flat_g[idx]), 1e-6)
            worst = max(worst, abs(numeric - flat_g[idx]) / denom)
    elapsed = time.monotonic() - t0
    check(criterion, worst < 1e-4 and elapsed < 30,
          f"criterion 1: full-model gradient check rel err {worst:.2e} < 1e-4 in {elapsed:.1f}s")


def test_criterion_2_equation_oracles(criterion):
    rng = np.random.default_rng(41)
    worst = 0.0
    cases = 0

    # node aggregation and dense layer fusion on random inputs
    for _ in range(100):
        s = random_snapshot(rng)
        procs = [i for i, e in enumerate(s.nodes) if e.kind is P]
        din, hid = 5, 4
        ps = ParamSet()
        ps.add("mp0.layer1.W", rng.standard_normal((din, hid)))
        ps.add("mp0.layer1.b", rng.standard_normal(hid))
        ps.add("mp0.layer1.eps", np.array(rng.standard_normal()))
        ps.add("mp0.dense.W", rng.standard_normal((din + hid, hid)))
        ps.add("mp0.dense.b", rng.standard_normal(hid))
        H = {v: rng.standard_normal(din) for v in procs}
        v = procs[int(rng.integers(len(procs)))]
        mp = ALL_METAPATHS[int(rng.integers(3))]
        ctx = rwr_alpha(s, v, mp)
        tape = ParamTape(ps)
        got = node_aggregate(s, ctx, {u: ad.constant(H[u]) for u in procs}, tape, 1, 0)
        agg = (1.0 + float(ps["mp0.layer1.eps"].value)) * H[v]
        for u, a in zip(ctx.neighbors, ctx.alpha):
            agg = agg + a * H[u]
        want = np.maximum(agg @ ps["mp0.layer1.W"].value + ps["mp0.layer1.b"].value, 0.0)
        worst = max(worst, float(np.abs(got.value - want).max()))
        x0 = rng.standard_normal(din)
        got_d = layer_dense_aggregate([ad.constant(x0), got], ParamTape(ps), 0)
        want_d = np.maximum(
            np.concatenate([x0, want]) @ ps["mp0.dense.W"].value + ps["mp0.dense.b"].value, 0.0
        )
        worst = max(worst, float(np.abs(got_d.value - want_d).max()))
        cases += 2

    # path attention on random path embeddings
    cfg_a = EncoderConfig(input_dim=5, layers=1, hidden=6, attn_dim=3)
    for _ in range(100):
        ps = ParamSet()
        ps.add("attn.W", rng.standard_normal((6, 3)))
        ps.add("attn.b", rng.standard_normal(6))
        zs_np = [rng.standard_normal(6) for _ in range(3)]
        beta = path_attention([ad.constant(z) for z in zs_np], ParamTape(ps), cfg_a)
        qs = [z @ ps["attn.W"].value for z in zs_np]
        logits = []
        for qi in qs:
            vals = [float(ps["attn.b"].value @ np.concatenate([qi, qj])) for qj in qs]
            logits.append(np.mean([v if v > 0 else 0.2 * v for v in vals]))
        e = np.exp(np.asarray(logits) - max(logits))
        worst = max(worst, float(np.abs(beta.value - e / e.sum()).max()))
        cases += 1

    # whole encoder against the straight-line oracle
    for trial in range(100):
        s = random_snapshot(rng)
        cfg = EncoderConfig(input_dim=5, layers=int(rng.integers(1, 3)), hidden=4, attn_dim=3)
        ps = init_encoder_params(cfg, trial)
        X = rng.standard_normal((len(s.nodes), 5))
        worst = max(worst, float(np.abs(encode(s, X, ps, cfg) - numpy_encode(s, X, ps, cfg)).max()))
        cases += 1

    check(criterion, worst <= 1e-10 and cases >= 400,
          f"criterion 2: encoder equation oracles, {cases} cases, max abs err {worst:.2e} <= 1e-10")


def test_criterion_3_rwr_against_linear_solve(criterion):
    rng = np.random.default_rng(51)
    worst = 0.0
    worst_sum = 0.0
    graphs = 0
    while graphs < 120:
        s = random_snapshot(rng, n_proc=int(rng.integers(2, 7)), n_file=2, n_sock=1)
        if len(s.nodes) > 10:
            continue
        graphs += 1
        procs = [i for i, e in enumerate(s.nodes) if e.kind is P]
        v = procs[int(rng.integers(len(procs)))]
        for m in ALL_METAPATHS:
            ctx = rwr_alpha(s, v, m)
            if not ctx.neighbors:
                continue
            worst_sum = max(worst_sum, abs(float(ctx.alpha.sum()) - 1.0))
            members = sorted([v] + ctx.neighbors, key=s.canonical_key)
            pos = {node: i for i, node in enumerate(members)}
            n = len(members)
            W = np.zeros((n, n))
            for i in range(n):
                for j in range(n):
                    if i != j:
                        W[i, j] = metapath_edge_weight(s, members[i], members[j], m)
            e = np.zeros(n)
            e[pos[v]] = 1.0
            Pm = np.array([W[i] / W[i].sum() if W[i].sum() > 0 else e for i in range(n)])
            pi = np.linalg.solve(np.eye(n) - 0.85 * Pm.T, 0.15 * e)
            raw = np.array([pi[pos[u]] for u in ctx.neighbors])
            worst = max(worst, float(np.abs(ctx.alpha - raw / raw.sum()).max()))
    check(criterion, worst < 1e-8 and worst_sum < 1e-9 and graphs >= 100,
          f"criterion 3: RWR vs dense solve on {graphs} graphs, max err {worst:.2e} < 1e-8, "
          f"sum dev {worst_sum:.2e} < 1e-9")


def test_criterion_4_normalization_properties(criterion):
    rng = np.random.default_rng(61)
    ok = True

    # cosine bounds and scale invariance
    for _ in range(1000):
        d = int(rng.integers(2, 10))
        a, b = rng.standard_normal(d), rng.standard_normal(d)
        c = cosine_sim(a, b)
        ok = ok and -1.0 <= c <= 1.0
        ok = ok and abs(cosine_sim(3.7 * a, b) - c) < 1e-12
        ok = ok and abs(cosine_sim(a, 0.04 * b) - c) < 1e-12

    # path-attention weights sum to one
    cfg_a = EncoderConfig(input_dim=4, layers=1, hidden=5, attn_dim=3)
    for _ in range(1000):
        ps = ParamSet()
        ps.add("attn.W", rng.standard_normal((5, 3)))
        ps.add("attn.b", rng.standard_normal(6))
        zs = [ad.constant(rng.standard_normal(5)) for _ in range(3)]
        beta = path_attention(zs, ParamTape(ps), cfg_a).value
        ok = ok and abs(beta.sum() - 1.0) < 1e-12 and np.all(beta >= 0)

    # softmax shift invariance
    for _ in range(1000):
        x = rng.standard_normal(int(rng.integers(2, 8))) * 10 ** rng.integers(0, 4)
        shift = float(rng.standard_normal() * 100)
        y1 = ad.softmax(ad.constant(x)).value
        y2 = ad.softmax(ad.constant(x + shift)).value
        ok = ok and np.allclose(y1, y2, atol=1e-9) and abs(y1.sum() - 1.0) < 1e-12

    # squared pair loss bounded by 4 per pair
    for _ in range(1000):
        n_pairs = int(rng.integers(1, 6))
        terms = []
        for _ in range(n_pairs):
            a = ad.constant(rng.standard_normal(4))
            b = ad.constant(rng.standard_normal(4))
            y = float(rng.choice([-1.0, 1.0]))
            terms.append(ad.square(ad.add_const(ad.cosine(a, b), -y)))
        total = float(ad.addn(terms).value)
        ok = ok and 0.0 <= total <= 4.0 * n_pairs + 1e-12

    check(criterion, ok, "criterion 4: cosine/softmax/attention/loss bound properties, 1000 cases each")


def test_criterion_5_permutation_and_depth_invariance(criterion):
    rng = np.random.default_rng(71)
    perm_ok = True
    for trial in range(50):
        s = random_snapshot(rng)
        cfg = EncoderConfig(input_dim=5, layers=2, hidden=4, attn_dim=3)
        ps = init_encoder_params(cfg, trial)
        X = rng.standard_normal((len(s.nodes), 5))
        perm = list(rng.permutation(len(s.nodes)))
        inv = {old: new for new, old in enumerate(perm)}
        s2 = ProgramSnapshot(
            s.program_key, s.window, [s.nodes[old] for old in perm],
            [(inv[a], inv[b], rel, w) for a, b, rel, w in s.edges], inv[s.target_node],
        )
        perm_ok = perm_ok and np.array_equal(encode(s, X, ps, cfg), encode(s2, X[perm], ps, cfg))

    depth_ok = True
    for trial in range(50):
        K = int(rng.integers(1, 4))
        length = K + int(rng.integers(1, 3))  # strictly beyond the horizon
        nodes = [(f"p{i}", P) for i in range(length + 1)]
        edges = [(i, i + 1, FORK, 1) for i in range(length)]
        s = snap(nodes, edges)
        cfg = EncoderConfig(input_dim=5, layers=K, hidden=4, attn_dim=3)
        ps = init_encoder_params(cfg, trial)
        X = rng.standard_normal((length + 1, 5))
        X_far = X.copy()
        X_far[length] += 10.0  # node at distance length > K from the target
        depth_ok = depth_ok and np.array_equal(encode(s, X, ps, cfg), encode(s, X_far, ps, cfg))

    check(criterion, perm_ok and depth_ok,
          "criterion 5: bit-level permutation invariance and K-hop locality, 50 snapshots each")


def test_criterion_6_fake_program_detection(criterion, protocol_results):
    r = protocol_results[7]["fake"]
    auc = r["matcher"].auc
    check(criterion, auc >= 0.90 and r["runtime"] < 600,
          f"criterion 6: fake-program AUC {auc:.3f} >= 0.90 "
          f"({r['n_fakes']} fakes / {r['n_test']} snapshots, {r['runtime']:.0f}s < 600s)")


def test_criterion_7_unknown_program_detection(criterion, protocol_results):
    r = protocol_results[7]["unknown"]
    auc = r["matcher"].auc
    check(criterion, auc >= 0.85,
          f"criterion 7: unknown-program AUC {auc:.3f} >= 0.85 "
          f"({r['n_unknown']} unknown / {r['n_test']} snapshots)")


def test_criterion_8_matcher_beats_baseline(criterion, protocol_results):
    margins = []
    ok = True
    for seed in (7, 8, 9):
        for proto in ("fake", "unknown"):
            r = protocol_results[seed][proto]
            ok = ok and r["matcher"].auc > r["baseline"].auc
            margins.append(f"{proto}@{seed} {r['matcher'].auc:.3f}>{r['baseline'].auc:.3f}")
    check(criterion, ok, "criterion 8: matcher AUC > baseline AUC on both protocols, "
          "seeds 7/8/9 (" + ", ".join(margins) + ")")


def test_criterion_9_training_dynamics(criterion, standard_train_snapshots):
    cfg = BenchConfig().train
    long_cfg = TrainConfig(**{**cfg.to_dict(), "epochs": 50, "early_stop_patience": 100})
    _, report = train(standard_train_snapshots, long_cfg)
    first, last = report.epoch_losses[0], report.epoch_losses[-1]

    short_cfg = TrainConfig(**{**cfg.to_dict(), "epochs": 3})
    ps1, r1 = train(standard_train_snapshots, short_cfg)
    ps2, r2 = train(standard_train_snapshots, short_cfg)
    identical = r1.epoch_losses == r2.epoch_losses and all(
        np.array_equal(ps1[name].value, ps2[name].value) for name in ps1.names()
    )
    check(criterion, last < 0.5 * first and identical,
          f"criterion 9: epoch-50 loss {last:.3f} < 50% of epoch-1 loss {first:.3f}; "
          "fixed-seed training is bit-identical")


def test_criterion_10_detection_semantics(criterion):
    rng = np.random.default_rng(81)
    ok = True
    for _ in range(120):
        dim = int(rng.integers(2, 6))
        db = EmbeddingDatabase("v1", dim)
        n_programs = int(rng.integers(2, 7))
        embs = {}
        for p in range(n_programs):
            key = f"p{p}.exe"
            embs[key] = []
            for w in range(int(rng.integers(1, 4))):
                e = np.round(rng.standard_normal(dim), 1)  # rounding forces ties
                db.add(EmbeddingRecord(key, (w, w + 1), e, "v1"))
                embs[key].append(e)
        q = np.round(rng.standard_normal(dim), 1)
        thr = float(np.round(rng.uniform(-1, 1), 2))
        k = int(rng.integers(1, 5))
        v = verdict(db, q, thr, k=k)

        # brute-force oracle: max over snapshots, sort by (-score, key), strict below
        want = {key: max(cosine_sim(q, e) for e in es) for key, es in embs.items()}
        ranked = sorted(want.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        ok = ok and v.alert == (max(want.values()) < thr)
        ok = ok and [m[0] for m in v.matches] == [r[0] for r in ranked]
        ok = ok and all(abs(a[1] - b[1]) < 1e-12 for a, b in zip(v.matches, ranked))
    check(criterion, ok,
          "criterion 10: verdict threshold boundary, max-over-snapshots, and top-k "
          "tie-breaking match brute force on 120 random databases")
