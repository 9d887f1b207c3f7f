"""Command-line surface for the detection pipeline.

Subcommands: ingest, build-graphs, gen-synth, train, embed, detect, evaluate.
Each is a thin deterministic wrapper over one module operation; errors exit
nonzero with a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import RunConfig
from .detection import EmbeddingDatabase, register, verdict
from .encoder import EncoderConfig, encode
from .errors import ConfigError, ProvMatchError
from .events import read_events, write_events
from .graphs import build_snapshots, read_snapshots, snapshot_features, write_snapshots
from .metrics import evaluate, write_eval_result
from .optim import load_checkpoint, save_checkpoint
from .plots import save_loss_figure, save_roc_figure
from .synth import default_profiles, generate_corpus, seed_fake_programs
from .training import TrainConfig, train


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file (CLI flags override it)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hash-dim", type=int, dest="hash_dim")
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--attn-dim", type=int, dest="attn_dim")
    p.add_argument("--restart-prob", type=float, dest="restart_prob")


def _resolve(args: argparse.Namespace) -> RunConfig:
    keys = RunConfig().to_dict().keys()
    overrides = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    return RunConfig.resolve(getattr(args, "config", None), overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="provmatch",
        description="Program behavior matching over system provenance graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an event log into canonical JSONL")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--output", required=True, help="canonical events JSONL")
    p.add_argument("--report", help="ingestion report JSON path")
    _common_flags(p)

    p = sub.add_parser("build-graphs", help="aggregate events into snapshots")
    p.add_argument("--events", required=True)
    p.add_argument("--output", required=True, help="snapshot JSONL path")
    p.add_argument("--window-length", type=int, dest="window_length")
    p.add_argument("--min-edge-weight", type=int, dest="min_edge_weight")
    _common_flags(p)

    p = sub.add_parser("gen-synth", help="generate a synthetic corpus")
    p.add_argument("--programs", type=int, default=50)
    p.add_argument("--days", type=int, default=10)
    p.add_argument("--fakes", type=int, default=0)
    p.add_argument("--events", required=True, help="output events JSONL")
    p.add_argument("--ledger", required=True, help="output ledger JSON")
    p.add_argument("--labels", help="output fake-program labels JSONL (with --fakes)")
    p.add_argument("--window-length", type=int, dest="window_length")
    _common_flags(p)

    p = sub.add_parser("train", help="train the Siamese graph matcher")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report", help="training report JSON path")
    p.add_argument("--loss-figure", help="render per-epoch loss curve to this image")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--pairs-per-epoch", type=int, dest="pairs_per_epoch")
    p.add_argument("--pos-ratio", type=float, dest="pos_ratio")
    _model_flags(p)
    _common_flags(p)

    p = sub.add_parser("embed", help="add snapshot embeddings to a database")
    p.add_argument("--snapshots", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--db", required=True, help="database path (created if absent)")
    p.add_argument("--model-version", default="v1")
    _common_flags(p)

    p = sub.add_parser("detect", help="score query snapshots against the database")
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True, help="query snapshots JSONL")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--output", help="verdict JSONL (default stdout)")
    _common_flags(p)

    p = sub.add_parser("evaluate", help="compute AUC/F-1/ACC and render the ROC")
    p.add_argument("--scores", help="CSV with header score,label")
    p.add_argument("--verdicts", help="verdict JSONL from `detect`")
    p.add_argument("--labels", help="fake-program labels JSONL (with --verdicts)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out-json", required=True)
    p.add_argument("--roc-csv")
    p.add_argument("--roc-figure")
    _common_flags(p)

    return parser


def _encoder_from_checkpoint(path: str):
    ps, meta = load_checkpoint(path)
    try:
        enc_cfg = EncoderConfig.from_dict(meta["encoder"])
        hash_dim = meta["hash_dim"]
    except KeyError as exc:
        raise ConfigError(f"checkpoint {path} lacks config field {exc}")
    return ps, enc_cfg, hash_dim


def _cmd_ingest(args) -> int:
    events, report = read_events(args.input, args.format)
    write_events(iter(events), args.output)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    print(json.dumps(report.to_dict()))
    return 0


def _cmd_build_graphs(args) -> int:
    cfg = _resolve(args)
    events, _ = read_events(args.events, "jsonl")
    snaps = build_snapshots(events, cfg.window_length, cfg.min_edge_weight)
    write_snapshots(snaps, args.output)
    print(json.dumps({"snapshots": len(snaps), "config": cfg.to_dict()}))
    return 0


def _cmd_gen_synth(args) -> int:
    cfg = _resolve(args)
    profiles = default_profiles(args.programs, cfg.seed)
    events, ledger = generate_corpus(profiles, args.days, cfg.seed, cfg.window_length)
    labels = []
    if args.fakes:
        events, labels = seed_fake_programs(events, args.fakes, cfg.seed + 1, cfg.window_length)
    write_events(iter(events), args.events)
    ledger["config"] = cfg.to_dict()
    with open(args.ledger, "w", encoding="utf-8") as fh:
        json.dump(ledger, fh, indent=2)
    if args.labels:
        with open(args.labels, "w", encoding="utf-8") as fh:
            for entry in labels:
                fh.write(json.dumps(entry) + "\n")
    print(json.dumps({"events": len(events), "fakes": len(labels)}))
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve(args)
    snaps = read_snapshots(args.snapshots)
    train_cfg = TrainConfig(
        hash_dim=cfg.hash_dim,
        layers=cfg.layers,
        hidden=cfg.hidden,
        attn_dim=cfg.attn_dim,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        pairs_per_epoch=cfg.pairs_per_epoch,
        pos_ratio=cfg.pos_ratio,
        seed=cfg.seed,
        restart_prob=cfg.restart_prob,
    )
    ps, report = train(snaps, train_cfg)
    save_checkpoint(
        args.checkpoint,
        ps,
        {
            "encoder": train_cfg.encoder_config().to_dict(),
            "hash_dim": cfg.hash_dim,
            "run_config": cfg.to_dict(),
        },
    )
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    if args.loss_figure and report.epoch_losses:
        save_loss_figure(report.epoch_losses, args.loss_figure)
    print(json.dumps({"epochs_run": len(report.epoch_losses),
                      "final_loss": report.epoch_losses[-1] if report.epoch_losses else None}))
    return 0


def _cmd_embed(args) -> int:
    import os

    ps, enc_cfg, hash_dim = _encoder_from_checkpoint(args.checkpoint)
    if os.path.exists(args.db):
        db = EmbeddingDatabase.load(args.db)
    else:
        db = EmbeddingDatabase(args.model_version, enc_cfg.hidden)
    snaps = read_snapshots(args.snapshots)
    for s in snaps:
        register(db, s, ps, enc_cfg, hash_dim)
    db.save(args.db)
    print(json.dumps({"records": len(db)}))
    return 0


def _cmd_detect(args) -> int:
    cfg = _resolve(args)
    db = EmbeddingDatabase.load(args.db)
    ps, enc_cfg, hash_dim = _encoder_from_checkpoint(args.checkpoint)
    queries = read_snapshots(args.queries)
    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for s in queries:
            emb = encode(s, snapshot_features(s, hash_dim), ps, enc_cfg)
            v = verdict(db, emb, cfg.threshold, cfg.top_k,
                        query=f"{s.program_key}@{s.window[0]}")
            record = v.to_dict()
            record["program_key"] = s.program_key
            record["window"] = list(s.window)
            out.write(json.dumps(record) + "\n")
    finally:
        if args.output:
            out.close()
    return 0


def _read_scores(args) -> tuple[list[float], list[int]]:
    import csv as _csv

    if args.scores:
        with open(args.scores, newline="", encoding="utf-8") as fh:
            rows = list(_csv.DictReader(fh))
        return [float(r["score"]) for r in rows], [int(r["label"]) for r in rows]
    if not (args.verdicts and args.labels):
        raise ConfigError("evaluate needs either --scores or --verdicts with --labels")
    with open(args.labels, encoding="utf-8") as fh:
        fake_set = {
            (d["claimed_key"], tuple(d["window"]))
            for d in (json.loads(line) for line in fh if line.strip())
        }
    scores, labels = [], []
    with open(args.verdicts, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            v = json.loads(line)
            # claimed-identity score: similarity to the claimed program if
            # present, else the best match overall
            sim_by_key = dict((k, s) for k, s in v["matches"])
            sim = sim_by_key.get(v["program_key"], v["matches"][0][1])
            scores.append(-sim)
            labels.append(1 if (v["program_key"], tuple(v["window"])) in fake_set else 0)
    return scores, labels


def _cmd_evaluate(args) -> int:
    cfg = _resolve(args)
    scores, labels = _read_scores(args)
    # detection scores are anomaly-oriented; map the similarity threshold
    threshold = args.threshold if args.threshold is not None else -cfg.threshold
    result = evaluate(np.asarray(scores), np.asarray(labels), threshold=threshold)
    write_eval_result(result, args.out_json, args.roc_csv)
    if args.roc_figure:
        save_roc_figure(result.roc_points, args.roc_figure, auc=result.auc)
    print(json.dumps({"auc": result.auc, "f1": result.f1, "acc": result.acc}))
    return 0


_HANDLERS = {
    "ingest": _cmd_ingest,
    "build-graphs": _cmd_build_graphs,
    "gen-synth": _cmd_gen_synth,
    "train": _cmd_train,
    "embed": _cmd_embed,
    "detect": _cmd_detect,
    "evaluate": _cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ProvMatchError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
