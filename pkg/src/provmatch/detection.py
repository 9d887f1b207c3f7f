"""Benign-embedding database, similarity scoring, and alert verdicts."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderConfig, encode
from .errors import EmptyDatabase, InsufficientValidation, IoFailure, ModelMismatch
from .graphs import ProgramSnapshot, snapshot_features
from .optim import ParamSet
from .training import cosine_sim_flagged

DB_FORMAT_VERSION = 1


@dataclass
class EmbeddingRecord:
    program_key: str
    window: tuple[int, int]
    embedding: np.ndarray
    model_version: str


@dataclass
class Verdict:
    query: str
    matches: list[tuple[str, float]]  # ranked (program_key, score), best first
    alert: bool
    threshold: float

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "matches": [[k, s] for k, s in self.matches],
            "alert": self.alert,
            "threshold": self.threshold,
        }


class EmbeddingDatabase:
    """Per-program embedding records keyed by (program, window, model)."""

    def __init__(self, model_version: str, dim: int):
        self.model_version = model_version
        self.dim = dim
        self.records: list[EmbeddingRecord] = []
        self._keys: set[tuple] = set()

    def __len__(self) -> int:
        return len(self.records)

    def add(self, record: EmbeddingRecord) -> bool:
        """Append a record; duplicates of the same identity are ignored."""
        if record.model_version != self.model_version:
            raise ModelMismatch(
                f"record model {record.model_version!r} != db {self.model_version!r}"
            )
        if record.embedding.shape != (self.dim,):
            raise ModelMismatch(
                f"embedding width {record.embedding.shape} != db dim {self.dim}"
            )
        key = (record.program_key, record.window, record.model_version)
        if key in self._keys:
            return False
        self._keys.add(key)
        self.records.append(record)
        return True

    def save(self, path: str) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "format_version": DB_FORMAT_VERSION,
                            "model_version": self.model_version,
                            "d": self.dim,
                        }
                    )
                    + "\n"
                )
                for rec in self.records:
                    fh.write(
                        json.dumps(
                            {
                                "program_key": rec.program_key,
                                "window": list(rec.window),
                                "embedding": base64.b64encode(
                                    np.ascontiguousarray(rec.embedding, dtype="<f8").tobytes()
                                ).decode("ascii"),
                            }
                        )
                        + "\n"
                    )
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}")

    @classmethod
    def load(cls, path: str) -> "EmbeddingDatabase":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = [line for line in fh if line.strip()]
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}")
        if not lines:
            raise IoFailure(f"{path} is empty (missing header)")
        header = json.loads(lines[0])
        if header.get("format_version") != DB_FORMAT_VERSION:
            raise IoFailure(f"unsupported database version in {path}")
        db = cls(header["model_version"], header["d"])
        for line in lines[1:]:
            rec = json.loads(line)
            emb = np.frombuffer(base64.b64decode(rec["embedding"]), dtype="<f8").astype(
                np.float64
            )
            db.add(
                EmbeddingRecord(
                    rec["program_key"],
                    (rec["window"][0], rec["window"][1]),
                    emb,
                    header["model_version"],
                )
            )
        return db


def register(
    db: EmbeddingDatabase,
    snapshot: ProgramSnapshot,
    ps: ParamSet,
    cfg: EncoderConfig,
    hash_dim: int = 16,
) -> EmbeddingRecord:
    """Encode a snapshot and append it to the database (idempotent)."""
    emb = encode(snapshot, snapshot_features(snapshot, hash_dim), ps, cfg)
    if emb.shape != (db.dim,):
        raise ModelMismatch(f"encoder width {emb.shape[0]} != db dim {db.dim}")
    record = EmbeddingRecord(snapshot.program_key, snapshot.window, emb, db.model_version)
    db.add(record)
    return record


def score_program(db: EmbeddingDatabase, query_embedding: np.ndarray) -> dict[str, float]:
    """Max cosine similarity of the query against each program's records."""
    if not db.records:
        raise EmptyDatabase("no records to score against")
    scores: dict[str, float] = {}
    for rec in db.records:
        s, _ = cosine_sim_flagged(query_embedding, rec.embedding)
        if rec.program_key not in scores or s > scores[rec.program_key]:
            scores[rec.program_key] = s
    return scores


def verdict(
    db: EmbeddingDatabase,
    query_embedding: np.ndarray,
    threshold: float,
    k: int = 5,
    query: str = "",
) -> Verdict:
    """Rank program scores; alert iff the best score is strictly below the
    threshold, otherwise report the top-k (ties broken by program key)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = score_program(db, query_embedding)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    alert = ranked[0][1] < threshold
    return Verdict(query=query, matches=ranked[:k], alert=alert, threshold=threshold)


def self_match_scores(
    db: EmbeddingDatabase,
    snapshots: list[ProgramSnapshot],
    ps: ParamSet,
    cfg: EncoderConfig,
    hash_dim: int = 16,
) -> list[float]:
    """Each validation snapshot's similarity to its own program's records."""
    out = []
    for s in snapshots:
        emb = encode(s, snapshot_features(s, hash_dim), ps, cfg)
        scores = score_program(db, emb)
        if s.program_key in scores:
            out.append(scores[s.program_key])
    return out


def threshold_from_scores(self_scores: list[float], target_tpr: float = 0.99) -> float:
    """Largest threshold keeping at least target_tpr of self-scores >= it."""
    if len(self_scores) < 20:
        raise InsufficientValidation(
            f"need >= 20 validation self-match scores, got {len(self_scores)}"
        )
    ordered = sorted(self_scores, reverse=True)
    m = int(np.ceil(target_tpr * len(ordered)))
    m = max(1, min(m, len(ordered)))
    return ordered[m - 1]


def calibrate_threshold(
    db: EmbeddingDatabase,
    validation_snapshots: list[ProgramSnapshot],
    ps: ParamSet,
    cfg: EncoderConfig,
    target_tpr: float = 0.99,
    hash_dim: int = 16,
) -> float:
    return threshold_from_scores(
        self_match_scores(db, validation_snapshots, ps, cfg, hash_dim), target_tpr
    )
