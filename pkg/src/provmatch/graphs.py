"""Per-program, per-window heterogeneous invariant graph snapshots."""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidWindow, IoFailure
from .events import (
    EntityKind,
    RelationKind,
    SystemEntity,
    SystemEvent,
    canonicalize_program_id,
)

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 86_400  # one day


@dataclass
class ProgramSnapshot:
    """The invariant graph of one program within one time window.

    Nodes are system entities in first-occurrence order; edges carry the
    merged event count as weight. ``target_node`` indexes the process node
    the snapshot is about.
    """

    program_key: str
    window: tuple[int, int]
    nodes: list[SystemEntity]
    edges: list[tuple[int, int, RelationKind, int]]
    target_node: int
    _adj: dict = field(default=None, repr=False, compare=False)

    def node_count(self) -> int:
        return len(self.nodes)

    def out_edges(self, v: int):
        """Cached adjacency: list of (dst, relation, weight) per node."""
        if self._adj is None:
            adj = {i: [] for i in range(len(self.nodes))}
            radj = {i: [] for i in range(len(self.nodes))}
            for s, d, rel, w in self.edges:
                adj[s].append((d, rel, w))
                radj[d].append((s, rel, w))
            object.__setattr__(self, "_adj", (adj, radj))
        return self._adj[0][v]

    def in_edges(self, v: int):
        self.out_edges(v)
        return self._adj[1][v]

    def canonical_key(self, v: int) -> tuple[str, str]:
        """Index-free node identity used for order-stable numerics."""
        ent = self.nodes[v]
        return (ent.host, ent.entity_id)


def restrict_to_window(
    events: Sequence[SystemEvent], start_ts: int, end_ts: int
) -> list[SystemEvent]:
    """Half-open window filter: start_ts <= ts < end_ts, order preserved."""
    if start_ts >= end_ts:
        raise InvalidWindow(f"start {start_ts} >= end {end_ts}")
    return [ev for ev in events if start_ts <= ev.timestamp < end_ts]


def _event_programs(ev: SystemEvent) -> list[str]:
    keys = [canonicalize_program_id(ev.src)]
    if ev.relation is RelationKind.FORK:
        dst_key = canonicalize_program_id(ev.dst)
        if dst_key != keys[0]:
            keys.append(dst_key)
    return keys


def _build_one(
    program_key: str,
    window: tuple[int, int],
    window_events: list[SystemEvent],
    min_edge_weight: int,
) -> ProgramSnapshot | None:
    # Pass 1: the program's own events. Pass 2: one-hop co-access edges so
    # that shared-file / shared-socket meta-paths stay computable in-snapshot.
    primary = [ev for ev in window_events if program_key in _event_programs(ev)]
    if not primary:
        return None
    touched = {
        (ev.dst.entity_id, ev.dst.host)
        for ev in primary
        if ev.dst.kind is not EntityKind.PROCESS
    }
    secondary = [
        ev
        for ev in window_events
        if ev.dst.kind is not EntityKind.PROCESS
        and (ev.dst.entity_id, ev.dst.host) in touched
        and program_key not in _event_programs(ev)
    ]

    nodes: list[SystemEntity] = []
    index: dict[tuple[str, str], int] = {}

    def node_of(ent: SystemEntity) -> int:
        key = (ent.entity_id, ent.host)
        if key not in index:
            index[key] = len(nodes)
            nodes.append(ent)
        return index[key]

    weights: dict[tuple[int, int, RelationKind], int] = {}
    order: list[tuple[int, int, RelationKind]] = []
    for ev in primary + secondary:
        s, d = node_of(ev.src), node_of(ev.dst)
        k = (s, d, ev.relation)
        if k not in weights:
            weights[k] = 0
            order.append(k)
        weights[k] += 1

    target = next(
        i
        for i, ent in enumerate(nodes)
        if ent.kind is EntityKind.PROCESS and canonicalize_program_id(ent) == program_key
    )

    edges = [(s, d, rel, w) for (s, d, rel) in order if (w := weights[(s, d, rel)]) >= min_edge_weight]
    return ProgramSnapshot(program_key, window, nodes, edges, target)


def build_snapshots(
    events: Sequence[SystemEvent],
    window_length: int = DEFAULT_WINDOW,
    min_edge_weight: int = 1,
) -> list[ProgramSnapshot]:
    """Aggregate events into one snapshot per (program, window) pair.

    Windows are fixed, non-overlapping, half-open, and aligned to the window
    grid containing the first event. Repeated identical events merge into
    edge weight.
    """
    if window_length <= 0:
        raise InvalidWindow(f"window_length {window_length} must be positive")
    if not events:
        return []

    ordered = sorted(events, key=lambda ev: ev.timestamp)
    if list(ordered) != list(events):
        log.warning("input events were not time-sorted; sorted before windowing")
    t0 = (ordered[0].timestamp // window_length) * window_length

    by_window: dict[int, list[SystemEvent]] = {}
    for ev in ordered:
        by_window.setdefault((ev.timestamp - t0) // window_length, []).append(ev)

    snapshots: list[ProgramSnapshot] = []
    for widx in sorted(by_window):
        wev = by_window[widx]
        start = t0 + widx * window_length
        window = (start, start + window_length)
        programs = sorted({key for ev in wev for key in _event_programs(ev)})
        for key in programs:
            snap = _build_one(key, window, wev, min_edge_weight)
            if snap is not None and snap.edges:
                snapshots.append(snap)
    return snapshots


def _ngram_block(name: str, hash_dim: int) -> np.ndarray:
    """Feature-hashed character 3-grams of a display name, L2-normalized."""
    vec = np.zeros(hash_dim)
    padded = f"#{name.lower()}#"
    grams = [padded[i : i + 3] for i in range(max(1, len(padded) - 2))]
    for g in grams:
        h = zlib.crc32(g.encode("utf-8"))
        sign = 1.0 if (h >> 31) & 1 == 0 else -1.0
        vec[h % hash_dim] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


_KIND_SLOT = {EntityKind.PROCESS: 0, EntityKind.FILE: 1, EntityKind.SOCKET: 2}
_REL_SLOT = {RelationKind.FORK: 0, RelationKind.FILE_ACCESS: 1, RelationKind.SOCKET_CONNECT: 2}


def snapshot_features(snapshot: ProgramSnapshot, hash_dim: int = 16) -> np.ndarray:
    """Per-node feature rows: kind one-hot, log1p relation degrees, name hash.

    Feature width is 6 + hash_dim. The target process node's name block is
    zeroed so the embedding cannot depend on the claimed program identifier.
    """
    if hash_dim < 8:
        raise ValueError(f"hash_dim {hash_dim} < 8")
    n = len(snapshot.nodes)
    feats = np.zeros((n, 6 + hash_dim))
    degree = np.zeros((n, 3), dtype=np.int64)
    for s, d, rel, w in snapshot.edges:
        degree[s, _REL_SLOT[rel]] += w
        degree[d, _REL_SLOT[rel]] += w
    for i, ent in enumerate(snapshot.nodes):
        feats[i, _KIND_SLOT[ent.kind]] = 1.0
        feats[i, 3:6] = np.log1p(degree[i])
        if i != snapshot.target_node:
            feats[i, 6:] = _ngram_block(ent.display_name, hash_dim)
    return feats


# --- snapshot JSONL dump format (used by the CLI and test fixtures) ---

def snapshot_to_dict(s: ProgramSnapshot) -> dict:
    return {
        "program_key": s.program_key,
        "window": list(s.window),
        "nodes": [
            {"id": e.entity_id, "kind": e.kind.value, "name": e.display_name, "host": e.host}
            for e in s.nodes
        ],
        "edges": [[a, b, rel.value, w] for a, b, rel, w in s.edges],
        "target": s.target_node,
    }


def snapshot_from_dict(d: dict) -> ProgramSnapshot:
    nodes = [
        SystemEntity(n["id"], EntityKind(n["kind"]), n["name"], n["host"])
        for n in d["nodes"]
    ]
    edges = [(a, b, RelationKind(rel), w) for a, b, rel, w in d["edges"]]
    return ProgramSnapshot(
        d["program_key"], (d["window"][0], d["window"][1]), nodes, edges, d["target"]
    )


def write_snapshots(snapshots: Iterable[ProgramSnapshot], path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for s in snapshots:
                fh.write(json.dumps(snapshot_to_dict(s), sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}")


def read_snapshots(path: str) -> list[ProgramSnapshot]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return [snapshot_from_dict(json.loads(line)) for line in fh if line.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}")
