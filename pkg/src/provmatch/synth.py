"""Synthetic enterprise event corpus: behavior profiles, fake-ID seeding,
known/unknown program splits, and raw per-snapshot statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientPrograms
from .events import EntityKind, RelationKind, SystemEntity, SystemEvent, canonicalize_program_id
from .graphs import DEFAULT_WINDOW, ProgramSnapshot


@dataclass
class BehaviorProfile:
    """Daily activity model for one benign program."""

    name: str
    host: str
    files_per_day: float
    forks_per_day: float
    sockets_per_day: float
    file_pool: list[str]
    peer_pool: list[str]
    socket_pool: list[str]
    reuse_prob: float = 0.85
    activity_prob: float = 0.9
    noise: float = 0.1

    def __post_init__(self):
        if min(self.files_per_day, self.forks_per_day, self.sockets_per_day) < 0:
            raise ValueError("activity rates must be >= 0")
        if not (0.0 <= self.reuse_prob <= 1.0 and 0.0 <= self.activity_prob <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")


def default_profiles(n: int = 50, seed: int = 7) -> list[BehaviorProfile]:
    """n distinct program profiles on 10 hosts, with small shared resource
    pools per host so that shared-file/socket meta-paths are populated."""
    rng = np.random.default_rng(seed)
    commons = [f"/lib/common{j}.so" for j in range(12)]
    shared_sockets = ["10.0.0.1:53", "10.0.0.2:123", "10.0.0.3:514"]
    profiles = []
    for i in range(n):
        word = "".join(rng.choice(list("abcdefghijklmnopqrstuvwxyz"), size=6))
        name = f"{word}{i:03d}.exe"
        own_files = [f"/opt/app{i:03d}/res{j}.dat" for j in range(int(rng.integers(6, 13)))]
        shared = list(rng.choice(commons, size=int(rng.integers(2, 4)), replace=False))
        stem = "".join(rng.choice(list("abcdefghijklmnopqrstuvwxyz"), size=6))
        peers = [f"{stem}{j}.exe" for j in range(int(rng.integers(2, 4)))]
        own_sockets = [
            f"10.1.{i}.{j}:{int(rng.integers(1024, 65000))}"
            for j in range(int(rng.integers(2, 6)))
        ]
        socks = own_sockets + list(
            rng.choice(shared_sockets, size=int(rng.integers(1, 3)), replace=False)
        )
        profiles.append(
            BehaviorProfile(
                name=name,
                host=f"host{i % 10}",
                files_per_day=float(rng.integers(4, 40)),
                forks_per_day=float(rng.integers(2, 10)),
                sockets_per_day=float(rng.integers(1, 12)),
                file_pool=own_files + shared,
                peer_pool=peers,
                socket_pool=socks,
                reuse_prob=float(0.75 + 0.2 * rng.random()),
                activity_prob=0.6,
                noise=float(0.05 + 0.15 * rng.random()),
            )
        )
    return profiles


def _proc(name: str, host: str, day: int) -> SystemEntity:
    return SystemEntity(f"{name}|{host}|d{day}", EntityKind.PROCESS, name, host)


def generate_corpus(
    profiles: list[BehaviorProfile],
    days: int,
    seed: int = 0,
    day_length: int = DEFAULT_WINDOW,
) -> tuple[list[SystemEvent], dict]:
    """Deterministic event stream plus a ground-truth count ledger.

    Same-program days reuse pooled entities (so snapshots of one program stay
    similar); pools are disjoint across programs except for per-host shared
    resources.
    """
    if len(profiles) < 2:
        raise InsufficientPrograms("need at least two behavior profiles")
    if days < 2:
        raise ValueError("need at least two days")
    rng = np.random.default_rng(seed)
    events: list[SystemEvent] = []
    for day in range(days):
        for prof in profiles:
            active = day == 0 or rng.random() < prof.activity_prob
            if not active:
                continue
            proc = _proc(prof.name, prof.host, day)

            def emit(dst: SystemEntity, rel: RelationKind, repeats: int):
                for _ in range(repeats):
                    ts = int(day * day_length + rng.integers(0, day_length))
                    events.append(SystemEvent(ts, proc, dst, rel))

            jitter = 1.0 + prof.noise * rng.standard_normal()
            for j in range(max(0, int(rng.poisson(prof.files_per_day * max(jitter, 0.1))))):
                if prof.file_pool and rng.random() < prof.reuse_prob:
                    path = prof.file_pool[int(rng.integers(len(prof.file_pool)))]
                else:
                    path = f"/tmp/{prof.name}/t{day}_{j}"
                dst = SystemEntity(path, EntityKind.FILE, path, prof.host)
                emit(dst, RelationKind.FILE_ACCESS, int(rng.integers(1, 4)))
            forked: list[SystemEntity] = []
            for _ in range(max(1, int(rng.poisson(prof.forks_per_day)))):
                if not prof.peer_pool:
                    continue
                peer = prof.peer_pool[int(rng.integers(len(prof.peer_pool)))]
                peer_proc = _proc(peer, prof.host, day)
                emit(peer_proc, RelationKind.FORK, 1)
                forked.append(peer_proc)
            # helpers work on their parent's files, so the program's own child
            # processes show up as shared-file neighbors of the target
            for peer_proc in {p.entity_id: p for p in forked}.values():
                for _ in range(1 + int(rng.poisson(3.0))):
                    if not prof.file_pool:
                        continue
                    path = prof.file_pool[int(rng.integers(len(prof.file_pool)))]
                    dst = SystemEntity(path, EntityKind.FILE, path, prof.host)
                    ts = int(day * day_length + rng.integers(0, day_length))
                    events.append(SystemEvent(ts, peer_proc, dst, RelationKind.FILE_ACCESS))
            for j in range(int(rng.poisson(prof.sockets_per_day))):
                if prof.socket_pool and rng.random() < prof.reuse_prob:
                    ep = prof.socket_pool[int(rng.integers(len(prof.socket_pool)))]
                else:
                    ep = f"10.9.{day}.{j}:{int(rng.integers(1024, 65000))}"
                dst = SystemEntity(ep, EntityKind.SOCKET, ep, prof.host)
                emit(dst, RelationKind.SOCKET_CONNECT, int(rng.integers(1, 3)))
    events.sort(key=lambda ev: ev.timestamp)
    # ground-truth counts per (program, day): every event the program takes
    # part in (a fork counts for both endpoints)
    per_snapshot: dict[str, int] = {}
    for ev in events:
        day = ev.timestamp // day_length
        for key in _event_program_keys(ev):
            slot = f"{key}|{day}"
            per_snapshot[slot] = per_snapshot.get(slot, 0) + 1
    ledger = {"total": len(events), "per_snapshot": per_snapshot, "days": days}
    return events, ledger


def _event_program_keys(ev: SystemEvent) -> list[str]:
    keys = [canonicalize_program_id(ev.src)]
    if ev.relation is RelationKind.FORK:
        keys.append(canonicalize_program_id(ev.dst))
    return keys


def seed_fake_programs(
    events: list[SystemEvent],
    n_fakes: int,
    seed: int = 0,
    window_length: int = DEFAULT_WINDOW,
    eligible: set[str] | None = None,
) -> tuple[list[SystemEvent], list[dict]]:
    """Rewrite the claimed ID of selected (program, window) instances.

    Only process display names change; every behavior edge is untouched. The
    claimed ID is another known program that is inactive in that window, so
    the fake and the genuine program never merge into one snapshot.
    """
    if n_fakes == 0:
        return list(events), []
    if not events:
        raise InsufficientPrograms("no events to seed fakes into")

    t0 = (min(ev.timestamp for ev in events) // window_length) * window_length
    active: dict[int, set[str]] = {}
    for ev in events:
        widx = (ev.timestamp - t0) // window_length
        active.setdefault(widx, set()).update(_event_program_keys(ev))
    all_keys = sorted(set().union(*active.values()))
    if eligible is not None:
        all_keys = [k for k in all_keys if k in eligible]
    if len(all_keys) < 2:
        raise InsufficientPrograms("need at least two distinct programs")

    display_name: dict[str, str] = {}
    for ev in events:
        for ent in (ev.src, ev.dst):
            if ent.kind is EntityKind.PROCESS:
                display_name.setdefault(canonicalize_program_id(ent), ent.display_name)

    rng = np.random.default_rng(seed)
    key_set = set(all_keys)
    candidates = [
        (k, w) for w in sorted(active) for k in sorted(active[w]) if k in key_set
    ]
    rng.shuffle(candidates)
    chosen: list[tuple[str, int, str]] = []
    used: set[tuple[str, int]] = set()
    for key, widx in candidates:
        if len(chosen) == n_fakes:
            break
        if (key, widx) in used:
            continue
        victims = [k for k in all_keys if k != key and k not in active[widx]]
        if not victims:
            continue
        victim = victims[int(rng.integers(len(victims)))]
        chosen.append((key, widx, victim))
        used.add((key, widx))
        active[widx].add(victim)  # reserve: one fake per claimed id per window
    if len(chosen) < n_fakes:
        raise InsufficientPrograms(
            f"could only place {len(chosen)} of {n_fakes} fakes"
        )

    rewrite = {(key, widx): victim for key, widx, victim in chosen}
    out: list[SystemEvent] = []
    labels: list[dict] = []
    for ev in events:
        widx = (ev.timestamp - t0) // window_length

        def swap(ent: SystemEntity) -> SystemEntity:
            if ent.kind is not EntityKind.PROCESS:
                return ent
            victim = rewrite.get((canonicalize_program_id(ent), widx))
            if victim is None:
                return ent
            return SystemEntity(ent.entity_id, ent.kind, display_name[victim], ent.host)

        out.append(SystemEvent(ev.timestamp, swap(ev.src), swap(ev.dst), ev.relation))
    for key, widx, victim in chosen:
        start = int(t0 + widx * window_length)
        labels.append(
            {
                "claimed_key": victim,
                "true_key": key,
                "window": [start, start + window_length],
            }
        )
    labels.sort(key=lambda d: (d["window"][0], d["claimed_key"]))
    return out, labels


def unknown_split(programs: list[str], seed: int = 0) -> tuple[list[str], list[str]]:
    """Deterministic 50/50 partition into known and unknown program sets."""
    if len(programs) < 2:
        raise InsufficientPrograms("need at least two programs to split")
    rng = np.random.default_rng(seed)
    perm = list(rng.permutation(sorted(programs)))
    half = (len(perm) + 1) // 2
    return sorted(perm[:half]), sorted(perm[half:])


def snapshot_raw_features(s: ProgramSnapshot) -> np.ndarray:
    """Connectivity and graph-statistic features of one snapshot (log1p scale),
    used by the raw-feature classifier baseline."""
    kinds = [e.kind for e in s.nodes]
    n_proc = kinds.count(EntityKind.PROCESS)
    n_file = kinds.count(EntityKind.FILE)
    n_sock = kinds.count(EntityKind.SOCKET)
    total_w = sum(w for _, _, _, w in s.edges)
    deg = {rel: 0 for rel in RelationKind}
    t_files: set[int] = set()
    t_socks: set[int] = set()
    t_forks: set[int] = set()
    t = s.target_node
    for a, b, rel, w in s.edges:
        if t in (a, b):
            deg[rel] += w
            other = b if a == t else a
            if rel is RelationKind.FILE_ACCESS and s.nodes[other].kind is EntityKind.FILE:
                t_files.add(other)
            elif rel is RelationKind.SOCKET_CONNECT:
                t_socks.add(other)
            elif rel is RelationKind.FORK:
                t_forks.add(other)
    raw = [
        n_proc,
        n_file,
        n_sock,
        len(s.edges),
        total_w,
        deg[RelationKind.FORK],
        deg[RelationKind.FILE_ACCESS],
        deg[RelationKind.SOCKET_CONNECT],
        len(t_files),
        len(t_socks),
        len(t_forks),
        total_w / max(len(s.edges), 1),
    ]
    return np.log1p(np.asarray(raw, dtype=np.float64))
