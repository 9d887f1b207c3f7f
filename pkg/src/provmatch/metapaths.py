"""Meta-path neighbor sets and RWR-based node attention weights.

The three program-to-program meta-paths are: direct fork, shared file, and
shared socket. Attention weights come from the exact stationary distribution
of a random walk with restart on the meta-path projected subgraph, computed
by power iteration (no sampling), then L1-normalized over the neighbor set.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NotAProcess
from .events import EntityKind, RelationKind
from .graphs import ProgramSnapshot

DEFAULT_RESTART = 0.15
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 200


class MetaPath(Enum):
    FORK = "fork"            # P - P, either direction
    SHARED_FILE = "file"     # P <- F -> P
    SHARED_SOCKET = "socket"  # P <- I -> P


ALL_METAPATHS = (MetaPath.FORK, MetaPath.SHARED_FILE, MetaPath.SHARED_SOCKET)

_INTERMEDIATE = {
    MetaPath.SHARED_FILE: (EntityKind.FILE, RelationKind.FILE_ACCESS),
    MetaPath.SHARED_SOCKET: (EntityKind.SOCKET, RelationKind.SOCKET_CONNECT),
}


@dataclass
class MetaPathContext:
    """Neighbor set and L1-normalized attention weights for one (node, path)."""

    metapath: MetaPath
    target: int
    neighbors: list[int]
    alpha: np.ndarray


def _require_process(s: ProgramSnapshot, v: int) -> None:
    if s.nodes[v].kind is not EntityKind.PROCESS:
        raise NotAProcess(f"node {v} is {s.nodes[v].kind.value}, not a process")


def _shared_intermediates(s: ProgramSnapshot, u: int, v: int, m: MetaPath) -> set[int]:
    kind, rel = _INTERMEDIATE[m]
    mids_u = {d for d, r, _ in s.out_edges(u) if r is rel and s.nodes[d].kind is kind}
    mids_v = {d for d, r, _ in s.out_edges(v) if r is rel and s.nodes[d].kind is kind}
    return mids_u & mids_v


def neighbor_set(s: ProgramSnapshot, v: int, m: MetaPath) -> list[int]:
    """Process nodes reachable from v via meta-path m, ascending node index."""
    _require_process(s, v)
    found: set[int] = set()
    if m is MetaPath.FORK:
        for d, rel, _ in s.out_edges(v):
            if rel is RelationKind.FORK:
                found.add(d)
        for u, rel, _ in s.in_edges(v):
            if rel is RelationKind.FORK:
                found.add(u)
    else:
        kind, rel = _INTERMEDIATE[m]
        for mid, r, _ in s.out_edges(v):
            if r is not rel or s.nodes[mid].kind is not kind:
                continue
            for u, r2, _ in s.in_edges(mid):
                if r2 is rel:
                    found.add(u)
    found.discard(v)
    return sorted(found)


def metapath_edge_weight(s: ProgramSnapshot, u: int, v: int, m: MetaPath) -> int:
    """Strength of the meta-path relation between two process nodes.

    Fork: summed fork-edge weight in either direction. Shared file/socket:
    number of distinct shared intermediate entities.
    """
    _require_process(s, u)
    _require_process(s, v)
    if u == v:
        return 0
    if m is MetaPath.FORK:
        total = 0
        for d, rel, w in s.out_edges(u):
            if rel is RelationKind.FORK and d == v:
                total += w
        for d, rel, w in s.out_edges(v):
            if rel is RelationKind.FORK and d == u:
                total += w
        return total
    return len(_shared_intermediates(s, u, v, m))


def rwr_alpha(
    s: ProgramSnapshot,
    v: int,
    m: MetaPath,
    restart_prob: float = DEFAULT_RESTART,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MetaPathContext:
    """Exact RWR attention over the meta-path subgraph induced by {v} + N_v.

    Solves pi = c*e_v + (1-c)*P^T pi by power iteration, with dangling rows
    restarting at v, then L1-normalizes pi restricted to the neighbor set.
    Internally the subgraph is ordered by entity identity, not node index, so
    results are bit-identical under snapshot relabeling.
    """
    if not (0.0 < restart_prob < 1.0):
        raise ValueError(f"restart_prob {restart_prob} outside (0,1)")
    neighbors = neighbor_set(s, v, m)
    if not neighbors:
        return MetaPathContext(m, v, [], np.zeros(0))

    members = sorted([v] + neighbors, key=s.canonical_key)
    pos = {node: i for i, node in enumerate(members)}
    n = len(members)

    W = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            w = float(metapath_edge_weight(s, members[i], members[j], m))
            W[i, j] = w
            W[j, i] = w

    start = pos[v]
    e_v = np.zeros(n)
    e_v[start] = 1.0
    P = np.zeros((n, n))
    row_sums = W.sum(axis=1)
    for i in range(n):
        if row_sums[i] > 0:
            P[i] = W[i] / row_sums[i]
        else:
            P[i] = e_v  # dangling: restart
    c = restart_prob
    pi = e_v.copy()
    for _ in range(max_iter):
        nxt = c * e_v + (1.0 - c) * (P.T @ pi)
        if np.abs(nxt - pi).sum() < tol:
            pi = nxt
            break
        pi = nxt

    mass = {members[i]: pi[i] for i in range(n) if members[i] != v}
    total = sum(mass[u] for u in sorted(mass, key=s.canonical_key))
    alpha = np.array([mass[u] / total for u in neighbors])
    return MetaPathContext(m, v, neighbors, alpha)


def compute_contexts(
    s: ProgramSnapshot,
    restart_prob: float = DEFAULT_RESTART,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> dict[tuple[int, MetaPath], MetaPathContext]:
    """Contexts for every (process node, meta-path) pair in the snapshot."""
    out = {}
    procs = [i for i, e in enumerate(s.nodes) if e.kind is EntityKind.PROCESS]
    for v in sorted(procs, key=s.canonical_key):
        for m in ALL_METAPATHS:
            out[(v, m)] = rwr_alpha(s, v, m, restart_prob, tol, max_iter)
    return out
