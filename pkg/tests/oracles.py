"""Independent brute-force reference implementations used by the tests.

Nothing here calls into the package's graph algorithms; graphs are handled
as plain full adjacency matrices (latents first, then measured variables).
"""
from __future__ import annotations

import itertools

import numpy as np


def full_adjacency(b, c) -> np.ndarray:
    """``adj[u, v] = 1`` iff ``u -> v`` with latents in the first ``n`` slots."""
    b = np.asarray(b, dtype=np.int8)
    c = np.asarray(c, dtype=np.int8)
    m, n = b.shape
    adj = np.zeros((n + m, n + m), dtype=np.int8)
    adj[:n, :n] = c.T
    adj[:n, n:] = b.T
    return adj


def all_structures(m: int, n: int):
    """Every ``(b_adj, c_adj)`` with ``c_adj`` strictly upper triangular."""
    upper = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for cbits in itertools.product((0, 1), repeat=len(upper)):
        c = np.zeros((n, n), dtype=np.int8)
        for (i, j), bit in zip(upper, cbits):
            c[i, j] = bit
        for bbits in itertools.product((0, 1), repeat=m * n):
            yield np.array(bbits, dtype=np.int8).reshape(m, n), c


def all_labeled_dags(k: int):
    """Every DAG on ``k`` labeled nodes, by brute force over all edge patterns."""
    pairs = [(u, v) for u in range(k) for v in range(u + 1, k)]
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        adj = np.zeros((k, k), dtype=np.int8)
        for (u, v), st in zip(pairs, states):
            if st == 1:
                adj[u, v] = 1
            elif st == 2:
                adj[v, u] = 1
        if batch_acyclic(adj[None])[0]:
            yield adj


def batch_acyclic(adjs: np.ndarray) -> np.ndarray:
    """Kahn elimination applied to a stack of adjacency matrices."""
    adjs = adjs.astype(np.int32)
    k = adjs.shape[1]
    alive = np.ones(adjs.shape[:2], dtype=bool)
    for _ in range(k):
        indeg = np.einsum("bu,buv->bv", alive.astype(np.int32), adjs)
        sources = alive & (indeg == 0)
        if not sources.any():
            break
        alive &= ~sources
    return ~alive.any(axis=1)


def _pairs(k):
    return [(u, v) for u in range(k) for v in range(u + 1, k)]


def signature_bits(adjs: np.ndarray) -> np.ndarray:
    """Skeleton bits followed by v-structure bits ``(a, c, b)`` for a stack of DAGs."""
    adjs = np.asarray(adjs, dtype=bool)
    k = adjs.shape[1]
    und = adjs | np.swapaxes(adjs, 1, 2)
    pairs = _pairs(k)
    skel = np.stack([und[:, u, v] for u, v in pairs], axis=1) if pairs else np.zeros((len(adjs), 0), bool)
    vs = []
    for c in range(k):
        for a, b in pairs:
            if c in (a, b):
                continue
            vs.append(adjs[:, a, c] & adjs[:, b, c] & ~und[:, a, b])
    parts = [skel] if skel.shape[1] else []
    if vs:
        parts.append(np.stack(vs, axis=1))
    if not parts:
        return np.zeros((adjs.shape[0], 0), dtype=bool)
    return np.concatenate(parts, axis=1)


def _signature_index(k):
    """Column labels of :func:`signature_bits`, used to permute them."""
    labels = [("s", u, v) for u, v in _pairs(k)]
    for c in range(k):
        for a, b in _pairs(k):
            if c not in (a, b):
                labels.append(("v", a, b, c))
    return labels


def _permuted_columns(k, perm):
    labels = _signature_index(k)
    pos = {lab: i for i, lab in enumerate(labels)}
    cols = []
    for lab in labels:
        if lab[0] == "s":
            u, v = sorted((perm[lab[1]], perm[lab[2]]))
            cols.append(pos[("s", u, v)])
        else:
            a, b = sorted((perm[lab[1]], perm[lab[2]]))
            cols.append(pos[("v", a, b, perm[lab[3]])])
    # column i of the permuted signature reads the original column at the inverse position
    inv = np.empty(len(cols), dtype=int)
    inv[np.array(cols, dtype=int)] = np.arange(len(cols))
    return inv


def _pack(bits: np.ndarray) -> list[bytes]:
    packed = np.packbits(bits, axis=1)
    return [row.tobytes() for row in packed]


def mec_class_keys(adjs: np.ndarray, n: int) -> list[bytes]:
    """Markov-equivalence class keys up to relabeling of the first ``n`` nodes.

    Equal keys iff some permutation of the latent slots makes skeletons and
    v-structure sets coincide.
    """
    k = adjs.shape[1]
    bits = signature_bits(adjs)
    best = None
    for lat_perm in itertools.permutations(range(n)):
        perm = list(lat_perm) + list(range(n, k))
        cols = _permuted_columns(k, perm)
        keys = np.packbits(bits[:, cols], axis=1)
        if best is None:
            best = keys
        else:
            # lexicographic minimum row by row
            diff = keys != best
            first = np.argmax(diff, axis=1)
            rows = np.arange(len(keys))
            smaller = diff.any(axis=1) & (keys[rows, first] < best[rows, first])
            best[smaller] = keys[smaller]
    return [row.tobytes() for row in best]


def cpdag_oracle(adj: np.ndarray):
    """Directed and undirected edges shared by all DAGs with the same skeleton and
    v-structures, found by enumerating every orientation of the skeleton."""
    adj = np.asarray(adj, dtype=np.int8)
    k = adj.shape[0]
    edges = [(u, v) for u in range(k) for v in range(u + 1, k) if adj[u, v] or adj[v, u]]
    if not edges:
        return set(), set()
    flips = np.array(list(itertools.product((0, 1), repeat=len(edges))), dtype=bool)
    cand = np.zeros((len(flips), k, k), dtype=np.int8)
    for e, (u, v) in enumerate(edges):
        cand[:, u, v] = ~flips[:, e]
        cand[:, v, u] = flips[:, e]
    ok = batch_acyclic(cand)
    ok &= (signature_bits(cand) == signature_bits(adj[None])).all(axis=1)
    members = flips[ok]
    directed, undirected = set(), set()
    for e, (u, v) in enumerate(edges):
        col = members[:, e]
        if col.all():
            directed.add((v, u))
        elif not col.any():
            directed.add((u, v))
        else:
            undirected.add(frozenset((u, v)))
    return directed, undirected


def descendants(adj: np.ndarray, u: int) -> set[int]:
    out, stack = set(), [u]
    while stack:
        w = stack.pop()
        for v in np.flatnonzero(adj[w]):
            if v not in out:
                out.add(int(v))
                stack.append(int(v))
    return out


def d_separated_oracle(adj: np.ndarray, a: set, b: set, z: set) -> bool:
    """d-separation by enumerating every simple path in the skeleton."""
    adj = np.asarray(adj, dtype=np.int8)
    k = adj.shape[0]
    und = (adj | adj.T).astype(bool)
    desc = [descendants(adj, u) | {u} for u in range(k)]

    def active(path):
        for i in range(1, len(path) - 1):
            p, w, q = path[i - 1], path[i], path[i + 1]
            if adj[p, w] and adj[q, w]:
                if not (desc[w] & z):
                    return False
            elif w in z:
                return False
        return True

    def walk(path, seen):
        u = path[-1]
        if u in b and len(path) > 1:
            return active(path)
        for v in np.flatnonzero(und[u]):
            v = int(v)
            if v in seen:
                continue
            if walk(path + [v], seen | {v}):
                return True
        return False

    return not any(walk([s], {s}) for s in a)
