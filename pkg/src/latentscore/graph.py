"""Latent DAGs over measured and latent variables.

A :class:`LatentDag` holds two binary matrices in the usual SEM orientation:
``b_adj[i, j] == 1`` iff ``L_j -> X_i`` and ``c_adj[i, j] == 1`` iff
``L_j -> L_i``. Measured variables are always sinks.

Internally most algorithms work on the full ``(n + m) x (n + m)`` adjacency
matrix ``adj`` with ``adj[u, v] == 1`` iff ``u -> v``; latents occupy the
first ``n`` slots and measured variables the remaining ``m``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, NamedTuple

import numpy as np

__all__ = [
    "NodeId", "X", "L", "LatentDag", "Cpdag",
    "skeleton", "v_structures", "d_separated", "markov_equivalent", "mec_key",
    "cpdag", "pure_children", "atomic_covers", "is_atomic_cover",
    "satisfies_one_factor", "satisfies_hierarchical",
    "op_skeleton", "op_min", "op_atomic",
]


class NodeId(NamedTuple):
    kind: str  # "X" (measured) or "L" (latent)
    index: int

    def __str__(self):
        return f"{self.kind}{self.index}"


def X(i: int) -> NodeId:
    return NodeId("X", int(i))


def L(j: int) -> NodeId:
    return NodeId("L", int(j))


def _is_acyclic(adj: np.ndarray) -> bool:
    indeg = adj.sum(axis=0).astype(int)
    stack = [v for v in range(adj.shape[0]) if indeg[v] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for v in np.flatnonzero(adj[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return seen == adj.shape[0]


@dataclass(frozen=True, eq=False)
class LatentDag:
    """Binary structure over ``m`` measured and ``n`` latent variables.

    Parameters
    ----------
    b_adj : array_like, shape (m, n)
        ``b_adj[i, j] == 1`` iff ``L_j -> X_i``.
    c_adj : array_like, shape (n, n)
        ``c_adj[i, j] == 1`` iff ``L_j -> L_i``. Any acyclic pattern is
        accepted; a cycle raises ``ValueError``.
    """

    b_adj: np.ndarray
    c_adj: np.ndarray

    def __post_init__(self):
        b = np.array(self.b_adj, dtype=np.int8, ndmin=2)
        c = np.array(self.c_adj, dtype=np.int8)
        if b.ndim != 2:
            raise ValueError("b_adj must be a 2-d matrix")
        n = b.shape[1]
        if c.size == 0:
            c = np.zeros((n, n), dtype=np.int8)
        if c.shape != (n, n):
            raise ValueError(f"c_adj must be {n}x{n}, got {c.shape}")
        if not (np.isin(b, (0, 1)).all() and np.isin(c, (0, 1)).all()):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(c)):
            raise ValueError("self loops are not allowed")
        if not _is_acyclic(c.T):
            raise ValueError("latent edges contain a cycle")
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "b_adj", b)
        object.__setattr__(self, "c_adj", c)

    # construction ---------------------------------------------------------
    @classmethod
    def empty(cls, m: int, n: int = 0) -> "LatentDag":
        return cls(np.zeros((m, n), dtype=np.int8), np.zeros((n, n), dtype=np.int8))

    @classmethod
    def from_edges(cls, m: int, n: int, measurement_edges=(), latent_edges=()) -> "LatentDag":
        """Build from ``(j, i)`` pairs: ``L_j -> X_i`` and ``L_j -> L_i``."""
        b = np.zeros((m, n), dtype=np.int8)
        c = np.zeros((n, n), dtype=np.int8)
        for j, i in measurement_edges:
            b[i, j] = 1
        for j, i in latent_edges:
            c[i, j] = 1
        return cls(b, c)

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, n: int) -> "LatentDag":
        """Inverse of :attr:`adj`; raises if a measured node has children."""
        adj = np.asarray(adj)
        if np.any(adj[n:]):
            raise ValueError("measured variables cannot have children")
        return cls(adj[:n, n:].T, adj[:n, :n].T)

    # basic properties ------------------------------------------------------
    @property
    def m(self) -> int:
        return self.b_adj.shape[0]

    @property
    def n(self) -> int:
        return self.b_adj.shape[1]

    @property
    def n_edges(self) -> int:
        return int(self.b_adj.sum() + self.c_adj.sum())

    def __eq__(self, other):
        if not isinstance(other, LatentDag):
            return NotImplemented
        return (self.b_adj.shape == other.b_adj.shape
                and np.array_equal(self.b_adj, other.b_adj)
                and np.array_equal(self.c_adj, other.c_adj))

    def __hash__(self):
        return hash((self.m, self.n, self.b_adj.tobytes(), self.c_adj.tobytes()))

    def __repr__(self):
        edges = ", ".join(f"{u}->{v}" for u, v in self.edges())
        return f"LatentDag(m={self.m}, n={self.n}, edges=[{edges}])"

    @cached_property
    def adj(self) -> np.ndarray:
        n, m = self.n, self.m
        a = np.zeros((n + m, n + m), dtype=np.int8)
        a[:n, :n] = self.c_adj.T
        a[:n, n:] = self.b_adj.T
        a.setflags(write=False)
        return a

    # node addressing -------------------------------------------------------
    def nodes(self) -> list[NodeId]:
        return [L(j) for j in range(self.n)] + [X(i) for i in range(self.m)]

    def index_of(self, node: NodeId) -> int:
        kind, idx = node
        if kind == "L" and 0 <= idx < self.n:
            return idx
        if kind == "X" and 0 <= idx < self.m:
            return self.n + idx
        raise ValueError(f"{node!r} is not a node of this graph")

    def node_at(self, u: int) -> NodeId:
        return L(u) if u < self.n else X(u - self.n)

    def parents(self, node: NodeId) -> frozenset[NodeId]:
        u = self.index_of(node)
        return frozenset(self.node_at(p) for p in np.flatnonzero(self.adj[:, u]))

    def children(self, node: NodeId) -> frozenset[NodeId]:
        u = self.index_of(node)
        return frozenset(self.node_at(c) for c in np.flatnonzero(self.adj[u]))

    def edges(self) -> list[tuple[NodeId, NodeId]]:
        us, vs = np.nonzero(self.adj)
        return [(self.node_at(u), self.node_at(v)) for u, v in zip(us, vs)]

    def measurement_edges(self) -> list[tuple[int, int]]:
        """``(j, i)`` pairs for every ``L_j -> X_i``."""
        return [(int(j), int(i)) for i, j in zip(*np.nonzero(self.b_adj))]

    def latent_edges(self) -> list[tuple[int, int]]:
        """``(j, i)`` pairs for every ``L_j -> L_i``."""
        return [(int(j), int(i)) for i, j in zip(*np.nonzero(self.c_adj))]

    # derived graphs --------------------------------------------------------
    def permute_latents(self, perm) -> "LatentDag":
        """Relabel latents so that new latent ``k`` is old latent ``perm[k]``."""
        perm = np.asarray(perm, dtype=int)
        if sorted(perm.tolist()) != list(range(self.n)):
            raise ValueError("perm must be a permutation of range(n)")
        return LatentDag(self.b_adj[:, perm], self.c_adj[np.ix_(perm, perm)])

    def pad_latents(self, n: int) -> "LatentDag":
        """Append isolated latents up to ``n`` in total."""
        if n < self.n:
            raise ValueError("cannot pad to fewer latents")
        b = np.zeros((self.m, n), dtype=np.int8)
        c = np.zeros((n, n), dtype=np.int8)
        b[:, :self.n] = self.b_adj
        c[:self.n, :self.n] = self.c_adj
        return LatentDag(b, c)

    def drop_isolated_latents(self) -> "LatentDag":
        a = self.adj
        keep = [j for j in range(self.n) if a[j].any() or a[:, j].any()]
        if len(keep) == self.n:
            return self
        return LatentDag(self.b_adj[:, keep], self.c_adj[np.ix_(keep, keep)])

    # serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "latent_edges": [list(e) for e in self.latent_edges()],
            "measurement_edges": [list(e) for e in self.measurement_edges()],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LatentDag":
        try:
            m, n = int(obj["m"]), int(obj["n"])
            lat = [tuple(map(int, e)) for e in obj.get("latent_edges", [])]
            mea = [tuple(map(int, e)) for e in obj.get("measurement_edges", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed graph object: {exc}") from None
        if m < 0 or n < 0:
            raise ValueError("m and n must be non-negative")
        for j, i in lat:
            if not (0 <= j < n and 0 <= i < n):
                raise ValueError(f"latent edge {(j, i)} out of range")
        for j, i in mea:
            if not (0 <= j < n and 0 <= i < m):
                raise ValueError(f"measurement edge {(j, i)} out of range")
        return cls.from_edges(m, n, mea, lat)


@dataclass(frozen=True)
class Cpdag:
    """Compelled (directed) and reversible (undirected) edges of a MEC."""

    directed_edges: frozenset
    undirected_edges: frozenset

    @classmethod
    def from_matrix(cls, p: np.ndarray, g: LatentDag) -> "Cpdag":
        directed, undirected = set(), set()
        for u, v in zip(*np.nonzero(p)):
            if p[v, u]:
                undirected.add(frozenset((g.node_at(u), g.node_at(v))))
            else:
                directed.add((g.node_at(u), g.node_at(v)))
        return cls(frozenset(directed), frozenset(undirected))


# ---------------------------------------------------------------------------
# elementary graph queries on full adjacency matrices


def _ancestors(adj: np.ndarray, nodes: Iterable[int]) -> set[int]:
    out = set(nodes)
    stack = list(out)
    while stack:
        v = stack.pop()
        for p in np.flatnonzero(adj[:, v]):
            if p not in out:
                out.add(int(p))
                stack.append(int(p))
    return out


def _descendants(adj: np.ndarray, nodes: Iterable[int]) -> set[int]:
    return _ancestors(adj.T, nodes)


def _reachable(adj: np.ndarray, sources: Iterable[int], z: set[int]) -> set[int]:
    """Nodes d-connected to ``sources`` given ``z`` (Bayes-ball traversal)."""
    anc_z = _ancestors(adj, z)
    parents = [np.flatnonzero(adj[:, v]) for v in range(adj.shape[0])]
    children = [np.flatnonzero(adj[v]) for v in range(adj.shape[0])]
    todo = [(int(s), True) for s in sources]  # True: arrived from a child
    visited: set[tuple[int, bool]] = set()
    reach: set[int] = set()
    while todo:
        y, up = todo.pop()
        if (y, up) in visited:
            continue
        visited.add((y, up))
        if y not in z:
            reach.add(y)
        if up and y not in z:
            todo.extend((int(p), True) for p in parents[y])
            todo.extend((int(c), False) for c in children[y])
        elif not up:
            if y not in z:
                todo.extend((int(c), False) for c in children[y])
            if y in anc_z:
                todo.extend((int(p), True) for p in parents[y])
    return reach


def _skeleton_matrix(adj: np.ndarray) -> np.ndarray:
    return ((adj + adj.T) > 0).astype(np.int8)


def _pattern(adj: np.ndarray) -> np.ndarray:
    """Skeleton with only the v-structure edges oriented."""
    skel = _skeleton_matrix(adj)
    p = skel.copy()
    for c in range(adj.shape[0]):
        pa = np.flatnonzero(adj[:, c])
        for a, b in itertools.combinations(pa, 2):
            if not skel[a, b]:
                p[c, a] = 0
                p[c, b] = 0
    return p


def _meek(p: np.ndarray) -> np.ndarray:
    """Close a pattern under Meek rules R1-R3."""
    p = p.copy()
    N = p.shape[0]

    def adjacent(a, b):
        return p[a, b] or p[b, a]

    changed = True
    while changed:
        changed = False
        for a, b in zip(*np.nonzero(p & p.T)):
            if not (p[a, b] and p[b, a]):
                continue
            # R1: c -> a - b, c and b non-adjacent
            r1 = any(p[c, a] and not p[a, c] and not adjacent(c, b) for c in range(N) if c != b)
            # R2: a -> c -> b
            r2 = any(p[a, c] and not p[c, a] and p[c, b] and not p[b, c] for c in range(N))
            # R3: a - c -> b, a - d -> b, c and d non-adjacent
            r3 = False
            if not (r1 or r2):
                cs = [c for c in range(N)
                      if p[a, c] and p[c, a] and p[c, b] and not p[b, c]]
                r3 = any(not adjacent(c, d) for c, d in itertools.combinations(cs, 2))
            if r1 or r2 or r3:
                p[b, a] = 0
                changed = True
    return p


def _as_indices(g: LatentDag, nodes: Iterable[NodeId]) -> set[int]:
    return {g.index_of(v) for v in nodes}


# ---------------------------------------------------------------------------
# public graph predicates


def skeleton(g: LatentDag) -> set[frozenset]:
    """Unordered adjacent pairs of ``g``."""
    return {frozenset((u, v)) for u, v in g.edges()}


def v_structures(g: LatentDag) -> set[tuple[NodeId, NodeId, NodeId]]:
    """Triples ``(a, c, b)`` with ``a -> c <- b`` and ``a``, ``b`` non-adjacent.

    Each unordered parent pair is reported once, with ``a < b``.
    """
    adj = g.adj
    skel = _skeleton_matrix(adj)
    out = set()
    for c in range(adj.shape[0]):
        pa = sorted(np.flatnonzero(adj[:, c]), key=lambda u: g.node_at(u))
        for a, b in itertools.combinations(pa, 2):
            if not skel[a, b]:
                out.add((g.node_at(a), g.node_at(c), g.node_at(b)))
    return out


def d_separated(g: LatentDag, a: Iterable[NodeId], b: Iterable[NodeId],
                z: Iterable[NodeId] = ()) -> bool:
    """Whether ``z`` d-separates node sets ``a`` and ``b`` in ``g``."""
    ai, bi, zi = _as_indices(g, a), _as_indices(g, b), _as_indices(g, z)
    if ai & bi or ai & zi or bi & zi:
        raise ValueError("a, b and z must be pairwise disjoint")
    return not (_reachable(g.adj, ai, zi) & bi)


def _latent_signature_order(p: np.ndarray, n: int) -> list[list[int]]:
    """Group latents by a relabeling-invariant signature, in sorted order."""
    if n == 0:
        return []
    sigs = []
    for j in range(n):
        out_lat = p[j, :n]
        in_lat = p[:n, j]
        und = int(np.sum(out_lat & in_lat))
        sig = (p[j, n:].tobytes(), p[n:, j].tobytes(),
               int(out_lat.sum()) - und, int(in_lat.sum()) - und, und)
        sigs.append(sig)
    order = sorted(range(n), key=lambda j: sigs[j])
    return [list(grp) for _, grp in itertools.groupby(order, key=lambda j: sigs[j])]


def _canonical_bytes(p: np.ndarray, n: int) -> bytes:
    groups = _latent_signature_order(p, n)
    tail = list(range(n, p.shape[0]))
    best = None
    for choice in itertools.product(*(itertools.permutations(grp) for grp in groups)):
        perm = [j for grp in choice for j in grp] + tail
        key = p[np.ix_(perm, perm)].tobytes()
        if best is None or key < best:
            best = key
    return best if best is not None else p.tobytes()


def mec_key(g: LatentDag) -> tuple:
    """Hashable key shared exactly by graphs Markov equivalent up to latent relabeling.

    Isolated latents are dropped first; they carry no structure.
    """
    g = g.drop_isolated_latents()
    return (g.m, g.n, _canonical_bytes(_pattern(g.adj), g.n))


def markov_equivalent(g1: LatentDag, g2: LatentDag) -> bool:
    """Same skeleton and v-structures after some relabeling of ``g2``'s latents."""
    if g1.m != g2.m:
        raise ValueError("graphs have different numbers of measured variables")
    return mec_key(g1) == mec_key(g2)


def _cpdag_matrix(adj: np.ndarray) -> np.ndarray:
    return _meek(_pattern(adj))


def cpdag(g: LatentDag) -> Cpdag:
    """Completed partially directed graph of ``g`` (latent labels kept fixed)."""
    return Cpdag.from_matrix(_cpdag_matrix(g.adj), g)


# ---------------------------------------------------------------------------
# pure children and atomic covers


def _pure_children_idx(adj: np.ndarray, lset: frozenset[int]) -> frozenset[int]:
    """Maximal pure-child set of ``lset``, or an empty set if there is none."""
    ch = set()
    for l in lset:
        ch.update(int(v) for v in np.flatnonzero(adj[l]))
    ch -= lset
    cand = []
    for v in sorted(ch):
        pa = set(np.flatnonzero(adj[:, v]).tolist())
        if pa <= lset and not (_descendants(adj, [v]) & lset):
            cand.append(v)
    covered = set()
    for v in cand:
        covered.update(np.flatnonzero(adj[:, v]).tolist())
    return frozenset(cand) if covered == set(lset) else frozenset()


def pure_children(g: LatentDag, lset: Iterable[NodeId]) -> list[frozenset[NodeId]]:
    """Maximal pure-child sets of a latent set (at most one such set exists)."""
    lset = list(lset)
    if any(v.kind != "L" for v in lset):
        raise ValueError("pure_children expects latent nodes only")
    idx = frozenset(_as_indices(g, lset))
    pc = _pure_children_idx(g.adj, idx)
    return [frozenset(g.node_at(v) for v in pc)] if pc else []


def _set_partitions(items: list):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]


def _cover_conditions(adj: np.ndarray, lset: frozenset[int]) -> bool:
    """Conditions (i) and (ii) of a latent atomic cover."""
    k = len(lset)
    members = sorted(lset)
    pa_sets = [set(np.flatnonzero(adj[:, l]).tolist()) for l in members]
    pa_union = set().union(*pa_sets)
    if pa_union & lset or any(s != pa_union for s in pa_sets):
        return False
    pch = _pure_children_idx(adj, lset)
    if len(pch) < k + 1:
        return False
    nbrs = None
    for l in members:
        nb = set(np.flatnonzero(adj[l]).tolist()) | set(np.flatnonzero(adj[:, l]).tolist())
        nbrs = nb if nbrs is None else nbrs & nb
    nbrs = sorted(nbrs - lset)
    if len(nbrs) < k + 1:
        return False
    reach = {v: _reachable(adj, [v], set(lset)) for v in nbrs}
    pch_list = sorted(pch)
    for size in range(k + 1, len(pch_list) + 1):
        for cset in itertools.combinations(pch_list, size):
            cs = set(cset)
            covered = set()
            for v in cs:
                covered.update(np.flatnonzero(adj[:, v]).tolist())
            if covered != set(lset):
                continue
            n_ok = [v for v in nbrs if v not in cs and not (reach[v] & cs)]
            if len(n_ok) >= k + 1:
                return True
    return False


def _atomic_covers_adj(adj: np.ndarray, n: int) -> tuple[frozenset[int], ...]:
    covers: list[frozenset[int]] = []
    found: set[frozenset[int]] = set()
    for k in range(1, n + 1):
        for combo in itertools.combinations(range(n), k):
            lset = frozenset(combo)
            if not _cover_conditions(adj, lset):
                continue
            if k > 1:
                split = any(len(part) > 1 and all(frozenset(b) in found for b in part)
                            for part in _set_partitions(list(combo)))
                if split:
                    continue
            covers.append(lset)
        found.update(covers)
    return tuple(covers)


@lru_cache(maxsize=65536)
def _atomic_covers_cached(g: LatentDag) -> tuple[frozenset[int], ...]:
    return _atomic_covers_adj(np.asarray(g.adj), g.n)


def atomic_covers(g: LatentDag) -> list[frozenset[NodeId]]:
    """All latent atomic covers of ``g``, smallest first."""
    return [frozenset(L(j) for j in c) for c in _atomic_covers_cached(g)]


def is_atomic_cover(g: LatentDag, lset: Iterable[NodeId]) -> bool:
    lset = list(lset)
    if not lset or any(v.kind != "L" for v in lset):
        return False
    idx = frozenset(_as_indices(g, lset))
    return idx in _atomic_covers_cached(g)


# ---------------------------------------------------------------------------
# structural assumptions


def satisfies_one_factor(g: LatentDag) -> bool:
    """Each measured variable has one latent parent; each latent has >= 3 measured children."""
    if g.n == 0:
        return False
    return bool(np.all(g.b_adj.sum(axis=1) == 1) and np.all(g.b_adj.sum(axis=0) >= 3))


def _has_triangle(adj: np.ndarray) -> bool:
    s = _skeleton_matrix(adj).astype(np.int64)
    return bool(np.any((s @ s) * s))


def _separable_below(adj: np.ndarray, l1: frozenset[int], l2: frozenset[int], size: int) -> bool:
    """Whether some set of fewer than ``size`` nodes d-separates ``l1`` and ``l2``."""
    others = [v for v in range(adj.shape[0]) if v not in l1 and v not in l2]
    for k in range(0, max(size, 0)):
        for t in itertools.combinations(others, k):
            if not (_reachable(adj, l1, set(t)) & l2):
                return True
    return False


def satisfies_hierarchical(g: LatentDag) -> bool:
    """Identifiable linear latent hierarchical graph check.

    Requires (i) every latent in some atomic cover and no 3-clique in the
    skeleton, and (ii) for every two disjoint covers with common children
    ``V``, the minimal separator ``T`` obeys ``|V| + |T| >= |L1| + |L2|``.
    """
    if g.n == 0:
        return False
    adj = np.asarray(g.adj)
    if _has_triangle(adj):
        return False
    covers = _atomic_covers_cached(g)
    covered = set().union(*covers) if covers else set()
    if covered != set(range(g.n)):
        return False
    for c1, c2 in itertools.combinations(covers, 2):
        if c1 & c2:
            continue
        ch1 = set(np.flatnonzero(adj[sorted(c1)].any(axis=0)).tolist())
        ch2 = set(np.flatnonzero(adj[sorted(c2)].any(axis=0)).tolist())
        common = (ch1 & ch2) - c1 - c2
        if not common:
            continue
        need = len(c1) + len(c2) - len(common)
        if need > 0 and _separable_below(adj, c1, c2, need):
            return False
    return True


# ---------------------------------------------------------------------------
# rank-equivalent graph operators


def op_skeleton(g: LatentDag) -> LatentDag:
    """Connect every atomic cover to all of its (non-inherited) pure children."""
    while True:
        adj = np.array(g.adj)
        covers = _atomic_covers_cached(g)
        changed = False
        for cov in covers:
            target = set(_pure_children_idx(adj, cov))
            for sub in covers:
                if sub < cov:
                    target -= _pure_children_idx(adj, sub)
            for l in cov:
                for v in target:
                    if not adj[l, v]:
                        adj[l, v] = 1
                        changed = True
        if not changed:
            return g
        g = LatentDag.from_adjacency(adj, g.n)


def _merge_cover(adj: np.ndarray, n: int, child: frozenset[int], parent: frozenset[int]) -> LatentDag:
    adj = adj.copy()
    for l in child:
        for v in np.flatnonzero(adj[l]):
            for p in parent:
                adj[p, v] = 1
    keep = [v for v in range(adj.shape[0]) if v not in child]
    return LatentDag.from_adjacency(adj[np.ix_(keep, keep)], n - len(child))


def op_min(g: LatentDag) -> LatentDag:
    """Merge redundant latent covers into their parent cover, to a fixpoint."""
    while True:
        adj = np.asarray(g.adj)
        covers = _atomic_covers_cached(g)
        cover_set = set(covers)
        merged = None
        for parent in covers:
            for child in covers:
                if parent & child or len(parent) != len(child):
                    continue
                if any(set(np.flatnonzero(adj[:, l]).tolist()) != set(parent) for l in child):
                    continue
                pch = _pure_children_idx(adj, child)
                sib = set(np.flatnonzero(adj[sorted(parent)].any(axis=0)).tolist()) - child
                if (pch and frozenset(pch) in cover_set) or (sib and frozenset(sib) in cover_set):
                    merged = _merge_cover(adj, g.n, child, parent)
                    break
            if merged is not None:
                break
        if merged is None:
            return g
        g = merged


def op_atomic(g: LatentDag) -> LatentDag:
    """Fully connect each multi-latent atomic cover, lower index pointing to higher."""
    c = np.array(g.c_adj)
    for cov in _atomic_covers_cached(g):
        for a, b in itertools.combinations(sorted(cov), 2):
            if not (c[b, a] or c[a, b]):
                c[b, a] = 1
    if np.array_equal(c, g.c_adj):
        return g
    return LatentDag(g.b_adj, c)
