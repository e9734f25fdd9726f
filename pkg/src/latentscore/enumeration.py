"""Candidate structure generation for exact search."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .graph import (LatentDag, _has_triangle, _is_acyclic, _pattern, _set_partitions,
                    mec_key, op_min, op_skeleton, satisfies_hierarchical)

__all__ = [
    "EnumerationConfig", "enumerate_latent_mecs", "ordered_partitions",
    "enumerate_one_factor", "enumerate_cover_partitions", "enumerate_hierarchical",
    "cover_layouts", "cover_dags", "parent_options", "assemble", "is_canonical",
    "CandidateLimitExceeded",
]

MAX_MEC_NODES = 6


class CandidateLimitExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class EnumerationConfig:
    """Enumeration settings.

    ``n_max`` defaults to ``m // 3`` in one-factor mode and to the number of
    measured variables divided by two (rounded down) in hierarchical mode.
    """

    m: int
    n_max: int | None = None
    mode: str = "one-factor"
    dedupe: bool = True
    max_candidates: int = 1_000_000

    def __post_init__(self):
        if self.mode not in ("one-factor", "hierarchical"):
            raise ValueError(f"unknown enumeration mode {self.mode!r}")
        if self.mode == "one-factor" and self.m < 3:
            raise ValueError("one-factor enumeration needs at least 3 measured variables")
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    @property
    def latent_limit(self) -> int:
        if self.n_max is not None:
            return self.n_max
        return self.m // 3 if self.mode == "one-factor" else max(1, self.m // 2)


# ---------------------------------------------------------------------------
# latent DAGs


@lru_cache(maxsize=None)
def _all_dags(n: int) -> tuple[np.ndarray, ...]:
    """Every labelled DAG on ``n`` nodes as a ``c_adj`` matrix (``c[i, j]``: ``j -> i``)."""
    pairs = list(itertools.combinations(range(n), 2))
    out = []
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        c = np.zeros((n, n), dtype=np.int8)
        for (a, b), st in zip(pairs, states):
            if st == 1:
                c[b, a] = 1
            elif st == 2:
                c[a, b] = 1
        if _is_acyclic(c.T):
            c.setflags(write=False)
            out.append(c)
    return tuple(out)


def enumerate_latent_mecs(n: int) -> list[np.ndarray]:
    """One ``c_adj`` per Markov equivalence class of labelled DAGs on ``n`` nodes.

    The representative is the DAG whose flattened adjacency is lexicographically
    smallest; classes are returned in order of their representatives.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > MAX_MEC_NODES:
        raise ValueError(f"latent MEC enumeration is limited to {MAX_MEC_NODES} nodes")
    classes: dict[bytes, bytes] = {}
    for c in _all_dags(n):
        key = _pattern(np.ascontiguousarray(c.T)).tobytes()
        rep = c.tobytes()
        if key not in classes or rep < classes[key]:
            classes[key] = rep
    reps = sorted(classes.values())
    return [np.frombuffer(r, dtype=np.int8).reshape(n, n).copy() for r in reps]


def ordered_partitions(items: Sequence, k: int, min_size: int = 1) -> Iterator[tuple[frozenset, ...]]:
    """Assignments of all ``items`` to ``k`` labelled blocks, each of size ``>= min_size``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    items = list(items)
    min_size = max(min_size, 1)
    if k * min_size > len(items):
        return

    blocks: list[list] = [[] for _ in range(k)]

    def rec(idx):
        deficit = sum(max(min_size - len(b), 0) for b in blocks)
        if deficit > len(items) - idx:
            return
        if idx == len(items):
            yield tuple(frozenset(b) for b in blocks)
            return
        for b in blocks:
            b.append(items[idx])
            yield from rec(idx + 1)
            b.pop()

    yield from rec(0)


def enumerate_one_factor(cfg: EnumerationConfig) -> list[LatentDag]:
    """Pairwise non-equivalent 1-factor structures on ``cfg.m`` measured variables."""
    if cfg.mode != "one-factor":
        raise ValueError("enumerate_one_factor requires mode 'one-factor'")
    m = cfg.m
    seen: set = set()
    out: list[LatentDag] = []
    for n in range(1, min(cfg.latent_limit, m // 3) + 1):
        for c in enumerate_latent_mecs(n):
            for part in ordered_partitions(range(m), n, 3):
                b = np.zeros((m, n), dtype=np.int8)
                for j, block in enumerate(part):
                    b[sorted(block), j] = 1
                g = LatentDag(b, c)
                if cfg.dedupe:
                    key = mec_key(g)
                    if key in seen:
                        continue
                    seen.add(key)
                out.append(g)
                if len(out) > cfg.max_candidates:
                    raise CandidateLimitExceeded(f"more than {cfg.max_candidates} candidates")
    return out


# ---------------------------------------------------------------------------
# hierarchical structures


def enumerate_cover_partitions(latents: Sequence) -> Iterator[list[frozenset]]:
    """Every set partition of ``latents`` (Bell-number many)."""
    for part in _set_partitions(list(latents)):
        yield [frozenset(b) for b in part]


def _integer_partitions(n: int, largest: int | None = None) -> Iterator[tuple[int, ...]]:
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in _integer_partitions(n - k, k):
            yield (k,) + rest


def cover_layouts(n: int) -> list[tuple[tuple[int, ...], ...]]:
    """Cover partitions of ``n`` latents up to relabeling: contiguous blocks, sizes non-increasing."""
    out = []
    for sizes in _integer_partitions(n):
        start, blocks = 0, []
        for k in sizes:
            blocks.append(tuple(range(start, start + k)))
            start += k
        out.append(tuple(blocks))
    return out


@lru_cache(maxsize=None)
def cover_dags(sizes: tuple[int, ...]) -> tuple[np.ndarray, ...]:
    """DAGs among covers with a triangle-free skeleton, one per relabeling of equal-size covers."""
    l = len(sizes)
    groups = [list(g) for _, g in itertools.groupby(range(l), key=lambda i: sizes[i])]
    perms = [list(itertools.chain.from_iterable(choice))
             for choice in itertools.product(*(itertools.permutations(g) for g in groups))]
    seen, out = set(), []
    for c in _all_dags(l):
        if l >= 3 and _has_triangle(c):
            continue
        key = min(c[np.ix_(p, p)].tobytes() for p in perms)
        if key in seen:
            continue
        seen.add(key)
        out.append(c)
    return tuple(out)


def parent_options(cover_c: np.ndarray) -> list[tuple[int, ...]]:
    """Sets of covers that may jointly parent a measured variable without forming a triangle."""
    l = cover_c.shape[0]
    skel = (cover_c + cover_c.T) > 0
    out = []
    for size in range(0, l + 1):
        for combo in itertools.combinations(range(l), size):
            if all(not skel[a, b] for a, b in itertools.combinations(combo, 2)):
                out.append(combo)
    return out


def assemble(m: int, layout, cover_c: np.ndarray, x_parents: Sequence[tuple[int, ...]]) -> LatentDag:
    """Expand a cover-level structure into a latent DAG (edges are all-or-nothing per cover)."""
    n = sum(len(blk) for blk in layout)
    b = np.zeros((m, n), dtype=np.int8)
    c = np.zeros((n, n), dtype=np.int8)
    for i, opts in enumerate(x_parents):
        for ci in opts:
            b[i, list(layout[ci])] = 1
    for child, parent in zip(*np.nonzero(cover_c)):
        c[np.ix_(layout[child], layout[parent])] = 1
    return LatentDag(b, c)


def is_canonical(g: LatentDag) -> bool:
    """Whether ``g`` is a fixpoint of ``op_min`` after ``op_skeleton``."""
    return op_min(op_skeleton(g)) == g


def hierarchical_valid(g: LatentDag) -> bool:
    return satisfies_hierarchical(g) and is_canonical(g)


def enumerate_hierarchical(cfg: EnumerationConfig) -> list[LatentDag]:
    """Pairwise non-equivalent canonical hierarchical structures.

    Raises :class:`CandidateLimitExceeded` once more than ``cfg.max_candidates``
    raw candidates have been assembled.
    """
    if cfg.mode != "hierarchical":
        raise ValueError("enumerate_hierarchical requires mode 'hierarchical'")
    m = cfg.m
    seen: set = set()
    out: list[LatentDag] = []
    raw = 0
    for n in range(1, cfg.latent_limit + 1):
        for layout in cover_layouts(n):
            sizes = tuple(len(blk) for blk in layout)
            for cc in cover_dags(sizes):
                opts = parent_options(cc)
                for assign in itertools.product(opts, repeat=m):
                    raw += 1
                    if raw > cfg.max_candidates:
                        raise CandidateLimitExceeded(
                            f"more than {cfg.max_candidates} raw candidates; lower n_max or m")
                    g = assemble(m, layout, cc, assign)
                    if not hierarchical_valid(g):
                        continue
                    if cfg.dedupe:
                        key = mec_key(g)
                        if key in seen:
                            continue
                        seen.add(key)
                    out.append(g)
    return out
