"""Exact score-based structure search over enumerated candidates."""
from __future__ import annotations

import hashlib
import itertools
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dimension import dof_hierarchical, dof_one_factor
from .enumeration import (EnumerationConfig, assemble, cover_dags, cover_layouts,
                          enumerate_hierarchical, enumerate_one_factor, hierarchical_valid,
                          parent_options)
from .graph import LatentDag, _ancestors, mec_key
from .sem import SemParameters
from .scoring import (Dataset, FitOptions, GenerationTestConfig, Score, bic, fit_ml,
                      saturated_nll, score_dim)

__all__ = [
    "ContinuousOptions", "SearchConfig", "ScoredStructure", "CandidateRow", "SearchReport",
    "exact_search", "score_structure", "graph_id",
]

# fitted bounds on partial assignments start at this many assigned variables
SUBFIT_DEPTH = 5
# supergraph bounds are fitted at the root and for the first few assignments
SUPER_DEPTH = 3
# near the leaves, validity checks are cheaper than fitted bounds
SUBFIT_TAIL = 1
# restarts for fitted bounds; sub-structure fits also get a warm start
BOUND_RESTARTS = 2

MODES = ("one-factor-exact", "hierarchical-exact", "one-factor-continuous")


@dataclass(frozen=True)
class ContinuousOptions:
    restarts: int = 10
    iterations: int = 3000
    outer_rounds: int = 10
    lr: float = 1e-2
    lam: float | None = None
    temp_start: float = 1.0
    temp_end: float = 0.1
    penalty: float = 0.01
    penalty_growth: float = 10.0
    shrink: float = 0.25
    tol: float = 1e-3


@dataclass(frozen=True)
class SearchConfig:
    mode: str = "one-factor-exact"
    score_kind: str = "bic"
    enumeration: EnumerationConfig | None = None
    fit_options: FitOptions = field(default_factory=FitOptions)
    continuous: ContinuousOptions = field(default_factory=ContinuousOptions)
    generation_test: GenerationTestConfig = field(default_factory=GenerationTestConfig)
    workers: int = 1
    seed: int = 0
    prune: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.score_kind not in ("bic", "dim"):
            raise ValueError("score_kind must be 'bic' or 'dim'")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.continuous.restarts < 1 or self.continuous.iterations < 1:
            raise ValueError("restarts and iterations must be at least 1")


@dataclass(frozen=True)
class ScoredStructure:
    graph: LatentDag
    graph_id: str
    dof: int
    nll: float
    score: Score

    def sort_key(self):
        return (self.score.value, self.dof, self.graph.n_edges, self.graph_id)


@dataclass(frozen=True)
class CandidateRow:
    graph_id: str
    dof: int
    nll: float
    score: float
    wall_time: float


@dataclass
class SearchReport:
    best: ScoredStructure
    candidates: list
    ties: list
    mode: str
    score_kind: str
    wall_time: float
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "score_kind": self.score_kind,
            "best": {
                "graph_id": self.best.graph_id,
                "graph": self.best.graph.to_dict(),
                "dof": self.best.dof,
                "nll": self.best.nll,
                "score": _json_float(self.best.score.value),
            },
            "ties": [{"graph_id": s.graph_id, "graph": s.graph.to_dict()} for s in self.ties],
            "candidates": [
                {"graph_id": r.graph_id, "dof": r.dof, "nll": r.nll,
                 "score": _json_float(r.score), "wall_time": r.wall_time}
                for r in self.candidates
            ],
            "wall_time": self.wall_time,
            "stats": self.stats,
        }

    def table(self, limit: int = 20) -> str:
        rows = sorted(self.candidates, key=lambda r: (r.score, r.dof, r.graph_id))[:limit]
        lines = [f"{'graph':<24}{'dof':>6}{'nll':>16}{'score':>16}{'time[s]':>10}"]
        for r in rows:
            lines.append(f"{r.graph_id:<24}{r.dof:>6}{r.nll:>16.4f}{r.score:>16.4f}{r.wall_time:>10.3f}")
        return "\n".join(lines)


def _json_float(v: float):
    return v if math.isfinite(v) else "inf"


def graph_id(g: LatentDag) -> str:
    digest = hashlib.sha1(g.b_adj.tobytes() + b"|" + g.c_adj.tobytes()).hexdigest()[:10]
    return f"m{g.m}n{g.n}e{g.n_edges}-{digest}"


def _graph_seed(seed: int, g: LatentDag) -> list[int]:
    key = mec_key(g)
    return [seed, zlib.crc32(repr(key[:2]).encode() + key[2])]


def _make_score(kind, g, d, dof, fit, gen):
    return bic(g, d, dof, fit) if kind == "bic" else score_dim(g, d, dof, fit, gen)


def score_structure(g: LatentDag, d: Dataset, dof: int, cfg: SearchConfig,
                    gid: str | None = None) -> ScoredStructure:
    """Fit ``g`` and score it with the configured score kind."""
    fit = fit_ml(g, d, cfg.fit_options, np.random.default_rng(_graph_seed(cfg.seed, g)))
    sc = _make_score(cfg.score_kind, g, d, dof, fit, cfg.generation_test)
    return ScoredStructure(g, gid or graph_id(g), int(dof), fit.nll, sc)


def _score_task(args):
    g, gid, d, dof, cfg = args
    t0 = time.perf_counter()
    s = score_structure(g, d, dof, cfg, gid)
    return s, time.perf_counter() - t0


def _map(func, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _finish(scored, rows, cfg, t0, stats) -> SearchReport:
    if not scored:
        raise RuntimeError("no valid candidate structures were scored")
    best = min(scored, key=ScoredStructure.sort_key)
    tol = 1e-6 * max(1.0, abs(best.score.value)) if math.isfinite(best.score.value) else 0.0
    ties = [s for s in scored if s is not best and (
        s.score.value == best.score.value or abs(s.score.value - best.score.value) <= tol)]
    ties.sort(key=ScoredStructure.sort_key)
    return SearchReport(best, rows, ties, cfg.mode, cfg.score_kind,
                        time.perf_counter() - t0, stats)


def exact_search(d: Dataset, cfg: SearchConfig) -> SearchReport:
    """Score every candidate of the configured class and return the minimizer.

    Ties are broken by fewer degrees of freedom, then fewer edges, then the
    graph id. In hierarchical mode with ``cfg.prune`` the candidate tree is
    explored by branch and bound using lower bounds that are valid for every
    completion, so the returned minimizer is the same as exhaustive scoring.
    """
    t0 = time.perf_counter()
    if cfg.mode == "one-factor-exact":
        enum = cfg.enumeration or EnumerationConfig(d.m, mode="one-factor")
        if enum.m != d.m:
            raise ValueError("enumeration m does not match the data")
        cands = enumerate_one_factor(enum)
        if not cands:
            raise ValueError("empty candidate set")
        tasks = [(g, f"c{i:05d}", d, dof_one_factor(g), cfg) for i, g in enumerate(cands)]
        results = _map(_score_task, tasks, cfg.workers)
        scored = [s for s, _ in results]
        rows = [CandidateRow(s.graph_id, s.dof, s.nll, s.score.value, dt) for s, dt in results]
        return _finish(scored, rows, cfg, t0, {"candidates": len(cands)})
    if cfg.mode == "hierarchical-exact":
        enum = cfg.enumeration or EnumerationConfig(d.m, mode="hierarchical")
        if enum.m != d.m:
            raise ValueError("enumeration m does not match the data")
        if not cfg.prune:
            cands = enumerate_hierarchical(replace(enum, mode="hierarchical"))
            if not cands:
                raise ValueError("empty candidate set")
            tasks = [(g, f"c{i:05d}", d, dof_hierarchical(g, check=False).combinatorial, cfg)
                     for i, g in enumerate(cands)]
            results = _map(_score_task, tasks, cfg.workers)
            scored = [s for s, _ in results]
            rows = [CandidateRow(s.graph_id, s.dof, s.nll, s.score.value, dt) for s, dt in results]
            return _finish(scored, rows, cfg, t0, {"candidates": len(cands)})
        return _hierarchical_branch_and_bound(d, enum, cfg, t0)
    raise ValueError(f"exact_search does not handle mode {cfg.mode!r}")


# ---------------------------------------------------------------------------
# branch and bound for hierarchical structures


class _RankBounds:
    """Closed-form likelihood-ratio lower bounds from rank constraints.

    If every covariance a structure can generate has ``rank(Sigma_PQ) <= r``,
    its fitted NLL exceeds the saturated NLL by at least
    ``-(T/2) sum_{i > r} log(1 - rho_i^2)``, with ``rho`` the sample canonical
    correlations between ``P`` and ``Q``. Splits are pairs and balanced
    ``k x k`` blocks up to ``max_split``, each filed under the depth of its
    last-assigned variable.
    """

    def __init__(self, d: Dataset, order: list[int], max_split: int = 3):
        s = np.asarray(d.s)
        m = s.shape[0]
        half_t = 0.5 * d.t
        sd = np.sqrt(np.diag(s))
        r = s / np.outer(sd, sd)
        np.fill_diagonal(r, 1.0)
        with np.errstate(divide="ignore"):
            self.pair = -half_t * np.log(np.clip(1.0 - r ** 2, 1e-300, None))
        np.fill_diagonal(self.pair, 0.0)
        prec = np.linalg.inv(r)
        self.zero = -half_t * np.log(np.clip(1.0 / np.diag(prec), 1e-300, None))
        self.order = order
        pos = {x: k for k, x in enumerate(order)}
        self.splits: dict[int, list] = {}
        for k in range(2, max_split + 1):
            groups: dict[int, tuple[list, list]] = {}
            for combo in itertools.combinations(range(m), 2 * k):
                depth = max(pos[v] for v in combo)
                x = order[depth]
                others = [v for v in combo if v != x]
                for mates in itertools.combinations(others, k - 1):
                    p = [x, *mates]
                    q = [v for v in others if v not in mates]
                    groups.setdefault(depth, ([], []))
                    groups[depth][0].append(p)
                    groups[depth][1].append(q)
            for depth, (ps, qs) in groups.items():
                ps, qs = np.array(ps), np.array(qs)
                table = _split_lr_table(r, ps, qs, half_t)
                self.splits.setdefault(depth, []).append((ps, qs, table))


def _inv_sqrt_batch(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(a)
    return (v / np.sqrt(w)[:, None, :]) @ np.swapaxes(v, 1, 2)


def _split_lr_table(r, ps, qs, half_t) -> np.ndarray:
    """``table[s, j]``: LR bound for split ``s`` when its rank is at most ``j``."""
    rpp = r[ps[:, :, None], ps[:, None, :]]
    rqq = r[qs[:, :, None], qs[:, None, :]]
    rpq = r[ps[:, :, None], qs[:, None, :]]
    k = _inv_sqrt_batch(rpp) @ rpq @ _inv_sqrt_batch(rqq)
    rho = np.clip(np.linalg.svd(k, compute_uv=False), 0.0, 1.0 - 1e-15)
    logs = -half_t * np.log(1.0 - rho ** 2)
    # singular values come sorted descending; drop the r largest for rank r
    tail = np.cumsum(logs[:, ::-1], axis=1)[:, ::-1]
    return tail


def _generic_ranks(w: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    mat = np.einsum("sik,sjk->sij", w[p], w[q])
    sv = np.linalg.svd(mat, compute_uv=False)
    scale = sv[:, :1]
    return np.sum(sv > 1e-9 * np.maximum(scale, 1e-300), axis=1) * (scale[:, 0] > 1e-10)


@dataclass
class _Incumbent:
    best: ScoredStructure | None = None

    @property
    def value(self):
        return self.best.score.value if self.best is not None else math.inf


class _SubtreeSearch:
    """Depth-first branch and bound over measured-variable parent assignments."""

    def __init__(self, d: Dataset, cfg: SearchConfig, layout, cover_c, bounds: _RankBounds,
                 incumbent: _Incumbent, cache: dict, rows: list, stats: dict):
        self.d, self.cfg, self.layout, self.cc = d, cfg, layout, cover_c
        self.m = d.m
        self.n = sum(len(b) for b in layout)
        self.bounds = bounds
        self.inc = incumbent
        self.cache = cache
        self.rows = rows
        self.stats = stats
        self.opts = parent_options(cover_c)
        sizes = [len(b) for b in layout]
        self.sizes = sizes
        self.opt_edges = [sum(sizes[c] for c in o) for o in self.opts]
        self.e_min = min(sizes)
        self.cover_edges = int(sum(sizes[i] * sizes[j] for i, j in zip(*np.nonzero(cover_c))))
        self.red_max = self._max_reduction(sizes)
        # every atomic cover holding a latent of block i contains the whole block
        # and is edge-free, so each such latent needs 2 k_i + 2 neighbours and
        # k_i + 1 children in any valid completion
        l = len(sizes)
        self.need_nbr = np.array([2 * k + 2 for k in sizes])
        self.need_ch = np.array([k + 1 for k in sizes])
        self.lat_ch = np.array([sum(sizes[j] for j in range(l) if cover_c[j, i]) for i in range(l)])
        self.lat_nbr = self.lat_ch + np.array([sum(sizes[j] for j in range(l) if cover_c[i, j])
                                               for i in range(l)])
        self.c_full = np.zeros((self.n, self.n), dtype=np.int8)
        for ci, pi in zip(*np.nonzero(cover_c)):
            self.c_full[np.ix_(layout[ci], layout[pi])] = 1
        self._sub_data = {}
        self._warm = {}
        self.fit_depth = SUBFIT_DEPTH
        # twin covers (same size, same cover-level parents and children) are
        # interchangeable; each twin may be used only after its lower-indexed twins
        self.lower_twins = [[i for i in range(j) if sizes[i] == sizes[j]
                             and np.array_equal(cover_c[i], cover_c[j])
                             and np.array_equal(cover_c[:, i], cover_c[:, j])] for j in range(l)]
        self.opt_hits = np.zeros((len(self.opts), l), dtype=int)
        for oi, o in enumerate(self.opts):
            self.opt_hits[oi, list(o)] = 1
        self.sat = saturated_nll(d)
        self.pen = 0.5 * math.log(d.t)
        rng = np.random.default_rng(12345)
        n = self.n
        c = np.zeros((n, n))
        for ci, pi in zip(*np.nonzero(cover_c)):
            for i in layout[ci]:
                for j in layout[pi]:
                    c[i, j] = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
        a = np.linalg.solve(np.eye(n) - c, np.eye(n))
        rb = rng.uniform(0.5, 2.0, (self.m, n)) * rng.choice([-1, 1], (self.m, n))
        self.opt_rows = []
        for x in range(self.m):
            rows_x = []
            for o in self.opts:
                mask = np.zeros(n)
                for ci in o:
                    mask[list(layout[ci])] = 1.0
                rows_x.append((rb[x] * mask) @ a)
            self.opt_rows.append(np.array(rows_x))
        if cfg.score_kind == "dim":
            df = max(self.m * (self.m + 1) // 2 - (self.m + self.cover_edges - self.red_max), 1)
            self.dim_threshold = cfg.generation_test.resolve(self.m, self.m * (self.m + 1) // 2 - df)

    def _max_reduction(self, sizes):
        cc = self.cc
        groups, self.block_class = {}, []
        for i in range(len(sizes)):
            key = (cc[i].tobytes(), cc[:, i].tobytes())
            groups[key] = groups.get(key, 0) + sizes[i]
            self.block_class.append(list(groups).index(key))
        return sum(k * (k - 1) // 2 for k in groups.values())

    def _reduction(self, hit_rows) -> int:
        """Largest shared-group deduction still possible. Blocks can only end up in
        one group if no assigned variable has one of them as a parent but not the other."""
        groups = {}
        for i, k in enumerate(self.sizes):
            key = (self.block_class[i], hit_rows[:, i].tobytes())
            groups[key] = groups.get(key, 0) + k
        return sum(k * (k - 1) // 2 for k in groups.values())

    def bound(self, lr: float, dof_lb: float) -> float:
        if self.cfg.score_kind == "bic":
            return self.sat + lr + self.pen * dof_lb
        return math.inf if 2.0 * lr > self.dim_threshold else dof_lb

    def _sub_lr(self, assign, k: int) -> float:
        """Fitted likelihood ratio of the structure restricted to the first ``k`` assigned
        variables. Divergences shrink under marginalization, so this bounds the
        likelihood ratio of every completion from below."""
        order = self.bounds.order[:k]
        b = np.zeros((k, self.n), dtype=np.int8)
        for row, x in enumerate(order):
            for ci in assign[x]:
                b[row, list(self.layout[ci])] = 1
        g = LatentDag(b, self.c_full)
        used = _ancestors(np.asarray(g.adj), range(self.n, self.n + k)) & set(range(self.n))
        keep = sorted(used)
        if len(keep) < self.n:
            g = LatentDag(b[:, keep], self.c_full[np.ix_(keep, keep)])
        key = ("sub", k, mec_key(g))
        self._warm[k] = None
        if key not in self.cache:
            if k not in self._sub_data:
                s = np.asarray(self.d.s)[np.ix_(order, order)]
                sub = Dataset(s, self.d.t)
                self._sub_data[k] = (sub, saturated_nll(sub))
            sub, sat = self._sub_data[k]
            # the parent's optimum, extended by the new variable, seeds the first start
            init = None
            parent = self._warm.get(k - 1)
            if parent is not None:
                pb, pc, po = parent
                nb = np.vstack([pb, np.zeros((1, self.n))])
                nb[-1] = np.where(b[-1] > 0, 1.0, 0.0)
                init = SemParameters(nb[:, keep] * g.b_adj, pc[np.ix_(keep, keep)] * g.c_adj,
                                     np.append(po, sub.s[-1, -1] * 0.5), np.ones(len(keep)))
            fit = fit_ml(g, sub, replace(self.cfg.fit_options,
                                         restarts=min(BOUND_RESTARTS, self.cfg.fit_options.restarts)),
                         np.random.default_rng(_graph_seed(self.cfg.seed, g)), init=init)
            fb = np.zeros((k, self.n))
            fc = np.zeros((self.n, self.n))
            fb[:, keep] = fit.params.b
            fc[np.ix_(keep, keep)] = fit.params.c
            self._warm[k] = (fb, fc, fit.params.omega_x)
            self.cache[key] = max(fit.nll - sat, 0.0)
            self.stats["sub_fits"] += 1
        return self.cache[key]

    def _super_lr(self, assign) -> float:
        """Fitted likelihood ratio of the supergraph in which every unassigned
        variable has all latents as parents. Every completion's model is nested
        in it, so its likelihood ratio is a lower bound."""
        b = np.ones((self.m, self.n), dtype=np.int8)
        for x, opt in enumerate(assign):
            if opt is not None:
                b[x] = 0
                for ci in opt:
                    b[x, list(self.layout[ci])] = 1
        g = LatentDag(b, self.c_full)
        key = ("super", mec_key(g))
        if key not in self.cache:
            fit = fit_ml(g, self.d, self.cfg.fit_options,
                         np.random.default_rng(_graph_seed(self.cfg.seed, g)))
            self.cache[key] = max(fit.nll - self.sat, 0.0)
            self.stats["super_fits"] += 1
        return self.cache[key]

    def node_bound(self, lr, edges, remaining, min_zero, red=None):
        dof_a = self.m + self.cover_edges + edges - (self.red_max if red is None else red)
        all_full = self.bound(lr, dof_a + remaining * self.e_min)
        if remaining and min_zero is not None:
            return min(all_full, self.bound(max(lr, min_zero), dof_a))
        return all_full

    def run(self, budget: int | None = None):
        order = self.bounds.order
        m = self.m
        assign = [None] * m
        w = np.zeros((m, self.n))
        self.nodes = 0
        zero_suffix = [None] * (m + 1)
        for k in range(m - 1, -1, -1):
            z = self.bounds.zero[order[k]]
            zero_suffix[k] = z if zero_suffix[k + 1] is None else min(z, zero_suffix[k + 1])

        def children(depth, lr):
            x = order[depth]
            out = []
            splits = self.bounds.splits.get(depth, [])
            prev = [order[k] for k in range(depth)]
            for oi, row in enumerate(self.opt_rows[x]):
                w[x] = row
                # a variable without latent parents is independent of all others
                new_lr = lr if self.opt_edges[oi] else max(lr, float(self.bounds.zero[x]))
                if prev:
                    cov = w[prev] @ row
                    zero_pairs = np.abs(cov) <= 1e-10
                    if zero_pairs.any():
                        new_lr = max(new_lr, float(self.bounds.pair[x, prev][zero_pairs].max()))
                for p_arr, q_arr, table in splits:
                    ranks = _generic_ranks(w, p_arr, q_arr)
                    deficient = ranks < table.shape[1]
                    if deficient.any():
                        idx = np.flatnonzero(deficient)
                        new_lr = max(new_lr, float(table[idx, ranks[idx]].max()))
                out.append((new_lr + self.pen * self.opt_edges[oi], oi, new_lr))
            w[x] = 0.0
            out.sort()
            return out

        hits = self.lat_ch.copy()
        hit_rows = np.zeros((m, len(self.sizes)), dtype=np.int8)

        def rec(depth, lr, edges):
            if budget is not None and self.nodes >= budget:
                return
            self.nodes += 1
            if depth == m:
                self.leaf(assign, lr)
                return
            x = order[depth]
            remaining = m - depth - 1
            for _, oi, new_lr in children(depth, lr):
                h = hits + self.opt_hits[oi]
                if any(h[j] > self.lat_ch[j] and hits[j] == self.lat_ch[j]
                       and any(h[i] == self.lat_ch[i] for i in self.lower_twins[j])
                       for j in self.opts[oi]):
                    self.stats["symmetric"] += 1
                    continue
                if np.any(h + remaining < self.need_ch) or \
                        np.any(h + (self.lat_nbr - self.lat_ch) + remaining < self.need_nbr):
                    self.stats["infeasible"] += 1
                    continue
                e = edges + self.opt_edges[oi]
                hit_rows[x] = self.opt_hits[oi]
                red = self._reduction(hit_rows)
                if self.node_bound(new_lr, e, remaining, zero_suffix[depth + 1], red) > self.inc.value:
                    hit_rows[x] = 0
                    self.stats["pruned"] += 1
                    continue
                assign[x] = self.opts[oi]
                if remaining >= SUBFIT_TAIL and budget is None and math.isfinite(self.inc.value) and (
                        depth + 1 >= self.fit_depth or depth < SUPER_DEPTH):
                    fitted = (self._sub_lr(assign, depth + 1) if depth + 1 >= self.fit_depth
                              else self._super_lr(assign))
                    new_lr = max(new_lr, fitted)
                    if self.node_bound(new_lr, e, remaining, zero_suffix[depth + 1], red) > self.inc.value:
                        self.stats["pruned"] += 1
                        assign[x] = None
                        hit_rows[x] = 0
                        continue
                w[x] = self.opt_rows[x][oi]
                hits[:] = h
                rec(depth + 1, new_lr, e)
                hit_rows[x] = 0
                hits[:] -= self.opt_hits[oi]
                w[x] = 0.0
                assign[x] = None

        lr0 = 0.0
        if budget is None and math.isfinite(self.inc.value):
            lr0 = self._super_lr(assign)
            if self.node_bound(lr0, 0, m, zero_suffix[0]) > self.inc.value:
                self.stats["pruned"] += 1
                self.stats["subtrees_pruned"] += 1
                return
        rec(0, lr0, 0)
        self.stats["nodes"] += self.nodes

    def leaf(self, assign, lr):
        g = assemble(self.m, self.layout, self.cc, assign)
        hit_rows = np.array([self.opt_hits[self.opts.index(o)] for o in assign], dtype=np.int8)
        if self.bound(lr, g.n_edges + self.m - self._reduction(hit_rows)) > self.inc.value:
            self.stats["pruned"] += 1
            return
        self.stats["leaves"] += 1
        if not hierarchical_valid(g):
            return
        dof = dof_hierarchical(g, check=False).combinatorial
        if self.bound(lr, dof) > self.inc.value:
            self.stats["pruned"] += 1
            return
        key = mec_key(g)
        t0 = time.perf_counter()
        if key in self.cache:
            fit_nll = self.cache[key]
            self.stats["cache_hits"] += 1
        else:
            fit = fit_ml(g, self.d, self.cfg.fit_options,
                         np.random.default_rng(_graph_seed(self.cfg.seed, g)))
            fit_nll = fit.nll
            self.cache[key] = fit_nll
            self.stats["fits"] += 1
        if self.cfg.score_kind == "bic":
            sc = Score("bic", fit_nll + self.pen * dof, dof, fit_nll)
        else:
            lr_stat = 2.0 * (fit_nll - self.sat)
            ok = lr_stat <= self.cfg.generation_test.resolve(self.m, dof)
            sc = Score("dim", float(dof) if ok else math.inf, dof, fit_nll)
        s = ScoredStructure(g, graph_id(g), dof, fit_nll, sc)
        self.rows.append(CandidateRow(s.graph_id, dof, fit_nll, sc.value, time.perf_counter() - t0))
        if self.inc.best is None or s.sort_key() < self.inc.best.sort_key():
            self.inc.best = s


def _variable_order(d: Dataset) -> list[int]:
    """Greedy order that keeps strongly correlated variables early and together."""
    s = np.asarray(d.s)
    sd = np.sqrt(np.diag(s))
    r = np.abs(s / np.outer(sd, sd))
    np.fill_diagonal(r, 0.0)
    order = [int(np.argmax(r.sum(axis=1)))]
    while len(order) < d.m:
        rest = [v for v in range(d.m) if v not in order]
        order.append(max(rest, key=lambda v: (r[v, order].sum(), -v)))
    return order


def _subtrees(enum: EnumerationConfig):
    for n in range(1, enum.latent_limit + 1):
        for layout in cover_layouts(n):
            for cc in cover_dags(tuple(len(b) for b in layout)):
                yield layout, cc


def _new_stats():
    return {"nodes": 0, "pruned": 0, "infeasible": 0, "symmetric": 0, "super_fits": 0, "sub_fits": 0, "subtrees_pruned": 0, "leaves": 0, "fits": 0, "cache_hits": 0}


def _subtree_task(args):
    d, cfg, layout, cc, order, incumbent_value = args
    bounds = _RankBounds(d, order)
    inc = _Incumbent()
    stats, rows = _new_stats(), []
    sub = _SubtreeSearch(d, cfg, layout, cc, bounds, inc, {}, rows, stats)
    # start from the shared incumbent value without sharing the structure itself
    sub.inc = _ThresholdIncumbent(incumbent_value)
    sub.run()
    return sub.inc.best, rows, stats


class _ThresholdIncumbent(_Incumbent):
    def __init__(self, value: float):
        super().__init__(None)
        self._floor = value

    @property
    def value(self):
        own = self.best.score.value if self.best is not None else math.inf
        return min(own, self._floor)


def _hierarchical_branch_and_bound(d: Dataset, enum: EnumerationConfig, cfg: SearchConfig,
                                   t0: float) -> SearchReport:
    order = _variable_order(d)
    bounds = _RankBounds(d, order)
    inc = _Incumbent()
    cache: dict = {}
    rows: list = []
    stats = _new_stats()
    subtrees = list(_subtrees(enum))
    # a shallow pass finds a good incumbent so the exhaustive pass prunes hard
    shallow_best = []
    for layout, cc in subtrees:
        start = len(rows)
        _SubtreeSearch(d, cfg, layout, cc, bounds, inc, cache, rows, stats).run(budget=4 * d.m)
        shallow_best.append(min((r.score for r in rows[start:]), default=math.inf))
    # promising subtrees first, so the incumbent tightens early
    subtrees = [subtrees[i] for i in sorted(range(len(subtrees)), key=lambda i: shallow_best[i])]
    if cfg.workers > 1 and len(subtrees) > 1:
        tasks = [(d, cfg, layout, cc, order, inc.value) for layout, cc in subtrees]
        for best, sub_rows, sub_stats in _map(_subtree_task, tasks, cfg.workers):
            rows.extend(sub_rows)
            for k, v in sub_stats.items():
                stats[k] += v
            if best is not None and (inc.best is None or best.sort_key() < inc.best.sort_key()):
                inc.best = best
    else:
        for layout, cc in subtrees:
            _SubtreeSearch(d, cfg, layout, cc, bounds, inc, cache, rows, stats).run()
    if inc.best is None:
        raise RuntimeError("no valid hierarchical structure found")
    stats["subtrees"] = len(subtrees)
    scored = [inc.best]
    report = _finish(scored, rows, cfg, t0, stats)
    tol = 1e-6 * max(1.0, abs(inc.best.score.value)) if math.isfinite(inc.best.score.value) else 0.0
    report.ties = []
    report.stats["near_best"] = sum(1 for r in rows if r.graph_id != inc.best.graph_id
                                    and abs(r.score - inc.best.score.value) <= tol)
    return report
