"""Ground truths, permutation-aware metrics and the synthetic benchmark runner."""
from __future__ import annotations

import csv
import io
import itertools
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .enumeration import EnumerationConfig
from .graph import LatentDag, _cpdag_matrix, satisfies_one_factor
from .scoring import Dataset, FitOptions
from .search import ContinuousOptions, SearchConfig, _map, exact_search
from .sem import random_parameters, sample

__all__ = [
    "f1_skeleton", "shd_mec", "builtin_ground_truths", "ground_truth", "GROUND_TRUTHS",
    "BenchmarkConfig", "TrialResult", "MetricRow", "run_trials", "aggregate", "run_benchmark",
    "metric_rows_csv", "metric_table",
]

MAX_PERMUTED_LATENTS = 8


def _padded_pair(est: LatentDag, truth: LatentDag):
    if est.m != truth.m:
        raise ValueError(f"measured counts differ: {est.m} vs {truth.m}")
    n = max(est.n, truth.n)
    if n > MAX_PERMUTED_LATENTS:
        raise ValueError(f"latent permutation search is limited to {MAX_PERMUTED_LATENTS} latents")
    return est.pad_latents(n), truth.pad_latents(n), n


def _permutations(n: int, m: int):
    tail = list(range(n, n + m))
    for p in itertools.permutations(range(n)):
        yield list(p) + tail


def f1_skeleton(est: LatentDag, truth: LatentDag) -> float:
    """Skeleton F1 maximized over relabelings of the latents of ``est``.

    When the latent counts differ, the smaller graph is padded with isolated
    latents, so edges of unmatched latents count as false positives or false
    negatives. Two empty graphs score 1.
    """
    est, truth, n = _padded_pair(est, truth)
    a_t = np.triu((truth.adj | truth.adj.T) > 0, 1)
    sk_e = (est.adj | est.adj.T) > 0
    n_true, n_est = int(a_t.sum()), int(np.triu(sk_e, 1).sum())
    if n_true == 0 and n_est == 0:
        return 1.0
    best_tp = 0
    for p in _permutations(n, est.m):
        tp = int(np.sum(sk_e[np.ix_(p, p)] & a_t))
        best_tp = max(best_tp, tp)
    return 2.0 * best_tp / (n_true + n_est)


def _edge_states(p: np.ndarray) -> np.ndarray:
    """Upper-triangle code per node pair: 0 none, 1 forward, 2 backward, 3 undirected."""
    return np.triu(p + 2 * p.T, 1)


def shd_mec(est: LatentDag, truth: LatentDag) -> int:
    """Structural Hamming distance between CPDAGs, minimized over latent relabelings.

    Each node pair whose CPDAG state (absent, directed either way, undirected)
    differs counts once.
    """
    est, truth, n = _padded_pair(est, truth)
    pe = _cpdag_matrix(est.adj).astype(np.int8)
    st = _edge_states(_cpdag_matrix(truth.adj).astype(np.int8))
    best = None
    for p in _permutations(n, est.m):
        d = int(np.count_nonzero(_edge_states(pe[np.ix_(p, p)]) != st))
        if best is None or d < best:
            best = d
            if d == 0:
                break
    return best


# ---------------------------------------------------------------------------
# ground truths


def _fig2_style() -> LatentDag:
    # root L0 over two covers {L1, L2} and {L3, L4}, five measured children each;
    # X10 on the root keeps the shared-group dof count equal to the Jacobian rank
    meas = [(j, i) for j in (1, 2) for i in range(0, 5)] + [(j, i) for j in (3, 4) for i in range(5, 10)]
    return LatentDag.from_edges(11, 5, meas + [(0, 10)], [(0, 1), (0, 2), (0, 3), (0, 4)])


def _one_factor(blocks, latent_edges=()) -> LatentDag:
    meas, start = [], 0
    for j, k in enumerate(blocks):
        meas += [(j, i) for i in range(start, start + k)]
        start += k
    return LatentDag.from_edges(start, len(blocks), meas, latent_edges)


GROUND_TRUTHS = {
    "one-factor": {
        "1f-single-6": lambda: _one_factor([6]),
        "1f-pair-3-3": lambda: _one_factor([3, 3], [(0, 1)]),
        "1f-chain-3-3-3": lambda: _one_factor([3, 3, 3], [(0, 1), (1, 2)]),
        "1f-apart-3-4": lambda: _one_factor([3, 4]),
    },
    "hierarchical": {
        "h-two-level": _fig2_style,
        "h-cover-chain": lambda: LatentDag.from_edges(
            8, 3, [(0, 0), (0, 1), (0, 2)] + [(j, i) for j in (1, 2) for i in range(3, 8)],
            [(0, 1), (0, 2)]),
    },
}


def builtin_ground_truths(kind: str) -> list[LatentDag]:
    """Representative truths for ``"one-factor"`` or ``"hierarchical"`` structures."""
    if kind not in GROUND_TRUTHS:
        raise ValueError(f"kind must be one of {sorted(GROUND_TRUTHS)}")
    return [make() for make in GROUND_TRUTHS[kind].values()]


def ground_truth(name: str) -> tuple[str, LatentDag]:
    """Look up a builtin truth by id; returns ``(kind, graph)``."""
    for kind, table in GROUND_TRUTHS.items():
        if name in table:
            return kind, table[name]()
    known = [k for table in GROUND_TRUTHS.values() for k in table]
    raise KeyError(f"unknown ground truth {name!r}; known: {', '.join(known)}")


# ---------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class BenchmarkConfig:
    """What to run. ``truths`` holds builtin ids or ``(id, LatentDag)`` pairs.

    A truth satisfying the 1-factor assumption is searched in one-factor mode,
    anything else in hierarchical mode with ``n_max`` set to its latent count.
    """

    truths: tuple = ("1f-pair-3-3",)
    sample_sizes: tuple = (100, 300, 1000, 3000, 10000)
    trials: int = 3
    methods: tuple = ("exact",)
    seed: int = 0
    workers: int = 1
    score_kind: str = "bic"
    fit_options: FitOptions = field(default_factory=FitOptions)
    continuous: ContinuousOptions = field(default_factory=ContinuousOptions)

    def __post_init__(self):
        if any(int(t) < 1 for t in self.sample_sizes):
            raise ValueError("sample sizes must be at least 1")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        bad = set(self.methods) - {"exact", "continuous"}
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")

    def resolved_truths(self) -> list[tuple[str, LatentDag]]:
        out = []
        for item in self.truths:
            if isinstance(item, str):
                out.append((item, ground_truth(item)[1]))
            else:
                name, g = item
                out.append((str(name), g))
        return out


@dataclass(frozen=True)
class TrialResult:
    truth_id: str
    method: str
    t: int
    trial: int
    valid: bool
    f1: float = math.nan
    shd: float = math.nan
    runtime: float = math.nan
    estimate: dict | None = None
    error: str = ""


@dataclass(frozen=True)
class MetricRow:
    truth_id: str
    method: str
    t: int
    f1_mean: float
    f1_std: float
    shd_mean: float
    shd_std: float
    runtime_mean: float
    runtime_max: float
    valid_runs: int
    invalid_runs: int


def _search_config(truth: LatentDag, method: str, cfg: BenchmarkConfig, seed: int) -> SearchConfig:
    if method == "continuous":
        return SearchConfig(mode="one-factor-continuous", score_kind=cfg.score_kind,
                            fit_options=cfg.fit_options, continuous=cfg.continuous, seed=seed)
    if satisfies_one_factor(truth):
        enum = EnumerationConfig(truth.m, mode="one-factor")
        return SearchConfig(mode="one-factor-exact", score_kind=cfg.score_kind, enumeration=enum,
                            fit_options=cfg.fit_options, seed=seed)
    enum = EnumerationConfig(truth.m, n_max=truth.n, mode="hierarchical")
    return SearchConfig(mode="hierarchical-exact", score_kind=cfg.score_kind, enumeration=enum,
                        fit_options=cfg.fit_options, seed=seed)


def _trial_task(args):
    from .continuous import continuous_search

    truth_id, truth, index, t, trial, method, cfg = args
    ss = np.random.SeedSequence([cfg.seed, index, t, trial])
    data_rng = np.random.default_rng(ss)
    params = random_parameters(truth, data_rng)
    d = Dataset.from_samples(sample(params, t, data_rng))
    search_seed = int(ss.generate_state(1)[0])
    t0 = time.perf_counter()
    try:
        scfg = _search_config(truth, method, cfg, search_seed)
        report = continuous_search(d, scfg) if method == "continuous" else exact_search(d, scfg)
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        return TrialResult(truth_id, method, t, trial, False, runtime=time.perf_counter() - t0,
                           error=f"{type(exc).__name__}: {exc}")
    est = report.best.graph
    return TrialResult(truth_id, method, t, trial, True, f1_skeleton(est, truth),
                       float(shd_mec(est, truth)), time.perf_counter() - t0, est.to_dict())


def run_trials(cfg: BenchmarkConfig) -> list[TrialResult]:
    """Every (truth, T, trial, method) run. Each trial's streams derive from
    ``(seed, truth index, T, trial)``, so results do not depend on scheduling."""
    tasks = []
    for index, (name, truth) in enumerate(cfg.resolved_truths()):
        for t in cfg.sample_sizes:
            for trial in range(cfg.trials):
                for method in cfg.methods:
                    if method == "continuous" and not satisfies_one_factor(truth):
                        continue
                    tasks.append((name, truth, index, int(t), trial, method, cfg))
    return _map(_trial_task, tasks, cfg.workers)


def aggregate(results: list[TrialResult]) -> list[MetricRow]:
    """Mean and standard deviation per (truth, method, T) over valid runs."""
    groups: dict = {}
    for r in results:
        groups.setdefault((r.truth_id, r.method, r.t), []).append(r)
    rows = []
    for (truth_id, method, t), rs in groups.items():
        ok = [r for r in rs if r.valid]
        f1 = np.array([r.f1 for r in ok]) if ok else np.array([math.nan])
        shd = np.array([r.shd for r in ok]) if ok else np.array([math.nan])
        rt = np.array([r.runtime for r in ok]) if ok else np.array([math.nan])
        rows.append(MetricRow(truth_id, method, t, float(f1.mean()), float(f1.std()),
                              float(shd.mean()), float(shd.std()), float(rt.mean()),
                              float(rt.max()), len(ok), len(rs) - len(ok)))
    return rows


def run_benchmark(cfg: BenchmarkConfig) -> list[MetricRow]:
    return aggregate(run_trials(cfg))


def metric_rows_csv(rows: list[MetricRow]) -> str:
    buf = io.StringIO()
    names = list(MetricRow.__dataclass_fields__)
    w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(asdict(r))
    return buf.getvalue()


def metric_table(rows: list[MetricRow], metric: str = "f1") -> str:
    """Text table per truth with one row per sample size and one column per method."""
    if metric not in ("f1", "shd"):
        raise ValueError("metric must be 'f1' or 'shd'")
    out = []
    for truth_id in dict.fromkeys(r.truth_id for r in rows):
        sub = [r for r in rows if r.truth_id == truth_id]
        methods = list(dict.fromkeys(r.method for r in sub))
        out.append(f"{truth_id} ({metric})")
        out.append(f"{'T':>8}" + "".join(f"{m:>24}" for m in methods))
        for t in sorted({r.t for r in sub}):
            cells = []
            for m in methods:
                r = next((r for r in sub if r.t == t and r.method == m), None)
                if r is None:
                    cells.append(f"{'-':>24}")
                    continue
                mean, std = (r.f1_mean, r.f1_std) if metric == "f1" else (r.shd_mean, r.shd_std)
                cell = f"{mean:.2f} +/- {std:.2f}"
                if r.invalid_runs:
                    cell += f" ({r.valid_runs})"
                cells.append(f"{cell:>24}")
            out.append(f"{t:>8}" + "".join(cells))
        out.append("")
    return "\n".join(out)
