import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentscore import (ContinuousOptions, Dataset, EnumerationConfig, FitOptions, LatentDag,
                         SearchConfig, continuous_search, exact_search, markov_equivalent,
                         op_atomic, op_min, op_skeleton, random_parameters, sample,
                         satisfies_one_factor)
from latentscore.continuous import (MaskState, continuous_objective, objective_gradients,
                                    repair, sample_masks)
from latentscore.evaluation import (BenchmarkConfig, aggregate, f1_skeleton, ground_truth,
                                    metric_rows_csv, metric_table, run_trials, shd_mec)


def data_for(g, t, seed):
    rng = np.random.default_rng(seed)
    return Dataset.from_samples(sample(random_parameters(g, rng), t, rng))


def pair_truth():
    return ground_truth("1f-pair-3-3")[1]


# exact search ----------------------------------------------------------------------

def test_one_factor_exact_recovers_pair():
    d = data_for(pair_truth(), 5000, 0)
    rep = exact_search(d, SearchConfig(fit_options=FitOptions(restarts=2)))
    assert markov_equivalent(rep.best.graph, pair_truth())
    assert rep.stats["candidates"] == 21 and len(rep.candidates) == 21
    assert rep.best.score.value == min(r.score for r in rep.candidates)


def test_dim_score_prefers_smallest_generating_structure():
    d = data_for(pair_truth(), 5000, 1)
    rep = exact_search(d, SearchConfig(score_kind="dim", fit_options=FitOptions(restarts=2)))
    assert rep.best.dof == 13
    assert markov_equivalent(rep.best.graph, pair_truth())


def test_report_serializes():
    d = data_for(pair_truth(), 1000, 2)
    rep = exact_search(d, SearchConfig(fit_options=FitOptions(restarts=1)))
    obj = rep.to_dict()
    assert obj["best"]["graph"]["m"] == 6 and len(obj["candidates"]) == 21
    assert "graph" in rep.table(3)


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(mode="greedy")
    with pytest.raises(ValueError):
        SearchConfig(score_kind="aic")
    with pytest.raises(ValueError):
        SearchConfig(workers=0)


def test_enumeration_mismatch():
    d = data_for(pair_truth(), 200, 3)
    with pytest.raises(ValueError):
        exact_search(d, SearchConfig(enumeration=EnumerationConfig(7)))


def test_search_deterministic():
    d = data_for(pair_truth(), 500, 4)
    cfg = SearchConfig(fit_options=FitOptions(restarts=1), seed=5)
    a, b = exact_search(d, cfg), exact_search(d, cfg)
    assert a.best.graph_id == b.best.graph_id and a.best.score == b.best.score


def shared_cover():
    return LatentDag.from_edges(6, 2, [(j, i) for j in (0, 1) for i in range(6)])


@pytest.mark.parametrize("truth", [shared_cover(), pair_truth()], ids=["cover", "pair"])
def test_hierarchical_branch_and_bound_matches_enumeration(truth):
    d = data_for(truth, 5000, 6)
    enum = EnumerationConfig(6, n_max=2, mode="hierarchical")
    base = dict(mode="hierarchical-exact", enumeration=enum, fit_options=FitOptions(restarts=2))
    plain = exact_search(d, SearchConfig(prune=False, **base))
    bb = exact_search(d, SearchConfig(prune=True, **base))
    assert len(plain.candidates) == 93
    assert markov_equivalent(plain.best.graph, bb.best.graph)
    assert markov_equivalent(plain.best.graph, truth)
    assert bb.best.score.value == pytest.approx(plain.best.score.value, rel=1e-9)


def identifiable_class(g):
    return op_atomic(op_min(op_skeleton(g)))


def test_hierarchical_recovers_cover_chain():
    truth = ground_truth("h-cover-chain")[1]
    d = data_for(truth, 10000, 7)
    enum = EnumerationConfig(truth.m, n_max=truth.n, mode="hierarchical")
    rep = exact_search(d, SearchConfig(mode="hierarchical-exact", enumeration=enum,
                                       fit_options=FitOptions(restarts=2)))
    assert markov_equivalent(identifiable_class(rep.best.graph), identifiable_class(truth))


# continuous search ------------------------------------------------------------------

@pytest.fixture
def state():
    d = data_for(pair_truth(), 1000, 8)
    return d, MaskState.initial(d, np.random.default_rng(0))


def test_masks_are_relaxed_assignments(state):
    _, s = state
    mb, mc = sample_masks(s, 0.5, np.random.default_rng(1))
    assert np.allclose(mb.sum(axis=1), 1.0)
    assert np.all(np.tril(mc) == 0) and np.all((mc >= 0) & (mc <= 1))
    with pytest.raises(ValueError):
        sample_masks(s, 0.0)


def test_objective_gradients_match_finite_differences(state):
    d, s = state
    s.slack = np.array([0.3, 0.7])
    s.multipliers = np.array([0.2, -0.1])
    noise = (np.random.default_rng(2).gumbel(size=s.logits_b.shape), np.zeros_like(s.logits_c))
    temp, lam, pen = 0.7, 0.01, 0.5
    _, grads = objective_gradients(s, noise, temp, d, lam, pen)

    def value():
        masks = sample_masks(s, temp, noise=noise)
        return continuous_objective(s, masks, d, lam, pen)

    h = 1e-6
    for name in s.vector_fields():
        arr = getattr(s, name)
        for idx in np.ndindex(arr.shape):
            if name in ("logits_c", "c") and idx[0] >= idx[1]:
                continue
            orig = arr[idx]
            arr[idx] = orig + h
            up = value()
            arr[idx] = orig - h
            down = value()
            arr[idx] = orig
            assert grads[name][idx] == pytest.approx((up - down) / (2 * h), rel=1e-4, abs=1e-6)


def test_repair_yields_one_factor():
    rng = np.random.default_rng(3)
    d = data_for(pair_truth(), 100, 9)
    for _ in range(50):
        s = MaskState.initial(d, rng)
        s.logits_b = rng.standard_normal(s.logits_b.shape) * 3
        s.logits_c = np.triu(rng.standard_normal(s.logits_c.shape), 1)
        assert satisfies_one_factor(repair(s))


def test_repair_keeps_clear_assignment():
    d = data_for(pair_truth(), 100, 9)
    s = MaskState.initial(d, np.random.default_rng(0))
    s.logits_b = np.where(np.arange(6)[:, None] // 3 == np.arange(2)[None, :], 5.0, -5.0)
    s.logits_c = np.array([[0.0, 2.0], [0.0, 0.0]])
    assert markov_equivalent(repair(s), pair_truth())


def test_continuous_search_quick_run():
    d = data_for(pair_truth(), 10000, 10)
    cfg = SearchConfig(mode="one-factor-continuous", fit_options=FitOptions(restarts=1),
                       continuous=ContinuousOptions(restarts=2, iterations=300, outer_rounds=3))
    rep = continuous_search(d, cfg)
    assert satisfies_one_factor(rep.best.graph)
    assert rep.stats["restarts"] == 2


def test_continuous_search_mode_check():
    with pytest.raises(ValueError):
        continuous_search(data_for(pair_truth(), 100, 0), SearchConfig())


# metrics ------------------------------------------------------------------------------

def test_f1_and_shd_zero_on_truth():
    for name in ("1f-pair-3-3", "h-two-level", "h-cover-chain"):
        g = ground_truth(name)[1]
        assert f1_skeleton(g, g) == 1.0 and shd_mec(g, g) == 0


def test_metrics_invariant_to_relabeling():
    g = ground_truth("h-two-level")[1]
    perm = [4, 2, 0, 3, 1]
    assert f1_skeleton(g.permute_latents(perm), g) == 1.0
    assert shd_mec(g.permute_latents(perm), g) == 0


def test_metric_values():
    truth = pair_truth()
    no_edge = LatentDag.from_edges(6, 2, [(0, i) for i in range(3)] + [(1, i) for i in range(3, 6)])
    # 6 of 7 true edges recovered, 6 estimated
    assert f1_skeleton(no_edge, truth) == pytest.approx(12 / 13)
    assert shd_mec(no_edge, truth) == 1
    single = LatentDag.from_edges(6, 1, [(0, i) for i in range(6)])
    # padded comparison: best match keeps three of the six measurement edges
    assert f1_skeleton(single, truth) == pytest.approx(2 * 3 / 13)


def test_metric_size_check():
    with pytest.raises(ValueError):
        f1_skeleton(LatentDag.empty(3, 1), LatentDag.empty(4, 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**20))
def test_shd_zero_iff_equivalent(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    a = LatentDag((rng.random((m, n)) < 0.5).astype(np.int8),
                  np.triu((rng.random((n, n)) < 0.5).astype(np.int8), 1))
    b = LatentDag((rng.random((m, n)) < 0.5).astype(np.int8),
                  np.triu((rng.random((n, n)) < 0.5).astype(np.int8), 1))
    b = b.permute_latents(list(rng.permutation(n)))
    assert (shd_mec(a, b) == 0) == markov_equivalent(a, b)
    assert shd_mec(a, b) == shd_mec(b, a)
    f = f1_skeleton(a, b)
    assert 0.0 <= f <= 1.0 and f == pytest.approx(f1_skeleton(b, a))


# benchmark harness ----------------------------------------------------------------------

def test_benchmark_small():
    cfg = BenchmarkConfig(truths=("1f-pair-3-3",), sample_sizes=(2000,), trials=2,
                          fit_options=FitOptions(restarts=1))
    results = run_trials(cfg)
    assert len(results) == 2 and all(r.valid for r in results)
    rows = aggregate(results)
    assert rows[0].valid_runs == 2 and rows[0].t == 2000
    assert metric_rows_csv(rows).startswith("truth_id,method,t,")
    assert "1f-pair-3-3 (f1)" in metric_table(rows)
    again = run_trials(cfg)
    assert [r.estimate for r in again] == [r.estimate for r in results]


def test_benchmark_config_validation():
    with pytest.raises(ValueError):
        BenchmarkConfig(methods=("pc",))
    with pytest.raises(ValueError):
        BenchmarkConfig(trials=0)
    with pytest.raises(KeyError):
        BenchmarkConfig(truths=("nope",)).resolved_truths()


def test_aggregate_handles_invalid_runs():
    from latentscore.evaluation import TrialResult
    rows = aggregate([TrialResult("x", "exact", 10, 0, False, error="boom")])
    assert rows[0].invalid_runs == 1 and math.isnan(rows[0].f1_mean)
