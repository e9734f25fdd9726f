"""Continuous relaxation of 1-factor structure search.

Binary masks over latent-to-measured edges (one categorical per measured
variable) and latent-to-latent edges (independent Bernoulli entries above
the diagonal) are relaxed with Gumbel noise. The "at least three measured
children or no children at all" requirement becomes an equality with a
nonnegative slack, handled by an augmented Lagrangian. Each subproblem is
solved with Adam.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .dimension import dof_one_factor
from .graph import LatentDag, satisfies_one_factor
from .scoring import Dataset, _value_and_grads, bic, fit_ml, score_dim
from .search import (CandidateRow, ContinuousOptions, ScoredStructure, SearchConfig,
                     SearchReport, _finish, _graph_seed, _map, graph_id)

__all__ = ["MaskState", "sample_masks", "continuous_objective", "objective_gradients",
           "repair", "continuous_search", "default_lambda"]


def default_lambda(t: int) -> float:
    return math.log(t) / (2.0 * t)


@dataclass
class MaskState:
    """Free variables of the relaxed problem.

    ``logits_c`` and ``c`` are strictly upper triangular: entry ``(i, j)``
    with ``i < j`` parameterizes ``L_j -> L_i``.
    """

    logits_b: np.ndarray
    logits_c: np.ndarray
    b: np.ndarray
    c: np.ndarray
    log_omega: np.ndarray
    slack: np.ndarray
    multipliers: np.ndarray

    @property
    def n_bar(self) -> int:
        return self.logits_b.shape[1]

    @classmethod
    def initial(cls, d: Dataset, rng: np.random.Generator) -> "MaskState":
        m = d.m
        nb = m // 3
        if nb < 1:
            raise ValueError("continuous 1-factor search needs at least 3 measured variables")
        upper = np.triu(np.ones((nb, nb)), 1)
        return cls(
            logits_b=0.1 * rng.standard_normal((m, nb)),
            logits_c=0.1 * rng.standard_normal((nb, nb)) * upper,
            b=rng.standard_normal((m, nb)),
            c=rng.standard_normal((nb, nb)) * upper,
            log_omega=np.log(np.maximum(np.diag(d.s), 1e-12)) - 0.5,
            slack=np.zeros(nb),
            multipliers=np.zeros(nb),
        )

    def vector_fields(self):
        return ("logits_b", "logits_c", "b", "c", "log_omega", "slack")


def _softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def draw_noise(state: MaskState, rng: np.random.Generator):
    """Gumbel noise for the rows of ``M_B`` and logistic noise for ``M_C``."""
    u = rng.uniform(1e-12, 1.0 - 1e-12, state.logits_b.shape)
    gb = -np.log(-np.log(u))
    v = rng.uniform(1e-12, 1.0 - 1e-12, state.logits_c.shape)
    gc = np.log(v) - np.log1p(-v)
    return gb, gc


def sample_masks(state: MaskState, temperature: float, rng: np.random.Generator | None = None,
                 noise=None):
    """Relaxed masks: row-wise Gumbel-softmax for ``M_B`` and Gumbel-sigmoid for ``M_C``.

    Passing ``noise`` (a pair from :func:`draw_noise`) makes the draw
    deterministic; with ``rng=None`` and no noise the noiseless relaxation is
    returned.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if noise is None:
        noise = draw_noise(state, rng) if rng is not None else (0.0, 0.0)
    gb, gc = noise
    mb = _softmax_rows((state.logits_b + gb) / temperature)
    upper = np.triu(np.ones_like(state.logits_c), 1)
    mc = _sigmoid((state.logits_c + gc) / temperature) * upper
    return mb, mc


def _constraint(mb, mc, slack):
    col_b = mb.sum(axis=0)
    u = col_b + mc.sum(axis=0)
    v = col_b - 3.0
    return u * v - slack, u, v


def continuous_objective(state: MaskState, masks, d: Dataset, lam: float | None = None,
                         penalty: float = 0.0) -> float:
    """Normalized NLL of the masked parameters plus ``lam`` times the mask sums.

    With ``penalty > 0`` the augmented-Lagrangian terms
    ``multipliers . h + penalty / 2 * |h|^2`` are added.
    """
    mb, mc = masks
    lam = default_lambda(d.t) if lam is None else lam
    val, *_ = _value_and_grads(mb * state.b, mc * state.c, np.exp(state.log_omega), d.s, 1.0)
    val += lam * (mb.sum() + mc.sum())
    if penalty > 0:
        h, _, _ = _constraint(mb, mc, state.slack)
        val += float(state.multipliers @ h + 0.5 * penalty * h @ h)
    return float(val)


def objective_gradients(state: MaskState, noise, temperature: float, d: Dataset,
                        lam: float, penalty: float):
    """Value and gradients of the augmented objective at fixed noise."""
    upper = np.triu(np.ones_like(state.logits_c), 1)
    mb, mc = sample_masks(state, temperature, noise=noise)
    beff, ceff = mb * state.b, mc * state.c
    val, g_beff, g_ceff, g_logw = _value_and_grads(beff, ceff, np.exp(state.log_omega), d.s, 1.0)
    h, u, v = _constraint(mb, mc, state.slack)
    gamma = state.multipliers + penalty * h
    val += lam * (mb.sum() + mc.sum()) + float(state.multipliers @ h + 0.5 * penalty * h @ h)

    g_mb = g_beff * state.b + lam + (gamma * (u + v))[None, :]
    g_mc = (g_ceff * state.c + lam + (gamma * v)[None, :]) * upper
    # chain rule through the relaxations
    g_zb = mb * (g_mb - np.sum(g_mb * mb, axis=1, keepdims=True)) / temperature
    g_zc = mc * (1.0 - mc) * g_mc / temperature
    grads = {
        "logits_b": g_zb,
        "logits_c": g_zc * upper,
        "b": g_beff * mb,
        "c": g_ceff * mc * upper,
        "log_omega": g_logw,
        "slack": -gamma,
    }
    return float(val), grads


class _Adam:
    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.k = 0

    def step(self, state, grads):
        self.k += 1
        c1 = 1.0 - self.b1 ** self.k
        c2 = 1.0 - self.b2 ** self.k
        for name, g in grads.items():
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            upd = self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            setattr(state, name, getattr(state, name) - upd)


def _optimize(d: Dataset, opts: ContinuousOptions, rng: np.random.Generator):
    """One restart: augmented-Lagrangian outer loop with Adam inner solves."""
    state = MaskState.initial(d, rng)
    lam = default_lambda(d.t) if opts.lam is None else opts.lam
    penalty = opts.penalty
    upper = np.triu(np.ones_like(state.logits_c), 1)
    iters = opts.iterations
    temps = opts.temp_start * (opts.temp_end / opts.temp_start) ** (np.arange(iters) / max(iters - 1, 1))
    prev_res = math.inf
    residual = math.inf
    for _ in range(opts.outer_rounds):
        adam = _Adam({k: getattr(state, k).shape for k in state.vector_fields()}, opts.lr)
        for it in range(iters):
            noise = draw_noise(state, rng)
            try:
                _, grads = objective_gradients(state, noise, temps[it], d, lam, penalty)
            except (np.linalg.LinAlgError, ValueError):
                continue
            adam.step(state, grads)
            state.slack = np.maximum(state.slack, 0.0)
            state.logits_c *= upper
            state.c *= upper
            np.clip(state.log_omega, -20.0, 20.0, out=state.log_omega)
        mb, mc = sample_masks(state, opts.temp_end)
        h, _, _ = _constraint(mb, mc, state.slack)
        residual = float(np.max(np.abs(h)))
        state.multipliers = state.multipliers + penalty * h
        if residual <= opts.tol:
            break
        if residual > opts.shrink * prev_res:
            penalty *= opts.penalty_growth
        prev_res = residual
    return state, residual


def repair(state: MaskState) -> LatentDag:
    """Discretize relaxed masks into a graph satisfying the 1-factor assumption.

    Each measured variable takes its highest-logit latent. Latents left with
    one or two children hand them to the best-ranked latent that keeps at
    least three; childless latents are dropped together with their edges.
    """
    lb = state.logits_b
    m, nb = lb.shape
    parent = np.argmax(lb, axis=1)
    while True:
        counts = np.bincount(parent, minlength=nb)
        small = [j for j in range(nb) if 0 < counts[j] < 3]
        if not small:
            break
        keep = [j for j in range(nb) if counts[j] >= 3]
        if not keep:
            keep = [int(np.argmax(counts))] if counts.max() > 0 else [0]
            # the strongest latent absorbs everything when none has three children
            if counts[keep[0]] < 3:
                parent[:] = keep[0]
                break
        j = min(small, key=lambda k: (counts[k], k))
        for i in np.flatnonzero(parent == j):
            parent[i] = max(keep, key=lambda k: (lb[i, k], -k))
    used = sorted(set(parent.tolist()))
    index = {j: k for k, j in enumerate(used)}
    b = np.zeros((m, len(used)), dtype=np.int8)
    for i, j in enumerate(parent):
        b[i, index[j]] = 1
    c = np.zeros((len(used), len(used)), dtype=np.int8)
    for i in used:
        for j in used:
            if i < j and state.logits_c[i, j] > 0:
                c[index[i], index[j]] = 1
    return LatentDag(b, c)


def _restart_task(args):
    d, cfg, k = args
    rng = np.random.default_rng([cfg.seed, 7919, k])
    t0 = time.perf_counter()
    state, residual = _optimize(d, cfg.continuous, rng)
    g = repair(state)
    dof = dof_one_factor(g)
    fit = fit_ml(g, d, cfg.fit_options, np.random.default_rng(_graph_seed(cfg.seed, g)))
    sc = bic(g, d, dof, fit) if cfg.score_kind == "bic" else score_dim(g, d, dof, fit, cfg.generation_test)
    return ScoredStructure(g, f"r{k:02d}-{graph_id(g)}", dof, fit.nll, sc), residual, time.perf_counter() - t0


def continuous_search(d: Dataset, cfg: SearchConfig) -> SearchReport:
    """Relaxed 1-factor search from several restarts; the best rescored repair wins."""
    if cfg.mode != "one-factor-continuous":
        raise ValueError("continuous_search requires mode 'one-factor-continuous'")
    if d.m < 3:
        raise ValueError("continuous 1-factor search needs at least 3 measured variables")
    t0 = time.perf_counter()
    tasks = [(d, cfg, k) for k in range(cfg.continuous.restarts)]
    results = _map(_restart_task, tasks, cfg.workers)
    scored, rows, residuals = [], [], []
    for s, res, dt in results:
        if not satisfies_one_factor(s.graph):
            continue
        scored.append(s)
        residuals.append(res)
        rows.append(CandidateRow(s.graph_id, s.dof, s.nll, s.score.value, dt))
    if not scored:
        raise RuntimeError("no restart produced a structure satisfying the 1-factor assumption")
    return _finish(scored, rows, cfg, t0, {"restarts": len(results),
                                           "max_residual": float(max(residuals))})
