"""Model dimension (degrees of freedom) of latent DAGs."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .graph import LatentDag, satisfies_hierarchical, satisfies_one_factor

__all__ = [
    "DofReport", "dof_one_factor", "dof_hierarchical", "dof_numeric",
    "dof_upper_bound", "covariance_jacobian",
]


@dataclass(frozen=True)
class DofReport:
    combinatorial: int
    numeric: int | None = None
    reductions: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "combinatorial": self.combinatorial,
            "numeric": self.numeric,
            "reductions": [{"latents": list(ls), "deduction": k} for ls, k in self.reductions],
        }


def dof_upper_bound(g: LatentDag) -> int:
    m = g.m
    return min(g.n_edges + m, m * (m + 1) // 2)


def dof_one_factor(g: LatentDag) -> int:
    """Edges plus measured variables; exact for 1-factor graphs."""
    if not satisfies_one_factor(g):
        raise ValueError("graph does not satisfy the 1-factor assumption")
    return g.n_edges + g.m


def shared_latent_groups(g: LatentDag) -> list[tuple[int, ...]]:
    """Maximal groups (size >= 2) of latents with identical parents and children."""
    adj = np.asarray(g.adj)
    groups = defaultdict(list)
    for j in range(g.n):
        groups[(adj[:, j].tobytes(), adj[j].tobytes())].append(j)
    return [tuple(v) for v in groups.values() if len(v) >= 2]


def dof_hierarchical(g: LatentDag, check: bool = True) -> DofReport:
    """Edges plus measured variables, less ``k(k-1)/2`` per shared-neighbourhood latent group.

    Parameters
    ----------
    g : LatentDag
    check : bool
        Verify the hierarchical assumption first (raises ``ValueError``).
    """
    if check and not satisfies_hierarchical(g):
        raise ValueError("graph does not satisfy the hierarchical assumption")
    d = g.n_edges + g.m
    reductions = []
    for grp in shared_latent_groups(g):
        k = len(grp)
        reductions.append((grp, k * (k - 1) // 2))
        d -= k * (k - 1) // 2
    return DofReport(d, None, reductions)


def _vech_index(m: int):
    return np.tril_indices(m)


def covariance_jacobian(g: LatentDag, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Jacobian of ``vech(Sigma)`` with respect to (free b, free c, omega_x).

    Latent noise variances are fixed to one. The covariance does not depend
    on ``omega_x`` except additively, so its block is a selection matrix.
    """
    m, n = g.m, g.n
    a = np.linalg.solve(np.eye(n) - c, np.eye(n))
    w = b @ a
    v = a @ w.T  # n x m
    rows, cols = _vech_index(m)
    columns = []
    for i, j in zip(*np.nonzero(g.b_adj)):
        d = np.zeros((m, m))
        d[i, :] += v[j]
        d[:, i] += v[j]
        columns.append(d[rows, cols])
    for i, j in zip(*np.nonzero(g.c_adj)):
        d = np.outer(w[:, i], v[j])
        columns.append((d + d.T)[rows, cols])
    for k in range(m):
        d = np.zeros((m, m))
        d[k, k] = 1.0
        columns.append(d[rows, cols])
    return np.column_stack(columns) if columns else np.zeros((len(rows), 0))


def _numeric_rank(jac: np.ndarray) -> int:
    if jac.size == 0:
        return 0
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    tol = max(jac.shape) * np.finfo(float).eps * sv[0]
    return int(np.sum(sv > tol))


def dof_numeric(g: LatentDag, trials: int = 5, rng: np.random.Generator | None = None) -> int:
    """Generic rank of the parameter-to-covariance Jacobian (max over random points)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    best = 0
    for _ in range(max(1, trials)):
        b = rng.uniform(0.5, 2.0, g.b_adj.shape) * rng.choice([-1.0, 1.0], g.b_adj.shape) * g.b_adj
        c = rng.uniform(0.5, 2.0, g.c_adj.shape) * rng.choice([-1.0, 1.0], g.c_adj.shape) * g.c_adj
        best = max(best, _numeric_rank(covariance_jacobian(g, b, c)))
    return best
