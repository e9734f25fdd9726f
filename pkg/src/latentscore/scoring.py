"""Gaussian likelihood, maximum-likelihood fitting and structure scores."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .graph import LatentDag
from .sem import SemParameters, covariance_from

__all__ = [
    "Dataset", "FitOptions", "FitResult", "Score", "GenerationTestConfig",
    "nll", "nll_gradient", "saturated_nll", "fit_ml", "bic", "score_dim",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Empirical covariance ``s`` of ``t`` samples, optionally with the raw data."""

    s: np.ndarray
    t: int
    data: np.ndarray | None = None

    def __post_init__(self):
        s = np.array(self.s, dtype=float, ndmin=2)
        if s.shape[0] != s.shape[1] or not np.allclose(s, s.T, atol=1e-10):
            raise ValueError("s must be a symmetric square matrix")
        if int(self.t) < 1:
            raise ValueError("t must be at least 1")
        s = 0.5 * (s + s.T)
        s.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", int(self.t))

    @classmethod
    def from_samples(cls, data) -> "Dataset":
        """Covariance of centred samples with ``1/T`` normalization (the ML estimate)."""
        data = np.atleast_2d(np.asarray(data, dtype=float))
        centred = data - data.mean(axis=0)
        return cls(centred.T @ centred / data.shape[0], data.shape[0], data)

    @property
    def m(self) -> int:
        return self.s.shape[0]


def _check_unit_latent(p: SemParameters):
    if not np.allclose(p.omega_l, 1.0, rtol=0, atol=1e-12):
        raise ValueError("latent noise variances must be fixed to 1; normalize first")


def _nll_terms(sigma: np.ndarray, s: np.ndarray):
    chol = np.linalg.cholesky(sigma)
    chol_inv = np.linalg.inv(chol)
    sigma_inv = chol_inv.T @ chol_inv
    logdet = 2.0 * float(np.log(np.diagonal(chol)).sum())
    return sigma_inv, logdet, float(np.vdot(s, sigma_inv))


def nll(p: SemParameters, d: Dataset) -> float:
    """``(T/2) [tr(S Sigma^-1) + log det Sigma]`` at unit latent variances."""
    _check_unit_latent(p)
    sigma = covariance_from(p.b, p.c, p.omega_x)
    _, logdet, tr = _nll_terms(sigma, d.s)
    return 0.5 * d.t * (tr + logdet)


def _value_and_grads(b, c, omega_x, s, t):
    a = np.linalg.inv(np.eye(c.shape[0]) - c)
    w = b @ a
    sigma = w @ w.T
    sigma.flat[::sigma.shape[0] + 1] += omega_x
    sigma_inv, logdet, tr = _nll_terms(sigma, s)
    value = 0.5 * t * (tr + logdet)
    g = 0.5 * t * (sigma_inv - sigma_inv @ s @ sigma_inv)
    gw = 2.0 * g @ w
    return value, gw @ a.T, w.T @ gw @ a.T, np.diagonal(g) * omega_x


def nll_gradient(p: SemParameters, d: Dataset, g: LatentDag | None = None) -> dict:
    """Analytic gradient of :func:`nll`.

    Returns a dict with ``"b"`` and ``"c"`` (full matrices, masked to the
    support of ``g`` when given) and ``"log_omega_x"`` (gradient with respect
    to ``log omega_x``).
    """
    _check_unit_latent(p)
    _, gb, gc, gl = _value_and_grads(p.b, p.c, p.omega_x, d.s, d.t)
    if g is not None:
        gb = gb * g.b_adj
        gc = gc * g.c_adj
    return {"b": gb, "c": gc, "log_omega_x": gl}


def saturated_nll(d: Dataset) -> float:
    """Minimum of :func:`nll` over all covariance matrices, attained at ``Sigma = S``."""
    sign, logdet = np.linalg.slogdet(d.s)
    if sign <= 0:
        raise ValueError("empirical covariance is singular")
    return 0.5 * d.t * (d.m + logdet)


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 5
    maxiter: int = 2000
    gtol: float = 1e-6
    ftol: float = 1e-12
    seed: int = 0


@dataclass(frozen=True, eq=False)
class FitResult:
    params: SemParameters
    nll: float
    converged: bool
    restarts_used: int
    all_nll: tuple = field(default=())


class _Packer:
    """Maps between the free-parameter vector and (b, c, log omega_x)."""

    def __init__(self, g: LatentDag):
        self.g = g
        self.bi = np.nonzero(g.b_adj)
        self.ci = np.nonzero(g.c_adj)
        self.nb = len(self.bi[0])
        self.nc = len(self.ci[0])

    @property
    def size(self):
        return self.nb + self.nc + self.g.m

    def unpack(self, x):
        b = np.zeros(self.g.b_adj.shape)
        c = np.zeros(self.g.c_adj.shape)
        b[self.bi] = x[:self.nb]
        c[self.ci] = x[self.nb:self.nb + self.nc]
        return b, c, x[self.nb + self.nc:]

    def pack(self, b, c, log_ox):
        return np.concatenate([b[self.bi], c[self.ci], log_ox])


def fit_ml(g: LatentDag, d: Dataset, opts: FitOptions | None = None,
           rng: np.random.Generator | None = None,
           init: SemParameters | None = None) -> FitResult:
    """Maximum-likelihood fit of unit-latent-variance parameters supported by ``g``.

    L-BFGS is run on ``nll / T`` from ``opts.restarts`` random starts (weights
    standard normal, ``log omega_x = log diag S``); the best optimum is kept.
    ``init``, when given, replaces the first random start.
    """
    opts = opts or FitOptions()
    if g.m != d.m:
        raise ValueError(f"graph has {g.m} measured variables, data has {d.m}")
    rng = rng if rng is not None else np.random.default_rng(opts.seed)
    pk = _Packer(g)
    s, t = d.s, d.t
    log_diag = np.log(np.maximum(np.diag(s), 1e-12))

    def fun(x):
        b, c, log_ox = pk.unpack(x)
        try:
            v, gb, gc, gl = _value_and_grads(b, c, np.exp(log_ox), s, 1.0)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError):
            return np.inf, np.zeros_like(x)
        if not np.isfinite(v):
            return np.inf, np.zeros_like(x)
        return v, pk.pack(gb, gc, gl)

    best, best_val, best_conv = None, np.inf, False
    values = []
    for k in range(max(1, opts.restarts)):
        if k == 0 and init is not None:
            x0 = pk.pack(init.b, init.c, np.log(init.omega_x))
        else:
            b0 = rng.standard_normal(g.b_adj.shape)
            c0 = rng.standard_normal(g.c_adj.shape)
            x0 = pk.pack(b0, c0, log_diag.copy())
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                                    options={"maxiter": opts.maxiter, "gtol": opts.gtol,
                                             "ftol": opts.ftol, "maxcor": 20})
        val = float(res.fun)
        values.append(val * t)
        if np.isfinite(val) and val < best_val:
            best, best_val = res.x, val
            best_conv = bool(np.max(np.abs(res.jac), initial=0.0) <= opts.gtol * 10 or res.success)
    if best is None:
        raise RuntimeError(f"all {opts.restarts} restarts produced non-finite objectives "
                           f"(graph with {g.n_edges} edges, m={g.m})")
    b, c, log_ox = pk.unpack(best)
    # variances collapsing towards zero (Heywood cases) are floored to stay valid
    params = SemParameters(b, c, np.exp(np.maximum(log_ox, -50.0)), np.ones(g.n))
    return FitResult(params, float(best_val * t), best_conv, max(1, opts.restarts), tuple(values))


@dataclass(frozen=True)
class Score:
    kind: str  # "bic" or "dim"
    value: float
    dof: int
    nll: float | None = None


@dataclass(frozen=True)
class GenerationTestConfig:
    """Likelihood-ratio test deciding whether a structure can generate ``S``.

    ``threshold`` overrides the chi-square upper quantile at ``level``.
    """

    level: float = 1e-3
    threshold: float | None = None

    def resolve(self, m: int, dof: int) -> float:
        if self.threshold is not None:
            return float(self.threshold)
        df = max(m * (m + 1) // 2 - dof, 1)
        return float(stats.chi2.isf(self.level, df))


def bic(g: LatentDag, d: Dataset, dof: int, fit: FitResult) -> Score:
    """Fitted NLL plus ``(log T / 2) * dof``."""
    return Score("bic", fit.nll + 0.5 * math.log(d.t) * dof, int(dof), fit.nll)


def score_dim(g: LatentDag, d: Dataset, dof: int, fit: FitResult,
              tol: GenerationTestConfig | None = None) -> Score:
    """``dof`` when the likelihood-ratio statistic is within threshold, else ``inf``."""
    tol = tol or GenerationTestConfig()
    lr = 2.0 * (fit.nll - saturated_nll(d))
    value = float(dof) if lr <= tol.resolve(d.m, dof) else math.inf
    return Score("dim", value, int(dof), fit.nll)
