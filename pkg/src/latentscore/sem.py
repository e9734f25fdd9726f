"""Linear-Gaussian SEM parameters over a :class:`~latentscore.graph.LatentDag`.

The model is ``L = C L + E_L`` and ``X = B L + E_X`` with independent
Gaussian noise, so the measured covariance is

    Sigma = B (I - C)^-1 diag(omega_l) (I - C)^-T B^T + diag(omega_x).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .graph import LatentDag, _is_acyclic

__all__ = [
    "SemParameters", "implied_covariance", "normalize_omega_l", "orthogonal_transform",
    "reduce_shared_cover", "random_parameters", "sample",
    "write_csv", "read_csv", "parameters_to_dict", "parameters_from_dict",
]


@dataclass(frozen=True, eq=False)
class SemParameters:
    """Real-valued weights and noise variances.

    Parameters
    ----------
    b : ndarray, shape (m, n)
        Latent-to-measured weights.
    c : ndarray, shape (n, n)
        Latent-to-latent weights, ``c[i, j]`` is the weight of ``L_j -> L_i``.
    omega_x, omega_l : ndarray
        Positive noise variances of measured and latent variables.
    """

    b: np.ndarray
    c: np.ndarray
    omega_x: np.ndarray
    omega_l: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=float, ndmin=2)
        m, n = b.shape
        c = np.array(self.c, dtype=float).reshape(n, n)
        ox = np.array(self.omega_x, dtype=float).reshape(m)
        ol = np.array(self.omega_l, dtype=float).reshape(n)
        if np.any(ox <= 0) or np.any(ol <= 0):
            raise ValueError("noise variances must be positive")
        for name, arr in (("b", b), ("c", c), ("omega_x", ox), ("omega_l", ol)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.b.shape[0]

    @property
    def n(self) -> int:
        return self.b.shape[1]

    def supported_by(self, g: LatentDag) -> bool:
        """Whether every nonzero weight sits on an edge of ``g``."""
        return (self.b.shape == g.b_adj.shape
                and not np.any((self.b != 0) & (g.b_adj == 0))
                and not np.any((self.c != 0) & (g.c_adj == 0)))


def _latent_transfer(c: np.ndarray) -> np.ndarray:
    n = c.shape[0]
    return np.linalg.solve(np.eye(n) - c, np.eye(n))


def covariance_from(b, c, omega_x, omega_l=None) -> np.ndarray:
    """Implied covariance from raw matrices (``omega_l`` defaults to ones)."""
    b = np.asarray(b, dtype=float)
    w = b @ _latent_transfer(np.asarray(c, dtype=float))
    if omega_l is not None:
        w = w * np.sqrt(np.asarray(omega_l, dtype=float))
    sigma = w @ w.T + np.diag(np.asarray(omega_x, dtype=float))
    return 0.5 * (sigma + sigma.T)


def implied_covariance(p: SemParameters) -> np.ndarray:
    """Covariance of the measured variables under ``p``."""
    return covariance_from(p.b, p.c, p.omega_x, p.omega_l)


def normalize_omega_l(p: SemParameters) -> SemParameters:
    """Equivalent parameters with unit latent noise variances.

    Uses ``B' = B D`` and ``C' = D^-1 C D`` with ``D = diag(omega_l)^(1/2)``,
    which leaves supports and the implied covariance unchanged.
    """
    d = np.sqrt(p.omega_l)
    return SemParameters(p.b * d, p.c * d / d[:, None], p.omega_x, np.ones(p.n))


def orthogonal_transform(p: SemParameters, q) -> tuple[np.ndarray, np.ndarray]:
    """Rotate the latent space: returns ``(B Q, Q^T C Q)``.

    ``p`` must have unit latent variances; the transformed matrices generate
    the same covariance although ``Q^T C Q`` is generally not acyclic.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (p.n, p.n) or not np.allclose(q @ q.T, np.eye(p.n), atol=1e-10, rtol=0):
        raise ValueError("q must be an n x n orthogonal matrix")
    if not np.allclose(p.omega_l, 1.0):
        raise ValueError("orthogonal_transform expects unit latent variances")
    return p.b @ q, q.T @ p.c @ q


def _signed_qr(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a nonnegative diagonal in ``R``."""
    q, r = np.linalg.qr(a, mode="reduced")
    s = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * s, r * s[:, None]


def reduce_shared_cover(g: LatentDag, p: SemParameters, cover):
    """Remove ``k(k-1)/2`` edges of a cover whose members share parents and children.

    The outgoing weight block ``D`` (rows: shared children, columns: cover
    members) is triangularized by an orthogonal change of basis inside the
    cover, ``D = R^T Q^T``. When the cover has fewer than ``k`` shared
    children the incoming block from the shared parents is triangularized
    instead. Returns the reduced graph and parameters.

    Parameters
    ----------
    g : LatentDag
    p : SemParameters
        Parameters supported by ``g``; latent variances are normalized first.
    cover : iterable of int or NodeId
        Latent indices, ``k >= 2``.
    """
    s = sorted(int(v.index) if hasattr(v, "kind") else int(v) for v in cover)
    k = len(s)
    if k < 2 or len(set(s)) != k or not all(0 <= j < g.n for j in s):
        raise ValueError("cover must contain at least two distinct latents")
    if not p.supported_by(g):
        raise ValueError("parameters are not supported by the graph")
    adj = np.asarray(g.adj)
    n = g.n
    pa = {frozenset(np.flatnonzero(adj[:, j]).tolist()) for j in s}
    ch = {frozenset(np.flatnonzero(adj[j]).tolist()) for j in s}
    if len(pa) != 1 or len(ch) != 1:
        raise ValueError("cover members must share identical parents and children")
    parents, children = sorted(next(iter(pa))), sorted(next(iter(ch)))
    if set(parents) & set(s) or set(children) & set(s):
        raise ValueError("cover members must not be adjacent")

    p = normalize_omega_l(p)
    b, c = p.b.copy(), p.c.copy()
    u = np.eye(n)
    if len(children) >= k:
        # rows of the outgoing block: measured children via b, latent children via c
        block = np.vstack([b[[v - n for v in children if v >= n]][:, s],
                           c[[v for v in children if v < n]][:, s]])
        q, _ = _signed_qr(block.T)
        u[np.ix_(s, s)] = q
        zero_out, zero_in = True, False
    elif len(parents) >= k:
        block = c[np.ix_(s, parents)]
        q, _ = _signed_qr(block)
        u[np.ix_(s, s)] = q
        zero_out, zero_in = False, True
    else:
        raise ValueError("cover needs at least k shared children or k shared parents")

    b_new = b @ u
    c_new = u.T @ c @ u
    b_adj = np.array(g.b_adj)
    c_adj = np.array(g.c_adj)
    # block is lower trapezoidal after rotation: entry (row r, member t) vanishes for t > r
    if zero_out:
        ordered = [v for v in children if v >= n] + [v for v in children if v < n]
        rows = ordered[:k]
        for r, v in enumerate(rows):
            for t in range(r + 1, k):
                if v >= n:
                    b_adj[v - n, s[t]] = 0
                    b_new[v - n, s[t]] = 0.0
                else:
                    c_adj[v, s[t]] = 0
                    c_new[v, s[t]] = 0.0
    if zero_in:
        # c[s, parents] = Q R  =>  U^T c[s, parents] = R, upper triangular
        for r in range(k):
            for t in range(r):
                c_adj[s[r], parents[t]] = 0
                c_new[s[r], parents[t]] = 0.0
    b_new[b_adj == 0] = 0.0
    c_new[c_adj == 0] = 0.0
    g_new = LatentDag(b_adj, c_adj)
    return g_new, SemParameters(b_new, c_new, p.omega_x, np.ones(n))


def _uniform_weights(rng: np.random.Generator, size) -> np.ndarray:
    mag = rng.uniform(0.5, 2.0, size=size)
    sign = rng.choice([-1.0, 1.0], size=size)
    return mag * sign


def random_parameters(g: LatentDag, rng: np.random.Generator) -> SemParameters:
    """Weights uniform on ``[-2, -0.5] U [0.5, 2]`` on the support of ``g``; variances uniform on ``[2, 5]``."""
    b = _uniform_weights(rng, g.b_adj.shape) * g.b_adj
    c = _uniform_weights(rng, g.c_adj.shape) * g.c_adj
    omega_x = rng.uniform(2.0, 5.0, size=g.m)
    omega_l = rng.uniform(2.0, 5.0, size=g.n)
    return SemParameters(b, c, omega_x, omega_l)


def sample(p: SemParameters, t: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``t`` rows of measured data from the reduced form of the model."""
    if t < 1:
        raise ValueError("t must be at least 1")
    e_l = rng.standard_normal((t, p.n)) * np.sqrt(p.omega_l)
    e_x = rng.standard_normal((t, p.m)) * np.sqrt(p.omega_x)
    w = p.b @ _latent_transfer(p.c)
    return e_l @ w.T + e_x


# ---------------------------------------------------------------------------
# I/O


def write_csv(data: np.ndarray, fh) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([f"X{i + 1}" for i in range(data.shape[1])])
    for row in data:
        writer.writerow([repr(float(v)) for v in row])


def read_csv(fh) -> np.ndarray:
    text = fh.read() if hasattr(fh, "read") else str(fh)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty CSV input") from None
    expected = [f"X{i + 1}" for i in range(len(header))]
    if [h.strip() for h in header] != expected:
        raise ValueError(f"CSV header must be {','.join(expected)}")
    rows = [r for r in reader if r]
    if not rows:
        raise ValueError("CSV contains no samples")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ValueError(f"non-numeric CSV entry: {exc}") from None
    if data.shape[1] != len(header) or not np.all(np.isfinite(data)):
        raise ValueError("CSV rows must be finite and match the header width")
    return data


def parameters_to_dict(p: SemParameters) -> dict:
    return {
        "b": p.b.tolist(),
        "c": p.c.tolist(),
        "omega_x": p.omega_x.tolist(),
        "omega_l": p.omega_l.tolist(),
    }


def parameters_from_dict(obj: dict) -> SemParameters:
    try:
        b = np.array(obj["b"], dtype=float, ndmin=2)
        p = SemParameters(b, np.array(obj["c"], dtype=float).reshape(b.shape[1], b.shape[1]),
                          obj["omega_x"], obj["omega_l"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed parameter object: {exc}") from None
    if not _is_acyclic(p.c.T != 0):
        raise ValueError("latent weights contain a cycle")
    return p


def dumps_parameters(p: SemParameters) -> str:
    return json.dumps(parameters_to_dict(p), indent=2)
