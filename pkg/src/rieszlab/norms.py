"""L^p norms and certified lower bounds for L^p -> L^p operator norms.

The estimator is a nonlinear power method: starting from a unit vector it
repeatedly takes the gradient of ``x ↦ ‖A x‖_p`` and maps it back through
the duality map of ``L^{p'}``, which is the exact maximiser of the linearised
objective on the unit sphere. Since ``‖A x‖_p`` is convex the objective never
decreases along the iteration; the best value over all starts, together with
its witness, is reported as a lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument
from .graph import ScalarField, WeightedGraphManifold, as_manifold, values_of
from .spectral import SpectralDecomposition, decompose, riesz_transform

DEFAULT_RESTARTS = 32
MAX_ITER = 500
RTOL = 1e-8
PATIENCE = 5


def _measure(f, mu):
    if mu is not None:
        return np.asarray(mu, dtype=float)
    host = getattr(f, "host", None)
    if host is None:
        raise InvalidArgument("need a host or an explicit measure")
    return host.mu


def lp_norm(f, p: float, mu=None) -> float:
    """``(Σ mu |f|^p)^{1/p}``; the max norm for ``p = inf``."""
    if not p >= 1:
        raise InvalidArgument("p must be >= 1")
    vals = np.abs(values_of(f))
    if math.isinf(p):
        return float(vals.max()) if vals.size else 0.0
    m = _measure(f, mu)
    top = float(vals.max()) if vals.size else 0.0
    if top == 0.0:
        return 0.0
    # scale by the max so that |f|^p neither underflows nor overflows
    x = vals / top
    if p == 2:
        return top * math.sqrt(float(np.dot(m, x * x)))
    return top * float(np.dot(m, x ** p)) ** (1.0 / p)


def project_mean_zero(f, mu=None):
    """Subtract the mu-average. Returns a ScalarField for field input."""
    m = _measure(f, mu)
    vals = values_of(f)
    out = vals - np.dot(m, vals) / m.sum()
    if isinstance(f, ScalarField):
        return ScalarField(f.host, out, mean_zero=True)
    return out


def hilbert_reference(p: float) -> float:
    """Norm of the conjugate-function operator on L^p: ``max(tan, cot)(π/2p)``."""
    if not 1 < p < math.inf:
        raise InvalidArgument("p must lie in (1, inf)")
    a = math.pi / (2 * p)
    return max(math.tan(a), 1.0 / math.tan(a))


# objectives ------------------------------------------------------------------------

class LinearObjective:
    """``x ↦ A x`` between weighted spaces ``L^p(mu_in) -> L^p(mu_out)``."""

    def __init__(self, A, mu_in=None, mu_out=None, host=None):
        self.A = np.asarray(A, dtype=float)
        m, n = self.A.shape
        self.mu_in = np.ones(n) if mu_in is None else np.asarray(mu_in, dtype=float)
        self.mu_out = np.ones(m) if mu_out is None else np.asarray(mu_out, dtype=float)
        self.host = host

    @property
    def size(self):
        return self.A.shape[1]

    def forward(self, X):
        return self.A @ X

    def step(self, X, p):
        Y = self.A @ X
        Z = self.mu_out[:, None] * np.abs(Y) ** (p - 1) * np.sign(Y)
        return Y, (self.A.T @ Z) / self.mu_in[:, None]


class RieszObjective:
    """``f ↦ |∇ (-Δ)^{-1/2} f|`` on mean-zero fields.

    The magnitude map is not linear, so the ascent differentiates through it:
    with ``g = |Rf|^{p-2}`` the gradient of ``p^{-1} ‖Rf‖_p^p`` with respect to
    ``u = (-Δ)^{-1/2} f`` is a ``g``-weighted edge Laplacian applied to ``u``,
    and the mu-gradient with respect to ``f`` is ``(-Δ)^{-1/2}`` of that
    divided by ``mu`` (the operator is mu-self-adjoint).
    """

    def __init__(self, D: SpectralDecomposition, restrict="all"):
        M = D.host
        self.D = D
        self.host = M
        self.mu_in = self.mu_out = M.mu
        self.restrict = restrict
        mask = M.edge_mask(restrict)
        e, w = M.edges[mask], M.weights[mask]
        m, n = len(w), M.n_vertices
        rows = np.repeat(np.arange(m), 2)
        cols = e.reshape(-1)
        data = np.tile([-1.0, 1.0], m)
        self.B = sp.csr_matrix((data, (rows, cols)), shape=(m, n))
        self.Bt = self.B.T.tocsr()
        self.absBt = abs(self.B).T.tocsr()
        self.w = w
        self.edges = e
        self.K = D.operator_matrix(D.inv_sqrt_symbol())

    @property
    def size(self):
        return self.host.n_vertices

    def _magnitude(self, U):
        d = self.B @ U
        q = (self.absBt @ (self.w[:, None] * d * d)) / (2.0 * self.mu_out[:, None])
        return d, np.sqrt(np.maximum(q, 0.0))

    def forward(self, X):
        return self._magnitude(self.K @ X)[1]

    def step(self, X, p):
        d, Y = self._magnitude(self.K @ X)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(Y > 0, Y ** (p - 2), 0.0)
        c = 0.5 * self.w[:, None] * (g[self.edges[:, 0]] + g[self.edges[:, 1]]) * d
        grad_u = self.Bt @ c
        return Y, self.K @ (grad_u / self.mu_in[:, None])


# estimator --------------------------------------------------------------------------

@dataclass
class OperatorNormEstimate:
    """Lower bound ``value = ‖A w‖_p / ‖w‖_p`` with its witness ``w``."""

    p: float
    value: float
    witness: object
    iterations: int
    restarts: int
    converged: bool
    start_label: str = ""
    history: list = field(default_factory=list, repr=False)

    @property
    def witness_values(self) -> np.ndarray:
        return values_of(self.witness)


def _weighted_pnorm(X, mu, p):
    return (mu @ np.abs(X) ** p) ** (1.0 / p)


def _dual_direction(G, mu, p, mean_zero):
    """Maximiser of ``<x, G>_mu`` over ``‖x‖_p = 1`` (and mean zero if asked)."""
    q = p / (p - 1.0)

    def phi(Z):
        return np.abs(Z) ** (q - 1.0) * np.sign(Z)

    if mean_zero:
        lo = G.min(axis=0).copy()
        hi = G.max(axis=0).copy()
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            s = mu @ phi(G - mid)
            pos = s > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        X = phi(G - 0.5 * (lo + hi))
        X -= (mu @ X) / mu.sum()
    else:
        X = phi(G)
    nrm = _weighted_pnorm(X, mu, p)
    nrm[nrm == 0] = 1.0
    return X / nrm


def op_norm_lower_bound(A, p: float, restarts: int = DEFAULT_RESTARTS, seed: int = 0, *,
                        mean_zero: bool = False, starts: Sequence = (), start_labels: Sequence = (),
                        structured: bool = True, max_iter: int = MAX_ITER, rtol: float = RTOL,
                        patience: int = PATIENCE, verify=None) -> OperatorNormEstimate:
    """Multistart nonlinear power iteration for ``sup ‖A f‖_p / ‖f‖_p``.

    Parameters
    ----------
    A : array_like or objective
        A matrix (uniform measures) or an object with ``forward``, ``step``,
        ``mu_in``, ``mu_out`` and ``size``.
    restarts : int
        Number of random starts; start ``i`` depends only on ``(seed, i)`` so
        more restarts never lower the result.
    mean_zero : bool
        Restrict the supremum to mean-zero inputs.
    starts : sequence of arrays
        Extra user starts (e.g. transported witnesses).
    verify : callable, optional
        Independent evaluation ``f -> ‖A f‖_p`` used to recompute the value.
    """
    if not (1 < p < math.inf):
        raise InvalidArgument("p must lie in (1, inf)")
    obj = A if hasattr(A, "step") else LinearObjective(A)
    mu = obj.mu_in
    n = obj.size

    cols, labels = [], []
    for i, s in enumerate(starts):
        cols.append(np.asarray(values_of(s), dtype=float))
        labels.append(start_labels[i] if i < len(start_labels) else f"user{i}")
    if structured:
        cols_s, labels_s = _structured_starts(obj, mean_zero)
        cols += cols_s
        labels += labels_s
    for i in range(restarts):
        g = np.random.default_rng([int(seed), i]).standard_normal(n)
        cols.append(g)
        labels.append(f"random{i}")
    X = np.stack(cols, axis=1)
    if mean_zero:
        X = X - (mu @ X) / mu.sum()
    nrm = _weighted_pnorm(X, mu, p)
    good = nrm > 1e-300
    X, labels = X[:, good], [l for l, g in zip(labels, good) if g]
    if X.shape[1] == 0:
        raise InvalidArgument("no nonzero starting vector")
    X = X / nrm[good]

    r = X.shape[1]
    best_val = np.full(r, -np.inf)
    best_X = X.copy()
    streak = np.zeros(r, dtype=int)
    active = np.ones(r, dtype=bool)
    prev = np.full(r, np.nan)
    iters = 0
    history = []
    for it in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        iters = it + 1
        Y, G = obj.step(X[:, idx], p)
        vals = _weighted_pnorm(Y, obj.mu_out, p)
        improved = vals > best_val[idx]
        best_val[idx] = np.where(improved, vals, best_val[idx])
        best_X[:, idx[improved]] = X[:, idx[improved]]
        history.append(float(best_val.max()))
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.abs(vals - prev[idx]) / np.maximum(np.abs(vals), 1e-300)
        small = rel <= rtol
        streak[idx] = np.where(small, streak[idx] + 1, 0)
        prev[idx] = vals
        if np.all(vals == 0):
            active[idx] = False
            break
        active[idx] &= streak[idx] < patience
        still = idx[active[idx]]
        if still.size:
            sel = active[idx]
            X[:, still] = _dual_direction(G[:, sel], mu, p, mean_zero)

    k = int(np.argmax(best_val))
    w = best_X[:, k]
    w = w / _weighted_pnorm(w[:, None], mu, p)[0]
    host = getattr(obj, "host", None)
    if verify is not None:
        value = float(verify(w)) / lp_norm(w, p, mu)
    else:
        value = lp_norm(obj.forward(w[:, None])[:, 0], p, obj.mu_out) / lp_norm(w, p, mu)
    witness = ScalarField(host, w, mean_zero=mean_zero) if host is not None else w
    converged = bool(streak[k] >= patience or best_val[k] == 0)
    return OperatorNormEstimate(p, value, witness, iters, restarts, converged, labels[k], history)


def _structured_starts(obj, mean_zero):
    n = obj.size
    cols, labels = [], []
    D = getattr(obj, "D", None)
    if D is not None:
        for k in range(D.kernel_dim, min(D.kernel_dim + 6, n)):
            cols.append(np.array(D.eigenvectors[:, k]))
            labels.append(f"eig{k}")
    nb = n if n <= 8 else 6
    for v in np.linspace(0, n - 1, nb).round().astype(int):
        e = np.zeros(n)
        e[v] = 1.0 / obj.mu_in[v]
        cols.append(e)
        labels.append(f"bump{v}")
    return cols, labels


def riesz_norm(host, p: float, restarts: int = DEFAULT_RESTARTS, seed: int = 0, *,
               decomposition: SpectralDecomposition = None, starts: Sequence = (),
               start_labels: Sequence = (), restrict="all", **kwargs) -> OperatorNormEstimate:
    """Lower bound for the L^p norm of the Riesz transform on ``host``.

    ``host`` may be a graph, a cylinder or a glued manifold. The returned value
    is recomputed from the witness through the spectral Riesz transform.
    """
    M = as_manifold(host)
    D = decomposition if decomposition is not None else decompose(M)
    obj = RieszObjective(D, restrict)

    def verify(w):
        return lp_norm(riesz_transform(D, ScalarField(M, w), restrict), p)

    return op_norm_lower_bound(obj, p, restarts, seed, mean_zero=True, starts=starts,
                               start_labels=start_labels, verify=verify, **kwargs)
