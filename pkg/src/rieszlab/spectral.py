"""Functional calculus for ``-Δ`` on a weighted graph.

Everything goes through a dense eigendecomposition of the mu-symmetrised
generator ``S = M^{-1/2} L M^{-1/2}``; eigenvectors are mapped back so that
they are orthonormal for ``<f, g>_mu``. The inverse square root is available
both directly from the spectrum and through the heat-semigroup subordination
integral, which serves as an independent cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import InternalError, InvalidArgument, ResourceLimit
from .graph import (CylinderGraph, ScalarField, WeightedGraphManifold, as_manifold, check_mean_zero,
                    values_of)

SIZE_CAP = 6000


class SpectralDecomposition:
    """Eigenpairs of ``-Δ``: ``-Δ v_k = λ_k v_k`` with ``<v_j, v_k>_mu = δ_jk``."""

    def __init__(self, host: WeightedGraphManifold, eigenvalues, eigenvectors, kernel_dim: int = 1):
        self.host = host
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(eigenvectors, dtype=float)
        self.kernel_dim = int(kernel_dim)
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def gap(self) -> float:
        """Smallest nonzero eigenvalue λ_1."""
        return float(self.eigenvalues[self.kernel_dim])

    @property
    def mu(self):
        return self.host.mu

    def coefficients(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        w = self.mu * f if f.ndim == 1 else self.mu[:, None] * f
        return self.eigenvectors.T @ w

    def synthesize(self, coeffs) -> np.ndarray:
        return self.eigenvectors @ coeffs

    def apply_symbol(self, f, symbol) -> np.ndarray:
        """Apply ``φ(-Δ)`` given the array ``symbol = φ(λ_k)``."""
        c = self.coefficients(f)
        s = np.asarray(symbol, dtype=float)
        return self.synthesize(c * (s if c.ndim == 1 else s[:, None]))

    def operator_matrix(self, symbol) -> np.ndarray:
        """Dense matrix of ``φ(-Δ)`` acting on vertex values."""
        V = self.eigenvectors
        return (V * np.asarray(symbol)) @ (V.T * self.mu)

    def inv_sqrt_symbol(self) -> np.ndarray:
        s = np.zeros_like(self.eigenvalues)
        k = self.kernel_dim
        s[k:] = self.eigenvalues[k:] ** -0.5
        return s


def decompose(M, size_cap: int = SIZE_CAP, symmetry_rtol: float = 1e-12) -> SpectralDecomposition:
    """Full eigendecomposition of ``-Δ`` on ``M`` (graph, cylinder or glued manifold)."""
    M = as_manifold(M)
    n = M.n_vertices
    if n > size_cap:
        raise ResourceLimit(f"{n} vertices exceeds the dense size cap of {size_cap}")
    r = 1.0 / np.sqrt(M.mu)
    S = (M.stiffness().toarray() * r[:, None]) * r[None, :]
    asym = np.abs(S - S.T).max()
    if asym > symmetry_rtol * max(np.abs(S).max(), 1.0):
        raise InternalError(f"symmetrised generator is not symmetric (defect {asym:.2e})")
    S = 0.5 * (S + S.T)
    lam, phi = scipy.linalg.eigh(S)
    V = phi * r[:, None]
    scale = max(abs(lam[-1]), 1.0)
    kernel_dim = int(np.sum(lam <= 1e-10 * scale))
    lam = np.where(np.arange(n) < kernel_dim, 0.0, lam)
    if kernel_dim == 1:
        V[:, 0] = 1.0 / math.sqrt(M.volume)
    # deterministic signs: largest-magnitude entry positive
    piv = np.argmax(np.abs(V), axis=0)
    sgn = np.sign(V[piv, np.arange(n)])
    sgn[sgn == 0] = 1.0
    V = V * sgn
    return SpectralDecomposition(M, lam, V, kernel_dim)


def _as_field(D: SpectralDecomposition, values, mean_zero=False) -> ScalarField:
    return ScalarField(D.host, values, mean_zero=mean_zero)


def _mean_zero_values(D: SpectralDecomposition, f) -> np.ndarray:
    vals = values_of(f)
    check_mean_zero(D.mu, vals)
    return vals


def heat_semigroup(D: SpectralDecomposition, sigma: float, f) -> ScalarField:
    """``e^{σΔ} f``."""
    if sigma < 0:
        raise InvalidArgument("sigma must be nonnegative")
    vals = values_of(f)
    if sigma == 0:
        return _as_field(D, vals)
    return _as_field(D, D.apply_symbol(vals, np.exp(-sigma * D.eigenvalues)))


def inv_sqrt_spectral(D: SpectralDecomposition, f) -> ScalarField:
    """``(-Δ)^{-1/2} f`` on a mean-zero field, kernel mode projected out."""
    vals = _mean_zero_values(D, f)
    out = D.apply_symbol(vals, D.inv_sqrt_symbol())
    out -= np.dot(D.mu, out) / D.host.volume
    return _as_field(D, out, mean_zero=True)


@dataclass(frozen=True)
class QuadratureConfig:
    """Composite Gauss-Legendre rule for the subordination integral.

    After ``σ = t²`` the integrand is ``2 π^{-1/2} e^{-t² λ}``. Panels are
    geometrically graded from ``first_panel / sqrt(λ_max)`` up to the
    truncation point ``T`` where ``e^{-λ_1 T²} = tail``.
    """

    nodes_per_panel: int = 24
    growth: float = 2.0
    first_panel: float = 0.25
    tail: float = 1e-10


def _subordination_rule(gap: float, top: float, quad: QuadratureConfig):
    T = math.sqrt(-math.log(quad.tail) / gap)
    a = quad.first_panel / math.sqrt(max(top, gap))
    edges = [0.0]
    b = min(a, T)
    while b < T:
        edges.append(b)
        b *= quad.growth
    edges.append(T)
    x, w = np.polynomial.legendre.leggauss(quad.nodes_per_panel)
    ts, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        ts.append(lo + half * (x + 1.0))
        ws.append(half * w)
    return np.concatenate(ts), np.concatenate(ws) * (2.0 / math.sqrt(math.pi))


def subordination_scalar(lam: float, quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Quadrature of ``π^{-1/2} ∫ σ^{-1/2} e^{-σλ} dσ`` for a scalar ``λ > 0``."""
    t, w = _subordination_rule(lam, lam, quad)
    return float(np.dot(w, np.exp(-lam * t * t)))


def inv_sqrt_subordination(semigroup, f, quad: QuadratureConfig = QuadratureConfig(),
                           gap: float = None, top: float = None) -> ScalarField:
    """``(-Δ)^{-1/2} f`` from the heat semigroup by quadrature.

    Parameters
    ----------
    semigroup : SpectralDecomposition or callable
        Either a decomposition (the semigroup is then evaluated from it) or a
        callable ``semigroup(sigma, values) -> values`` together with ``gap``
        (a lower bound for λ_1) and ``host`` given by ``semigroup.host``.
    f : ScalarField
        Mean-zero input.
    gap, top : float, optional
        Spectral gap and an upper bound of the spectrum; required for a
        callable semigroup (``top`` defaults to ``gap``).
    """
    vals = values_of(f)
    if isinstance(semigroup, SpectralDecomposition):
        D = semigroup
        check_mean_zero(D.mu, vals)
        gap = D.gap if gap is None else gap
        top = float(D.eigenvalues[-1]) if top is None else top
        if not gap > 0:
            raise InvalidArgument("spectral gap must be positive")
        t, w = _subordination_rule(gap, top, quad)
        c = D.coefficients(vals)
        c[:D.kernel_dim] = 0.0
        symbol = np.exp(-np.outer(t * t, D.eigenvalues)).T @ w
        out = D.synthesize(c * symbol)
        host = D.host
    else:
        host = getattr(semigroup, "host", None) or (f.host if isinstance(f, ScalarField) else None)
        if gap is None or not gap > 0:
            raise InvalidArgument("a positive spectral gap estimate is required")
        if host is not None:
            check_mean_zero(host.mu, vals)
        t, w = _subordination_rule(gap, gap if top is None else top, quad)
        out = np.zeros_like(vals)
        for ti, wi in zip(t, w):
            out += wi * np.asarray(semigroup(ti * ti, vals))
    if host is None:
        return out
    out = out - np.dot(host.mu, out) / host.volume
    return ScalarField(host, out, mean_zero=True)


class SparseSemigroup:
    """Matrix-free ``σ ↦ e^{σΔ}`` via :func:`scipy.sparse.linalg.expm_multiply`."""

    def __init__(self, M):
        from scipy.sparse.linalg import expm_multiply

        self.host = as_manifold(M)
        self._gen = self.host.generator().tocsc()
        self._expm = expm_multiply

    def __call__(self, sigma, values):
        return self._expm(sigma * self._gen, np.asarray(values, dtype=float))


@dataclass(frozen=True)
class GradientMagnitudeField:
    """Pointwise gradient length ``|∇f|`` on the vertices of ``host``."""

    host: WeightedGraphManifold
    values: np.ndarray
    restrict: object = "all"

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if np.any(vals < 0):
            raise InvalidArgument("gradient magnitudes must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def squared_gradient(M: WeightedGraphManifold, values, mask=None) -> np.ndarray:
    """Carré du champ ``(2 mu)^{-1} Σ_{u~v} w (f(u) - f(v))²``; columns allowed."""
    e, w = M.edges, M.weights
    if mask is not None:
        e, w = e[mask], w[mask]
    vals = np.asarray(values, dtype=float)
    d = vals[e[:, 1]] - vals[e[:, 0]]
    n = M.n_vertices
    if vals.ndim == 1:
        en = w * d * d
        acc = np.bincount(e[:, 0], en, n) + np.bincount(e[:, 1], en, n)
        return acc / (2.0 * M.mu)
    en = w[:, None] * d * d
    acc = np.zeros((n, vals.shape[1]))
    np.add.at(acc, e[:, 0], en)
    np.add.at(acc, e[:, 1], en)
    return acc / (2.0 * M.mu[:, None])


def gradient_magnitude(M, f, restrict="all") -> GradientMagnitudeField:
    """Vertex gradient magnitude, optionally restricted to edges of one factor.

    The restricted version realises the projection onto one summand of a
    product tangent bundle; it is pointwise dominated by the full one.
    """
    M = as_manifold(M)
    mask = M.edge_mask(restrict)
    q = squared_gradient(M, values_of(f), mask)
    return GradientMagnitudeField(M, np.sqrt(q), restrict)


def riesz_transform(D: SpectralDecomposition, f, restrict="all") -> GradientMagnitudeField:
    """``|∇ (-Δ)^{-1/2} f|`` for mean-zero ``f``."""
    u = inv_sqrt_spectral(D, f)
    return gradient_magnitude(D.host, u, restrict)


def solve_poisson(D: SpectralDecomposition, f, rtol: float = 1e-10) -> ScalarField:
    """Mean-zero ``u`` with ``Δu = f``; one step of iterative refinement if needed."""
    vals = _mean_zero_values(D, f)
    k = D.kernel_dim
    sym = np.zeros_like(D.eigenvalues)
    sym[k:] = -1.0 / D.eigenvalues[k:]
    M = D.host
    u = D.apply_symbol(vals, sym)
    fnorm = math.sqrt(np.dot(M.mu, vals * vals))
    for _ in range(3):
        u -= np.dot(M.mu, u) / M.volume
        res = vals - M.apply_laplacian(u)
        if math.sqrt(np.dot(M.mu, res * res)) <= rtol * fnorm:
            break
        res -= np.dot(M.mu, res) / M.volume
        u += D.apply_symbol(res, sym)
    return ScalarField(M, u, mean_zero=True)


# rescaled transforms on cylinders --------------------------------------------------

class SeparableCylinder:
    """Base and axis decompositions of a cylinder, used for anisotropic symbols."""

    def __init__(self, C: CylinderGraph):
        if not isinstance(C, CylinderGraph):
            raise InvalidArgument("need a CylinderGraph")
        self.cylinder = C
        self.base = decompose(C.base)
        self.axis = decompose(C.axis)

    def coefficients(self, F) -> np.ndarray:
        """``c[k, j] = <F, w_k ⊗ v_j>_mu`` (k: axis mode, j: base mode)."""
        C = self.cylinder
        grid = C.as_grid(values_of(F))
        W, V = self.axis.eigenvectors, self.base.eigenvectors
        return W.T @ (C.axis.mu[:, None] * grid * C.base.mu[None, :]) @ V

    def synthesize(self, coeffs) -> np.ndarray:
        return (self.axis.eigenvectors @ coeffs @ self.base.eigenvectors.T).reshape(-1)


def rescaled_riesz(C: CylinderGraph, lam: float, F, separable: SeparableCylinder = None,
                   restrict="base") -> GradientMagnitudeField:
    """``|∇_base (-Δ_base - λ² ∂_t²)^{-1/2} F|`` computed mode by mode.

    The symbol is ``(λ_j + λ² μ_k)^{-1/2}``, i.e. the unscaled symbol times the
    bounded multiplier ``(x / (x + λ² y))^{1/2}`` evaluated at the base and axis
    eigenvalues.
    """
    if not lam > 0:
        raise InvalidArgument("lambda must be positive")
    sep = separable or SeparableCylinder(C)
    vals = values_of(F)
    check_mean_zero(C.mu, vals)
    c = sep.coefficients(vals)
    total = sep.base.eigenvalues[None, :] + lam * lam * sep.axis.eigenvalues[:, None]
    zero = total <= 0
    scale = np.abs(c).max() if c.size else 0.0
    if np.any(np.abs(c[zero]) > 1e-10 * max(scale, 1e-300)):
        raise InvalidArgument("field has a component on a zero mode of the rescaled operator")
    sym = np.zeros_like(total)
    sym[~zero] = total[~zero] ** -0.5
    u = sep.synthesize(c * sym)
    return gradient_magnitude(C, u, restrict)
