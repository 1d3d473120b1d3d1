"""Weighted graphs standing in for Riemannian manifolds.

A :class:`WeightedGraphManifold` carries a vertex volume ``mu`` and edge
conductances ``w``; its generator is

    (Δf)(v) = mu(v)^{-1} Σ_{u~v} w(uv) (f(u) - f(v)),

which is self-adjoint for ``<f, g> = Σ mu f g`` and kills constants.
Products realise Kronecker sums of generators, cylinders are products with a
one-dimensional axis, and :func:`glue` performs the vertex-level surgery that
joins several cylinders to a torus backbone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import InvalidArgument, OutOfRange, SurgeryFailure

PERIODIC = "periodic"
REFLECTING = "reflecting"
BRIDGE_POLICIES = ("complete-bipartite", "uniform")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class WeightedGraphManifold:
    """Finite weighted graph with vertex measure.

    Parameters
    ----------
    mu : array_like, shape (n,)
        Positive vertex volumes.
    edges : array_like, shape (m, 2)
        Vertex pairs; stored with ``u < v``.
    weights : array_like, shape (m,)
        Positive conductances.
    tags : sequence of str, optional
        Per-edge factor label. Defaults to ``"base"`` for every edge.
    dim_hint : int
        Dimension of the manifold being approximated.
    """

    def __init__(self, mu, edges, weights, tags=None, dim_hint=1, name="", check=True):
        mu = np.asarray(mu, dtype=float)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if tags is None:
            tags = ["base"] * len(weights)
        tags = list(tags)
        if len(tags) != len(weights) or len(edges) != len(weights):
            raise InvalidArgument("edges, weights and tags must have equal length")
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        order = np.lexsort((hi, lo))
        self.mu = _frozen(mu, float)
        self.edges = _frozen(np.stack([lo, hi], axis=1)[order], np.int64)
        self.weights = _frozen(weights[order], float)
        self.tag_names = tuple(sorted(set(tags)))
        codes = np.array([self.tag_names.index(t) for t in tags], dtype=np.int64)
        self.tag_codes = _frozen(codes[order] if len(codes) else codes, np.int64)
        self.dim_hint = int(dim_hint)
        self.name = name
        if check:
            self._validate()

    def _validate(self):
        n = len(self.mu)
        if n == 0:
            raise InvalidArgument("graph has no vertices")
        if not np.all(self.mu > 0) or not np.all(np.isfinite(self.mu)):
            raise InvalidArgument("vertex volumes must be positive and finite")
        if len(self.weights) and not (np.all(self.weights > 0) and np.all(np.isfinite(self.weights))):
            raise InvalidArgument("edge conductances must be positive and finite")
        e = self.edges
        if len(e):
            if e.min() < 0 or e.max() >= n:
                raise InvalidArgument("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise InvalidArgument("self-loops are not allowed")
            key = e[:, 0] * n + e[:, 1]
            if len(np.unique(key)) != len(key):
                raise InvalidArgument("duplicate edges")
        if n > 1 and not self.is_connected():
            raise InvalidArgument("graph must be connected")

    # basic quantities -------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.mu)

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    @property
    def volume(self) -> float:
        return float(self.mu.sum())

    def tags(self) -> list[str]:
        return [self.tag_names[c] for c in self.tag_codes]

    def edge_mask(self, restrict="all") -> np.ndarray:
        """Boolean mask of edges whose factor tag is in ``restrict``."""
        if restrict is None or restrict == "all":
            return np.ones(self.n_edges, dtype=bool)
        names = [restrict] if isinstance(restrict, str) else list(restrict)
        unknown = [t for t in names if t not in self.tag_names]
        if unknown:
            raise InvalidArgument(f"unknown factor tag(s) {unknown}; have {list(self.tag_names)}")
        codes = [self.tag_names.index(t) for t in names]
        return np.isin(self.tag_codes, codes)

    def adjacency(self) -> sp.csr_matrix:
        n = self.n_vertices
        u, v = self.edges[:, 0], self.edges[:, 1]
        a = sp.coo_matrix(
            (np.concatenate([self.weights, self.weights]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(n, n),
        )
        return a.tocsr()

    def degree(self) -> np.ndarray:
        """Total conductance incident to each vertex."""
        d = np.bincount(self.edges[:, 0], weights=self.weights, minlength=self.n_vertices)
        d += np.bincount(self.edges[:, 1], weights=self.weights, minlength=self.n_vertices)
        return d

    def stiffness(self) -> sp.csr_matrix:
        """Symmetric matrix ``L = D - W`` so that ``-Δ = M^{-1} L``."""
        return (sp.diags(self.degree()) - self.adjacency()).tocsr()

    def generator(self) -> sp.csr_matrix:
        """Sparse matrix of Δ (non-positive)."""
        return (-sp.diags(1.0 / self.mu) @ self.stiffness()).tocsr()

    def apply_laplacian(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        u, v = self.edges[:, 0], self.edges[:, 1]
        flux = self.weights * (f[v] - f[u]) if f.ndim == 1 else self.weights[:, None] * (f[v] - f[u])
        out = np.zeros_like(f)
        np.add.at(out, v, -flux)
        np.add.at(out, u, flux)
        return out / (self.mu if f.ndim == 1 else self.mu[:, None])

    def neighbors(self, v: int) -> np.ndarray:
        a = self.adjacency()
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def is_connected(self) -> bool:
        ncomp, _ = connected_components(self.adjacency(), directed=False)
        return ncomp == 1

    def hop_distance(self, sources) -> np.ndarray:
        """Graph (hop) distance from the nearest vertex in ``sources``."""
        a = self.adjacency().copy()
        a.data[:] = 1.0
        d = shortest_path(a, unweighted=True, indices=np.atleast_1d(sources))
        return d.min(axis=0)

    def field(self, values, mean_zero=False) -> "ScalarField":
        return ScalarField(self, values, mean_zero=mean_zero)

    def __repr__(self):
        return (f"{type(self).__name__}(name={self.name!r}, vertices={self.n_vertices}, "
                f"edges={self.n_edges}, dim_hint={self.dim_hint})")


class CylinderGraph(WeightedGraphManifold):
    """Product of a base graph with a one-dimensional axis.

    Vertex ``(x, t)`` has index ``t * n_base + x``. Base edges carry the tag
    ``"base"`` and axis edges the tag ``"axis"``.
    """

    def __init__(self, base: WeightedGraphManifold, axis_steps: int, spacing: float = 1.0,
                 axis_boundary: str = PERIODIC, name: str = ""):
        if axis_boundary not in (PERIODIC, REFLECTING):
            raise InvalidArgument(f"axis_boundary must be {PERIODIC!r} or {REFLECTING!r}")
        axis_steps = int(axis_steps)
        minimum = 3 if axis_boundary == PERIODIC else 2
        if axis_steps < minimum:
            raise InvalidArgument(f"{axis_boundary} axis needs at least {minimum} steps")
        if not spacing > 0:
            raise InvalidArgument("spacing must be positive")
        axis = build_axis(axis_steps, spacing, axis_boundary)
        prod = product(base, axis, tags=("base", "axis"))
        super().__init__(prod.mu, prod.edges, prod.weights, prod.tags(), dim_hint=base.dim_hint + 1,
                         name=name or f"{base.name}xI{axis_steps}", check=False)
        self.base = base
        self.axis = axis
        self.axis_steps = axis_steps
        self.spacing = float(spacing)
        self.axis_boundary = axis_boundary

    @property
    def n_base(self) -> int:
        return self.base.n_vertices

    def index(self, x, t):
        return np.asarray(t) * self.n_base + np.asarray(x)

    def coords(self, v):
        v = np.asarray(v)
        return v % self.n_base, v // self.n_base

    def levels(self) -> np.ndarray:
        return np.arange(self.n_vertices) // self.n_base

    def as_grid(self, values) -> np.ndarray:
        """Reshape vertex values to ``(axis_steps, n_base)``."""
        return np.asarray(values).reshape(self.axis_steps, self.n_base)

    def axis_distance(self, level: int) -> np.ndarray:
        """Axis-level distance of every vertex from ``level``."""
        d = np.abs(self.levels() - level)
        if self.axis_boundary == PERIODIC:
            d = np.minimum(d, self.axis_steps - d)
        return d

    @property
    def middle_level(self) -> int:
        return self.axis_steps // 2


@dataclass(frozen=True)
class ScalarField:
    """Vertex-indexed real function on a host graph."""

    host: WeightedGraphManifold
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if vals.shape[0] != self.host.n_vertices:
            raise InvalidArgument(
                f"field has {vals.shape[0]} values, host has {self.host.n_vertices} vertices")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.mean_zero:
            check_mean_zero(self.host.mu, vals)

    def integral(self) -> float:
        return float(np.dot(self.host.mu, self.values))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


MEAN_ZERO_RTOL = 1e-12


def is_mean_zero(mu, values, rtol=MEAN_ZERO_RTOL) -> bool:
    values = np.asarray(values, dtype=float)
    return abs(np.dot(mu, values)) <= rtol * np.dot(mu, np.abs(values))


def check_mean_zero(mu, values, rtol=MEAN_ZERO_RTOL):
    if not is_mean_zero(mu, values, rtol):
        raise InvalidArgument(
            f"field is not mean-zero: |Σ mu f| = {abs(np.dot(mu, values)):.3e} exceeds "
            f"{rtol:g} · Σ mu|f|")


def values_of(f) -> np.ndarray:
    if isinstance(f, ScalarField):
        return f.values
    return np.asarray(getattr(f, "values", f), dtype=float)


# constructors ---------------------------------------------------------------

def build_cycle(n: int, circumference: float = None) -> WeightedGraphManifold:
    """Cycle graph discretising a circle of the given circumference."""
    if int(n) != n or n < 3:
        raise InvalidArgument("cycle needs n >= 3 vertices")
    n = int(n)
    circumference = float(n if circumference is None else circumference)
    if not circumference > 0:
        raise InvalidArgument("circumference must be positive")
    h = circumference / n
    idx = np.arange(n)
    edges = np.stack([idx, (idx + 1) % n], axis=1)
    return WeightedGraphManifold(np.full(n, h), edges, np.full(n, 1.0 / h), dim_hint=1, name=f"C{n}")


def build_path(n: int, spacing: float = 1.0) -> WeightedGraphManifold:
    if n < 2:
        raise InvalidArgument("path needs n >= 2 vertices")
    idx = np.arange(n - 1)
    return WeightedGraphManifold(np.full(n, float(spacing)), np.stack([idx, idx + 1], axis=1),
                                 np.full(n - 1, 1.0 / spacing), dim_hint=1, name=f"P{n}")


def build_axis(steps: int, spacing: float, boundary: str) -> WeightedGraphManifold:
    if boundary == PERIODIC:
        return build_cycle(steps, steps * spacing)
    return build_path(steps, spacing)


def product(A: WeightedGraphManifold, B: WeightedGraphManifold, tags=("A", "B")) -> WeightedGraphManifold:
    """Cartesian product with generator ``Δ_A ⊕ Δ_B``.

    Vertex ``(a, b)`` gets index ``b * |A| + a`` and volume ``mu_A(a) mu_B(b)``.
    An A-edge at level b has conductance ``w_A · mu_B(b)``; symmetrically for B.
    """
    nA, nB = A.n_vertices, B.n_vertices
    mu = np.outer(B.mu, A.mu).reshape(-1)
    bl = np.arange(nB)
    ea = (bl[:, None, None] * nA + A.edges[None, :, :]).reshape(-1, 2)
    wa = np.outer(B.mu, A.weights).reshape(-1)
    al = np.arange(nA)
    eb = (B.edges[:, None, :] * nA + al[None, :, None]).reshape(-1, 2)
    wb = np.outer(B.weights, A.mu).reshape(-1)
    edges = np.concatenate([ea, eb])
    weights = np.concatenate([wa, wb])
    tag_list = [tags[0]] * len(wa) + [tags[1]] * len(wb)
    return WeightedGraphManifold(mu, edges, weights, tag_list, dim_hint=A.dim_hint + B.dim_hint,
                                 name=f"{A.name}x{B.name}", check=False)


def build_torus(d: int, n: int, side: float = None) -> WeightedGraphManifold:
    """d-fold product of ``build_cycle(n, side)``."""
    if int(d) != d or d < 1:
        raise InvalidArgument("torus dimension must be >= 1")
    c = build_cycle(n, side)
    t = c
    for _ in range(int(d) - 1):
        t = product(t, c, tags=("base", "base"))
    t.name = f"T{d}_{n}" if d > 1 else c.name
    return t


def build_cylinder(base, axis_steps, spacing=1.0, axis_boundary=PERIODIC) -> CylinderGraph:
    return CylinderGraph(base, axis_steps, spacing, axis_boundary)


# translation --------------------------------------------------------------------

def translate(F, s: int, cylinder: CylinderGraph = None) -> ScalarField:
    """Axis shift ``(τ_s F)(x, t) = F(x, t - s)``."""
    host = cylinder if cylinder is not None else F.host
    if not isinstance(host, CylinderGraph):
        raise InvalidArgument("translation needs a CylinderGraph host")
    s = int(s)
    grid = host.as_grid(values_of(F))
    if host.axis_boundary == PERIODIC:
        out = np.roll(grid, s, axis=0)
    else:
        rows = np.flatnonzero(np.any(grid != 0, axis=1))
        if len(rows) and (rows.min() + s < 1 or rows.max() + s > host.axis_steps - 2):
            raise OutOfRange(f"shift {s} moves the support off the reflecting axis")
        out = np.zeros_like(grid)
        if len(rows):
            lo, hi = rows.min(), rows.max() + 1
            out[lo + s:hi + s] = grid[lo:hi]
    mz = F.mean_zero if isinstance(F, ScalarField) else False
    return ScalarField(host, out.reshape(-1), mean_zero=mz)


# gluing ------------------------------------------------------------------------

@dataclass(frozen=True)
class Embedding:
    """Vertex map of a surviving source graph into the ambient graph.

    ``index_map[v]`` is the ambient index of source vertex ``v`` (``-1`` if the
    vertex was removed). ``isometric[v]`` marks vertices whose generator row is
    carried over unchanged, i.e. those at axis distance ``>= cut`` from the
    glue level.
    """

    source: WeightedGraphManifold
    index_map: np.ndarray
    isometric: np.ndarray
    site: int = -1
    glue_level: int = -1
    cut: int = 0

    @property
    def domain(self) -> np.ndarray:
        return self.index_map >= 0

    def stop_region(self) -> np.ndarray:
        """Source vertices outside the isometric domain (the low band)."""
        return ~self.isometric


@dataclass(frozen=True)
class GlueRecord:
    piece_site: int
    backbone_site: int
    piece_boundary: np.ndarray      # ambient indices of the site's former neighbours
    backbone_boundary: np.ndarray
    bridge_edges: np.ndarray        # (k, 2) ambient indices
    bridge_weights: np.ndarray


@dataclass(frozen=True, eq=False)
class GluedManifold:
    """Backbone cylinder with piece cylinders attached by one-vertex surgery."""

    ambient: WeightedGraphManifold
    backbone: CylinderGraph
    pieces: tuple
    embeddings: tuple
    backbone_embedding: Embedding
    glue_records: tuple = field(default=())
    bridge_policy: str = "complete-bipartite"

    def embedding(self, n) -> Embedding:
        if n == "backbone" or n == -1:
            return self.backbone_embedding
        return self.embeddings[n]

    def source(self, n) -> WeightedGraphManifold:
        return self.embedding(n).source

    @property
    def n_vertices(self):
        return self.ambient.n_vertices

    def glue_vertices(self) -> np.ndarray:
        """Ambient vertices touched by surgery (bridge endpoints)."""
        if not self.glue_records:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([r.bridge_edges.reshape(-1) for r in self.glue_records]))


def as_manifold(obj) -> WeightedGraphManifold:
    if isinstance(obj, GluedManifold):
        return obj.ambient
    if isinstance(obj, WeightedGraphManifold):
        return obj
    raise InvalidArgument(f"not a manifold: {type(obj).__name__}")


def default_sites(pieces: Sequence[CylinderGraph], backbone: CylinderGraph):
    """Piece sites at ``(0, middle)``; backbone sites spread along the axis."""
    k = len(pieces)
    sites = []
    for j, piece in enumerate(pieces):
        ps = int(piece.index(0, piece.middle_level))
        level = (j * backbone.axis_steps) // max(k, 1)
        bs = int(backbone.index(0, level))
        sites.append((ps, bs))
    return sites


def glue(pieces: Sequence[CylinderGraph], backbone: CylinderGraph, sites=None,
         bridge_policy: str = "complete-bipartite", cut: int = 2) -> GluedManifold:
    """Remove one vertex from each piece and from the backbone and bridge the holes.

    Parameters
    ----------
    pieces : sequence of CylinderGraph
    backbone : CylinderGraph
    sites : sequence of (piece_vertex, backbone_vertex), optional
        Defaults to :func:`default_sites`.
    bridge_policy : {"complete-bipartite", "uniform"}
        Both connect every former neighbour of the piece site to every former
        neighbour of the backbone site with total conductance equal to the
        average of the two removed stars. ``complete-bipartite`` splits it in
        proportion to the removed edge weights, ``uniform`` equally.
    cut : int
        Piece vertices at axis distance ``>= cut`` from the glue level keep
        their generator row and are flagged isometric.
    """
    if bridge_policy not in BRIDGE_POLICIES:
        raise InvalidArgument(f"bridge_policy must be one of {BRIDGE_POLICIES}")
    if cut < 1:
        raise InvalidArgument("cut must be at least one axis step")
    pieces = tuple(pieces)
    if sites is None:
        sites = default_sites(pieces, backbone)
    sites = [(int(a), int(b)) for a, b in sites]
    if len(sites) != len(pieces):
        raise InvalidArgument("need one site pair per piece")

    bsites = [b for _, b in sites]
    if len(set(bsites)) != len(bsites):
        raise InvalidArgument("backbone sites overlap")
    if len(bsites) > 1:
        a = backbone.adjacency().copy()
        a.data[:] = 1.0
        dist = shortest_path(a, unweighted=True, indices=bsites)[:, bsites]
        off = dist[~np.eye(len(bsites), dtype=bool)]
        if np.any(off < 3):
            raise InvalidArgument("backbone sites must have disjoint closed neighbourhoods (distance >= 3)")
    for piece, (ps, _) in zip(pieces, sites):
        if not 0 <= ps < piece.n_vertices:
            raise InvalidArgument("piece site out of range")
        _, lvl = piece.coords(ps)
        if not np.any(piece.axis_distance(int(lvl)) >= cut):
            raise InvalidArgument("piece site leaves no room for an isometric region")

    # ambient vertex numbering: surviving backbone vertices, then each piece in turn
    sources = [backbone] + list(pieces)
    removed = [set(bsites)] + [{ps} for ps, _ in sites]
    maps, offset = [], 0
    for g, rem in zip(sources, removed):
        keep = np.ones(g.n_vertices, dtype=bool)
        keep[list(rem)] = False
        m = np.full(g.n_vertices, -1, dtype=np.int64)
        m[keep] = offset + np.arange(keep.sum())
        offset += int(keep.sum())
        maps.append(m)

    mu = np.zeros(offset)
    edge_blocks, weight_blocks, tag_blocks = [], [], []
    for g, m in zip(sources, maps):
        keep = m >= 0
        mu[m[keep]] = g.mu[keep]
        e = m[g.edges]
        ok = np.all(e >= 0, axis=1)
        edge_blocks.append(e[ok])
        weight_blocks.append(g.weights[ok])
        tag_blocks.extend(np.array(g.tags(), dtype=object)[ok].tolist())

    records = []
    for j, (piece, (ps, bs)) in enumerate(zip(pieces, sites)):
        pm, bm = maps[j + 1], maps[0]
        p_nb, p_w = _star(piece, ps)
        b_nb, b_w = _star(backbone, bs)
        Wp, Wb = p_w.sum(), b_w.sum()
        total = 0.5 * (Wp + Wb)
        if bridge_policy == "complete-bipartite":
            w = total * np.outer(p_w / Wp, b_w / Wb)
        else:
            w = np.full((len(p_nb), len(b_nb)), total / (len(p_nb) * len(b_nb)))
        pa, ba = pm[p_nb], bm[b_nb]
        be = np.stack(np.meshgrid(pa, ba, indexing="ij"), axis=-1).reshape(-1, 2)
        bw = w.reshape(-1)
        edge_blocks.append(be)
        weight_blocks.append(bw)
        tag_blocks.extend(["bridge"] * len(bw))
        records.append(GlueRecord(ps, bs, _ro(pa), _ro(ba), _ro(be), _ro(bw)))

    edges = np.concatenate(edge_blocks)
    weights = np.concatenate(weight_blocks)
    ambient = WeightedGraphManifold(mu, edges, weights, tag_blocks, dim_hint=backbone.dim_hint,
                                    name="glued", check=False)
    try:
        ambient._validate()
    except InvalidArgument as exc:
        raise SurgeryFailure(f"glued graph is invalid: {exc}") from exc

    embeddings = []
    for j, (piece, (ps, _)) in enumerate(zip(pieces, sites)):
        _, lvl = piece.coords(ps)
        iso = (piece.axis_distance(int(lvl)) >= cut) & (maps[j + 1] >= 0)
        embeddings.append(Embedding(piece, _ro(maps[j + 1]), _ro(iso), ps, int(lvl), cut))
    b_iso = maps[0] >= 0
    if bsites:
        b_iso &= backbone.hop_distance(bsites) >= 2
    bemb = Embedding(backbone, _ro(maps[0]), _ro(b_iso), -1, -1, 0)
    return GluedManifold(ambient, backbone, pieces, tuple(embeddings), bemb, tuple(records), bridge_policy)


def _star(g: WeightedGraphManifold, v: int):
    hit = (g.edges[:, 0] == v) | (g.edges[:, 1] == v)
    e = g.edges[hit]
    nb = np.where(e[:, 0] == v, e[:, 1], e[:, 0])
    order = np.argsort(nb, kind="stable")
    return nb[order], g.weights[hit][order]


def _ro(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


# pushforward / pullback ---------------------------------------------------------

def pushforward(G: GluedManifold, n, F, require_isometric: bool = False) -> ScalarField:
    """Extension by zero ``i_* F`` of a field on a piece into the ambient graph."""
    emb = G.embedding(n)
    vals = values_of(F)
    if vals.shape[0] != emb.source.n_vertices:
        raise InvalidArgument("field does not live on the chosen piece")
    allowed = emb.isometric if require_isometric else emb.domain
    if np.any(vals[~allowed] != 0):
        raise InvalidArgument("field is supported outside the embedding domain")
    out = np.zeros(G.ambient.n_vertices)
    dom = emb.domain
    out[emb.index_map[dom]] = vals[dom]
    mz = F.mean_zero if isinstance(F, ScalarField) else False
    return ScalarField(G.ambient, out, mean_zero=mz)


def pullback(G: GluedManifold, n, f) -> ScalarField:
    """``i^* f``: ambient values read back on the piece (zero at removed vertices)."""
    emb = G.embedding(n)
    vals = values_of(f)
    if vals.shape[0] != G.ambient.n_vertices:
        raise InvalidArgument("field does not live on the ambient graph")
    out = np.zeros(emb.source.n_vertices)
    dom = emb.domain
    out[dom] = vals[emb.index_map[dom]]
    return ScalarField(emb.source, out)
