"""Continuous-time random walks with generator ½Δ.

The walk at ``v`` waits an exponential time of rate ``Σ_u w(uv) / (2 mu(v))``
and then jumps to ``u`` with probability proportional to ``w(uv)``. Running it
for time ``2σ`` gives ``E f(W(2σ)) = (e^{σΔ} f)(start)``.

Bulk sampling goes through a compiled kernel when available (``BACKEND ==
"cython"``) and a vectorised numpy fallback otherwise; set
``RIESZLAB_BACKEND=python`` to force the fallback. Both consume the same
counter-based uniform stream, so they produce the same paths.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _walk_fallback, rng
from .errors import InvalidArgument
from .graph import GluedManifold, ScalarField, as_manifold, values_of
from .settings import get_threads

try:
    from . import _walk_kernel
except ImportError:  # pragma: no cover - depends on the build
    _walk_kernel = None

_BACKENDS = {"python": _walk_fallback}
if _walk_kernel is not None:
    _BACKENDS["cython"] = _walk_kernel

BACKEND = os.environ.get("RIESZLAB_BACKEND") or ("cython" if _walk_kernel is not None else "python")
if BACKEND not in _BACKENDS:
    BACKEND = "python"

# stream ids keep independent operations on independent uniforms
STREAM_HEAT = 1
STREAM_EXIT = 2
STREAM_COUPLED_PIECE = 3
STREAM_COUPLED_AMBIENT = 4
STREAM_PATH = 5

CHUNK = 16384


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


class WalkChain:
    """CSR transition data of the ½Δ walk on one graph."""

    def __init__(self, M):
        M = as_manifold(M)
        self.host = M
        a = M.adjacency()
        a.sort_indices()
        self.indptr = a.indptr.astype(np.int64)
        self.indices = a.indices.astype(np.int64)
        w = a.data.astype(float)
        deg = np.add.reduceat(w, self.indptr[:-1]) if len(w) else np.zeros(M.n_vertices)
        cum = np.empty_like(w)
        for v in range(M.n_vertices):
            lo, hi = self.indptr[v], self.indptr[v + 1]
            c = np.cumsum(w[lo:hi]) / deg[v]
            c[-1] = 1.0
            cum[lo:hi] = c
        self.cum = cum
        self.rates = deg / (2.0 * M.mu)
        self.weights = w

    def run(self, starts, horizons, seed, stream, stop_mask=None, stop_on_hit=False,
            sample_offset=0, backend=None, threads=None, sample_ids=None):
        """Sample ``len(starts)`` walks; returns a :class:`WalkBatch`.

        Walk ``i`` uses the uniform stream of global sample index
        ``sample_offset + i``, or ``sample_ids[i]`` when given.
        """
        starts = np.ascontiguousarray(starts, dtype=np.int64)
        n = len(starts)
        horizons = np.ascontiguousarray(np.broadcast_to(np.asarray(horizons, float), (n,)))
        if np.any(horizons < 0):
            raise InvalidArgument("horizon must be nonnegative")
        if stop_mask is None:
            stop_mask = np.zeros(self.host.n_vertices, dtype=np.uint8)
        stop_mask = np.ascontiguousarray(stop_mask, dtype=np.uint8)
        if sample_ids is None:
            sample_ids = np.arange(sample_offset, sample_offset + n, dtype=np.uint64)
        elif len(sample_ids) != n:
            raise InvalidArgument("need one sample id per start")
        keys = rng.sample_keys(seed, stream, np.asarray(sample_ids, dtype=np.uint64))
        kern = _BACKENDS[backend or BACKEND]
        out = (np.empty(n, np.int64), np.zeros(n, np.uint8), np.empty(n, np.float64),
               np.empty(n, np.int64), np.empty(n, np.int64))
        bounds = [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]
        args = (self.indptr, self.indices, self.cum, self.rates, starts, horizons, stop_mask,
                bool(stop_on_hit), keys)
        nthreads = threads or get_threads()
        if nthreads > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(nthreads) as pool:
                list(pool.map(lambda b: kern.simulate(*args, b[0], b[1], out), bounds))
        else:
            for lo, hi in bounds:
                kern.simulate(*args, lo, hi, out)
        return WalkBatch(*out)


class WalkBatch(NamedTuple):
    end: np.ndarray
    hit: np.ndarray
    hit_time: np.ndarray
    hit_vertex: np.ndarray
    njumps: np.ndarray


@dataclass(frozen=True)
class WalkPath:
    start: int
    events: tuple       # ((jump time, vertex), ...)
    horizon: float

    @property
    def end(self) -> int:
        return self.events[-1][1] if self.events else self.start

    def position(self, time: float) -> int:
        v = self.start
        for t, u in self.events:
            if t > time:
                break
            v = u
        return v

    def to_csv(self) -> str:
        lines = ["time,vertex", f"0,{self.start}"]
        lines += [f"{t:.17g},{v}" for t, v in self.events]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StoppingRule:
    region: np.ndarray      # boolean vertex mask
    description: str = ""

    @classmethod
    def from_vertices(cls, host, vertices, description=""):
        mask = np.zeros(as_manifold(host).n_vertices, dtype=bool)
        mask[np.asarray(vertices, dtype=np.int64)] = True
        return cls(mask, description)


def sample_walk(M, start: int, horizon: float, seed: int = 0, sample: int = 0,
                stream: int = STREAM_PATH, chain: WalkChain = None) -> WalkPath:
    """One full path on ``[0, horizon]`` (uses the same draws as the bulk kernels)."""
    if horizon < 0:
        raise InvalidArgument("horizon must be nonnegative")
    ch = chain or WalkChain(M)
    key = rng.sample_key(seed, stream, sample)
    v, t, c = int(start), 0.0, 0
    events = []
    while True:
        t -= math.log(rng.uniform(key, c)) / ch.rates[v]
        if not t <= horizon:
            break
        u = rng.uniform(key, c + 1)
        c += 2
        lo, hi = ch.indptr[v], ch.indptr[v + 1]
        k = lo
        while k < hi - 1 and ch.cum[k] < u:
            k += 1
        v = int(ch.indices[k])
        events.append((t, v))
    return WalkPath(int(start), tuple(events), float(horizon))


def _pairwise_sum(x, axis=-1):
    # numpy's add.reduce is pairwise and independent of threading
    return np.add.reduce(x, axis=axis)


def mc_heat(M, f, sigma: float, samples: int, seed: int = 0, vertices=None, chain: WalkChain = None,
            backend=None):
    """Monte Carlo estimate of ``e^{σΔ} f`` at each vertex, with standard errors.

    Returns
    -------
    estimate, stderr : ndarray
        Values at ``vertices`` (all vertices by default).
    """
    if samples < 1:
        raise InvalidArgument("need at least one sample")
    if sigma < 0:
        raise InvalidArgument("sigma must be nonnegative")
    M = as_manifold(M)
    ch = chain or WalkChain(M)
    vals = values_of(f)
    verts = np.arange(M.n_vertices) if vertices is None else np.atleast_1d(vertices).astype(np.int64)
    est = np.empty(len(verts))
    err = np.empty(len(verts))
    for i, v in enumerate(verts):
        b = ch.run(np.full(samples, v), 2.0 * sigma, seed, STREAM_HEAT, sample_offset=i * samples,
                   backend=backend)
        x = vals[b.end]
        est[i] = _pairwise_sum(x) / samples
        err[i] = x.std(ddof=1) / math.sqrt(samples) if samples > 1 else 0.0
    return est, err


def exit_probability(host, start: int, rule: StoppingRule, horizon: float, samples: int,
                     seed: int = 0, chain: WalkChain = None, backend=None):
    """Fraction of walks from ``start`` entering ``rule.region`` before ``horizon``.

    Returns ``(p_hat, stderr)`` with the binomial standard error.
    """
    M = as_manifold(host)
    region = np.asarray(rule.region, dtype=bool)
    if region.shape[0] != M.n_vertices:
        raise InvalidArgument("stopping region does not match the host")
    if region[start]:
        raise InvalidArgument("start lies inside the stopping region")
    ch = chain or WalkChain(M)
    b = ch.run(np.full(samples, start), horizon, seed, STREAM_EXIT, stop_mask=region,
               stop_on_hit=True, backend=backend)
    k = int(b.hit.sum())
    p = k / samples
    return p, math.sqrt(p * (1.0 - p) / samples)


@dataclass(frozen=True)
class CoupledBatch:
    end: np.ndarray          # ambient vertex at the horizon
    stopped: np.ndarray      # T <= horizon
    stop_time: np.ndarray
    piece_end: np.ndarray    # piece-walk position at min(T, horizon)


def coupled_walks(G: GluedManifold, n, start: int, horizon: float, samples: int, seed: int = 0,
                  piece_chain: WalkChain = None, ambient_chain: WalkChain = None, backend=None,
                  sample_offset: int = 0) -> CoupledBatch:
    """Bulk version of :func:`coupled_walk`.

    Each path follows the piece walk mapped through ``i_n`` until the first
    time ``T`` it enters the low band (the non-isometric piece vertices), then
    continues as an ambient walk from ``i_n(W(T))`` for the remaining time.
    """
    emb = G.embedding(n)
    if not emb.isometric[start]:
        raise InvalidArgument("start must lie in the isometric part of the embedding domain")
    pc = piece_chain or WalkChain(emb.source)
    ac = ambient_chain or WalkChain(G.ambient)
    region = emb.stop_region()
    b = pc.run(np.full(samples, start), horizon, seed, STREAM_COUPLED_PIECE, stop_mask=region,
               stop_on_hit=True, sample_offset=sample_offset, backend=backend)
    stopped = b.hit.astype(bool)
    piece_end = np.where(stopped, b.hit_vertex, b.end)
    amb_start = emb.index_map[piece_end]
    if np.any(amb_start < 0):
        raise InvalidArgument("coupled walk stopped on a removed vertex; increase the cut")
    end = amb_start.copy()
    idx = np.flatnonzero(stopped)
    if idx.size:
        rest = horizon - b.hit_time[idx]
        c = ac.run(amb_start[idx], rest, seed, STREAM_COUPLED_AMBIENT,
                   sample_ids=sample_offset + idx, backend=backend)
        end[idx] = c.end
    return CoupledBatch(end, stopped, np.where(stopped, b.hit_time, np.inf), piece_end)


def coupled_walk(G: GluedManifold, n, start: int, horizon: float, seed: int = 0, sample: int = 0):
    """One coupled path on the ambient graph, as a :class:`WalkPath`.

    Returns the path and the stopping time ``T`` (``inf`` if the band is not
    reached before ``horizon``).
    """
    emb = G.embedding(n)
    if not emb.isometric[start]:
        raise InvalidArgument("start must lie in the isometric part of the embedding domain")
    piece_path = sample_walk(emb.source, start, horizon, seed, sample, STREAM_COUPLED_PIECE)
    region = emb.stop_region()
    events, T, hit_v = [], math.inf, None
    for t, v in piece_path.events:
        events.append((t, int(emb.index_map[v])))
        if region[v]:
            T, hit_v = t, v
            break
    if hit_v is not None:
        rest = sample_walk(G.ambient, int(emb.index_map[hit_v]), horizon - T, seed, sample,
                           STREAM_COUPLED_AMBIENT)
        events += [(T + t, v) for t, v in rest.events]
    return WalkPath(int(emb.index_map[start]), tuple(events), float(horizon)), T
