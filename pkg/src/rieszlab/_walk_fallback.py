"""Pure numpy random-walk sampler, vectorised across samples.

Contract shared with the compiled kernel: walk ``i`` starts at ``starts[i]``
and uses the uniform stream keyed by ``keys[i]``. Draw ``2j`` sets the ``j``-th
holding time ``-log(u) / rate(v)``; draw ``2j + 1`` picks the neighbour as the
first row entry whose cumulative probability is ``>= u``. A walk stops once
its clock passes ``horizons[i]`` or, with ``stop_on_hit``, on first entry into
``stop_mask``.
"""
from __future__ import annotations

import numpy as np

from .rng import uniforms


def simulate(indptr, indices, cum, rates, starts, horizons, stop_mask, stop_on_hit, keys,
             lo=0, hi=-1, out=None):
    n = len(starts)
    hi = n if hi < 0 else hi
    if out is None:
        out = (np.empty(n, np.int64), np.zeros(n, np.uint8), np.empty(n, np.float64),
               np.empty(n, np.int64), np.empty(n, np.int64))
    end, hit, hit_time, hit_vertex, njumps = out
    sl = slice(lo, hi)
    m = hi - lo
    v = np.array(starts[sl], dtype=np.int64)
    t = np.zeros(m)
    h = np.asarray(horizons[sl], dtype=float)
    k = np.asarray(keys[sl], dtype=np.uint64)
    hflag = np.zeros(m, dtype=np.uint8)
    htime = np.full(m, -1.0)
    hvert = np.full(m, -1, dtype=np.int64)
    jumps = np.zeros(m, dtype=np.int64)

    # padded cumulative table so the neighbour search is a row-wise count
    deg = np.diff(indptr)
    width = int(deg.max()) if len(deg) else 1
    pad = np.full((len(deg), width), 2.0)
    col = np.arange(width)
    valid = col[None, :] < deg[:, None] - 1
    rows, cols = np.nonzero(col[None, :] < deg[:, None])
    pad[rows, cols] = cum[indptr[rows] + cols]
    pad[~valid] = 2.0

    active = np.arange(m)
    j = 0
    while active.size:
        ka = k[active]
        u = uniforms(ka, 2 * j)
        va = v[active]
        ta = t[active] - np.log(u) / rates[va]
        go = ta <= h[active]
        t[active] = ta
        active, va, ka = active[go], va[go], ka[go]
        if not active.size:
            break
        u = uniforms(ka, 2 * j + 1)
        choice = np.sum(pad[va] < u[:, None], axis=1)
        nv = indices[indptr[va] + choice]
        v[active] = nv
        jumps[active] += 1
        first = (stop_mask[nv] != 0) & (hflag[active] == 0)
        fa = active[first]
        hflag[fa] = 1
        htime[fa] = t[fa]
        hvert[fa] = nv[first]
        if stop_on_hit:
            active = active[~first]
        j += 1
    end[sl] = v
    hit[sl] = hflag
    hit_time[sl] = htime
    hit_vertex[sl] = hvert
    njumps[sl] = jumps
    return out
