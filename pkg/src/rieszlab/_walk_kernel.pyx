# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled continuous-time random-walk sampler.

Mirrors ``_walk_fallback.simulate`` draw for draw; see that module for the
contract.
"""
from libc.math cimport log
from libc.stdint cimport uint64_t, int64_t, uint8_t

import numpy as np


cdef inline uint64_t _mix(uint64_t x) nogil:
    x ^= x >> 30
    x *= <uint64_t>0xBF58476D1CE4E5B9ULL
    x ^= x >> 27
    x *= <uint64_t>0x94D049BB133111EBULL
    return x ^ (x >> 31)


cdef inline double _uniform(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t x = _mix(key + (counter + 1) * <uint64_t>0x9E3779B97F4A7C15ULL)
    return (<double>(x >> 11) + 1.0) * (1.0 / 9007199254740992.0)


cdef void _run(const int64_t[::1] indptr, const int64_t[::1] indices, const double[::1] cum,
               const double[::1] rates, const int64_t[::1] starts, const double[::1] horizons,
               const uint8_t[::1] stop_mask, bint stop_on_hit, const uint64_t[::1] keys,
               int64_t[::1] end, uint8_t[::1] hit, double[::1] hit_time, int64_t[::1] hit_vertex,
               int64_t[::1] njumps, Py_ssize_t lo, Py_ssize_t hi) nogil:
    cdef Py_ssize_t i, k, a, b
    cdef int64_t v
    cdef uint64_t c
    cdef double t, u, h
    for i in range(lo, hi):
        v = starts[i]
        t = 0.0
        c = 0
        h = horizons[i]
        hit[i] = 0
        hit_time[i] = -1.0
        hit_vertex[i] = -1
        while True:
            u = _uniform(keys[i], c)
            t = t - log(u) / rates[v]
            if not (t <= h):
                break
            u = _uniform(keys[i], c + 1)
            c += 2
            a = indptr[v]
            b = indptr[v + 1]
            k = a
            while k < b - 1 and cum[k] < u:
                k += 1
            v = indices[k]
            if stop_mask[v] and not hit[i]:
                hit[i] = 1
                hit_time[i] = t
                hit_vertex[i] = v
                if stop_on_hit:
                    break
        end[i] = v
        njumps[i] = <int64_t>(c // 2)


def simulate(indptr, indices, cum, rates, starts, horizons, stop_mask, bint stop_on_hit, keys,
             Py_ssize_t lo=0, Py_ssize_t hi=-1, out=None):
    n = len(starts)
    if hi < 0:
        hi = n
    if out is None:
        out = (np.empty(n, np.int64), np.zeros(n, np.uint8), np.empty(n, np.float64),
               np.empty(n, np.int64), np.empty(n, np.int64))
    end, hit, hit_time, hit_vertex, njumps = out
    cdef const int64_t[::1] ip = indptr
    cdef const int64_t[::1] ix = indices
    cdef const double[::1] cm = cum
    cdef const double[::1] rt = rates
    cdef const int64_t[::1] st = starts
    cdef const double[::1] hz = horizons
    cdef const uint8_t[::1] sm = stop_mask
    cdef const uint64_t[::1] ky = keys
    cdef int64_t[::1] e = end
    cdef uint8_t[::1] hh = hit
    cdef double[::1] ht = hit_time
    cdef int64_t[::1] hv = hit_vertex
    cdef int64_t[::1] nj = njumps
    with nogil:
        _run(ip, ix, cm, rt, st, hz, sm, stop_on_hit, ky, e, hh, ht, hv, nj, lo, hi)
    return out
