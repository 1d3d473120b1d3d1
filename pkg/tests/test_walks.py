import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rieszlab import (InvalidArgument, StoppingRule, build_cycle, build_cylinder, build_path,
                      coupled_walk, decompose, exit_probability, heat_semigroup, mc_heat,
                      pushforward, sample_walk)
from rieszlab import walks
from rieszlab.walks import WalkChain, available_backends, coupled_walks

from conftest import random_weight_graph


def test_python_backend_always_present():
    assert "python" in available_backends()
    assert walks.BACKEND in available_backends()


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernel not built")
@pytest.mark.parametrize("stop", [False, True])
def test_backends_agree(stop):
    M = random_weight_graph(15, seed=4)
    ch = WalkChain(M)
    starts = np.arange(3000) % M.n_vertices
    mask = np.zeros(M.n_vertices, np.uint8)
    mask[[2, 7]] = 1
    kw = dict(stop_mask=mask, stop_on_hit=stop, sample_offset=11)
    a = ch.run(starts, 2.5, 9, 1, backend="cython", **kw)
    b = ch.run(starts, 2.5, 9, 1, backend="python", **kw)
    for name in ("end", "hit", "hit_vertex", "njumps"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    # libm and numpy logarithms may differ in the last bit
    assert np.allclose(a.hit_time, b.hit_time, rtol=1e-14, atol=0)


@pytest.mark.parametrize("backend", available_backends())
def test_bulk_matches_single_path(backend):
    M = build_cylinder(build_cycle(5), 6)
    ch = WalkChain(M)
    batch = ch.run(np.full(40, 7), 3.0, 2, walks.STREAM_PATH, backend=backend)
    for i in range(40):
        path = sample_walk(M, 7, 3.0, seed=2, sample=i, chain=ch)
        assert path.end == batch.end[i]
        assert len(path.events) == batch.njumps[i]


@given(st.integers(0, 2**31), st.floats(0.0, 10.0))
def test_path_invariants(seed, horizon):
    M = random_weight_graph()
    p = sample_walk(M, 0, horizon, seed=seed)
    times = [t for t, _ in p.events]
    assert all(a < b for a, b in zip(times, times[1:]))
    assert all(t <= horizon for t in times)
    verts = [p.start] + [v for _, v in p.events]
    for a, b in zip(verts, verts[1:]):
        assert b in M.neighbors(a)
    assert p.position(horizon) == p.end
    assert p.to_csv().splitlines()[1] == f"0,{p.start}"


def test_zero_horizon():
    p = sample_walk(build_cycle(5), 3, 0.0, seed=1)
    assert p.events == () and p.end == 3
    with pytest.raises(InvalidArgument):
        sample_walk(build_cycle(5), 3, -1.0)


def test_two_vertex_heat():
    P = build_path(2)
    sigma = 0.4
    f = np.array([1.0, -1.0])
    est, err = mc_heat(P, f, sigma, 100_000, seed=3, vertices=[0])
    assert abs(est[0] - math.exp(-2 * sigma)) <= 3 * err[0]


def test_jump_rate_short_horizon():
    M = random_weight_graph()
    ch = WalkChain(M)
    h = 1e-3
    b = ch.run(np.zeros(200_000, np.int64), h, 5, 1)
    mean = b.njumps.mean()
    se = b.njumps.std(ddof=1) / math.sqrt(len(b.njumps))
    rate = M.degree()[0] / (2.0 * M.mu[0])
    assert abs(mean - rate * h) <= 3 * se


def test_mc_heat_constant():
    M = random_weight_graph()
    est, err = mc_heat(M, np.full(M.n_vertices, 2.0), 1.0, 100, seed=0)
    assert np.all(est == 2.0) and np.all(err == 0.0)


def test_mc_heat_matches_spectral():
    M = build_cylinder(build_cycle(4), 5)
    D = decompose(M)
    f = np.random.default_rng(0).standard_normal(M.n_vertices)
    sigma = 0.8
    est, err = mc_heat(M, f, sigma, 20_000, seed=4)
    ref = heat_semigroup(D, sigma, f).values
    assert np.all(np.abs(est - ref) <= 3.5 * err)


def test_mc_heat_stderr_scaling():
    M = build_cycle(6)
    f = np.arange(6.0)
    _, e1 = mc_heat(M, f, 0.5, 10_000, seed=1, vertices=[0])
    _, e4 = mc_heat(M, f, 0.5, 40_000, seed=2, vertices=[0])
    assert e1[0] / e4[0] == pytest.approx(2.0, rel=0.2)


def _reflecting_setup():
    C = build_cylinder(build_cycle(4), 24, axis_boundary="reflecting")
    band = C.levels() < 2
    return C, StoppingRule(band, "low band")


def test_exit_probability_small_horizon_zero():
    C, rule = _reflecting_setup()
    p, se = exit_probability(C, int(C.index(0, 6)), rule, 1e-4, 5000, seed=0)
    assert p == 0.0 and se == 0.0
    with pytest.raises(InvalidArgument):
        exit_probability(C, 0, rule, 1.0, 10)


def test_exit_probability_monotone():
    C, rule = _reflecting_setup()
    ch = WalkChain(C)
    by_height = [exit_probability(C, int(C.index(1, t)), rule, 8.0, 20_000, seed=1, chain=ch)[0]
                 for t in (3, 5, 8, 12)]
    assert all(a >= b for a, b in zip(by_height, by_height[1:]))
    by_horizon = [exit_probability(C, int(C.index(1, 5)), rule, h, 20_000, seed=1, chain=ch)[0]
                  for h in (1.0, 4.0, 16.0)]
    assert all(a <= b for a, b in zip(by_horizon, by_horizon[1:]))


def test_exit_probability_translation_invariant():
    C = build_cylinder(build_cycle(4), 20)
    levels = C.levels()
    r0 = StoppingRule((levels >= 2) & (levels < 4))
    r5 = StoppingRule((levels >= 7) & (levels < 9))
    a, sa = exit_probability(C, int(C.index(2, 7)), r0, 6.0, 40_000, seed=1)
    b, sb = exit_probability(C, int(C.index(2, 12)), r5, 6.0, 40_000, seed=2)
    assert abs(a - b) <= 3 * math.hypot(sa, sb)


# coupled walks --------------------------------------------------------------------

def _iso_start(G, n=0, level_offset=4):
    emb = G.embedding(n)
    P = emb.source
    t = (emb.glue_level + level_offset) % P.axis_steps
    v = int(P.index(1, t))
    assert emb.isometric[v]
    return emb, v


def test_coupled_path_without_hit(small_glued):
    G = small_glued
    emb, v = _iso_start(G)
    for sample in range(60):
        path, T = coupled_walk(G, 0, v, 0.5, seed=0, sample=sample)
        piece = sample_walk(emb.source, v, 0.5, seed=0, sample=sample, stream=walks.STREAM_COUPLED_PIECE)
        if math.isinf(T):
            assert path.events == tuple((t, int(emb.index_map[u])) for t, u in piece.events)
    with pytest.raises(InvalidArgument):
        coupled_walk(G, 0, emb.site + 1, 1.0)


def test_coupled_bulk_matches_single(small_glued):
    G = small_glued
    _, v = _iso_start(G)
    bulk = coupled_walks(G, 0, v, 6.0, 50, seed=4)
    for i in range(50):
        path, T = coupled_walk(G, 0, v, 6.0, seed=4, sample=i)
        assert path.end == bulk.end[i]
        assert (T <= 6.0) == bulk.stopped[i]


def test_coupled_semigroup_matches_ambient(small_glued):
    G = small_glued
    _, v = _iso_start(G, level_offset=3)
    sigma = 1.5
    f = np.random.default_rng(2).standard_normal(G.n_vertices)
    b = coupled_walks(G, 0, v, 2 * sigma, 40_000, seed=8)
    x = f[b.end]
    est, se = x.mean(), x.std(ddof=1) / math.sqrt(len(x))
    ref = heat_semigroup(decompose(G.ambient), sigma, f).values[G.embedding(0).index_map[v]]
    assert abs(est - ref) <= 3 * se
    assert b.stopped.mean() > 0.05


def test_coupled_stop_fraction_matches_exit(small_glued):
    G = small_glued
    emb, v = _iso_start(G, level_offset=3)
    b = coupled_walks(G, 0, v, 4.0, 40_000, seed=8)
    q = b.stopped.mean()
    sq = math.sqrt(q * (1 - q) / 40_000)
    p, sp = exit_probability(emb.source, v, StoppingRule(emb.stop_region()), 4.0, 40_000, seed=9)
    assert abs(p - q) <= 3 * math.hypot(sp, sq)


def test_threads_do_not_change_samples():
    M = random_weight_graph()
    ch = WalkChain(M)
    starts = np.arange(40_000) % M.n_vertices
    a = ch.run(starts, 3.0, 1, 1, threads=1)
    b = ch.run(starts, 3.0, 1, 1, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
