import numpy as np
import pytest
from hypothesis import given, strategies as st

from rieszlab import (CylinderGraph, InvalidArgument, OutOfRange, ScalarField,
                      WeightedGraphManifold, build_cycle, build_cylinder, build_path, build_torus,
                      glue, product, pullback, pushforward, translate)
from rieszlab.graph import default_sites, is_mean_zero
from rieszlab.norms import lp_norm

from conftest import random_weight_graph


def dense_neg_laplacian(mu, edges, w):
    """-Δ = M^{-1}(D - W) assembled entry by entry."""
    n = len(mu)
    L = np.zeros((n, n))
    for (u, v), c in zip(edges, w):
        L[u, v] -= c
        L[v, u] -= c
        L[u, u] += c
        L[v, v] += c
    return L / np.asarray(mu)[:, None]


def spectrum(M):
    return np.sort(np.linalg.eigvals(dense_neg_laplacian(M.mu, M.edges, M.weights)).real)


def cycle_spectrum(n, c):
    h = c / n
    return np.sort(2 * (1 - np.cos(2 * np.pi * np.arange(n) / n)) / h**2)


def test_cycle4_spectrum():
    assert np.allclose(spectrum(build_cycle(4, 4.0)), [0, 2, 2, 4], atol=1e-12)


@pytest.mark.parametrize("n", [3, 5, 8, 13])
def test_cycle_annihilates_constants(n):
    C = build_cycle(n, 2 * np.pi)
    assert np.allclose(C.apply_laplacian(np.ones(n)), 0.0, atol=1e-13)
    assert np.allclose(spectrum(C), cycle_spectrum(n, 2 * np.pi), atol=1e-9)


def test_cycle3_volume():
    assert build_cycle(3, 3.0).volume == pytest.approx(3.0)


def test_cycle_rejects_small():
    with pytest.raises(InvalidArgument):
        build_cycle(2)
    with pytest.raises(InvalidArgument):
        build_cycle(5, -1.0)


def test_torus_d1_is_cycle():
    T, C = build_torus(1, 6, 3.0), build_cycle(6, 3.0)
    assert np.array_equal(T.mu, C.mu)
    assert np.array_equal(T.edges, C.edges)
    assert np.array_equal(T.weights, C.weights)


def test_torus_2d_kronecker_sum():
    T = build_torus(2, 4, 4.0)
    assert T.n_vertices == 16
    assert np.all(T.mu == 1.0)
    lam = cycle_spectrum(4, 4.0)
    assert np.allclose(spectrum(T), np.sort(np.add.outer(lam, lam).ravel()), atol=1e-10)


def test_path_product():
    P = build_path(2)
    assert np.allclose(spectrum(product(P, P)), [0, 2, 2, 4], atol=1e-12)


def test_cycle_times_path_spectrum():
    A, B = build_cycle(4, 4.0), build_path(2)
    G = product(A, B)
    assert G.n_vertices == 8
    assert np.allclose(spectrum(G), np.sort(np.add.outer(spectrum(A), spectrum(B)).ravel()), atol=1e-10)


@given(st.integers(0, 2**31))
def test_product_acts_on_first_factor(seed):
    rs = np.random.default_rng(seed)
    A, B = random_weight_graph(7, seed % 5), build_cycle(5, 2.0)
    f = rs.standard_normal(A.n_vertices)
    G = product(A, B)
    lhs = G.apply_laplacian(np.tile(f, B.n_vertices))
    rhs = np.tile(A.apply_laplacian(f), B.n_vertices)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(rhs).max()))


def test_cylinder_spectrum_periodic():
    C = build_cylinder(build_cycle(4, 4.0), 8, 1.0)
    expected = np.add.outer(cycle_spectrum(4, 4.0), cycle_spectrum(8, 8.0)).ravel()
    assert np.allclose(spectrum(C), np.sort(expected), atol=1e-10)


def test_cylinder_reflecting_axis_constant():
    base = build_cycle(5)
    C = build_cylinder(base, 6, 0.5, "reflecting")
    f = np.random.default_rng(0).standard_normal(5)
    F = np.tile(f, 6)
    axis_only = C.edge_mask("axis")
    assert np.allclose(C.as_grid(C.apply_laplacian(F)), base.apply_laplacian(f)[None, :])
    assert np.all(F[C.edges[axis_only, 0]] == F[C.edges[axis_only, 1]])


@pytest.mark.parametrize("h,steps", [(1.0, 8), (0.25, 10), (2.0, 5)])
def test_cylinder_volume(h, steps):
    base = build_torus(2, 3, 1.5)
    C = build_cylinder(base, steps, h)
    assert C.volume == pytest.approx(base.volume * steps * h)


def test_cylinder_coordinates():
    C = build_cylinder(build_cycle(5), 7)
    v = C.index(3, 4)
    assert v == 4 * 5 + 3
    assert tuple(C.coords(v)) == (3, 4)
    assert C.middle_level == 3
    assert set(C.tag_names) == {"base", "axis"}


def test_validation():
    with pytest.raises(InvalidArgument):
        WeightedGraphManifold([1, 1, 1], [[0, 1]], [1.0])          # disconnected
    with pytest.raises(InvalidArgument):
        WeightedGraphManifold([1, 1], [[0, 1]], [-1.0])
    with pytest.raises(InvalidArgument):
        WeightedGraphManifold([1, 0], [[0, 1]], [1.0])
    with pytest.raises(InvalidArgument):
        WeightedGraphManifold([1, 1], [[0, 1], [1, 0]], [1.0, 1.0])
    with pytest.raises(InvalidArgument):
        WeightedGraphManifold([1, 1], [[0, 0], [0, 1]], [1.0, 1.0])


def test_scalar_field_mean_zero_check():
    C = build_cycle(4)
    ScalarField(C, [1, -1, 1, -1], mean_zero=True)
    with pytest.raises(InvalidArgument):
        ScalarField(C, [1, 0, 0, 0], mean_zero=True)
    assert is_mean_zero(C.mu, np.array([1e-14, 1, -1, 0]))


# translation -----------------------------------------------------------------------

@given(st.integers(-40, 40), st.integers(0, 2**31))
def test_translate_periodic_isometry(s, seed):
    C = build_cylinder(build_cycle(4), 9)
    F = ScalarField(C, np.random.default_rng(seed).standard_normal(C.n_vertices))
    G = translate(F, s)
    for p in (1.5, 2, 3):
        assert lp_norm(G, p) == pytest.approx(lp_norm(F, p), rel=1e-13)
    assert np.array_equal(translate(G, -s).values, F.values)


def test_translate_zero_is_identity():
    C = build_cylinder(build_cycle(4), 6)
    F = ScalarField(C, np.arange(C.n_vertices, dtype=float))
    assert np.array_equal(translate(F, 0).values, F.values)


@given(st.integers(-10, 10), st.integers(0, 2**31))
def test_translate_commutes_with_laplacian(s, seed):
    C = build_cylinder(build_torus(2, 3), 8)
    F = ScalarField(C, np.random.default_rng(seed).standard_normal(C.n_vertices))
    lhs = C.apply_laplacian(translate(F, s).values)
    rhs = translate(ScalarField(C, C.apply_laplacian(F.values)), s).values
    # equal up to the summation order of the sparse rows
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * np.abs(rhs).max())


def test_translate_reflecting_bounds():
    C = build_cylinder(build_cycle(4), 10, axis_boundary="reflecting")
    vals = np.zeros(C.n_vertices)
    vals[C.index(1, 4)] = 1.0
    F = ScalarField(C, vals)
    assert translate(F, 3).values[C.index(1, 7)] == 1.0
    with pytest.raises(OutOfRange):
        translate(F, 5)
    with pytest.raises(OutOfRange):
        translate(F, -4)


# gluing --------------------------------------------------------------------------

def test_glue_one_piece_counts():
    P = build_cylinder(build_cycle(6), 8)
    B = build_cylinder(build_cycle(5), 8)
    G = glue([P], B)
    assert G.ambient.n_vertices == P.n_vertices + B.n_vertices - 2
    assert G.ambient.is_connected()


def test_glue_two_pieces_kernel(small_glued):
    lam = spectrum(small_glued.ambient)
    assert np.sum(np.abs(lam) < 1e-9) == 1
    assert np.allclose(small_glued.ambient.apply_laplacian(np.ones(small_glued.n_vertices)), 0, atol=1e-12)


@pytest.mark.parametrize("policy", ["complete-bipartite", "uniform"])
def test_bridge_conductance_matches_stars(policy):
    P = build_cylinder(build_cycle(6), 8)
    B = build_cylinder(build_torus(2, 4), 8)
    G = glue([P], B, bridge_policy=policy)
    rec = G.glue_records[0]
    star_p = P.degree()[rec.piece_site] * P.mu[rec.piece_site]
    star_b = B.degree()[rec.backbone_site] * B.mu[rec.backbone_site]
    assert rec.bridge_weights.sum() == pytest.approx(0.5 * (star_p + star_b))
    assert rec.bridge_edges.shape == (len(rec.piece_boundary) * len(rec.backbone_boundary), 2)


def test_glue_locality(small_glued):
    """Ambient Δ equals piece Δ two or more hops from the glue site."""
    G = small_glued
    rs = np.random.default_rng(1)
    for n, emb in enumerate(G.embeddings):
        P = emb.source
        far = P.hop_distance([emb.site]) >= 2
        F = np.where(far, rs.standard_normal(P.n_vertices), 0.0)
        # interior support only: vertices whose neighbours are all far as well
        inner = P.hop_distance([emb.site]) >= 3
        amb = G.ambient.apply_laplacian(pushforward(G, n, F).values)
        piece = P.apply_laplacian(F)
        assert np.allclose(amb[emb.index_map[inner]], piece[inner], atol=1e-12)


def test_glue_rejects_close_backbone_sites():
    P = build_cylinder(build_cycle(6), 8)
    B = build_cylinder(build_cycle(6), 8)
    with pytest.raises(InvalidArgument):
        glue([P, P], B, sites=[(P.index(0, 4), B.index(0, 0)), (P.index(0, 4), B.index(1, 0))])


def test_glue_rejects_cut_without_room():
    P = build_cylinder(build_cycle(4), 4)
    B = build_cylinder(build_cycle(6), 8)
    with pytest.raises(InvalidArgument):
        glue([P], B, cut=3)
    with pytest.raises(InvalidArgument):
        glue([P], B, bridge_policy="mollified")


def test_default_sites_spread():
    pieces = [build_cylinder(build_cycle(6), 12)] * 3
    B = build_cylinder(build_cycle(6), 12)
    sites = default_sites(pieces, B)
    assert [B.coords(b)[1] for _, b in sites] == [0, 4, 8]


# pushforward / pullback -------------------------------------------------------------

def test_pushforward_zero(small_glued):
    F = np.zeros(small_glued.pieces[0].n_vertices)
    assert not np.any(pushforward(small_glued, 0, F).values)


@given(st.integers(0, 2**31), st.sampled_from([1.5, 2.0, 3.0]))
def test_push_pull_roundtrip_and_norm(small_glued, seed, p):
    G = small_glued
    emb = G.embedding(1)
    F = np.where(emb.domain, np.random.default_rng(seed).standard_normal(emb.source.n_vertices), 0.0)
    pushed = pushforward(G, 1, ScalarField(emb.source, F))
    assert np.array_equal(pullback(G, 1, pushed).values, F)
    assert lp_norm(pushed, p) == pytest.approx(lp_norm(F, p, emb.source.mu), rel=1e-13)


def test_pushforward_outside_domain(small_glued):
    emb = small_glued.embedding(0)
    F = np.zeros(emb.source.n_vertices)
    F[emb.site] = 1.0
    with pytest.raises(InvalidArgument):
        pushforward(small_glued, 0, F)
    F[emb.site] = 0.0
    F[np.flatnonzero(emb.domain & ~emb.isometric)[0]] = 1.0
    pushforward(small_glued, 0, F)
    with pytest.raises(InvalidArgument):
        pushforward(small_glued, 0, F, require_isometric=True)


def test_backbone_embedding(small_glued):
    G = small_glued
    assert G.embedding("backbone") is G.backbone_embedding
    assert G.source(-1) is G.backbone
    covered = np.concatenate([G.backbone_embedding.index_map] + [e.index_map for e in G.embeddings])
    covered = covered[covered >= 0]
    assert np.array_equal(np.sort(covered), np.arange(G.n_vertices))
