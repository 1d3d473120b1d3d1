"""Acceptance gate: one test per criterion, run at the stated tolerance.

A one-line PASS/FAIL summary per criterion is printed at the end of the
pytest session. Each test also prints the measured numbers (visible with -s).
"""
import io
import math

import numpy as np
import pytest

from rieszlab import (ScalarField, build_cycle, build_cylinder, build_torus, decompose,
                      hilbert_reference, inv_sqrt_spectral, inv_sqrt_subordination, riesz_norm,
                      solve_poisson)
from rieszlab.cli import run
from rieszlab.experiments import (PASS, exp_cylinder_lemma, exp_dichotomy, exp_heat_convergence,
                                  exp_localization, exp_rescaling, exp_sigma_bounds, pilot_glued)

from conftest import random_mean_zero, random_weight_graph


def hosts():
    return {
        "cycle": build_cycle(32, 2 * math.pi),
        "torus": build_torus(2, 8),
        "cylinder": build_cylinder(build_cycle(8), 16),
        "glued": pilot_glued((8, 8), backbone_n=8, axis_steps=12),
        "random": random_weight_graph(40, seed=1),
    }


def l2(mu, f):
    return math.sqrt(np.dot(mu, f * f))


def test_c1_l2_isometry():
    for name, host in hosts().items():
        est = riesz_norm(host, 2.0, restarts=8, seed=0)
        print(f"{name}: {est.value!r}")
        assert abs(est.value - 1.0) <= 1e-6, name


def test_c2_subordination_crosscheck():
    rs = np.random.default_rng(2024)
    for name, host in hosts().items():
        M = getattr(host, "ambient", host)
        D = decompose(M)
        worst = 0.0
        for _ in range(20):
            f = ScalarField(M, random_mean_zero(M, rs), mean_zero=True)
            a = inv_sqrt_spectral(D, f).values
            b = inv_sqrt_subordination(D, f).values
            worst = max(worst, l2(M.mu, a - b) / l2(M.mu, a))
        print(f"{name}: worst relative error {worst:.3e}")
        assert worst <= 1e-6, name


def test_c3_conjugate_function_target():
    target = hilbert_reference(4.0)
    values = {}
    for n in (16, 32, 64):
        values[n] = riesz_norm(build_cycle(n, 2 * math.pi), 4.0, restarts=32, seed=0).value
    dual = riesz_norm(build_cycle(64, 2 * math.pi), 4.0 / 3.0, restarts=32, seed=0).value
    print(f"p=4: {values}; p=4/3 at n=64: {dual:.6f}; target {target:.6f}")
    assert values[16] <= values[32] <= values[64]
    assert abs(values[64] - target) <= 0.15 * target
    assert abs(dual - target) <= 0.15 * target


@pytest.mark.parametrize("p", [1.5, 3.0])
@pytest.mark.parametrize("base", ["C16", "T2_8"])
def test_c4_cylinder_monotonicity(base, p):
    b = build_cycle(16) if base == "C16" else build_torus(2, 8)
    rep = exp_cylinder_lemma(b, p, axis_steps=8, seed=0, restarts=32, slack=0.02)
    lo, up = (r["value"] for r in rep.records)
    print(f"{base} p={p}: L={lo:.6f} U={up:.6f}")
    assert rep.verdict == PASS


def test_c5_rescaling_limit():
    rep = exp_rescaling(build_cycle(16), p=3.0, axis_steps=64,
                        lambda_grid=(1, 1 / 2, 1 / 4, 1 / 8, 1 / 16), tolerance=0.05)
    devs = [r["deviation"] for r in rep.records]
    print("deviations", [f"{d:.4f}" for d in devs])
    assert all(b < a for a, b in zip(devs, devs[1:]))
    assert devs[-1] <= 0.05
    assert rep.verdict == PASS


@pytest.fixture(scope="module")
def pilot_with_spectra():
    G = pilot_glued()
    return G, (decompose(G.source(0)), decompose(G.ambient))


def test_c6_heat_coupling(pilot_with_spectra):
    G, decs = pilot_with_spectra
    rep = exp_heat_convergence(G, 0, sigma=4.0, mc_samples=100_000, seed=0, decompositions=decs)
    print(rep.summary)
    assert rep.summary["coupling_holds"]
    assert rep.summary["final_diff"] < 1e-3
    assert rep.summary["exit_monotone"]
    assert rep.verdict == PASS


def test_c7_localization(pilot_with_spectra):
    G, decs = pilot_with_spectra
    rep = exp_localization(G, 0, p=3.0, seed=0, tolerance=0.03, decompositions=decs)
    gaps = [r["gap"] for r in rep.records]
    norms = [r["pushed_norm"] for r in rep.records]
    print(f"gaps first {gaps[0]:.3e} last {gaps[-1]:.3e}; norm spread {max(norms) - min(norms):.1e}")
    assert gaps[-1] <= 0.03
    assert max(norms) - min(norms) <= 1e-12 * max(norms)
    assert rep.verdict == PASS


def test_c8_transported_lower_bound():
    rep = exp_dichotomy([build_cycle(8), build_cycle(16), build_cycle(32)], p=3.0, axis_steps=16,
                        seed=0, restarts=16, backbone_n=8, slack=0.02)
    pieces = [r["value"] for r in rep.records[:-1]]
    glued = rep.records[-1]["value"]
    print(f"pieces {pieces}; glued {glued:.6f}")
    assert glued >= max(pieces) * 0.98
    assert rep.verdict == PASS


def test_c9_sigma_bounds():
    rep = exp_sigma_bounds(build_cylinder(build_cycle(16), 16), sigma_grid=np.logspace(-3, 3, 50), seed=0)
    rows = [r for r in rep.records if math.isfinite(r["sigma"])]
    assert len(rows) == 50
    print(f"max ratios {max(r['ratio_l2'] for r in rows):.6f} {max(r['ratio_smoothing'] for r in rows):.6f}")
    assert all(r["ratio_l2"] <= 1.0 for r in rows)
    assert all(r["ratio_smoothing"] <= math.exp(-1) for r in rows)


def test_c10_poisson_residual():
    rs = np.random.default_rng(77)
    for name, host in hosts().items():
        M = getattr(host, "ambient", host)
        D = decompose(M)
        worst = 0.0
        for _ in range(20):
            f = random_mean_zero(M, rs)
            u = solve_poisson(D, ScalarField(M, f, mean_zero=True)).values
            worst = max(worst, l2(M.mu, M.apply_laplacian(u) - f) / l2(M.mu, f))
        print(f"{name}: worst residual {worst:.2e}")
        assert worst <= 1e-10, name


@pytest.mark.parametrize("experiment,extra", [
    ("sigma-bounds", []),
    ("heat", ["--manifold", "kind=glued pieces=8,8 backbone_n=8 axis_steps=16"]),
    ("cylinder", ["--manifold", "kind=torus d=2 n=4 axis_steps=6", "--p", "3"]),
])
def test_c11_determinism(tmp_path, experiment, extra):
    outs = []
    for i, threads in enumerate(("1", "1", "2")):
        d = tmp_path / f"run{i}"
        code = run(["experiment", experiment, "--seed", "3", "--threads", threads, "--out", str(d)] + extra,
                   stdout=io.StringIO(), stderr=io.StringIO())
        assert code in (0, 2, 3)
        outs.append({p.name: p.read_bytes() for p in sorted(d.glob("*")) if p.suffix in (".csv", ".verdict")})
    assert outs[0] and outs[0] == outs[1] == outs[2]
