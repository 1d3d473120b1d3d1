import numpy as np
import pytest
from hypothesis import settings

from rieszlab import build_cycle, build_cylinder, build_torus
from rieszlab.experiments import pilot_glued

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical checks")


@pytest.fixture(scope="session")
def small_glued():
    return pilot_glued((8, 8), backbone_n=8, axis_steps=12)


@pytest.fixture(scope="session")
def pilot():
    return pilot_glued()


def random_mean_zero(M, rs):
    f = rs.standard_normal(M.n_vertices)
    return f - np.dot(M.mu, f) / M.mu.sum()


def random_weight_graph(n=12, seed=3):
    """Connected graph with random positive volumes and conductances."""
    from rieszlab import WeightedGraphManifold

    rs = np.random.default_rng(seed)
    edges = {(i, i + 1) for i in range(n - 1)}
    while len(edges) < 2 * n:
        a, b = sorted(rs.choice(n, 2, replace=False))
        edges.add((int(a), int(b)))
    edges = np.array(sorted(edges))
    return WeightedGraphManifold(rs.uniform(0.5, 2.0, n), edges, rs.uniform(0.2, 3.0, len(edges)),
                                 name="R12")


ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        ACCEPTANCE[name] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: int(n.split("_")[1][1:])):
        outcome, dur = ACCEPTANCE[name]
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{tag}  {name}  ({dur:.1f}s)")
