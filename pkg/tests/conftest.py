import numpy as np
import pytest

from rieszlab.builders import BuilderSpec, build
from rieszlab.graph import QuasiMetric, WeightedGraph

_LOG = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LOG] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LOG, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log(request):
    log = request.config.stash[_LOG]

    def record(number, passed, text):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {text}"
        print(line)
        log.append(line)
        return passed

    return record


@pytest.fixture(scope="session")
def k2():
    return build(BuilderSpec.path(2))


@pytest.fixture(scope="session")
def c4():
    return build(BuilderSpec.cycle(4))


@pytest.fixture(scope="session")
def c4_unit_loops():
    # 4-cycle with loop weight 1 (m = 3) and beta = 1
    edges = [(i, (i + 1) % 4, 1.0) for i in range(4)] + [(i, i, 1.0) for i in range(4)]
    return WeightedGraph.from_edges(4, edges), QuasiMetric.constant(1)


@pytest.fixture(scope="session")
def gasket2():
    return build(BuilderSpec.sierpinski(2))


@pytest.fixture(scope="session")
def gasket3():
    return build(BuilderSpec.sierpinski(3))


@pytest.fixture(scope="session")
def gasket4():
    return build(BuilderSpec.sierpinski(4))


@pytest.fixture(scope="session")
def grid10():
    return build(BuilderSpec.lattice(2, 10))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def weighted_random():
    """Small connected graph with irregular weights and loops."""
    r = np.random.default_rng(7)
    n = 12
    edges = [(i, i + 1, float(r.uniform(0.5, 2))) for i in range(n - 1)]
    edges += [(0, 5, 1.3), (3, 9, 0.7), (2, 11, 2.2)]
    edges += [(i, i, float(r.uniform(0.5, 3))) for i in range(n)]
    return WeightedGraph.from_edges(n, edges), QuasiMetric.constant(2)
