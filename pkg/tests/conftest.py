import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pbceit.config import resolve  # noqa: E402
from pbceit.forward import CemModel, adjacent_protocol  # noqa: E402
from pbceit.mesh import build_mesh  # noqa: E402
from pbceit.phantom import DatasetConfig, NoiseModel, Simulator, generate_dataset  # noqa: E402

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def mesh():
    return build_mesh()


@pytest.fixture(scope="session")
def protocol():
    return adjacent_protocol()


@pytest.fixture(scope="session")
def cem(mesh):
    return CemModel(mesh)


@pytest.fixture(scope="session")
def simulator(mesh, protocol):
    return Simulator(mesh, protocol)


@pytest.fixture(scope="session")
def quiet_simulator(mesh, protocol):
    return Simulator(mesh, protocol, noise=NoiseModel(0.0, 100, 0.0, 0.0, 0.0, 0))


@pytest.fixture(scope="session")
def loc_dataset(simulator):
    return generate_dataset(DatasetConfig("LOC"), simulator=simulator)


@pytest.fixture(scope="session")
def health_dataset(simulator):
    return generate_dataset(DatasetConfig("HEALTH"), simulator=simulator)


@pytest.fixture(scope="session")
def default_reports(tmp_path_factory):
    """Default-config reports of all three experiments, computed once."""
    from pbceit.experiments import run_crack, run_health, run_location
    import time
    out = tmp_path_factory.mktemp("default_runs")
    cfg = resolve(overrides={"out": str(out)})
    reports, times = {}, {}
    for name, fn in (("loc", run_location), ("crack", run_crack), ("health", run_health)):
        t = time.perf_counter()
        reports[name] = fn(cfg, out / name)
        times[name] = time.perf_counter() - t
    return reports, times, out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
