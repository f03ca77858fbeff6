import time

import numpy as np
import pytest

from cocyclab.periodic_approx import benchmark_generator, reference_spectrum, run_main_experiment
from cocyclab.symbolic import BaseMeasure, ShiftSpace

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = {}
# wall times of the expensive session fixtures
TIMINGS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])


@pytest.fixture(scope="session")
def full2():
    return ShiftSpace.full(2)


@pytest.fixture(scope="session")
def fair_coin():
    return BaseMeasure.bernoulli([0.5, 0.5])


@pytest.fixture(scope="session")
def benchmark():
    return benchmark_generator()


@pytest.fixture(scope="session")
def benchmark_reference(benchmark, full2, fair_coin):
    t0 = time.perf_counter()
    ref = reference_spectrum(benchmark, full2, fair_coin, n=10 ** 6, seed=0)
    TIMINGS["benchmark_reference"] = time.perf_counter() - t0
    return ref


@pytest.fixture(scope="session")
def benchmark_runs(benchmark, full2, fair_coin, benchmark_reference):
    """Main-theorem runs for seeds 0..9 sharing one reference."""
    t0 = time.perf_counter()
    runs = [run_main_experiment(benchmark, full2, fair_coin, 3, seed=s, reference=benchmark_reference)
            for s in range(10)]
    TIMINGS["benchmark_runs"] = time.perf_counter() - t0
    return runs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
