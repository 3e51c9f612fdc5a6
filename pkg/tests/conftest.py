from __future__ import annotations

import numpy as np
import pytest

from qtn import create_world, local_context


def crandn(shape, rng: np.random.Generator) -> np.ndarray:
    """Standard complex normal samples."""
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def run(size: int, program, *args, **kwargs) -> list:
    return create_world(size).run(program, *args, **kwargs)


@pytest.fixture
def ctx():
    return local_context()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dense_apply(psi: np.ndarray, n: int, sites, gate: np.ndarray) -> np.ndarray:
    """Apply ``gate`` to ``sites`` of an ``n``-qubit vector (qubit 0 most significant)."""
    k = len(sites)
    t = psi.reshape((2,) * n)
    g = np.asarray(gate).reshape((2,) * (2 * k))
    t = np.tensordot(g, t, axes=(list(range(k, 2 * k)), list(sites)))
    return np.moveaxis(t, list(range(k)), list(sites)).reshape(-1)


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    psi = crandn(2**n, rng)
    return psi / np.linalg.norm(psi)


def pytest_configure(config):
    config.acceptance_results = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "acceptance_results", [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion: ``criterion(number, title)``."""
    state = {}

    def start(number: int, title: str):
        state.update(number=number, title=title)

    yield start
    if state:
        report = getattr(request.node, "rep_call", None)
        passed = report is not None and report.passed
        line = f"criterion {state['number']:>2}: {'PASS' if passed else 'FAIL'}  {state['title']}"
        print(line)
        request.config.acceptance_results.append(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep
