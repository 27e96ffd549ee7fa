import numpy as np
import pytest
from hypothesis import strategies as st

from chainlab import MarkovChain
from chainlab.generators import biased_cycle, flip_chain, path_walk, two_state


@pytest.fixture
def flip():
    return flip_chain()


@pytest.fixture
def symmetric2():
    return two_state(0.5, 0.5)


@pytest.fixture
def path3():
    return path_walk(3)


@pytest.fixture
def lazy_cycle4():
    return biased_cycle(4, 0.5, lazy_walk=True)


def uniform_rows(n):
    return MarkovChain(np.full((n, n), 1.0 / n))


@st.composite
def positive_chains(draw, max_n=6):
    """Chains with strictly positive entries (hence irreducible and aperiodic)."""
    n = draw(st.integers(2, max_n))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=n * n, max_size=n * n))).reshape(n, n)
    return MarkovChain(w / w.sum(axis=1, keepdims=True))


@st.composite
def distributions(draw, n):
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n))) + 1e-3
    return w / w.sum()


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def record_criterion(request):
    """Log one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, ok, detail, sub=()):
        lines = [f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"]
        lines += [f"    {s}" for s in sub]
        request.config.acceptance_lines.extend(lines)
        print("\n".join(lines))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
