import numpy as np
import pytest

from graphnorm.netdata import SyntheticSpec, simulate_population


def random_views(rng, n_r, n_v, scale=1.0):
    """Symmetric, nonnegative, zero-diagonal views of shape (n_r, n_r, n_v)."""
    A = rng.uniform(0.05, 1.0, size=(n_r, n_r, n_v)) * scale
    A = (A + A.transpose(1, 0, 2)) / 2
    A[np.arange(n_r), np.arange(n_r)] = 0.0
    return A


def small_spec(**kw):
    base = dict(n_subjects=8, n_r=6, n_v=2, view_means=[0.084, 0.723], view_max=[0.586, 3.74], seed=3)
    base.update(kw)
    return SyntheticSpec(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_population():
    return simulate_population(small_spec())


# acceptance verdicts, echoed in the terminal summary so they survive output capture
VERDICTS: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
