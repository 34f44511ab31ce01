import numpy as np
import pytest
from hypothesis import strategies as st

from poisbkg import PairedDataset

counts = st.integers(min_value=0, max_value=60)
exposures = st.floats(min_value=0.2, max_value=5.0, allow_nan=False)


@st.composite
def paired_datasets(draw, max_bins=6, max_count=20, with_exposure=False):
    n = draw(st.integers(min_value=1, max_value=max_bins))
    S = draw(st.lists(st.integers(0, max_count), min_size=n, max_size=n))
    B = draw(st.lists(st.integers(0, max_count), min_size=n, max_size=n))
    if with_exposure:
        return PairedDataset(S, B, t_S=draw(exposures), t_B=draw(exposures))
    return PairedDataset(S, B)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def micro_datasets(seed, n=200, max_bins=5, max_count=20):
    """Random small datasets for oracle comparisons."""
    gen = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        N = int(gen.integers(1, max_bins + 1))
        out.append(PairedDataset(gen.integers(0, max_count + 1, N), gen.integers(0, max_count + 1, N)))
    return out


ACCEPTANCE_LINES: list[str] = []


def verdict(tag: str, ok: bool, detail: str) -> None:
    """Record and print one acceptance line, then fail the test if needed."""
    line = f"{'PASS' if ok else 'FAIL'} [{tag}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
