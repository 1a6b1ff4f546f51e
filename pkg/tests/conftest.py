import numpy as np
import pytest

from asied.domain import Binary, BiomarkerPanel, Continuous, Ordinal, TrialDataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mixed_dataset(n, rng, outcome="binary"):
    """One binary and one three-level ordinal biomarker; responders are more
    likely on arm 2 when the binary marker is 1."""
    panel = BiomarkerPanel.of([Binary(), Ordinal(3)])
    X = np.column_stack([rng.integers(0, 2, n), rng.integers(1, 4, n)]).astype(float)
    z = rng.integers(1, 3, n)
    if outcome == "binary":
        p = 0.3 + 0.5 * ((z == 2) & (X[:, 0] == 1))
        y = (rng.random(n) < p).astype(float)
    else:
        y = 1.0 + 2.0 * ((z == 2) & (X[:, 0] == 1)) + rng.normal(0, 1, n)
    return TrialDataset.from_arrays(panel, X, z, y, outcome=outcome)


def continuous_dataset(n, rng, K=2, effect=3.0, cut=-0.4):
    panel = BiomarkerPanel.of([Continuous(-1.0, 1.0)] * K)
    X = rng.uniform(-1, 1, (n, K))
    z = rng.integers(1, 3, n)
    y = 0.75 + (z == 2) * (0.25 + effect * (X[:, 0] > cut)) + rng.normal(0, 1, n)
    return TrialDataset.from_arrays(panel, X, z, y)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
