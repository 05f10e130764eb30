import numpy as np
import pytest

from graphbo.completion import NodeRepresentationModel, SpectralSurrogate


def free_surrogate(Q, gamma, F=None):
    """Surrogate whose Q and F models are plain matrices."""
    Q = np.asarray(Q, dtype=float)
    F = np.ones((Q.shape[0], 1)) if F is None else np.asarray(F, dtype=float)
    return SpectralSurrogate(np.asarray(gamma, dtype=float),
                             NodeRepresentationModel(Q, []),
                             NodeRepresentationModel(F, []))


def nonnegative_surrogate(n, d1, d2, seed):
    """Random surrogate with entrywise-positive factors and gamma."""
    rng = np.random.default_rng(seed)
    Q = np.abs(rng.standard_normal((n, d1))) + 0.1
    gamma = rng.uniform(0.5, 2.0, d1)
    return free_surrogate(Q, gamma, rng.standard_normal((n, d2)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
