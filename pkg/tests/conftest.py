import numpy as np
import pytest

from esmaml_hc.core import Role, SeedSpec, sample_directions


def find_seed(predicate, d, n_dirs=1, start=0, limit=10_000):
    """First master seed whose step-0 HC directions satisfy ``predicate``."""
    for k in range(start, start + limit):
        seed = SeedSpec(k)
        G = sample_directions(n_dirs, d, True, seed.child(0, Role.DIRECTION).generator())
        if predicate(G):
            return seed
    raise RuntimeError("no seed found")


@pytest.fixture
def neg_x2():
    from esmaml_hc.objectives import Objective
    return Objective(1, lambda x: -float(x[0] ** 2), lambda x: -2 * x)


_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record (and print) one pass/fail line for an acceptance criterion."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
