import itertools

import pytest

from gapfinder.model import Model


def brute_force(model: Model):
    """Best objective over all assignments of binaries; continuous vars must be absent."""
    assert all(d.is_integral and d.lower >= 0 and d.upper <= 1 for d in model.vars)
    best = None
    sense = model.objective.sense
    for bits in itertools.product((0.0, 1.0), repeat=len(model.vars)):
        point = {d.id: b for d, b in zip(model.vars, bits)}
        if model.check(point):
            continue
        val = model.objective.expr.constant + sum(c * point[v] for v, c in model.objective.expr.terms.items())
        if best is None or (val > best if sense == "max" else val < best):
            best = val
    return best


@pytest.fixture
def oracle():
    return brute_force


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (number, title, ok, detail)."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
