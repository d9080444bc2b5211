import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from evperiod import EventStream, SensorGeometry

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def event_streams(draw, max_events=40, max_side=300):
    """Valid streams: in-bounds coordinates, +-1 polarity, non-decreasing t."""
    width = draw(st.integers(1, max_side))
    height = draw(st.integers(1, max_side))
    n = draw(st.integers(0, max_events))
    xs = draw(st.lists(st.integers(0, width - 1), min_size=n, max_size=n))
    ys = draw(st.lists(st.integers(0, height - 1), min_size=n, max_size=n))
    gaps = draw(st.lists(st.integers(0, 10**6), min_size=n, max_size=n))
    start = draw(st.integers(0, 2**40))
    ps = draw(st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n))
    t = start + np.cumsum(np.array(gaps, dtype=np.int64))
    return EventStream(SensorGeometry(width, height), xs, ys, t, ps)


def random_stream(rng, n, width=64, height=48, span=100_000):
    t = np.sort(rng.integers(0, span, n))
    return EventStream(
        SensorGeometry(width, height),
        rng.integers(0, width, n),
        rng.integers(0, height, n),
        t,
        rng.choice([-1, 1], n),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion.

    Call ``verdict(number, ok, detail)`` once; a test that dies before doing
    so is reported as FAIL.
    """
    lines = request.config.stash.setdefault(_VERDICTS, [])
    seen = []

    def record(number, ok, detail):
        seen.append(number)
        lines.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    yield record
    if not seen:
        lines.append(f"criterion ?: FAIL  {request.node.name} raised before a verdict")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
