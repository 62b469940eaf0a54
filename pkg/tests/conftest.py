import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")

G = 1.1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_site_schedule(rng, lat, N, scale=1.0):
    from bangbang.model import SiteResolvedSchedule

    return SiteResolvedSchedule(
        rng.uniform(-scale, scale, (N, lat.n_bonds)),
        rng.uniform(-scale, scale, (N, lat.n_sites)),
    )


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(k: int, ok: bool, detail: str):
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
