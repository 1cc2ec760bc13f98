import numpy as np
import pytest

from ctdistill import Geometry, PhantomSpec, lung_phantom, shepp_logan, sinogram_of


@pytest.fixture(scope="session")
def lung256():
    return lung_phantom(PhantomSpec(n=256, seed=11))


@pytest.fixture(scope="session")
def lung256_sino(lung256):
    vol, _ = lung256
    geom = Geometry.for_volume(vol)
    return geom, [sinogram_of(vol, geom)]


@pytest.fixture(scope="session")
def sl256():
    return shepp_logan(256)


@pytest.fixture(scope="session")
def sl256_sino(sl256):
    geom = Geometry.for_volume(sl256)
    return geom, sinogram_of(sl256, geom)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def record(criterion: int, title: str):
    """Decorator: log a PASS/FAIL line for an acceptance criterion."""

    def wrap(fn):
        import functools

        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                ACCEPTANCE[criterion] = ("FAIL", title, f"{type(exc).__name__}: {str(exc).splitlines()[0][:160]}")
                raise
            ACCEPTANCE[criterion] = ("PASS", title, detail or "")

        return run

    return wrap


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{status} criterion {k}: {title}" + (f" ({detail})" if detail else ""))
