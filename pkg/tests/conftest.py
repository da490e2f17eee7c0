import pytest

from idrnet.dataset import load_ieee14

# acceptance criteria report: criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def miim():
    return load_ieee14("miim")


@pytest.fixture(scope="session")
def iim():
    return load_ieee14("iim")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


class _Criterion:
    def __init__(self, n: int, what: str):
        self.n, self.what = n, what

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            ACCEPTANCE[self.n] = (True, self.what)
        else:
            ACCEPTANCE[self.n] = (False, f"{self.what} ({exc_type.__name__}: {exc})")
        return False


@pytest.fixture
def criterion():
    return _Criterion
