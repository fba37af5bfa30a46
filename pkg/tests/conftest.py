import pytest

from lipreg.measures import KINDS, MeasureSpec

_ACCEPTANCE = []


def record_acceptance(number, title, passed, detail=""):
    _ACCEPTANCE.append((number, title, bool(passed), detail))


@pytest.fixture(params=KINDS)
def kind(request):
    return request.param


@pytest.fixture
def gauss1():
    return MeasureSpec("standard-gaussian", 1)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number:2d}: {title}" + (f" [{detail}]" if detail else ""))
