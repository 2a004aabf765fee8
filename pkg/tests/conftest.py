from __future__ import annotations

import pytest

# (criterion number, passed, description) collected by the acceptance tests
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_addoption(parser):
    parser.addoption("--extended", action="store_true", default=False,
                     help="also run large-grid instances (slow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="needs --extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def report():
    def _report(number: int, passed: bool, text: str) -> bool:
        ACCEPTANCE.append((number, bool(passed), text))
        return bool(passed)
    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, text in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}: {text}")
