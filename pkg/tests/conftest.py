import pytest

from gramediate.table import embedded_dataset, expand, marginalize

BUILTIN_ORDER = ("SSC-W", "SSC-F", "TIME", "IC")


@pytest.fixture(scope="session")
def builtin():
    """Embedded 4-way table in the W, F, T, IC display order."""
    return embedded_dataset().reorder(BUILTIN_ORDER)


@pytest.fixture(scope="session")
def builtin3(builtin):
    return marginalize(builtin, ["SSC-W", "SSC-F", "TIME"])


@pytest.fixture(scope="session")
def records(builtin):
    return expand(builtin)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.__dict__.get("_acceptance")
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in results.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
