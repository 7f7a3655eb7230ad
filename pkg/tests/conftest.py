import json
from pathlib import Path

import pytest

from xlcwi import cli
from xlcwi.experiments import DataLayout

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance_outcomes = {}


@pytest.fixture(scope="session")
def fixture_root():
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_manifest():
    return json.loads((FIXTURES / "manifest.json").read_text())


@pytest.fixture(scope="session")
def aligned_embeddings_dir(tmp_path_factory):
    """Fixture embedding spaces mapped into the English pivot, done once."""
    out = tmp_path_factory.mktemp("aligned")
    rc = cli.main(
        [
            "align",
            "--embeddings-root", str(FIXTURES / "embeddings"),
            "--dictionaries-root", str(FIXTURES / "dictionaries"),
            "--output-dir", str(out),
            "--languages", "de,es,fr",
            "--iterations", "2",
            "--csls-k", "3",
            "--anchor-top-n", "60",
        ]
    )
    assert rc == 0
    return out


@pytest.fixture(scope="session")
def fixture_layout(aligned_embeddings_dir):
    return DataLayout(FIXTURES / "data", aligned_embeddings_dir)


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _acceptance_outcomes[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance_outcomes):
        outcome = _acceptance_outcomes[name]
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome)
        terminalreporter.write_line(f"{status}  {name}")
