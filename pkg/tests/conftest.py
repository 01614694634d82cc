from __future__ import annotations

import pytest

from stancedistill import synthetic
from stancedistill.elicitor import MockCompletionClient, TransientServiceError, elicit_rationale


def _no_sleep(_seconds):
    return None


class ScriptedClient:
    """Replays a fixed list of responses; exceptions in the list are raised."""

    service_id = "scripted"

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0
        self.prompts = []

    def complete(self, prompt, max_tokens=256):
        self.prompts.append(prompt)
        item = self.responses[min(self.calls, len(self.responses) - 1)]
        self.calls += 1
        if isinstance(item, Exception):
            raise item
        return item


@pytest.fixture
def scripted():
    return ScriptedClient


@pytest.fixture
def transient():
    return TransientServiceError("503")


@pytest.fixture
def no_sleep():
    return _no_sleep


@pytest.fixture(scope="session")
def toy32():
    return synthetic.make_examples(32, seed=3)


@pytest.fixture(scope="session")
def toy32_rationales(toy32):
    client = MockCompletionClient()
    return {e.id: elicit_rationale(e, client, sleep=_no_sleep) for e in toy32}


@pytest.fixture
def toy_data_dir(tmp_path):
    train, test = synthetic.make_official_style_files(60, 30, seed=1)
    d = tmp_path / "semeval"
    d.mkdir()
    (d / "toy-trainingdata.txt").write_bytes(train)
    (d / "toy-testdata-gold.txt").write_bytes(test)
    return d


# One summary line per acceptance criterion.
_criteria: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or "::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::test_criterion_")[1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            outcome = f"SOFT FAIL, non-fatal ({report.wasxfail})"
        elif report.outcome == "skipped":
            outcome = f"NOT RUN ({report.longrepr[2].removeprefix('Skipped: ')})"
        else:
            outcome = {"passed": "PASS", "failed": "FAIL"}[report.outcome]
        _criteria[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        terminalreporter.write_line(f"criterion {name}: {_criteria[name]}")
