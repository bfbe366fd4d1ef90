import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from focusstream.synth import moving_spec, reference_spec, synth_traces  # noqa: E402
from focusstream.trace import filter_dirty, split  # noqa: E402


@pytest.fixture(scope="session")
def reference_corpus():
    return synth_traces(reference_spec())


@pytest.fixture(scope="session")
def reference_split(reference_corpus):
    return split(filter_dirty(reference_corpus), 0.8, 42)


@pytest.fixture(scope="session")
def moving_corpus():
    return synth_traces(moving_spec())


@pytest.fixture(scope="session")
def moving_split(moving_corpus):
    return split(filter_dirty(moving_corpus), 0.8, 42)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
