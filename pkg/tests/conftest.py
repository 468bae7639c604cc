from __future__ import annotations

from pathlib import Path

import pytest

from ste.demo import demo_items, exploration_script, predictor_script
from ste.fixtures import build_sandbox, default_registry, load_fixtures
from ste.llm import Gateway, ScriptedBackend

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def fixture_tables():
    return load_fixtures()


@pytest.fixture
def sandbox(registry, fixture_tables):
    return build_sandbox(registry, fixture_tables)


@pytest.fixture(scope="session")
def items(fixture_tables):
    return demo_items(fixture_tables)


@pytest.fixture
def explore_gateway(items):
    return Gateway(ScriptedBackend.from_json(exploration_script(items)))


@pytest.fixture
def predict_gateway(items):
    return Gateway(ScriptedBackend.from_json(predictor_script(items)))


def scripted(*rules) -> Gateway:
    """Gateway over a list of (match, response[, tag]) rules."""
    return Gateway(ScriptedBackend(list(rules)))


@pytest.fixture(scope="session")
def demo_trials(registry, fixture_tables, items):
    """Default-configuration exploration of every bundled tool, keyed by API name."""
    from ste.explorer import ExplorationConfig, explore_all

    gw = Gateway(ScriptedBackend.from_json(exploration_script(items)))
    runs = explore_all(registry, ExplorationConfig(), gw, build_sandbox(registry, fixture_tables))
    return {r.api_name: r.trials for r in runs}


# ---- acceptance summary ----

_verdicts: dict[int, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    _, ok = _verdicts.get(number, (title, True))
    _verdicts[number] = (title, ok and rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        title, ok = _verdicts[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}")
