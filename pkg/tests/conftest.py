import numpy as np
import pytest

from capexp.config import RunConfig
from capexp.grid import load_system, random_system
from capexp.scenario import build_scenario_tree, sample_all, select_days
from capexp.solver import available_backends

CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (report.when == "call" or report.failed):
        return
    number, title = mark.args
    detail = dict(report.user_properties).get("detail", "")
    if report.failed:
        crash = getattr(report.longrepr, "reprcrash", None)
        detail = crash.message.splitlines()[0] if crash else str(report.longrepr).splitlines()[-1]
    book = item.config.stash[CRITERIA]
    if number in book:  # parametrized criterion: every case must pass
        ok, _, earlier = book[number]
        book[number] = (ok and report.passed, title, "; ".join(filter(None, (earlier, detail))))
    else:
        book[number] = (report.passed, title, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, detail = results[number]
        line = f"criterion {number:2d}  {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)


@pytest.fixture(scope="session")
def sixbus():
    return load_system("sixbus.json")


@pytest.fixture(scope="session")
def ieee118():
    return load_system("ieee118.json")


@pytest.fixture(scope="session", params=available_backends())
def backend(request):
    return request.param


def tiny_instance(seed: int, buses: int = 3, *, hours: int = 4, scenarios: int = 2, days: int = 1):
    """Random 2-stage instance small enough for every algorithm."""
    system = random_system(seed, buses)
    cfg = RunConfig(stages=2, days=select_days(days), scenarios=scenarios, hours=hours, seed=seed)
    tree = build_scenario_tree(2, days=cfg.days)
    sset = sample_all(system, tree, scenarios, seed, hours=hours)
    return system, tree, sset, cfg


@pytest.fixture
def tiny():
    return tiny_instance(3)


def rng(seed=0):
    return np.random.default_rng(seed)
