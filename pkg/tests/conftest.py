import os
from dataclasses import replace

import numpy as np
import pytest

from mdqkd.orchestrator import desk_config, run_protocol

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "mdqkd", "data")
RECORDED_COUNTS = os.path.abspath(os.path.join(DATA, "recorded_counts.txt"))

ACCEPTANCE = {}


def small_config(**overrides):
    """Smallest synthetic scenario that reliably leaves a few thousand key bits (~5 s a run)."""
    cfg = desk_config(eps_sec=1e-2)
    cfg = cfg.with_(source=replace(cfg.source, n_rounds=100_000_000))
    return cfg.with_(**overrides)


def tiny_config(**overrides):
    """Runs through every step quickly; with only ~25k sifted bits per pair it aborts at estimation."""
    cfg = desk_config()
    cfg = cfg.with_(source=replace(cfg.source, n_rounds=10_000_000))
    return cfg.with_(**overrides)


@pytest.fixture(scope="session")
def honest_small():
    return run_protocol(small_config())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


DETAIL = pytest.StashKey()


@pytest.fixture
def detail(request):
    """Let an acceptance test attach the measured values to its summary line."""
    def note(text):
        request.node.stash[DETAIL] = text
    return note


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, fallback=False): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    if hasattr(rep, "wasxfail"):
        status = "XFAIL" if rep.skipped else "XPASS(strict: fails)"
    else:
        status = "PASS" if rep.passed else "FAIL"
    ACCEPTANCE.setdefault(mark.args[0], []).append(
        (status, item.name, item.stash.get(DETAIL, ""), mark.kwargs.get("fallback", False)))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: int(c)):
        parts = ACCEPTANCE[crit]
        primary = {status for status, _, _, fb in parts if not fb}
        fallback = {status for status, _, _, fb in parts if fb}
        if primary == {"PASS"}:
            verdict = "PASS"
        elif fallback == {"PASS"} and primary <= {"PASS", "XFAIL"}:
            verdict = "PASS (fallback acceptance)"
        else:
            verdict = "FAIL"
        tr.write_line(f"criterion {crit}: {verdict}")
        for status, name, text, _ in parts:
            tr.write_line(f"    {status:<6} {name}: {text}")
