import time

import pytest

from wimaxqos.config import load_preset
from wimaxqos.runner import run_scenario

_ACCEPTANCE = {}


class PresetRuns:
    """Runs presets once per session; results keyed by (preset, seed, overrides)."""

    def __init__(self, base):
        self.base = base
        self.cache = {}

    def get(self, name, seed=None, dump_frames=True, tag="", **overrides):
        key = (name, seed, dump_frames, tag, repr(sorted(overrides.items())))
        if key not in self.cache:
            cfg = load_preset(name)
            if overrides:
                cfg = cfg.replace(**overrides)
            out = self.base / f"{name}-{seed}-{len(self.cache)}"
            t0 = time.perf_counter()
            result = run_scenario(cfg, out, seed=seed, dump_frames=dump_frames)
            result.wall_s = time.perf_counter() - t0
            self.cache[key] = result
        return self.cache[key]


@pytest.fixture(scope="session")
def preset_runs(tmp_path_factory):
    return PresetRuns(tmp_path_factory.mktemp("runs"))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    code, title = marker.args
    if report.failed or report.when == "call":
        prev = _ACCEPTANCE.get(code, (title, True))[1]
        _ACCEPTANCE[code] = (title, prev and report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for code in sorted(_ACCEPTANCE, key=lambda c: int(c[2:])):
        title, ok = _ACCEPTANCE[code]
        terminalreporter.write_line(f"{code:<5} {'PASS' if ok else 'FAIL'}  {title}")
