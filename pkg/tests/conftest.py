import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def synth_root(tmp_path):
    from maskcurate.synthgen import SceneSpec, scene_suite, write_dataset

    root = tmp_path / "synth"
    write_dataset(root, scene_suite(8, SceneSpec(width=24, height=20, num_classes=6, seed=3)))
    return root


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._acceptance_lines = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        number, title = marker.args
        status = "PASS" if rep.passed else "FAIL"
        params = getattr(item, "callspec", None)
        suffix = f" [{params.id}]" if params is not None else ""
        item.config._acceptance_lines.append(f"criterion {number}: {status}  {title}{suffix}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
