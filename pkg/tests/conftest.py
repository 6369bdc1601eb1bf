import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def small_config():
    from mmcache.config import ExperimentConfig
    from mmcache.workload import WorkloadProfile

    wl = WorkloadProfile(horizon_slots=120, phase_schedule=[(0, 3.0), (60, 6.0)],
                         shift_schedule=[(60, 5)])
    return ExperimentConfig(workload=wl, seeds=[0, 1], episodes=2)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(report):
        ok, detail = report[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
