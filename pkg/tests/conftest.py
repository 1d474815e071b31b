import numpy as np
import pytest

from attrition.ingest import (
    ACTIVITY_HEADER,
    RESPONSE_HEADER,
    SUBMISSION_HEADER,
    ActivitySnapshot,
    ParticipantResponse,
    SubmissionRecord,
    TaskWindow,
)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def csv_writer(tmp_path):
    def _write(name, header, rows):
        return write_csv(tmp_path / name, header, rows)

    return _write


def response(pid, tid, value=3, items=None):
    return ParticipantResponse(pid, tid, tuple(items) if items else (value,) * 24)


def snapshot(pid, tid, window, counts=(1, 1, 1, 1)):
    return ActivitySnapshot(pid, tid, TaskWindow[window], *counts)


def submissions_for(tid, labels):
    """labels: mapping window name -> 0/1."""
    out = []
    for name, label in labels.items():
        w = TaskWindow[name]
        if w is TaskWindow.stage2_gate:
            out.append(SubmissionRecord(tid, w, 10.0, bool(label)))
        else:
            out.append(SubmissionRecord(tid, w, 50.0 if label else None))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


HEADERS = {
    "responses": RESPONSE_HEADER,
    "activity": ACTIVITY_HEADER,
    "submissions": SUBMISSION_HEADER,
}


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1].removeprefix("test_criterion_")
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        num, _, label = name.partition("_")
        verdict = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {int(num):2d} {verdict}  {label.replace('_', ' ')}")
