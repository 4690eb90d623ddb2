"""The mock fuzzer: plan grammar, console protocol, artifacts, timing."""

from __future__ import annotations

import re
import signal
import subprocess
import time
from pathlib import Path

import pytest

from harness_helpers import FUZZER_CMD

from toyharness.mock_fuzzer import PlanError, parse_plan

_STATUS_LINE = re.compile(r"^#\d+\s.*\bcov:\s*(\d+)\b")


class Session:
    """A mock-fuzzer process with stdout redirected to a file."""

    def __init__(self, tmp_path: Path, plan: str):
        self.artifacts = tmp_path / "artifacts"
        self.artifacts.mkdir(exist_ok=True)
        plan_file = tmp_path / "plan.txt"
        plan_file.write_text(plan)
        self.stdout_path = tmp_path / "console.txt"
        self._stdout = self.stdout_path.open("w")
        self.proc = subprocess.Popen(
            FUZZER_CMD + [str(tmp_path), str(self.artifacts), str(plan_file)],
            stdout=self._stdout,
            stderr=subprocess.PIPE,
            text=True,
        )

    def wait_for(self, predicate, timeout: float = 10.0) -> float:
        started = time.monotonic()
        while time.monotonic() - started < timeout:
            if predicate():
                return time.monotonic() - started
            time.sleep(0.02)
        raise AssertionError("condition not met before timeout")

    def stop(self) -> int:
        self.proc.send_signal(signal.SIGINT)
        code = self.proc.wait(timeout=10)
        self._stdout.close()
        return code


@pytest.fixture
def session(tmp_path):
    live = []

    def start(plan: str) -> Session:
        live.append(Session(tmp_path, plan))
        return live[-1]

    yield start
    for item in live:
        if item.proc.poll() is None:
            item.proc.kill()
            item.proc.wait(timeout=10)
        item._stdout.close()


class TestPlanGrammar:
    def test_cov_and_crash_events_parse(self):
        events = parse_plan("t=0.5 cov 7\nt=1.0 crash aa 414243\n")
        assert [e.kind for e in events] == ["cov", "crash"]
        assert events[0].coverage == 7
        assert events[1].crash_name == "aa"
        assert events[1].payload == b"ABC"

    def test_dash_means_empty_payload(self):
        (event,) = parse_plan("t=0 crash nil -\n")
        assert event.payload == b""

    def test_comments_and_blank_lines_are_ignored(self):
        assert parse_plan("# header\n\nt=0 cov 1\n") != []

    def test_events_are_sorted_by_time(self):
        events = parse_plan("t=2 cov 5\nt=1 cov 4\n")
        assert [e.at_sec for e in events] == [1.0, 2.0]

    @pytest.mark.parametrize(
        "line",
        [
            "cov 3",
            "t=x cov 3",
            "t=-1 cov 3",
            "t=0 cov",
            "t=0 cov many",
            "t=0 crash aa zz",
            "t=0 boom 3",
        ],
    )
    def test_malformed_lines_are_rejected(self, line):
        with pytest.raises(PlanError) as err:
            parse_plan(line + "\n")
        assert "line 1" in str(err.value)


class TestProcessBehavior:
    def test_cov_event_prints_one_parseable_status_line(self, session):
        fuzzer = session("t=0.0 cov 7\n")
        fuzzer.wait_for(lambda: fuzzer.stdout_path.read_text().count("\n") >= 1)
        assert fuzzer.stop() == 0
        lines = fuzzer.stdout_path.read_text().splitlines()
        assert len(lines) == 1
        match = _STATUS_LINE.match(lines[0])
        assert match and match.group(1) == "7"

    def test_crash_events_write_exact_payloads(self, session):
        fuzzer = session("t=0.0 crash aa 414243\nt=0.05 crash bb -\n")
        fuzzer.wait_for(lambda: (fuzzer.artifacts / "crash-bb").exists())
        assert fuzzer.stop() == 0
        assert (fuzzer.artifacts / "crash-aa").read_bytes() == b"ABC"
        assert (fuzzer.artifacts / "crash-bb").read_bytes() == b""

    def test_empty_plan_idles_silently_until_interrupted(self, session):
        fuzzer = session("")
        time.sleep(0.5)
        assert fuzzer.proc.poll() is None
        assert fuzzer.stop() == 0
        assert fuzzer.stdout_path.read_text() == ""
        assert list(fuzzer.artifacts.iterdir()) == []

    def test_event_fires_on_schedule_within_half_a_second(self, session):
        fuzzer = session("t=0.6 crash late 00\n")
        seen_at = fuzzer.wait_for(lambda: (fuzzer.artifacts / "crash-late").exists())
        assert fuzzer.stop() == 0
        # Startup costs push the observation later than the offset, never
        # earlier; the playback skew budget is half a second.
        assert 0.55 <= seen_at <= 2.0

    def test_malformed_plan_exits_nonzero_with_the_line(self, tmp_path):
        plan = tmp_path / "plan.txt"
        plan.write_text("t=0 boom 3\n")
        proc = subprocess.run(
            FUZZER_CMD + [str(tmp_path), str(tmp_path / "a"), str(plan)],
            capture_output=True,
            text=True,
            timeout=30,
        )
        assert proc.returncode == 2
        assert "line 1" in proc.stderr

    def test_missing_plan_exits_nonzero(self, tmp_path):
        proc = subprocess.run(
            FUZZER_CMD + [str(tmp_path), str(tmp_path / "a"), str(tmp_path / "nope")],
            capture_output=True,
            text=True,
            timeout=30,
        )
        assert proc.returncode == 2
        assert "cannot read plan" in proc.stderr
