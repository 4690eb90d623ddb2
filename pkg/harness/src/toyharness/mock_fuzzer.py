"""Deterministic stand-in for a coverage-guided fuzzing engine.

Plays back a plan file of timed events against the engine console protocol:
`t=<sec> cov <n>` prints one status line and `t=<sec> crash <name> <hex>`
drops a `crash-<name>` artifact file (`-` stands for an empty payload).
Events fire at absolute offsets from startup so playback never drifts, and
once the plan is exhausted the process idles like an engine that has stopped
finding anything, until it is killed.

Usage: python -m toyharness.mock_fuzzer <corpus_dir> <artifact_dir> <plan_file>
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path


class PlanError(ValueError):
    """Raised when a plan file does not follow the event grammar."""


@dataclass(frozen=True)
class PlanEvent:
    """One scripted action: a coverage announcement or a dropped crash."""

    at_sec: float
    kind: str
    coverage: int = 0
    crash_name: str = ""
    payload: bytes = b""


def parse_plan(text: str) -> list[PlanEvent]:
    """Parse plan text into events sorted by firing time."""
    events: list[PlanEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 2 or not fields[0].startswith("t="):
            raise PlanError(f"line {lineno}: events start with t=<seconds>")
        try:
            at_sec = float(fields[0][2:])
        except ValueError as exc:
            raise PlanError(f"line {lineno}: bad event time: {exc}") from exc
        if at_sec < 0:
            raise PlanError(f"line {lineno}: event time must be >= 0")
        if fields[1] == "cov" and len(fields) == 3:
            try:
                coverage = int(fields[2])
            except ValueError as exc:
                raise PlanError(f"line {lineno}: bad coverage value: {exc}") from exc
            events.append(PlanEvent(at_sec, "cov", coverage=coverage))
        elif fields[1] == "crash" and len(fields) == 4:
            try:
                payload = b"" if fields[3] == "-" else bytes.fromhex(fields[3])
            except ValueError as exc:
                raise PlanError(f"line {lineno}: bad payload hex: {exc}") from exc
            events.append(PlanEvent(at_sec, "crash", crash_name=fields[2], payload=payload))
        else:
            raise PlanError(f"line {lineno}: unknown event {line!r}")
    events.sort(key=lambda event: event.at_sec)
    return events


def play(events: list[PlanEvent], artifact_dir: Path) -> None:
    """Fire each event at its offset from now, then return."""
    started = time.monotonic()
    for sequence, event in enumerate(events, start=1):
        delay = started + event.at_sec - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        if event.kind == "cov":
            print(
                f"#{sequence}\tNEW    cov: {event.coverage} ft: {event.coverage} "
                f"corp: {sequence}/1b",
                flush=True,
            )
        else:
            (artifact_dir / f"crash-{event.crash_name}").write_bytes(event.payload)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="replay a scripted fuzzing session")
    # The corpus directory is accepted for command-line parity with real
    # engines; playback is fully scripted and never reads it.
    parser.add_argument("corpus_dir", type=Path)
    parser.add_argument("artifact_dir", type=Path)
    parser.add_argument("plan_file", type=Path)
    args = parser.parse_args(argv)
    try:
        events = parse_plan(args.plan_file.read_text())
    except OSError as exc:
        print(f"mock-fuzzer: cannot read plan: {exc}", file=sys.stderr)
        return 2
    except PlanError as exc:
        print(f"mock-fuzzer: {exc}", file=sys.stderr)
        return 2
    args.artifact_dir.mkdir(parents=True, exist_ok=True)
    try:
        play(events, args.artifact_dir)
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
