"""Line-coverage aggregation and export (lcov tracefile and JSON).

Coverage is boolean per line: the pipeline cares about covered versus
uncovered, so hit counts are capped at 1. Merging is a per-file union, which
makes it associative, commutative, and idempotent regardless of run order.
"""

from __future__ import annotations

import json
import logging
import re
import zlib
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

_COV_LINE_RE = re.compile(r"^COV (.+):(\d+)$")


@dataclass(frozen=True, slots=True)
class CoverageMap:
    """Executed 1-based lines per file, with optional known line totals."""

    executed: dict[str, frozenset[int]] = field(default_factory=dict)
    totals: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "executed", {f: frozenset(lines) for f, lines in self.executed.items()}
        )
        totals = dict(self.totals)
        for file, lines in self.executed.items():
            known = totals.get(file)
            top = max(lines, default=0)
            if known is not None and known < top:
                log.warning("%s: line total %d below executed line %d, raising", file, known, top)
                totals[file] = top
        object.__setattr__(self, "totals", totals)

    def files(self) -> list[str]:
        return sorted(self.executed)


def merge(runs: list[CoverageMap]) -> CoverageMap:
    """Union of executed lines; conflicting known totals keep the max."""
    executed: dict[str, set[int]] = {}
    totals: dict[str, int] = {}
    for run in runs:
        for file, lines in run.executed.items():
            executed.setdefault(file, set()).update(lines)
        for file, total in run.totals.items():
            known = totals.get(file)
            if known is not None and known != total:
                log.warning("%s: conflicting line totals %d and %d, keeping max", file, known, total)
                totals[file] = max(known, total)
            else:
                totals[file] = total
    return CoverageMap({f: frozenset(lines) for f, lines in executed.items()}, totals)


def export_lcov(cov: CoverageMap) -> str:
    """Standard lcov tracefile; files by path, lines ascending, hits 0 or 1."""
    out: list[str] = []
    for file in cov.files():
        executed = cov.executed[file]
        total = cov.totals.get(file)
        out.append(f"SF:{file}")
        if total is None:
            for line in sorted(executed):
                out.append(f"DA:{line},1")
            found = len(executed)
        else:
            for line in range(1, total + 1):
                out.append(f"DA:{line},{1 if line in executed else 0}")
            found = total
        out.append(f"LH:{len(executed)}")
        out.append(f"LF:{found}")
        out.append("end_of_record")
    if not out:
        return ""
    return "\n".join(out) + "\n"


def export_json(cov: CoverageMap) -> str:
    """Stable-key JSON view; an unknown total falls back to the executed count."""
    files = {}
    total_executed = 0
    total_lines = 0
    for file in cov.files():
        executed = cov.executed[file]
        known = cov.totals.get(file)
        effective = known if known is not None else len(executed)
        percent = round(100.0 * len(executed) / effective, 2) if effective else 0.0
        files[file] = {
            "executed": sorted(executed),
            "total": known,
            "percent": percent,
        }
        total_executed += len(executed)
        total_lines += effective
    payload = {
        "files": files,
        "totals": {"executed": total_executed, "total": total_lines},
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def parse_cov_lines(text: str) -> CoverageMap:
    """Build a map from ``COV <file>:<line>`` sidecar lines; noise is skipped."""
    executed: dict[str, set[int]] = {}
    for raw in text.splitlines():
        match = _COV_LINE_RE.match(raw.strip())
        if not match:
            continue
        line = int(match.group(2))
        if line >= 1:
            executed.setdefault(match.group(1), set()).add(line)
    return CoverageMap({f: frozenset(lines) for f, lines in executed.items()})


def feature_id(file: str, line: int) -> int:
    """Stable opaque feature id for a covered source line."""
    return zlib.crc32(f"{file}:{line}".encode())


def feature_set(cov: CoverageMap) -> frozenset[int]:
    """Flatten a coverage map into minimization feature ids."""
    return frozenset(
        feature_id(file, line) for file, lines in cov.executed.items() for line in lines
    )
