"""Crash-report domain model: frames, traces, crash kinds, severity, clusters.

Traces index from the crash site outward: index 0 is the innermost frame for
every producer, whatever the original report's print order. All types are
immutable after construction and safe to share between worker threads.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, replace
from datetime import datetime, timezone


class FrameOrigin(enum.Enum):
    """Provenance tag assigned to a frame by trace filtering."""

    UNKNOWN = "unknown"
    USER_CODE = "user_code"
    STDLIB = "stdlib"
    FUZZER = "fuzzer"
    SANITIZER = "sanitizer"
    EXCEPTION_UTILS = "exception_utils"


#: Origins that carry signal: they survive filtering and feed dedup/clustering.
SIGNAL_ORIGINS = frozenset({FrameOrigin.UNKNOWN, FrameOrigin.USER_CODE})


@dataclass(frozen=True, slots=True)
class StackFrame:
    """One stack entry; ``line`` is None when the source had no line number."""

    file: str
    function: str
    line: int | None = None
    origin: FrameOrigin = FrameOrigin.UNKNOWN

    def __post_init__(self) -> None:
        if not self.function:
            raise ValueError("frame function must be non-empty")
        if self.line is not None and self.line < 1:
            raise ValueError("frame line must be >= 1 when present")

    def match_key(self) -> tuple[str, str]:
        """Key used by similarity scoring; the line number is ignored."""
        return (self.file, self.function)

    def dedup_key(self) -> tuple[str, str, int | None]:
        """Key used by exact-duplicate detection; the line number counts."""
        return (self.file, self.function, self.line)

    def with_origin(self, origin: FrameOrigin) -> StackFrame:
        return replace(self, origin=origin)


@dataclass(frozen=True, slots=True)
class StackTrace:
    """Immutable frame sequence, innermost (crash site) first."""

    frames: tuple[StackFrame, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, index: int) -> StackFrame:
        return self.frames[index]

    def signal_frames(self) -> tuple[StackFrame, ...]:
        """Frames that survived filtering (user code plus never-filtered)."""
        return tuple(f for f in self.frames if f.origin in SIGNAL_ORIGINS)


class AddressClass(enum.Enum):
    """Coarse classification of a faulting address."""

    NULL = "null"
    NEAR_NULL = "near_null"
    OTHER = "other"

    @staticmethod
    def classify(address: int) -> AddressClass:
        if address == 0:
            return AddressClass.NULL
        if address < 0x1000:
            return AddressClass.NEAR_NULL
        return AddressClass.OTHER


class MemoryAccess(enum.Enum):
    """Access direction reported by a sanitizer, when stated."""

    READ = "read"
    WRITE = "write"
    UNKNOWN = "unknown"


@dataclass(frozen=True, slots=True)
class SanitizerError:
    """Crash kind extracted from a sanitizer error banner."""

    category: str
    access: MemoryAccess = MemoryAccess.UNKNOWN
    address_class: AddressClass | None = None

    def __post_init__(self) -> None:
        if not self.category:
            raise ValueError("sanitizer category must be non-empty")

    def describe(self) -> str:
        return self.category


@dataclass(frozen=True, slots=True)
class PythonException:
    """Crash kind extracted from an interpreter traceback."""

    type_name: str
    message: str = ""

    def describe(self) -> str:
        return self.type_name


CrashKind = SanitizerError | PythonException


class SeverityClass(enum.Enum):
    """Exploitability estimate attached to a triaged report."""

    EXPLOITABLE = "EXPLOITABLE"
    PROBABLY_EXPLOITABLE = "PROBABLY_EXPLOITABLE"
    NOT_EXPLOITABLE = "NOT_EXPLOITABLE"


@dataclass(frozen=True, slots=True)
class Severity:
    classification: SeverityClass
    description: str


@dataclass(frozen=True, slots=True)
class CrashReport:
    """One triaged crash: raw text, parsed kind and trace, severity, context."""

    id: str
    seed_path: str | None
    raw_report: str
    kind: CrashKind
    severity: Severity
    trace: StackTrace
    crashline: tuple[str, int] | None = None
    source_snippet: tuple[tuple[int, str], ...] | None = None
    target_name: str = ""
    created_at: str = ""

    @staticmethod
    def hash_id(raw_report: str) -> str:
        """Stable report id: hex digest of the raw report text."""
        return hashlib.sha256(raw_report.encode("utf-8")).hexdigest()

    @staticmethod
    def timestamp() -> str:
        return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


@dataclass(frozen=True, slots=True)
class Cluster:
    """Group of deduplicated report ids judged to share one bug."""

    id: int
    members: tuple[str, ...]
    representative: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        if self.id < 1:
            raise ValueError("cluster id must be >= 1")
        if not self.members:
            raise ValueError("cluster must have at least one member")
        if self.representative not in self.members:
            raise ValueError("cluster representative must be a member")


@dataclass(frozen=True, slots=True)
class ClusterDigest:
    """Per-cluster block of the human-readable summary."""

    cluster_id: int
    size: int
    lines: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class TriageSummary:
    """Campaign-level rollup: totals plus one digest per cluster."""

    raw_count: int
    deduplicated_count: int
    cluster_count: int
    digests: tuple[ClusterDigest, ...] = ()

    def render(self) -> str:
        out = [
            f"raw reports: {self.raw_count}",
            f"after dedup: {self.deduplicated_count}",
            f"clusters: {self.cluster_count}",
        ]
        for digest in self.digests:
            out.append("")
            noun = "report" if digest.size == 1 else "reports"
            out.append(f"cluster {digest.cluster_id} ({digest.size} {noun})")
            out.extend(f"  {line}" for line in digest.lines)
        return "\n".join(out) + "\n"
