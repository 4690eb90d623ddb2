"""Parsers turning raw crash text into a StackTrace plus a CrashKind.

Two report families are recognized: interpreter tracebacks and sanitizer
reports. Both grammars are line-oriented with anchored patterns so that log
noise interleaved by the fuzzer does not break extraction. Raw bytes are
decoded with replacement characters; every input yields either a parse or
MalformedReport, never an unhandled exception.
"""

from __future__ import annotations

import enum
import re
from pathlib import Path

from .errors import MalformedReport
from .model import (
    AddressClass,
    MemoryAccess,
    PythonException,
    SanitizerError,
    StackFrame,
    StackTrace,
)

PY_BANNER = "Traceback (most recent call last):"

_SAN_BANNER_RE = re.compile(r"ERROR: \w+Sanitizer: (.+)")
_PY_FRAME_RE = re.compile(r'^\s*File "(.+?)", line (\d+)(?:, in (.+))?\s*$')
_PY_EXC_RE = re.compile(r"^([A-Za-z_][\w.]*)(?::\s?(.*))?$")
_SAN_FRAME_RE = re.compile(r"^\s*#(\d+)\s+0x[0-9a-fA-F]+\s+(?:in\s+)?(.+?)\s*$")
_SAN_LOCATION_RE = re.compile(r"^(.+?)\s+(\S+?):(\d+)(?::\d+)?$")
_ACCESS_RE = re.compile(r"\b(READ|WRITE) of size (\d+)")
_ADDRESS_RE = re.compile(r"\baddress 0x([0-9a-fA-F]+)")

# Multi-word banners are folded to one canonical category token.
_CATEGORY_REWRITES = (
    ("attempting double-free", "double-free"),
    ("requested allocation size", "allocation-size-too-big"),
    ("allocator is out of memory", "out-of-memory"),
    ("detected memory leaks", "memory-leak"),
)


class ReportKind(enum.Enum):
    PYTHON = "python"
    SANITIZER = "sanitizer"
    UNKNOWN = "unknown"


def _to_text(raw: str | bytes) -> str:
    if isinstance(raw, bytes):
        return raw.decode("utf-8", errors="replace")
    return raw


def detect_report_kind(text: str | bytes) -> ReportKind:
    """Classify raw crash text; a sanitizer banner outranks a traceback."""
    text = _to_text(text)
    if _SAN_BANNER_RE.search(text):
        return ReportKind.SANITIZER
    for line in text.splitlines():
        if line.strip() == PY_BANNER:
            return ReportKind.PYTHON
    return ReportKind.UNKNOWN


def parse_python_traceback(text: str | bytes) -> tuple[StackTrace, PythonException]:
    """Parse the last traceback block; frames come back innermost-first."""
    lines = _to_text(text).splitlines()
    starts = [i for i, line in enumerate(lines) if line.strip() == PY_BANNER]
    if not starts:
        raise MalformedReport("no traceback banner found")
    # Chained tracebacks: only the last block names the uncaught exception.
    block = lines[starts[-1] + 1 :]

    frames: list[StackFrame] = []
    kind: PythonException | None = None
    for line in block:
        frame_match = _PY_FRAME_RE.match(line)
        if frame_match:
            path, lineno, function = frame_match.groups()
            line_no = int(lineno)
            # The interpreter never prints line 0; such lines are corrupt noise.
            if line_no >= 1:
                frames.append(StackFrame(path, function or "<module>", line_no))
            continue
        if frames and not line[:1].isspace():
            exc_match = _PY_EXC_RE.match(line.rstrip())
            if exc_match:
                kind = PythonException(exc_match.group(1), exc_match.group(2) or "")
                break
    if not frames:
        raise MalformedReport("traceback banner without any frame lines")
    if kind is None:
        kind = PythonException("<unknown>", "")
    # The interpreter prints outermost-first; index 0 must be the crash site.
    return StackTrace(tuple(reversed(frames))), kind


def _normalize_category(banner_rest: str) -> str:
    for prefix, category in _CATEGORY_REWRITES:
        if banner_rest.startswith(prefix):
            return category
    return banner_rest.split()[0].rstrip(":") if banner_rest.split() else ""


def _parse_sanitizer_frame(line: str) -> tuple[int, StackFrame] | None:
    frame_match = _SAN_FRAME_RE.match(line)
    if not frame_match:
        return None
    index = int(frame_match.group(1))
    rest = frame_match.group(2)
    location = _SAN_LOCATION_RE.match(rest)
    if location:
        function, path, lineno = location.groups()
        line_no = int(lineno)
        if line_no >= 1:
            return index, StackFrame(path, function, line_no)
        # addr2line prints ":0" for lines it cannot resolve; keep the symbol.
        return index, StackFrame("" if path.startswith("??") else path, function)
    # addr2line marks locations it cannot resolve as "??:?" or "??:0".
    head, _, tail = rest.rpartition(" ")
    if head and tail.startswith("??:"):
        rest = head
    # Stripped frame: keep the raw symbol text so trace length is preserved.
    return index, StackFrame("", rest)


def parse_sanitizer_report(text: str | bytes) -> tuple[StackTrace, SanitizerError]:
    """Parse the first sanitizer error: banner, access line, first backtrace."""
    text = _to_text(text)
    lines = text.splitlines()
    banner_at = None
    banner_rest = ""
    for i, line in enumerate(lines):
        banner_match = _SAN_BANNER_RE.search(line)
        if banner_match:
            banner_at, banner_rest = i, banner_match.group(1)
            break
    if banner_at is None:
        raise MalformedReport("no sanitizer banner found")

    category = _normalize_category(banner_rest)
    if not category:
        raise MalformedReport("sanitizer banner without a category")

    access = MemoryAccess.UNKNOWN
    access_match = _ACCESS_RE.search(text)
    if access_match:
        access = MemoryAccess.READ if access_match.group(1) == "READ" else MemoryAccess.WRITE

    address_class = None
    address_match = _ADDRESS_RE.search(lines[banner_at])
    if address_match:
        address_class = AddressClass.classify(int(address_match.group(1), 16))

    frames: list[StackFrame] = []
    expected = 0
    for line in lines[banner_at + 1 :]:
        parsed = _parse_sanitizer_frame(line)
        if parsed is None:
            if frames and not line.strip():
                break  # blank line closes the backtrace block
            continue  # interleaved log noise
        index, frame = parsed
        if index != expected:
            if frames:
                break  # a restarted numbering belongs to the next block
            continue
        frames.append(frame)
        expected += 1
    if not frames:
        raise MalformedReport("sanitizer banner without a #0 backtrace frame")
    # Sanitizer backtraces already print innermost-first.
    return StackTrace(tuple(frames)), SanitizerError(category, access, address_class)


def extract_source_snippet(
    file: str | Path, line: int, radius: int = 3
) -> tuple[tuple[int, str], ...] | None:
    """Numbered source lines around ``line``, or None when unavailable."""
    if line < 1 or radius < 0:
        return None
    try:
        source = Path(file).read_text(encoding="utf-8", errors="replace")
    except OSError:
        return None
    except ValueError:
        return None  # NUL bytes in a path are rejected by the OS layer
    all_lines = source.splitlines()
    if line > len(all_lines):
        return None
    start = max(1, line - radius)
    stop = min(len(all_lines), line + radius)
    return tuple((n, all_lines[n - 1]) for n in range(start, stop + 1))
