"""Crash triage: frame filtering, dedup, trace similarity, clustering, severity.

Filtering tags every frame with an origin and drops runtime scaffolding so
that only the frames a developer cares about take part in deduplication and
clustering. Similarity aligns two traces with an order-preserving matching
scored by how close matched frames sit to the crash site (decay ``theta``)
and to each other (decay ``rho``). Clusters grow by complete linkage: two
clusters merge only while the worst cross-pair distance stays under the
threshold.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass

from . import parsers
from .errors import ConfigError, DanglingReference, MalformedReport
from .model import (
    AddressClass,
    Cluster,
    ClusterDigest,
    CrashKind,
    CrashReport,
    FrameOrigin,
    MemoryAccess,
    PythonException,
    Severity,
    SeverityClass,
    StackTrace,
    TriageSummary,
)

DEFAULT_STDLIB_PATTERNS = (r"/lib/python\d", r"<frozen .*>")
DEFAULT_FUZZER_PATTERNS = (r"^atheris", r"TestOneInput", r"^fuzzer", r"LLVMFuzzer")
DEFAULT_SANITIZER_PATTERNS = (r"^__asan", r"^__sanitizer", r"^__ubsan", r"^__interceptor")
DEFAULT_EXCEPTION_UTILITY_PATTERNS = (r"^_handle_exception$", r"^reraise$")

DEFAULT_THETA = 8.0
DEFAULT_RHO = 4.0
DEFAULT_THRESHOLD = 0.3


@functools.lru_cache(maxsize=256)
def _compile(patterns: tuple[str, ...]) -> tuple[re.Pattern[str], ...]:
    return tuple(re.compile(p) for p in patterns)


def _validate_patterns(patterns: tuple[str, ...], field: str) -> None:
    for pattern in patterns:
        try:
            re.compile(pattern)
        except re.error as exc:
            raise ConfigError(f"bad pattern {pattern!r}: {exc}", key=field) from exc


@dataclass(frozen=True, slots=True)
class FilterRules:
    """Regex rule lists; stdlib rules match file paths, the rest functions."""

    stdlib_path_patterns: tuple[str, ...] = DEFAULT_STDLIB_PATTERNS
    fuzzer_function_patterns: tuple[str, ...] = DEFAULT_FUZZER_PATTERNS
    sanitizer_function_patterns: tuple[str, ...] = DEFAULT_SANITIZER_PATTERNS
    exception_utility_patterns: tuple[str, ...] = DEFAULT_EXCEPTION_UTILITY_PATTERNS

    def __post_init__(self) -> None:
        object.__setattr__(self, "stdlib_path_patterns", tuple(self.stdlib_path_patterns))
        object.__setattr__(self, "fuzzer_function_patterns", tuple(self.fuzzer_function_patterns))
        object.__setattr__(
            self, "sanitizer_function_patterns", tuple(self.sanitizer_function_patterns)
        )
        object.__setattr__(
            self, "exception_utility_patterns", tuple(self.exception_utility_patterns)
        )
        _validate_patterns(self.stdlib_path_patterns, "filters.stdlib")
        _validate_patterns(self.fuzzer_function_patterns, "filters.fuzzer")
        _validate_patterns(self.sanitizer_function_patterns, "filters.sanitizer")
        _validate_patterns(self.exception_utility_patterns, "filters.exception_utils")

    def classify(self, file: str, function: str) -> FrameOrigin:
        """Origin of a frame under these rules; USER_CODE when nothing matches."""
        for pattern in _compile(self.stdlib_path_patterns):
            if pattern.search(file):
                return FrameOrigin.STDLIB
        for pattern in _compile(self.fuzzer_function_patterns):
            if pattern.search(function):
                return FrameOrigin.FUZZER
        for pattern in _compile(self.sanitizer_function_patterns):
            if pattern.search(function):
                return FrameOrigin.SANITIZER
        for pattern in _compile(self.exception_utility_patterns):
            if pattern.search(function):
                return FrameOrigin.EXCEPTION_UTILS
        return FrameOrigin.USER_CODE


@dataclass(frozen=True, slots=True)
class SimilarityParams:
    """Similarity decays and the clustering cut distance."""

    theta: float = DEFAULT_THETA
    rho: float = DEFAULT_RHO
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if self.theta <= 0:
            raise ConfigError("theta must be > 0", key="casr.theta")
        if self.rho <= 0:
            raise ConfigError("rho must be > 0", key="casr.rho")
        if not 0 < self.threshold < 1:
            raise ConfigError("threshold must be in (0, 1)", key="casr.threshold")


@dataclass(frozen=True, slots=True)
class FilterOutcome:
    """Result of filtering: the kept trace plus the fully annotated original.

    When every frame matches a rule, ``trace`` is the original frame sequence
    (annotated, content unchanged) and ``all_filtered`` is set: filtering must
    never turn a non-empty trace into an empty one.
    """

    trace: StackTrace
    annotated: StackTrace
    all_filtered: bool


def annotate_trace(trace: StackTrace, rules: FilterRules) -> StackTrace:
    """Tag every frame with the origin the rules assign it."""
    return StackTrace(
        tuple(f.with_origin(rules.classify(f.file, f.function)) for f in trace)
    )


def filter_trace(trace: StackTrace, rules: FilterRules) -> FilterOutcome:
    """Drop scaffolding frames, recording each removed frame's origin."""
    annotated = annotate_trace(trace, rules)
    kept = tuple(f for f in annotated if f.origin is FrameOrigin.USER_CODE)
    if not kept and len(annotated) > 0:
        return FilterOutcome(trace=annotated, annotated=annotated, all_filtered=True)
    return FilterOutcome(trace=StackTrace(kept), annotated=annotated, all_filtered=False)


def extract_crashline(trace: StackTrace, rules: FilterRules) -> tuple[str, int] | None:
    """(file, line) of the innermost unfiltered frame that has a line number."""
    for frame in trace:
        if frame.line is None:
            continue
        if rules.classify(frame.file, frame.function) is FrameOrigin.USER_CODE:
            return (frame.file, frame.line)
    return None


def _dedup_key(trace: StackTrace) -> tuple[tuple[str, str, int | None], ...]:
    return tuple(f.dedup_key() for f in trace)


def dedup(
    reports: list[CrashReport], rules: FilterRules
) -> tuple[list[CrashReport], dict[str, str]]:
    """Collapse reports whose filtered traces are frame-for-frame identical.

    Returns the representatives (smallest id per group, traces annotated) and
    a map from every duplicate id to its representative id.
    """
    by_id = {r.id: r for r in reports}
    groups: dict[tuple, list[str]] = {}
    annotated: dict[str, StackTrace] = {}
    for report in by_id.values():
        outcome = filter_trace(report.trace, rules)
        annotated[report.id] = outcome.annotated
        groups.setdefault(_dedup_key(outcome.trace), []).append(report.id)

    representatives: list[CrashReport] = []
    duplicates: dict[str, str] = {}
    for ids in groups.values():
        ids.sort()
        rep = by_id[ids[0]]
        representatives.append(
            CrashReport(
                id=rep.id,
                seed_path=rep.seed_path,
                raw_report=rep.raw_report,
                kind=rep.kind,
                severity=rep.severity,
                trace=annotated[rep.id],
                crashline=rep.crashline,
                source_snippet=rep.source_snippet,
                target_name=rep.target_name,
                created_at=rep.created_at,
            )
        )
        for dup_id in ids[1:]:
            duplicates[dup_id] = ids[0]
    representatives.sort(key=lambda r: r.id)
    return representatives, duplicates


def _trace_keys(trace: StackTrace) -> tuple[tuple[str, str], ...]:
    """Match keys clustering operates on: filtered frames when tagged."""
    signal = trace.signal_frames()
    frames = signal if signal else trace.frames
    return tuple(f.match_key() for f in frames)


def _weight(length: int, theta: float) -> float:
    total = 0.0
    for i in range(length):
        total += 2.0 ** (-i / theta)
    return total


def _match_score(
    a: tuple[tuple[str, str], ...], b: tuple[tuple[str, str], ...], theta: float, rho: float
) -> float:
    # Quadratic alignment: best order-preserving matching by total pair weight.
    n, m = len(a), len(b)
    score = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        row = score[i]
        prev = score[i - 1]
        for j in range(1, m + 1):
            best = prev[j]
            if row[j - 1] > best:
                best = row[j - 1]
            if a[i - 1] == b[j - 1]:
                pair = prev[j - 1] + (
                    2.0 ** (-min(i - 1, j - 1) / theta) * 2.0 ** (-abs(i - j) / rho)
                )
                if pair > best:
                    best = pair
            row[j] = best
    return score[n][m]


def similarity(a: StackTrace, b: StackTrace, p: SimilarityParams) -> float:
    """Alignment score of two traces normalized to [0, 1]; 1 means identical."""
    keys_a = _trace_keys(a)
    keys_b = _trace_keys(b)
    if not keys_a or not keys_b:
        return 0.0
    norm = max(_weight(len(keys_a), p.theta), _weight(len(keys_b), p.theta))
    return _match_score(keys_a, keys_b, p.theta, p.rho) / norm


def dist(a: StackTrace, b: StackTrace, p: SimilarityParams) -> float:
    return 1.0 - similarity(a, b, p)


def cluster(reports: list[CrashReport], p: SimilarityParams) -> list[Cluster]:
    """Complete-linkage agglomeration of deduplicated reports.

    Merging continues while the smallest between-cluster distance (max over
    cross pairs) is under the threshold. Ties break on the sorted pair of the
    clusters' smallest member ids, making the result independent of input
    order. Cluster ids run 1..K ordered by each cluster's smallest member id.
    """
    if not reports:
        return []
    members: dict[str, list[str]] = {r.id: [r.id] for r in sorted(reports, key=lambda r: r.id)}
    traces = {r.id: r.trace for r in reports}
    ids = list(members)
    # Distance matrix over current clusters, keyed by their smallest member id.
    d: dict[tuple[str, str], float] = {}
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            d[(a, b)] = dist(traces[a], traces[b], p)

    def pair_key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a < b else (b, a)

    while len(members) > 1:
        best_pair = min(d, key=lambda pair: (d[pair], pair))
        if d[best_pair] >= p.threshold:
            break
        low, high = best_pair
        members[low].extend(members.pop(high))
        # Complete linkage: the merged cluster keeps the worse distance.
        for other in members:
            if other == low:
                continue
            key_low = pair_key(low, other)
            key_high = pair_key(high, other)
            d[key_low] = max(d[key_low], d.pop(key_high))
        del d[best_pair]

    clusters = []
    for k, low in enumerate(sorted(members), start=1):
        group = sorted(members[low])
        clusters.append(Cluster(id=k, members=tuple(group), representative=group[0]))
    return clusters


def estimate_severity(kind: CrashKind) -> Severity:
    """Fixed rule-table estimate of how exploitable a crash kind looks."""
    if isinstance(kind, PythonException):
        if kind.type_name == "MemoryError":
            return Severity(SeverityClass.NOT_EXPLOITABLE, "MemoryError (memory exhaustion)")
        if kind.type_name == "RecursionError":
            return Severity(SeverityClass.NOT_EXPLOITABLE, "RecursionError (stack exhaustion)")
        return Severity(SeverityClass.NOT_EXPLOITABLE, kind.type_name)

    category = kind.category
    if "buffer-overflow" in category or "use-after-free" in category:
        if kind.access is MemoryAccess.WRITE:
            return Severity(SeverityClass.EXPLOITABLE, category)
        return Severity(SeverityClass.PROBABLY_EXPLOITABLE, category)
    if category == "double-free":
        return Severity(SeverityClass.EXPLOITABLE, category)
    if category == "SEGV":
        if kind.address_class is None or kind.address_class is AddressClass.OTHER:
            return Severity(SeverityClass.PROBABLY_EXPLOITABLE, category)
        return Severity(SeverityClass.NOT_EXPLOITABLE, category)
    if "leak" in category or category in ("allocation-size-too-big", "out-of-memory"):
        return Severity(SeverityClass.NOT_EXPLOITABLE, category)
    return Severity(SeverityClass.PROBABLY_EXPLOITABLE, category)


def summarize(clusters: list[Cluster], reports: dict[str, CrashReport]) -> TriageSummary:
    """Roll clusters up into totals plus one described line per member."""
    digests = []
    dedup_count = 0
    for cl in sorted(clusters, key=lambda c: c.id):
        lines = []
        for member_id in cl.members:
            report = reports.get(member_id)
            if report is None:
                raise DanglingReference(f"cluster {cl.id} references unknown report {member_id}")
            if report.crashline:
                where = f"{report.crashline[0]}:{report.crashline[1]}"
            else:
                where = "<unknown>"
            lines.append(
                f"{report.severity.classification.value}: {report.kind.describe()} at {where}"
            )
        dedup_count += len(cl.members)
        digests.append(ClusterDigest(cluster_id=cl.id, size=len(cl.members), lines=tuple(lines)))
    return TriageSummary(
        raw_count=len(reports),
        deduplicated_count=dedup_count,
        cluster_count=len(clusters),
        digests=tuple(digests),
    )


def build_report(
    raw: str | bytes,
    *,
    seed_path: str | None,
    target_name: str,
    rules: FilterRules,
    source_radius: int = 3,
) -> CrashReport:
    """Parse raw crash text and assemble a fully annotated report."""
    text = raw.decode("utf-8", errors="replace") if isinstance(raw, bytes) else raw
    detected = parsers.detect_report_kind(text)
    if detected is parsers.ReportKind.SANITIZER:
        trace, kind = parsers.parse_sanitizer_report(text)
    elif detected is parsers.ReportKind.PYTHON:
        trace, kind = parsers.parse_python_traceback(text)
    else:
        raise MalformedReport("no recognizable crash banner")

    annotated = annotate_trace(trace, rules)
    crashline = extract_crashline(trace, rules)
    snippet = None
    if crashline:
        snippet = parsers.extract_source_snippet(crashline[0], crashline[1], source_radius)
    return CrashReport(
        id=CrashReport.hash_id(text),
        seed_path=seed_path,
        raw_report=text,
        kind=kind,
        severity=estimate_severity(kind),
        trace=annotated,
        crashline=crashline,
        source_snippet=snippet,
        target_name=target_name,
        created_at=CrashReport.timestamp(),
    )
