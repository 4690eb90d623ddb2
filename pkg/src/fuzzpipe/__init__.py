"""Fuzzing-campaign orchestration and crash triage.

The pipeline has four stages over one output directory: run an external
coverage-guided fuzzer until a stop condition fires, minimize the corpus,
triage the collected crashes (parse, filter, deduplicate, cluster, rate
severity), and export merged line coverage as lcov and JSON.
"""

from .corpus import SeedCoverage, collect_seed_coverage, minimize
from .coverage import CoverageMap, export_json, export_lcov, merge
from .errors import (
    ConfigError,
    DanglingReference,
    ExecutorUnavailable,
    MalformedReport,
    OutputDirLocked,
    PipelineError,
    SpawnFailure,
)
from .model import (
    AddressClass,
    Cluster,
    ClusterDigest,
    CrashKind,
    CrashReport,
    FrameOrigin,
    MemoryAccess,
    PythonException,
    SanitizerError,
    Severity,
    SeverityClass,
    StackFrame,
    StackTrace,
    TriageSummary,
)
from .orchestrator import (
    CampaignConfig,
    CampaignState,
    PipelineReport,
    StopReason,
    TargetExecutor,
    evaluate_stop,
    parse_fuzzer_stats,
    run_campaign,
    run_pipeline,
)
from .parsers import (
    ReportKind,
    detect_report_kind,
    extract_source_snippet,
    parse_python_traceback,
    parse_sanitizer_report,
)
from .triage import (
    FilterRules,
    SimilarityParams,
    build_report,
    cluster,
    dedup,
    dist,
    estimate_severity,
    extract_crashline,
    filter_trace,
    similarity,
    summarize,
)

__version__ = "0.1.0"
