"""Campaign lifecycle: spawn fuzzer jobs, watch artifacts, drive the stages.

A campaign multiplexes one or more external fuzzer processes over a shared
live corpus, consuming their console output for coverage counters and polling
their artifact directories for crash files. Stop conditions are evaluated on
every poll tick. The full pipeline chains the four stages over one output
directory: run, corpus minimization, crash triage, coverage export.
"""

from __future__ import annotations

import fcntl
import json
import os
import re
import shutil
import signal
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from . import corpus as corpus_mod
from . import coverage as coverage_mod
from . import serialize, triage
from .errors import ConfigError, ExecutorUnavailable, MalformedReport, OutputDirLocked, SpawnFailure
from .model import CrashReport, TriageSummary
from .triage import FilterRules, SimilarityParams

POLL_INTERVAL_SEC = 1.0
GRACE_KILL_SEC = 10.0
CORPUS_PLACEHOLDER = "{corpus_dir}"
ARTIFACT_PLACEHOLDER = "{artifact_dir}"

_STATS_RE = re.compile(r"^#\d+\s.*\bcov:\s*(\d+)")


class StopReason(Enum):
    NO_NEW_COVERAGE = "NoNewCoverage"
    MAX_TOTAL_TIME = "MaxTotalTime"
    CRASH_BUDGET = "CrashBudget"
    EXTERNAL_SIGNAL = "ExternalSignal"
    FUZZER_EXIT = "FuzzerExit"


@dataclass(frozen=True)
class CampaignConfig:
    """Declarative description of one fuzzing campaign."""

    target_name: str
    fuzz_command: tuple[str, ...]
    run_command: tuple[str, ...]
    corpus_dir: Path
    output_dir: Path
    jobs: int = 1
    exit_on_time_sec: int = 3600
    max_total_time_sec: int = 86400
    crash_budget: int | None = None
    per_run_timeout_sec: int = 30
    workers: int = 4
    filter_rules: FilterRules = field(default_factory=FilterRules)
    similarity: SimilarityParams = field(default_factory=SimilarityParams)

    def validate(self) -> None:
        if not self.target_name:
            raise ConfigError("target name must be non-empty", key="target.name")
        if not self.fuzz_command:
            raise ConfigError("fuzz_command must be non-empty", key="target.fuzz_command")
        if not self.run_command:
            raise ConfigError("run_command must be non-empty", key="target.run_command")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1", key="run.jobs")
        if self.exit_on_time_sec < 1:
            raise ConfigError("exit_on_time_sec must be >= 1", key="run.exit_on_time_sec")
        if self.max_total_time_sec < 1:
            raise ConfigError("max_total_time_sec must be >= 1", key="run.max_total_time_sec")
        if self.exit_on_time_sec > self.max_total_time_sec:
            raise ConfigError(
                "exit_on_time_sec must not exceed max_total_time_sec", key="run.exit_on_time_sec"
            )
        if self.crash_budget is not None and self.crash_budget < 1:
            raise ConfigError("crash_budget must be >= 1 when set", key="run.crash_budget")
        if self.per_run_timeout_sec < 1:
            raise ConfigError("per_run_timeout_sec must be >= 1", key="run.per_run_timeout_sec")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", key="run.workers")

    @property
    def live_corpus_dir(self) -> Path:
        return self.output_dir / "corpus"

    @property
    def crashes_dir(self) -> Path:
        return self.output_dir / "crashes"


@dataclass
class CampaignState:
    """Live campaign counters; mutate only under the runner's lock."""

    started_at: float
    last_new_coverage_at: float
    coverage_counter: int = 0
    crashes_found: int = 0
    stop_reason: StopReason | None = None


def parse_fuzzer_stats(line: str) -> int | None:
    """Coverage counter from a fuzzer status line, None for other output."""
    match = _STATS_RE.match(line)
    return int(match.group(1)) if match else None


def evaluate_stop(state: CampaignState, config: CampaignConfig, now: float) -> StopReason | None:
    """First stop condition that holds, by precedence; None to keep running."""
    if now - state.started_at >= config.max_total_time_sec:
        return StopReason.MAX_TOTAL_TIME
    if config.crash_budget is not None and state.crashes_found >= config.crash_budget:
        return StopReason.CRASH_BUDGET
    if now - state.last_new_coverage_at >= config.exit_on_time_sec:
        return StopReason.NO_NEW_COVERAGE
    return None


def _utc_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


class _StageLog:
    """Append-only, thread-safe stage log under logs/."""

    def __init__(self, output_dir: Path, stage: str):
        logs = output_dir / "logs"
        logs.mkdir(parents=True, exist_ok=True)
        self._fh = open(logs / f"{stage}.log", "a", encoding="utf-8")
        self._lock = threading.Lock()

    def write(self, text: str) -> None:
        with self._lock:
            self._fh.write(text + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()


@dataclass(frozen=True, slots=True)
class ReplayResult:
    returncode: int | None
    stdout: str
    stderr: str
    timed_out: bool


class TargetExecutor:
    """Runs the single-input target command for replays and coverage probes.

    The input path is appended as the last argument. A crash is a nonzero
    exit with the report on stderr. With PIPELINE_COVERAGE=1 the target
    writes ``COV <file>:<line>`` lines to the sidecar file ``<input>.cov``.
    """

    def __init__(self, run_command: tuple[str, ...], per_run_timeout_sec: int = 30):
        self.run_command = tuple(run_command)
        self.per_run_timeout_sec = per_run_timeout_sec

    def _spawn(self, input_path: Path, coverage: bool) -> ReplayResult:
        cmd = [*self.run_command, str(input_path)]
        env = dict(os.environ)
        if coverage:
            env["PIPELINE_COVERAGE"] = "1"
        else:
            env.pop("PIPELINE_COVERAGE", None)
        try:
            proc = subprocess.run(
                cmd,
                capture_output=True,
                timeout=self.per_run_timeout_sec,
                env=env,
            )
        except subprocess.TimeoutExpired as exc:
            return ReplayResult(
                returncode=None,
                stdout=_decode(exc.stdout),
                stderr=_decode(exc.stderr),
                timed_out=True,
            )
        except OSError as exc:
            raise ExecutorUnavailable(f"cannot spawn {cmd[0]}: {exc}") from exc
        return ReplayResult(
            returncode=proc.returncode,
            stdout=_decode(proc.stdout),
            stderr=_decode(proc.stderr),
            timed_out=False,
        )

    def replay(self, input_path: Path) -> ReplayResult:
        return self._spawn(input_path, coverage=False)

    def coverage_map(self, input_path: Path) -> coverage_mod.CoverageMap | None:
        """Per-line coverage of one input; None when the run failed."""
        sidecar = Path(f"{input_path}.cov")
        result = self._spawn(input_path, coverage=True)
        try:
            if result.timed_out or result.returncode != 0:
                return None
            if not sidecar.exists():
                return coverage_mod.CoverageMap()
            return coverage_mod.parse_cov_lines(sidecar.read_text(encoding="utf-8", errors="replace"))
        finally:
            try:
                sidecar.unlink()
            except OSError:
                pass

    def coverage_features(self, input_path: Path) -> frozenset[int] | None:
        cov = self.coverage_map(input_path)
        return coverage_mod.feature_set(cov) if cov is not None else None


def _decode(raw: bytes | str | None) -> str:
    if raw is None:
        return ""
    if isinstance(raw, bytes):
        return raw.decode("utf-8", errors="replace")
    return raw


def _seed_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix != ".cov")


def _copy_unique(src: Path, dest_dir: Path, tag: str, seen_names: set[str]) -> Path:
    name = src.name
    if name in seen_names:
        name = f"{tag}-{src.name}"
    counter = 1
    while name in seen_names:
        counter += 1
        name = f"{tag}-{counter}-{src.name}"
    seen_names.add(name)
    dest = dest_dir / name
    shutil.copy2(src, dest)
    return dest


class _CampaignLock:
    """fcntl lock file preventing two campaigns over one output directory."""

    def __init__(self, output_dir: Path):
        self._path = output_dir / ".lock"
        self._fh = None

    def __enter__(self) -> _CampaignLock:
        self._fh = open(self._path, "a+")
        try:
            fcntl.flock(self._fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            self._fh.close()
            self._fh = None
            raise OutputDirLocked(f"another campaign is running over {self._path.parent}") from None
        return self

    def __exit__(self, *exc_info) -> None:
        if self._fh is not None:
            fcntl.flock(self._fh.fileno(), fcntl.LOCK_UN)
            self._fh.close()
            self._fh = None


def _minimized_seed_paths(
    seeds: list[Path], executor: TargetExecutor, workers: int, log: _StageLog
) -> list[Path]:
    """Greedy-minimized seed selection with a no-coverage fallback."""
    collected = corpus_mod.collect_seed_coverage(seeds, executor, workers)
    kept = corpus_mod.minimize(collected)
    if not kept:
        executable = [s.seed_path for s in collected if s.executable]
        if executable:
            log.write("no coverage features reported; keeping all executable seeds")
            kept = sorted(executable)
    dropped = len(seeds) - len(kept)
    log.write(f"minimized {len(seeds)} seeds to {len(kept)} (dropped {dropped})")
    return [Path(p) for p in kept]


def run_campaign(config: CampaignConfig, poll_interval: float = POLL_INTERVAL_SEC) -> CampaignState:
    """Fuzz until a stop condition fires; collect crashes into the output dir."""
    config.validate()
    if not config.corpus_dir.is_dir():
        raise ConfigError(f"corpus directory does not exist: {config.corpus_dir}")
    config.output_dir.mkdir(parents=True, exist_ok=True)

    with _CampaignLock(config.output_dir):
        log = _StageLog(config.output_dir, "run")
        try:
            return _run_locked(config, poll_interval, log)
        finally:
            log.close()


def _run_locked(config: CampaignConfig, poll_interval: float, log: _StageLog) -> CampaignState:
    live_corpus = config.live_corpus_dir
    live_corpus.mkdir(parents=True, exist_ok=True)
    crashes_dir = config.crashes_dir
    crashes_dir.mkdir(parents=True, exist_ok=True)

    if not _seed_files(live_corpus):
        seeds = _seed_files(config.corpus_dir)
        if len(seeds) > 1:
            executor = TargetExecutor(config.run_command, config.per_run_timeout_sec)
            seeds = _minimized_seed_paths(seeds, executor, config.workers, log)
        copied: set[str] = set()
        for seed in seeds:
            _copy_unique(seed, live_corpus, "seed", copied)
        log.write(f"seeded live corpus with {len(seeds)} inputs")

    now = time.time()
    state = CampaignState(started_at=now, last_new_coverage_at=now)
    state_lock = threading.Lock()
    procs: list[subprocess.Popen] = []
    readers: list[threading.Thread] = []
    artifact_dirs: list[Path] = []
    seen_crashes: set[Path] = set()
    dest_names = {p.name for p in crashes_dir.iterdir()}

    def consume(job: int, proc: subprocess.Popen) -> None:
        try:
            assert proc.stdout is not None
            for line in proc.stdout:
                line = line.rstrip("\n")
                log.write(f"job{job}: {line}")
                cov = parse_fuzzer_stats(line)
                if cov is None:
                    continue
                with state_lock:
                    if cov > state.coverage_counter:
                        state.coverage_counter = cov
                        state.last_new_coverage_at = time.time()
        except (ValueError, OSError):
            pass  # pipe torn down during shutdown

    def collect_crashes() -> None:
        for job, artifact_dir in enumerate(artifact_dirs):
            for path in sorted(artifact_dir.glob("crash-*")):
                if path in seen_crashes or not path.is_file():
                    continue
                seen_crashes.add(path)
                _copy_unique(path, crashes_dir, f"job{job}", dest_names)
                with state_lock:
                    state.crashes_found += 1
                log.write(f"job{job}: collected {path.name}")

    try:
        for job in range(config.jobs):
            artifact_dir = config.output_dir / "artifacts" / f"job{job}"
            artifact_dir.mkdir(parents=True, exist_ok=True)
            artifact_dirs.append(artifact_dir)
            cmd = [
                arg.replace(CORPUS_PLACEHOLDER, str(live_corpus)).replace(
                    ARTIFACT_PLACEHOLDER, str(artifact_dir)
                )
                for arg in config.fuzz_command
            ]
            try:
                proc = subprocess.Popen(
                    cmd,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.STDOUT,
                    text=True,
                    errors="replace",
                    bufsize=1,
                )
            except OSError as exc:
                raise SpawnFailure(f"cannot spawn fuzzer {cmd[0]}: {exc}") from exc
            procs.append(proc)
            reader = threading.Thread(target=consume, args=(job, proc), daemon=True)
            reader.start()
            readers.append(reader)

        try:
            while True:
                collect_crashes()
                with state_lock:
                    reason = evaluate_stop(state, config, time.time())
                    if reason is None and all(p.poll() is not None for p in procs):
                        reason = StopReason.FUZZER_EXIT
                    if reason is not None:
                        state.stop_reason = reason
                        break
                time.sleep(poll_interval)
        except KeyboardInterrupt:
            with state_lock:
                state.stop_reason = StopReason.EXTERNAL_SIGNAL
    finally:
        _terminate(procs)
        for reader in readers:
            reader.join(timeout=5.0)
        for proc in procs:
            if proc.stdout is not None:
                proc.stdout.close()

    # Late writers: pick up anything that appeared while shutting down.
    collect_crashes()
    log.write(f"campaign stopped: {state.stop_reason.value if state.stop_reason else 'unknown'}")
    return state


def _terminate(procs: list[subprocess.Popen]) -> None:
    """Interrupt every child, then kill whatever outlives the grace window."""
    for proc in procs:
        if proc.poll() is None:
            try:
                proc.send_signal(signal.SIGINT)
            except OSError:
                pass
    deadline = time.monotonic() + GRACE_KILL_SEC
    for proc in procs:
        remaining = max(0.0, deadline - time.monotonic())
        try:
            proc.wait(timeout=remaining)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()


def cmin_stage(config: CampaignConfig) -> int:
    """Minimize the live corpus (or the seed corpus) into output/corpus."""
    config.validate()
    config.output_dir.mkdir(parents=True, exist_ok=True)
    log = _StageLog(config.output_dir, "cmin")
    try:
        live = config.live_corpus_dir
        source = live if _seed_files(live) else config.corpus_dir
        seeds = _seed_files(source)
        staging = config.output_dir / "corpus.tmp"
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir(parents=True)
        if len(seeds) > 1:
            executor = TargetExecutor(config.run_command, config.per_run_timeout_sec)
            kept = _minimized_seed_paths(seeds, executor, config.workers, log)
        else:
            kept = seeds
        names: set[str] = set()
        for seed in kept:
            _copy_unique(seed, staging, "seed", names)
        if live.exists():
            shutil.rmtree(live)
        staging.rename(live)
        log.write(f"corpus now holds {len(kept)} inputs")
        return len(kept)
    finally:
        log.close()


@dataclass(frozen=True)
class TriageCounts:
    crashes: int
    reports: int
    not_reproduced: int
    unparsed: int
    deduplicated: int
    clusters: int


def casr_stage(config: CampaignConfig) -> tuple[TriageSummary, TriageCounts]:
    """Replay collected crashes, then parse, dedup, cluster, and summarize."""
    config.validate()
    config.output_dir.mkdir(parents=True, exist_ok=True)
    log = _StageLog(config.output_dir, "casr")
    try:
        return _casr_locked(config, log)
    finally:
        log.close()


def _casr_locked(config: CampaignConfig, log: _StageLog) -> tuple[TriageSummary, TriageCounts]:
    inputs = _seed_files(config.crashes_dir)
    executor = TargetExecutor(config.run_command, config.per_run_timeout_sec)

    not_reproduced = 0
    unparsed = 0
    reports: dict[str, CrashReport] = {}

    def replay(path: Path) -> tuple[Path, ReplayResult]:
        return path, executor.replay(path)

    results: list[tuple[Path, ReplayResult]] = []
    if inputs:
        with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
            results = list(pool.map(replay, inputs))

    for path, result in results:
        if result.timed_out or result.returncode == 0:
            not_reproduced += 1
            log.write(f"{path.name}: not reproduced")
            continue
        try:
            report = triage.build_report(
                result.stderr,
                seed_path=str(path),
                target_name=config.target_name,
                rules=config.filter_rules,
            )
        except MalformedReport as exc:
            unparsed += 1
            log.write(f"{path.name}: unparsed ({exc})")
            continue
        if report.id not in reports:
            reports[report.id] = report
        log.write(f"{path.name}: {report.kind.describe()} [{report.id[:12]}]")

    representatives, duplicates = triage.dedup(list(reports.values()), config.filter_rules)
    clusters = triage.cluster(representatives, config.similarity)
    summary = triage.summarize(clusters, reports)

    casr_dir = config.output_dir / "casr"
    reports_dir = casr_dir / "reports"
    clusters_dir = casr_dir / "clusters"
    for stale in (reports_dir, clusters_dir):
        if stale.exists():
            shutil.rmtree(stale)
    reports_dir.mkdir(parents=True)
    clusters_dir.mkdir(parents=True)

    for report in reports.values():
        path = reports_dir / f"{report.id}.report.json"
        path.write_text(serialize.report_to_json(report), encoding="utf-8")

    for cl in clusters:
        cluster_dir = clusters_dir / f"cl{cl.id}"
        cluster_dir.mkdir()
        for member_id in cl.members:
            member = reports[member_id]
            (cluster_dir / f"{member_id}.report.json").write_text(
                serialize.report_to_json(member), encoding="utf-8"
            )
            if member.seed_path and Path(member.seed_path).is_file():
                shutil.copy2(member.seed_path, cluster_dir / Path(member.seed_path).name)

    (casr_dir / "clusters.json").write_text(
        serialize.clusters_to_json(clusters, duplicates), encoding="utf-8"
    )
    (casr_dir / "summary.txt").write_text(summary.render(), encoding="utf-8")
    log.write(summary.render().rstrip("\n"))

    counts = TriageCounts(
        crashes=len(inputs),
        reports=len(reports),
        not_reproduced=not_reproduced,
        unparsed=unparsed,
        deduplicated=summary.deduplicated_count,
        clusters=summary.cluster_count,
    )
    return summary, counts


def pycov_stage(config: CampaignConfig) -> coverage_mod.CoverageMap:
    """Replay the minimized corpus in coverage mode and export the union."""
    config.validate()
    config.output_dir.mkdir(parents=True, exist_ok=True)
    log = _StageLog(config.output_dir, "pycov")
    try:
        seeds = _seed_files(config.live_corpus_dir)
        executor = TargetExecutor(config.run_command, config.per_run_timeout_sec)
        maps: list[coverage_mod.CoverageMap] = []
        if seeds:
            with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
                for seed, cov in zip(seeds, pool.map(executor.coverage_map, seeds)):
                    if cov is None:
                        log.write(f"{seed.name}: coverage replay failed")
                    else:
                        maps.append(cov)
        merged = coverage_mod.merge(maps)
        (config.output_dir / "coverage.lcov").write_text(
            coverage_mod.export_lcov(merged), encoding="utf-8"
        )
        (config.output_dir / "coverage.json").write_text(
            coverage_mod.export_json(merged), encoding="utf-8"
        )
        log.write(f"coverage spans {len(merged.files())} files")
        return merged
    finally:
        log.close()


@dataclass(frozen=True)
class PipelineReport:
    """Machine-readable rollup of one full pipeline run."""

    target: str
    started_at: str
    finished_at: str
    stop_reason: str | None
    stage_duration_sec: dict[str, float]
    counts: dict[str, int]

    def to_json(self) -> str:
        obj = {
            "target": self.target,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "stop_reason": self.stop_reason,
            "stage_duration_sec": self.stage_duration_sec,
            "counts": self.counts,
        }
        return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def run_pipeline(config: CampaignConfig, poll_interval: float = POLL_INTERVAL_SEC) -> PipelineReport:
    """Chain run, cmin, casr, and pycov; write pipeline-report.json."""
    started = _utc_now()
    durations: dict[str, float] = {}

    t0 = time.monotonic()
    state = run_campaign(config, poll_interval=poll_interval)
    durations["run"] = round(time.monotonic() - t0, 3)

    t0 = time.monotonic()
    corpus_kept = cmin_stage(config)
    durations["cmin"] = round(time.monotonic() - t0, 3)

    t0 = time.monotonic()
    _, triage_counts = casr_stage(config)
    durations["casr"] = round(time.monotonic() - t0, 3)

    t0 = time.monotonic()
    merged = pycov_stage(config)
    durations["pycov"] = round(time.monotonic() - t0, 3)

    report = PipelineReport(
        target=config.target_name,
        started_at=started,
        finished_at=_utc_now(),
        stop_reason=state.stop_reason.value if state.stop_reason else None,
        stage_duration_sec=durations,
        counts={
            "crashes_collected": triage_counts.crashes,
            "reports_parsed": triage_counts.reports,
            "not_reproduced": triage_counts.not_reproduced,
            "unparsed": triage_counts.unparsed,
            "deduplicated_reports": triage_counts.deduplicated,
            "clusters": triage_counts.clusters,
            "corpus_kept": corpus_kept,
            "files_covered": len(merged.files()),
            "coverage_counter": state.coverage_counter,
        },
    )
    (config.output_dir / "pipeline-report.json").write_text(report.to_json(), encoding="utf-8")
    return report
