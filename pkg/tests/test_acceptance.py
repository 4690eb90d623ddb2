"""Release gate: one printed verdict line per shipping criterion.

Each test exercises one criterion end to end and writes a PASS or FAIL line
to the real stdout so the verdicts stay visible under pytest's capture. The
whole gate runs on in-process synthetic data plus the frozen fixtures; no
subprocesses are spawned.
"""

from __future__ import annotations

import contextlib
import random
import sys
import time
from pathlib import Path

import pytest

from conftest import DATA_DIR, write_toml
from test_corpus import brute_force_minimum, full_union, random_seeds, union
from test_orchestrator import fresh_state, stop_config
from test_triage import mkreport, oracle_clusters, oracle_similarity

from fuzzpipe.config import dump_config, load_config
from fuzzpipe.corpus import minimize
from fuzzpipe.coverage import CoverageMap, export_lcov
from fuzzpipe.errors import MalformedReport
from fuzzpipe.model import StackFrame, StackTrace
from fuzzpipe.orchestrator import CampaignState, StopReason, evaluate_stop
from fuzzpipe.parsers import (
    detect_report_kind,
    parse_python_traceback,
    parse_sanitizer_report,
)
from fuzzpipe.triage import (
    FilterRules,
    SimilarityParams,
    build_report,
    cluster,
    dedup,
    similarity,
)


@pytest.fixture
def emit_line(request):
    """Writer that bypasses pytest's fd-level capture for verdict lines."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(text: str) -> None:
        if capman is not None:
            with capman.global_and_fixture_disabled():
                sys.stdout.write(text)
                sys.stdout.flush()
        else:
            sys.stdout.write(text)
            sys.stdout.flush()

    return emit


@contextlib.contextmanager
def criterion(emit, name: str, budget_sec: float | None = None):
    """Print one PASS/FAIL line for the enclosed block, enforcing a budget."""

    def report(status: str, elapsed: float, detail: str) -> None:
        extra = f"; {detail}" if detail else ""
        emit(f"\n{status}  {name} [{elapsed:.1f}s{extra}]\n")

    info = {"detail": ""}
    started = time.perf_counter()
    try:
        yield info
    except BaseException:
        report("FAIL", time.perf_counter() - started, info["detail"])
        raise
    elapsed = time.perf_counter() - started
    if budget_sec is not None and elapsed >= budget_sec:
        report("FAIL", elapsed, f"over the {budget_sec:.0f}s budget")
        raise AssertionError(f"{name}: took {elapsed:.1f}s, budget {budget_sec:.0f}s")
    report("PASS", elapsed, info["detail"])


# Two bug templates whose filtered traces share no (file, function) key, plus
# scaffolding noise the filter rules remove before deduplication.
CAMPAIGN_RULES = FilterRules(
    stdlib_path_patterns=(r"^/usr/lib/python3\.",),
    fuzzer_function_patterns=(r"^fuzz_entry$", r"^one_input$"),
    sanitizer_function_patterns=(),
    exception_utility_patterns=(),
)
ALPHA = (
    ("pkg/codec.py", "decode_header", 12),
    ("pkg/codec.py", "load_blob", 40),
    ("app/alpha.py", "main", 9),
)
BETA = (
    ("pkg/table.py", "lookup_row", 7),
    ("pkg/table.py", "select_row", 19),
    ("pkg/reader.py", "scan", 41),
    ("app/beta.py", "main", 9),
)
NOISE = (
    ("/usr/lib/python3.10/runpy.py", "_run_code"),
    ("/usr/lib/python3.10/codecs.py", "decode"),
    ("harness.py", "fuzz_entry"),
    ("driver.py", "one_input"),
)


def noisy_trace(template, rng: random.Random) -> StackTrace:
    frames = [StackFrame(file, function, line) for file, function, line in template]
    for _ in range(rng.randint(0, 3)):
        file, function = NOISE[rng.randrange(len(NOISE))]
        frames.insert(
            rng.randint(0, len(frames)), StackFrame(file, function, rng.randint(1, 500))
        )
    return StackTrace(tuple(frames))


KEYS = [(f"m{k}.py", f"f{k}") for k in range(7)]


def rand_trace(rng: random.Random, max_len: int) -> StackTrace:
    frames = tuple(
        StackFrame(*KEYS[rng.randrange(len(KEYS))], rng.randint(1, 99))
        for _ in range(rng.randint(1, max_len))
    )
    return StackTrace(frames)


def test_synthetic_campaign_dedup_and_cluster_counts(emit_line):
    with criterion(
        emit_line,
        "campaign shape: 345 noisy reports -> 2 deduplicated -> 2 clusters", 60.0
    ) as info:
        rng = random.Random(345)
        reports = [
            mkreport(f"r{i:04d}", noisy_trace(ALPHA if i % 2 else BETA, rng))
            for i in range(345)
        ]
        representatives, duplicates = dedup(reports, CAMPAIGN_RULES)
        assert len(representatives) == 2
        assert len(duplicates) == 345 - 2
        clusters = cluster(representatives, SimilarityParams())
        assert len(clusters) == 2
        assert sorted(len(c.members) for c in clusters) == [1, 1]

        single = [mkreport(f"s{i:04d}", noisy_trace(ALPHA, rng)) for i in range(190)]
        single_reps, single_dups = dedup(single, CAMPAIGN_RULES)
        assert len(single_reps) == 1
        assert len(single_dups) == 189
        assert len(cluster(single_reps, SimilarityParams())) == 1
        info["detail"] = "two templates -> 2/2, one template (190) -> 1"


def test_similarity_symmetry_range_identity_and_oracle(emit_line):
    with criterion(
        emit_line,
        "similarity: symmetric, within [0,1], identity 1, matches enumeration oracle",
        60.0,
    ) as info:
        params = SimilarityParams()
        rng = random.Random(500)
        for _ in range(500):
            a, b = rand_trace(rng, 12), rand_trace(rng, 12)
            forward = similarity(a, b, params)
            assert forward == similarity(b, a, params)
            assert 0.0 <= forward <= 1.0
            assert abs(similarity(a, a, params) - 1.0) <= 1e-12
        worst_gap = 0.0
        for _ in range(150):
            a, b = rand_trace(rng, 6), rand_trace(rng, 6)
            gap = abs(similarity(a, b, params) - oracle_similarity(a, b, params))
            worst_gap = max(worst_gap, gap)
        assert worst_gap <= 1e-9
        info["detail"] = f"500 pairs; worst oracle gap {worst_gap:.1e}"


def test_clustering_matches_reference_complete_linkage(emit_line):
    with criterion(
        emit_line,
        "clustering: equals from-scratch complete linkage on 50 random sets", 60.0
    ) as info:
        rng = random.Random(50)
        for trial in range(50):
            params = (
                SimilarityParams() if trial % 2 else SimilarityParams(threshold=0.6)
            )
            reports = [
                mkreport(f"t{trial:02d}x{i}", rand_trace(rng, 6))
                for i in range(rng.randint(1, 8))
            ]
            assert cluster(reports, params) == oracle_clusters(reports, params)
        info["detail"] = "50 sets, exact partitions incl. tie-breaks"


def test_parsers_accept_fixtures_and_survive_fuzzing(emit_line):
    with criterion(
        emit_line,
        "parsers: fixtures parse, frame order inverts, 100000 fuzz inputs no aborts",
        120.0,
    ) as info:
        fixtures = sorted(DATA_DIR.glob("asan_*.txt"))
        assert len(fixtures) >= 6
        for path in fixtures:
            text = path.read_text()
            trace, kind = parse_sanitizer_report(text)
            assert len(trace) >= 1 and kind.category
            report = build_report(
                text, seed_path=None, target_name="t", rules=FilterRules()
            )
            assert len(report.trace) >= 1

        rng = random.Random(4)
        for _ in range(100):
            functions = [f"fn{i}_{rng.randrange(10)}" for i in range(rng.randint(1, 8))]
            lines = [rng.randint(1, 400) for _ in functions]
            text = "Traceback (most recent call last):\n"
            for function, line in zip(functions, lines):
                text += f'  File "m.py", line {line}, in {function}\n    body()\n'
            text += "RuntimeError: boom\n"
            trace, _ = parse_python_traceback(text)
            assert [f.function for f in trace] == list(reversed(functions))
            assert [f.line for f in trace] == list(reversed(lines))

        corpus = [path.read_bytes() for path in fixtures]
        printable = bytes(range(32, 127)) + b"\n\t"
        for i in range(100_000):
            mode = i % 5
            if mode == 0:
                data = rng.randbytes(rng.randint(0, 120))
            elif mode == 1:
                data = bytes(
                    rng.choice(printable) for _ in range(rng.randint(0, 150))
                )
            elif mode == 2:
                base = corpus[rng.randrange(len(corpus))]
                start = rng.randrange(len(base))
                data = base[start : start + rng.randint(0, 300)]
            elif mode == 3:
                mutated = bytearray(corpus[rng.randrange(len(corpus))])
                for _ in range(rng.randint(1, 8)):
                    mutated[rng.randrange(len(mutated))] = rng.randrange(256)
                data = bytes(mutated)
            else:
                data = (
                    "Traceback (most recent call last):\n"
                    f'  File "x", line {rng.randrange(-3, 4)}, in f\n'
                    + rng.choice(["E", "ValueError: x", ":", "0abc", ""])
                    + "\n"
                ).encode()
            detect_report_kind(data)
            for parse in (parse_python_traceback, parse_sanitizer_report):
                try:
                    parse(data)
                except MalformedReport:
                    pass
            if i % 10 == 0:
                try:
                    build_report(
                        data, seed_path=None, target_name="t", rules=FilterRules()
                    )
                except MalformedReport:
                    pass
        info["detail"] = "6 fixtures, 100 inversions, 100000 inputs"


def test_corpus_minimization_properties_and_optimum_gap(emit_line):
    with criterion(
        emit_line,
        "cmin: coverage preserved, idempotent, order independent; optimum gap reported",
        60.0,
    ) as info:
        rng = random.Random(200)
        for _ in range(200):
            seeds = random_seeds(rng, rng.randint(0, 12))
            kept = minimize(seeds)
            assert union(seeds, kept) == full_union(seeds)
            kept_set = set(kept)
            assert minimize([s for s in seeds if s.seed_path in kept_set]) == kept
            shuffled = seeds[:]
            rng.shuffle(shuffled)
            assert minimize(shuffled) == kept
        greedy_total = optimum_total = 0
        for _ in range(40):
            seeds = random_seeds(rng, rng.randint(1, 10))
            kept = minimize(seeds)
            optimum = brute_force_minimum(seeds)
            assert len(kept) >= optimum
            greedy_total += len(kept)
            optimum_total += optimum
        info["detail"] = (
            f"200 property sets; greedy kept {greedy_total} vs optimum "
            f"{optimum_total} over 40 small sets (no bound asserted)"
        )


def test_stop_conditions_fire_exactly_at_boundaries(emit_line, tmp_path):
    with criterion(
        emit_line,
        "stop conditions: boundary-exact at the 3600s/86400s defaults", 60.0
    ) as info:
        config = stop_config()
        assert config.exit_on_time_sec == 3600
        assert config.max_total_time_sec == 86400
        idle = fresh_state(now=0.0)
        assert evaluate_stop(idle, config, 3599.999) is None
        assert evaluate_stop(idle, config, 3600.0) is StopReason.NO_NEW_COVERAGE
        refreshed = CampaignState(started_at=0.0, last_new_coverage_at=86000.0)
        assert evaluate_stop(refreshed, config, 86399.999) is None
        assert evaluate_stop(refreshed, config, 86400.0) is StopReason.MAX_TOTAL_TIME

        budgeted = stop_config(crash_budget=1)
        saturated = CampaignState(
            started_at=0.0, last_new_coverage_at=0.0, crashes_found=5
        )
        assert evaluate_stop(saturated, budgeted, 90000.0) is StopReason.MAX_TOTAL_TIME
        assert evaluate_stop(saturated, budgeted, 5000.0) is StopReason.CRASH_BUDGET

        corpus = tmp_path / "seeds"
        corpus.mkdir()
        cfg_path = write_toml(
            tmp_path / "cfg.toml",
            target={
                "name": "demo",
                "fuzz_command": ["fuzz"],
                "run_command": ["run"],
                "corpus_dir": str(corpus),
                "output_dir": str(tmp_path / "out"),
            },
        )
        loaded = load_config(cfg_path)
        dumped = tmp_path / "effective.toml"
        dumped.write_text(dump_config(loaded))
        reloaded = load_config(dumped)
        assert reloaded == loaded
        assert reloaded.exit_on_time_sec == 3600
        assert reloaded.max_total_time_sec == 86400
        info["detail"] = "boundaries exact; defaults survive dump/reload"


def test_lcov_golden_bytes_and_documented_consumers(emit_line):
    with criterion(
        emit_line,
        "lcov export: golden tracefile byte-exact; consumer check documented", 60.0
    ) as info:
        cov = CoverageMap(executed={"a.py": frozenset({1, 3})}, totals={"a.py": 3})
        golden = "SF:a.py\nDA:1,1\nDA:2,0\nDA:3,1\nLH:2\nLF:3\nend_of_record\n"
        assert export_lcov(cov) == golden
        readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
        assert "lcov" in readme
        assert "genhtml" in readme or "--summary" in readme
        info["detail"] = "golden bytes exact; README names the consumers"
