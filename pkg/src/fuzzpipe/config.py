"""Campaign configuration: TOML loading, validation, and effective-value dump.

One TOML file describes one target. Unknown keys are rejected rather than
ignored so that typos surface immediately. Relative corpus/output paths are
resolved against the directory holding the config file, which keeps configs
relocatable together with their corpora.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError
from .orchestrator import CampaignConfig
from .triage import (
    DEFAULT_EXCEPTION_UTILITY_PATTERNS,
    DEFAULT_FUZZER_PATTERNS,
    DEFAULT_SANITIZER_PATTERNS,
    DEFAULT_STDLIB_PATTERNS,
    FilterRules,
    SimilarityParams,
)

_SCHEMA: dict[str, tuple[str, ...]] = {
    "target": ("name", "fuzz_command", "run_command", "corpus_dir", "output_dir"),
    "run": (
        "jobs",
        "exit_on_time_sec",
        "max_total_time_sec",
        "crash_budget",
        "per_run_timeout_sec",
        "workers",
    ),
    "casr": ("threshold", "theta", "rho"),
    "filters": ("stdlib", "fuzzer", "sanitizer", "exception_utils"),
}


def _find_line(raw: str, token: str) -> str | None:
    pattern = re.compile(rf"^\s*\[?\s*{re.escape(token)}\b")
    for number, line in enumerate(raw.splitlines(), start=1):
        if pattern.match(line):
            return f"line {number}"
    return None


def _reject_unknown_keys(data: dict[str, Any], raw: str) -> None:
    for section, body in data.items():
        if section not in _SCHEMA:
            raise ConfigError("unknown section", key=section, location=_find_line(raw, section))
        if not isinstance(body, dict):
            raise ConfigError("expected a table", key=section, location=_find_line(raw, section))
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    "unknown key", key=f"{section}.{key}", location=_find_line(raw, key)
                )


def _str_value(body: dict[str, Any], section: str, key: str, default: str | None = None) -> str | None:
    if key not in body:
        return default
    value = body[key]
    if not isinstance(value, str) or not value:
        raise ConfigError("expected a non-empty string", key=f"{section}.{key}")
    return value


def _str_list(body: dict[str, Any], section: str, key: str) -> tuple[str, ...] | None:
    if key not in body:
        return None
    value = body[key]
    if not isinstance(value, list) or any(not isinstance(item, str) for item in value):
        raise ConfigError("expected an array of strings", key=f"{section}.{key}")
    return tuple(value)


def _int_value(body: dict[str, Any], section: str, key: str, default: int | None) -> int | None:
    if key not in body:
        return default
    value = body[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("expected an integer", key=f"{section}.{key}")
    return value


def _float_value(body: dict[str, Any], section: str, key: str, default: float) -> float:
    if key not in body:
        return default
    value = body[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", key=f"{section}.{key}")
    return float(value)


def load_config(path: str | Path, output_override: str | Path | None = None) -> CampaignConfig:
    """Parse and validate a campaign config file, applying defaults."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = tomllib.loads(raw)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    _reject_unknown_keys(data, raw)
    target = data.get("target", {})
    run = data.get("run", {})
    casr = data.get("casr", {})
    filters = data.get("filters", {})

    name = _str_value(target, "target", "name")
    if name is None:
        raise ConfigError("missing required key", key="target.name")
    fuzz_command = _str_list(target, "target", "fuzz_command")
    if not fuzz_command:
        raise ConfigError("missing required key", key="target.fuzz_command")
    run_command = _str_list(target, "target", "run_command")
    if not run_command:
        raise ConfigError("missing required key", key="target.run_command")

    base = path.resolve().parent
    corpus_dir = base / (_str_value(target, "target", "corpus_dir", "corpus") or "corpus")
    if output_override is not None:
        output_dir = Path(output_override).resolve()
    else:
        output_dir = base / (_str_value(target, "target", "output_dir", "output") or "output")

    rules = FilterRules(
        stdlib_path_patterns=_str_list(filters, "filters", "stdlib") or DEFAULT_STDLIB_PATTERNS,
        fuzzer_function_patterns=_str_list(filters, "filters", "fuzzer") or DEFAULT_FUZZER_PATTERNS,
        sanitizer_function_patterns=_str_list(filters, "filters", "sanitizer")
        or DEFAULT_SANITIZER_PATTERNS,
        exception_utility_patterns=_str_list(filters, "filters", "exception_utils")
        or DEFAULT_EXCEPTION_UTILITY_PATTERNS,
    )
    similarity = SimilarityParams(
        theta=_float_value(casr, "casr", "theta", 8.0),
        rho=_float_value(casr, "casr", "rho", 4.0),
        threshold=_float_value(casr, "casr", "threshold", 0.3),
    )
    config = CampaignConfig(
        target_name=name,
        fuzz_command=fuzz_command,
        run_command=run_command,
        corpus_dir=corpus_dir.resolve(),
        output_dir=output_dir.resolve(),
        jobs=_int_value(run, "run", "jobs", 1),
        exit_on_time_sec=_int_value(run, "run", "exit_on_time_sec", 3600),
        max_total_time_sec=_int_value(run, "run", "max_total_time_sec", 86400),
        crash_budget=_int_value(run, "run", "crash_budget", None),
        per_run_timeout_sec=_int_value(run, "run", "per_run_timeout_sec", 30),
        workers=_int_value(run, "run", "workers", 4),
        filter_rules=rules,
        similarity=similarity,
    )
    config.validate()
    return config


def _toml_str(value: str) -> str:
    return json.dumps(value)


def _toml_list(values: tuple[str, ...]) -> str:
    return "[" + ", ".join(_toml_str(v) for v in values) + "]"


def _toml_float(value: float) -> str:
    text = repr(value)
    return text if any(c in text for c in ".einf") else text + ".0"


def dump_config(config: CampaignConfig) -> str:
    """Effective configuration as TOML; reloading it yields an equal value."""
    lines = [
        "[target]",
        f"name = {_toml_str(config.target_name)}",
        f"fuzz_command = {_toml_list(config.fuzz_command)}",
        f"run_command = {_toml_list(config.run_command)}",
        f"corpus_dir = {_toml_str(str(config.corpus_dir))}",
        f"output_dir = {_toml_str(str(config.output_dir))}",
        "",
        "[run]",
        f"jobs = {config.jobs}",
        f"exit_on_time_sec = {config.exit_on_time_sec}",
        f"max_total_time_sec = {config.max_total_time_sec}",
    ]
    if config.crash_budget is not None:
        lines.append(f"crash_budget = {config.crash_budget}")
    lines += [
        f"per_run_timeout_sec = {config.per_run_timeout_sec}",
        f"workers = {config.workers}",
        "",
        "[casr]",
        f"threshold = {_toml_float(config.similarity.threshold)}",
        f"theta = {_toml_float(config.similarity.theta)}",
        f"rho = {_toml_float(config.similarity.rho)}",
        "",
        "[filters]",
        f"stdlib = {_toml_list(config.filter_rules.stdlib_path_patterns)}",
        f"fuzzer = {_toml_list(config.filter_rules.fuzzer_function_patterns)}",
        f"sanitizer = {_toml_list(config.filter_rules.sanitizer_function_patterns)}",
        f"exception_utils = {_toml_list(config.filter_rules.exception_utility_patterns)}",
    ]
    return "\n".join(lines) + "\n"
