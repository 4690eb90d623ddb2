"""Shared fixtures: traceback capture, a toy crashing target, config writing.

The toy target and mock fuzzer live in one session-scoped directory so that
report ids and crashlines (both derived from absolute paths) stay identical
across tests that compare artifact bytes.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

DATA_DIR = Path(__file__).parent / "data"

# Container-style loader with two distinct bugs on different call paths:
# a short header fails validation in parse_header and a bad record index
# blows up two calls deeper, so the two traces neither dedup nor cluster
# together under the default similarity parameters.
TOY_SOURCE = '''\
import os
import sys


def parse_header(data):
    if len(data) < 4:
        raise ValueError("short header: %d bytes" % len(data))
    return data[:4]


def pick(data):
    table = [10, 20, 30]
    return table[data[4]]


def select(data):
    return pick(data)


def load(path):
    data = open(path, "rb").read()
    parse_header(data)
    if len(data) >= 5:
        return select(data)
    return 0


def main():
    path = sys.argv[1]
    if os.environ.get("PIPELINE_COVERAGE") == "1":
        data = open(path, "rb").read()
        with open(path + ".cov", "w") as fh:
            fh.write("COV toy.py:1\\nCOV toy.py:2\\n")
            if len(data) >= 4:
                fh.write("COV toy.py:3\\n")
            if len(data) >= 5:
                fh.write("COV toy.py:4\\n")
    load(path)


main()
'''

# Prints two status lines, drops one crash input per bug, then idles until
# the campaign interrupts it.
MOCK_FUZZER_SOURCE = '''\
import os
import sys
import time

corpus_dir = sys.argv[1]
artifact_dir = sys.argv[2]
print("#1 INITED cov: 3 ft: 3 corp: 1/4b", flush=True)
print("#2 NEW    cov: 5 ft: 6 corp: 2/9b", flush=True)
with open(os.path.join(artifact_dir, "crash-aaa"), "wb") as fh:
    fh.write(b"")
with open(os.path.join(artifact_dir, "crash-bbb"), "wb") as fh:
    fh.write(b"GOOD\\x09")
time.sleep(600)
'''


@pytest.fixture
def capture_traceback(tmp_path):
    """Run a script under the current interpreter and return its stderr."""

    def run(source: str, name: str = "script.py") -> str:
        path = tmp_path / name
        path.write_text(source)
        proc = subprocess.run(
            [sys.executable, str(path)], capture_output=True, text=True, timeout=30
        )
        assert proc.returncode != 0, f"script did not crash: {proc.stdout}"
        return proc.stderr

    return run


@pytest.fixture(scope="session")
def toy_env(tmp_path_factory):
    """Stable directory with the toy target, mock fuzzer, and seed corpus."""
    root = tmp_path_factory.mktemp("toyenv")
    (root / "toy.py").write_text(TOY_SOURCE)
    (root / "mock_fuzzer.py").write_text(MOCK_FUZZER_SOURCE)
    corpus = root / "corpus"
    corpus.mkdir()
    (corpus / "seed1").write_bytes(b"GOOD")
    (corpus / "seed2").write_bytes(b"GOOD\x00")
    (corpus / "seed3").write_bytes(b"GOOD\x09")
    return root


def write_toml(path: Path, *, target: dict, run: dict | None = None) -> Path:
    def fmt(value):
        if isinstance(value, list):
            return "[" + ", ".join(json.dumps(v) for v in value) + "]"
        if isinstance(value, str):
            return json.dumps(value)
        return str(value)

    lines = ["[target]"]
    lines += [f"{k} = {fmt(v)}" for k, v in target.items()]
    if run:
        lines.append("[run]")
        lines += [f"{k} = {fmt(v)}" for k, v in run.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def toy_config(toy_env, tmp_path):
    """Write a campaign config for the toy target with a chosen output dir."""

    def make(output_dir: Path, *, name: str = "cfg.toml", run: dict | None = None) -> Path:
        run_section = {
            "exit_on_time_sec": 1,
            "max_total_time_sec": 60,
            "per_run_timeout_sec": 10,
            "workers": 2,
        }
        if run:
            run_section.update(run)
        return write_toml(
            tmp_path / name,
            target={
                "name": "toy",
                "fuzz_command": [
                    sys.executable,
                    str(toy_env / "mock_fuzzer.py"),
                    "{corpus_dir}",
                    "{artifact_dir}",
                ],
                "run_command": [sys.executable, str(toy_env / "toy.py")],
                "corpus_dir": str(toy_env / "corpus"),
                "output_dir": str(output_dir),
            },
            run=run_section,
        )

    return make
