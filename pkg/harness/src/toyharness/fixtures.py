"""Deterministic fixture generator for crash-report parsers.

Interpreter-traceback fixtures are captured live: each template script runs
under the current interpreter in a scratch directory and its stderr becomes
the fixture, with the scratch prefix rewritten to `$SRC` so the files stay
machine independent. Sanitizer fixtures are synthesized in the runtime's
report format with the same `$SRC` convention. Output is byte-stable across
runs on one interpreter.

Usage: python -m toyharness.fixtures <out_dir>
"""

from __future__ import annotations

import argparse
import subprocess
import sys
import tempfile
from pathlib import Path

_TRACEBACK_SCRIPTS = {
    "py_plain.txt": (
        "plain_crash.py",
        '''\
def parse(data):
    raise ValueError("bad length %d" % len(data))


def main():
    parse(b"xy")


main()
''',
    ),
    "py_chained.txt": (
        "chained_crash.py",
        '''\
def inner():
    return {}["token"]


def outer():
    try:
        inner()
    except KeyError as exc:
        raise RuntimeError("wrapped") from exc


outer()
''',
    ),
    "py_module.txt": ("module_crash.py", "total = 1 / 0\n"),
}

_SANITIZER_TEMPLATES = {
    "asan_heap_read.txt": """\
==4242==ERROR: AddressSanitizer: heap-buffer-overflow on address 0x602000000018 at pc 0x00000040112e bp 0x7ffc sp 0x7ff8
READ of size 4 at 0x602000000018 thread T0
    #0 0x40112d in fetch $SRC/heap_read.c:5
    #1 0x401210 in process $SRC/heap_read.c:9
    #2 0x401302 in main $SRC/heap_read.c:15
    #3 0x7f3a1c029d8f in __libc_start_main ??:?

0x602000000018 is located 0 bytes to the right of 8-byte region [0x602000000010,0x602000000018)
SUMMARY: AddressSanitizer: heap-buffer-overflow $SRC/heap_read.c:5 in fetch
""",
    "asan_heap_write.txt": """\
==4243==ERROR: AddressSanitizer: heap-buffer-overflow on address 0x602000000038 at pc 0x000000401201 bp 0x7ffc sp 0x7ff8
WRITE of size 8 at 0x602000000038 thread T0
    #0 0x401200 in put $SRC/heap_write.c:4
    #1 0x401288 in fill $SRC/heap_write.c:8
    #2 0x401390 in main $SRC/heap_write.c:13
    #3 0x7f3a1c029d8f in __libc_start_main ??:?

0x602000000038 is located 0 bytes to the right of 16-byte region [0x602000000028,0x602000000038)
SUMMARY: AddressSanitizer: heap-buffer-overflow $SRC/heap_write.c:4 in put
""",
    "asan_segv_null.txt": """\
==4244==ERROR: AddressSanitizer: SEGV on unknown address 0x000000000000 (pc 0x000000401155 bp 0x7ffc sp 0x7ff8 T0)
==4244==The signal is caused by a READ memory access.
==4244==Hint: address points to the zero page.
    #0 0x401154 in deref $SRC/segv_null.c:2
    #1 0x4011c0 in pick $SRC/segv_null.c:6
    #2 0x401290 in main $SRC/segv_null.c:10
    #3 0x7f3a1c029d8f in __libc_start_main ??:?

SUMMARY: AddressSanitizer: SEGV $SRC/segv_null.c:2 in deref
""",
}


def _capture_traceback(script_name: str, source: str) -> str:
    """Run a template script and return its stderr with paths normalized."""
    with tempfile.TemporaryDirectory(prefix="fixture-") as scratch:
        script = Path(scratch) / script_name
        script.write_text(source)
        proc = subprocess.run(
            [sys.executable, str(script)], capture_output=True, text=True, timeout=30
        )
        if proc.returncode == 0:
            raise RuntimeError(f"{script_name} did not crash")
        return proc.stderr.replace(scratch, "$SRC")


def generate_fixtures(out_dir: Path) -> list[Path]:
    """Write the full fixture set into out_dir and return the paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for fixture_name, (script_name, source) in _TRACEBACK_SCRIPTS.items():
        path = out_dir / fixture_name
        path.write_text(_capture_traceback(script_name, source))
        written.append(path)
    for fixture_name, text in _SANITIZER_TEMPLATES.items():
        path = out_dir / fixture_name
        path.write_text(text)
        written.append(path)
    return sorted(written)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="generate crash-report fixtures")
    parser.add_argument("out_dir", type=Path)
    args = parser.parse_args(argv)
    for path in generate_fixtures(args.out_dir):
        print(path.name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
