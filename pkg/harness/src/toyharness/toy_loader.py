"""Toy container loader with three crash classes on distinct call paths.

The format is an eight-byte header (magic "TOY0", then a little-endian
record count) followed by one index byte per record, each indexing a fixed
lookup table. A short header and a wrong magic raise on different lines of
the header parser; an out-of-range index blows up two calls deeper in the
record fetcher, so its trace neither deduplicates nor clusters with the
header bugs. Under PIPELINE_COVERAGE=1 the loader traces itself and writes
the `COV <file>:<line>` sidecar next to the input.

Usage: python -m toyharness.toy_loader <input_file>
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

MAGIC = b"TOY0"
HEADER_LEN = 8
TABLE = tuple(range(0, 100, 10))


def parse_header(data: bytes) -> int:
    """Validate the header and return the record count."""
    if len(data) < HEADER_LEN:
        raise EOFError("truncated header: %d bytes" % len(data))
    if data[:4] != MAGIC:
        raise ValueError("bad magic %r" % data[:4])
    return int.from_bytes(data[4:8], "little")


def fetch_record(data: bytes, position: int) -> int:
    """Look up one record value; crafted indexes step out of the table."""
    index = data[HEADER_LEN + position]
    return TABLE[index]


def read_records(data: bytes, count: int) -> list[int]:
    """Fetch every record the header promises."""
    records = []
    for position in range(count):
        records.append(fetch_record(data, position))
    return records


def load_container(path: Path) -> list[int]:
    """Parse one container file and return its record values."""
    data = path.read_bytes()
    count = parse_header(data)
    return read_records(data, count)


def run_one(path: Path) -> int:
    """Load a container and return how many records it held."""
    return len(load_container(path))


def make_container(indexes: bytes) -> bytes:
    """Build a well-formed container holding the given record indexes."""
    return MAGIC + len(indexes).to_bytes(4, "little") + indexes


def _write_sidecar(input_path: Path, executed: set[int]) -> None:
    name = Path(__file__).name
    text = "".join(f"COV {name}:{line}\n" for line in sorted(executed))
    Path(str(input_path) + ".cov").write_text(text)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="load one toy container")
    parser.add_argument("input", type=Path)
    args = parser.parse_args(argv)
    if os.environ.get("PIPELINE_COVERAGE") != "1":
        run_one(args.input)
        return 0

    executed: set[int] = set()
    own_file = __file__

    def tracer(frame, event, arg):
        if event == "line" and frame.f_code.co_filename == own_file:
            executed.add(frame.f_lineno)
        return tracer

    sys.settrace(tracer)
    try:
        run_one(args.input)
    finally:
        sys.settrace(None)
        _write_sidecar(args.input, executed)
    return 0


if __name__ == "__main__":
    sys.exit(main())
