"""JSON serialization for crash reports and triage artifacts.

Output uses sorted keys and stable formatting so CI artifacts diff cleanly.
Reading back a dumped report reconstructs a structurally equal value.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import MalformedReport
from .model import (
    AddressClass,
    Cluster,
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
)


def _kind_to_obj(kind: CrashKind) -> dict[str, Any]:
    if isinstance(kind, PythonException):
        return {"variant": "python_exception", "type": kind.type_name, "message": kind.message}
    return {
        "variant": "sanitizer_error",
        "category": kind.category,
        "access": kind.access.value,
        "address_class": kind.address_class.value if kind.address_class else None,
    }


def _kind_from_obj(obj: dict[str, Any]) -> CrashKind:
    if obj["variant"] == "python_exception":
        return PythonException(obj["type"], obj["message"])
    address_class = AddressClass(obj["address_class"]) if obj["address_class"] else None
    return SanitizerError(obj["category"], MemoryAccess(obj["access"]), address_class)


def report_to_json(report: CrashReport) -> str:
    obj = {
        "id": report.id,
        "target": report.target_name,
        "seed_path": report.seed_path,
        "created_at": report.created_at,
        "kind": _kind_to_obj(report.kind),
        "severity": {
            "class": report.severity.classification.value,
            "description": report.severity.description,
        },
        "trace": [
            {"file": f.file, "function": f.function, "line": f.line, "origin": f.origin.value}
            for f in report.trace
        ],
        "crashline": list(report.crashline) if report.crashline else None,
        "source_snippet": (
            [[n, text] for n, text in report.source_snippet] if report.source_snippet else None
        ),
        "raw_report": report.raw_report,
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def report_from_json(text: str) -> CrashReport:
    try:
        obj = json.loads(text)
        frames = tuple(
            StackFrame(f["file"], f["function"], f["line"], FrameOrigin(f["origin"]))
            for f in obj["trace"]
        )
        return CrashReport(
            id=obj["id"],
            seed_path=obj["seed_path"],
            raw_report=obj["raw_report"],
            kind=_kind_from_obj(obj["kind"]),
            severity=Severity(SeverityClass(obj["severity"]["class"]), obj["severity"]["description"]),
            trace=StackTrace(frames),
            crashline=tuple(obj["crashline"]) if obj["crashline"] else None,
            source_snippet=(
                tuple((n, text) for n, text in obj["source_snippet"])
                if obj["source_snippet"]
                else None
            ),
            target_name=obj["target"],
            created_at=obj["created_at"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedReport(f"bad report file: {exc}") from exc


def clusters_to_json(clusters: list[Cluster], duplicates: dict[str, str]) -> str:
    obj = {
        "clusters": [
            {"id": c.id, "members": list(c.members), "representative": c.representative}
            for c in sorted(clusters, key=lambda c: c.id)
        ],
        "duplicates": dict(sorted(duplicates.items())),
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"
