"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError):
    """Invalid campaign configuration (bad value, unknown key, broken file).

    ``location`` carries a best-effort "line N" / "line N, column M" hint and
    ``key`` the dotted key path, when known.
    """

    def __init__(self, message: str, *, key: str | None = None, location: str | None = None):
        parts = []
        if key:
            parts.append(key)
        if location:
            parts.append(location)
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(message + suffix)
        self.key = key
        self.location = location


class MalformedReport(PipelineError):
    """A crash report carried a recognizable banner but no parseable content."""


class SpawnFailure(PipelineError):
    """A target or fuzzer command could not be started."""


class ExecutorUnavailable(SpawnFailure):
    """The replay/coverage executor cannot spawn the target at all."""


class DanglingReference(PipelineError):
    """A cluster references a report id that is not in the report map."""


class OutputDirLocked(PipelineError):
    """Another campaign is already running over the same output directory."""
