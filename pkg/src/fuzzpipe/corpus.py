"""Corpus minimization: keep the smallest seed set preserving coverage.

The selection is the greedy smallest-owner rule: every coverage feature is
assigned to the smallest seed exercising it, and exactly the owners are kept.
That preserves the feature union and is deterministic, but is not guaranteed
to be a minimum set cover.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol


class CoverageRunner(Protocol):
    """Anything that can replay one input and report its coverage features."""

    def coverage_features(self, input_path: Path) -> frozenset[int] | None:
        """Feature ids exercised by the input; None when the run failed."""
        ...


@dataclass(frozen=True, slots=True)
class SeedCoverage:
    """Coverage footprint of one seed; failed runs carry no features."""

    seed_path: str
    size_bytes: int
    features: frozenset[int] = field(default_factory=frozenset)
    executable: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", frozenset(self.features))
        if not self.executable and self.features:
            raise ValueError("an unexecutable seed cannot carry features")


def minimize(seeds: list[SeedCoverage]) -> list[str]:
    """Paths of the kept seeds, sorted; the feature union is preserved."""
    owners: dict[int, SeedCoverage] = {}
    for seed in seeds:
        if not seed.executable:
            continue
        for feature in seed.features:
            owner = owners.get(feature)
            if owner is None or (seed.size_bytes, seed.seed_path) < (
                owner.size_bytes,
                owner.seed_path,
            ):
                owners[feature] = seed
    return sorted({seed.seed_path for seed in owners.values()})


def collect_seed_coverage(
    seed_paths: list[Path], runner: CoverageRunner, workers: int = 4
) -> list[SeedCoverage]:
    """Replay every seed once in coverage mode, up to ``workers`` at a time."""

    def probe(path: Path) -> SeedCoverage:
        size = path.stat().st_size if path.exists() else 0
        features = runner.coverage_features(path)
        if features is None:
            return SeedCoverage(str(path), size, frozenset(), executable=False)
        return SeedCoverage(str(path), size, frozenset(features))

    if not seed_paths:
        return []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(probe, seed_paths))
