"""Dataset statistics: length shares, quantiles, and position distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import Dataset, Task

SHORT_CUTOFF = 25  # "short sequence" boundary for share reporting
LONG_CUTOFF = 50


@dataclass(frozen=True)
class Histogram:
    """Width-1 integer histogram; bin_edges[i] is the value counted by counts[i]."""

    bin_edges: tuple[int, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.bin_edges) != len(self.counts):
            raise ValueError("bin_edges and counts must have equal length")
        if any(b >= a for a, b in zip(self.bin_edges[1:], self.bin_edges)):
            raise ValueError("bin_edges must be strictly increasing")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.counts)


def _dense_histogram(values, lo: int, hi: int) -> Histogram:
    counts = [0] * (hi - lo + 1)
    for v in values:
        counts[v - lo] += 1
    return Histogram(bin_edges=tuple(range(lo, hi + 1)), counts=tuple(counts))


def rebin(h: Histogram, width: int) -> Histogram:
    """Merge width-1 bins into coarser bins labelled by their left edge."""
    if width < 1:
        raise ValueError("bin width must be >= 1")
    if width == 1:
        return h
    merged: dict[int, int] = {}
    origin = h.bin_edges[0]
    for edge, count in zip(h.bin_edges, h.counts):
        left = origin + ((edge - origin) // width) * width
        merged[left] = merged.get(left, 0) + count
    edges = tuple(sorted(merged))
    return Histogram(bin_edges=edges, counts=tuple(merged[e] for e in edges))


@dataclass(frozen=True)
class LengthSummary:
    n_sequences: int
    share_le_25: float
    share_ge_50: float
    q1: int
    q3: int


def nearest_rank(sorted_values, p: float) -> int:
    """Nearest-rank quantile: the value at 1-based index ceil(p * n)."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("quantile of empty sequence")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"quantile fraction must be in (0, 1], got {p}")
    rank = max(1, math.ceil(p * n))
    return sorted_values[rank - 1]


def length_summary(ds: Dataset) -> LengthSummary:
    ds.validate()
    lengths = sorted(ds.lengths)
    n = len(lengths)
    return LengthSummary(
        n_sequences=n,
        share_le_25=sum(1 for l in lengths if l <= SHORT_CUTOFF) / n,
        share_ge_50=sum(1 for l in lengths if l >= LONG_CUTOFF) / n,
        q1=nearest_rank(lengths, 0.25),
        q3=nearest_rank(lengths, 0.75),
    )


def length_histogram(ds: Dataset) -> Histogram:
    ds.validate()
    return _dense_histogram(ds.lengths, 1, max(ds.lengths))


def entity_types(ds: Dataset) -> frozenset[str]:
    """Chunk types present in a BIO inventory (the part after B-/I-)."""
    return frozenset(lab[2:] for lab in ds.label_inventory if lab.startswith(("B-", "I-")))


def class_position_distribution(ds: Dataset, label: str) -> Histogram:
    """1-based positions at which a class occurs.

    For NER datasets the class is an entity type and positions are counted at
    its "B-" token; for POS datasets the class is the tag itself.
    """
    ds.validate()
    if ds.task is Task.NER_BIO:
        valid = entity_types(ds)
        if label not in valid:
            raise ValueError(f"unknown entity type {label!r}; expected one of {sorted(valid)}")
        target = f"B-{label}"
    else:
        if label not in ds.label_inventory:
            raise ValueError(
                f"unknown tag {label!r}; expected one of {sorted(ds.label_inventory)}"
            )
        target = label
    positions = [
        i + 1
        for s in ds.sentences
        for i, tok in enumerate(s.tokens)
        if tok.label == target
    ]
    return _dense_histogram(positions, 1, max(ds.lengths))


def quantile_subset(ds: Dataset) -> Dataset:
    """Sentences whose length falls inside [q1, q3], bounds inclusive."""
    summary = length_summary(ds)
    kept = tuple(s for s in ds.sentences if summary.q1 <= s.length <= summary.q3)
    return Dataset(name=ds.name, split=ds.split, sentences=kept, task=ds.task)
