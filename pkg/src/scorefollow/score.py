"""Annotated reference model: parts, bars, and frame lookups.

A reference recording is split into an ordered list of parts that tile
the annotated frame range, with bar onsets inside each part. Everything
is immutable after load; both trackers read it concurrently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureSequence, LR_HOP_FRAMES, downsample_lr, load_features, lr_frame_count

UNANNOTATED = (-1, -1)


class AnnotationError(ValueError):
    """Malformed or inconsistent annotation data; message names the record."""


@dataclass(frozen=True)
class Part:
    part_id: int
    name: str
    start_frame: int
    end_frame: int


@dataclass(frozen=True)
class Bar:
    bar_id: int
    part_id: int
    onset_frame: int


class PartTable:
    """Ordered, contiguous parts with ids 1..K tiling the annotated range."""

    def __init__(self, parts):
        parts = tuple(parts)
        if not parts:
            raise AnnotationError("part table is empty")
        for i, p in enumerate(parts):
            if p.part_id != i + 1:
                raise AnnotationError(f"part ids must be consecutive from 1, got {p.part_id} at rank {i + 1}")
            if p.start_frame > p.end_frame:
                raise AnnotationError(f"part {p.part_id}: start {p.start_frame} > end {p.end_frame}")
            if i > 0 and p.start_frame != parts[i - 1].end_frame + 1:
                raise AnnotationError(
                    f"part {p.part_id} starts at {p.start_frame} but part {p.part_id - 1} "
                    f"ends at {parts[i - 1].end_frame} (parts must tile)"
                )
        self.parts = parts
        self.starts = np.array([p.start_frame for p in parts], dtype=np.int64)
        self.ends = np.array([p.end_frame for p in parts], dtype=np.int64)
        self.lr_starts = self.starts // LR_HOP_FRAMES
        self.lr_ends = self.ends // LR_HOP_FRAMES

    @property
    def K(self) -> int:
        return len(self.parts)

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def part(self, part_id: int) -> Part:
        return self.parts[part_id - 1]

    def start_of(self, part_id: int) -> int:
        return int(self.starts[part_id - 1])

    def end_of(self, part_id: int) -> int:
        return int(self.ends[part_id - 1])

    def part_of_frame(self, frame: int) -> int:
        """Part id containing ``frame``, or -1 outside the annotated range."""
        if frame < self.starts[0] or frame > self.ends[-1]:
            return -1
        return int(np.searchsorted(self.starts, frame, side="right"))


class BarAnnotations:
    """Bar onsets, strictly increasing, each inside its part."""

    def __init__(self, bars, parts: PartTable):
        bars = tuple(bars)
        if not bars:
            raise AnnotationError("bar list is empty")
        seen = set()
        for i, b in enumerate(bars):
            if b.bar_id in seen:
                raise AnnotationError(f"duplicate bar id {b.bar_id}")
            seen.add(b.bar_id)
            if i > 0 and b.onset_frame <= bars[i - 1].onset_frame:
                raise AnnotationError(
                    f"bar {b.bar_id}: onset {b.onset_frame} not after previous onset {bars[i - 1].onset_frame}"
                )
            if not 1 <= b.part_id <= parts.K:
                raise AnnotationError(f"bar {b.bar_id}: unknown part {b.part_id}")
            p = parts.part(b.part_id)
            if not p.start_frame <= b.onset_frame <= p.end_frame:
                raise AnnotationError(
                    f"bar {b.bar_id}: onset {b.onset_frame} outside part {b.part_id} "
                    f"range [{p.start_frame}, {p.end_frame}]"
                )
        self.bars = bars
        self.onsets = np.array([b.onset_frame for b in bars], dtype=np.int64)
        self.part_ids = np.array([b.part_id for b in bars], dtype=np.int64)
        self.bar_ids = np.array([b.bar_id for b in bars], dtype=np.int64)
        # position of each part's first bar in the global ordering
        first = np.full(parts.K, -1, dtype=np.int64)
        for pos, pid in enumerate(self.part_ids):
            if first[pid - 1] < 0:
                first[pid - 1] = pos
        if np.any(first < 0):
            missing = int(np.nonzero(first < 0)[0][0]) + 1
            raise AnnotationError(f"part {missing} has no bars")
        self.first_pos = first
        self.ordinal_of = {int(b): i for i, b in enumerate(self.bar_ids)}

    def __len__(self):
        return len(self.bars)


def locate(frame: int, parts: PartTable, bars: BarAnnotations) -> tuple[int, int]:
    """(part_id, bar_id) at ``frame``; UNANNOTATED outside the annotated range.

    The bar is the one with the greatest onset <= frame inside the part;
    frames before a part's first bar map to that first bar.
    """
    if frame < parts.starts[0] or frame > parts.ends[-1]:
        return UNANNOTATED
    k = int(np.searchsorted(parts.starts, frame, side="right")) - 1
    b = int(np.searchsorted(bars.onsets, frame, side="right")) - 1
    first = int(bars.first_pos[k])
    if b < first:
        b = first
    return (k + 1, int(bars.bar_ids[b]))


def locate_many(frames, parts: PartTable, bars: BarAnnotations):
    """Vectorized ``locate``: returns (part_ids, bar_ids, bar_ordinals),
    with -1 entries for unannotated frames."""
    f = np.asarray(frames, dtype=np.int64)
    part_out = np.full(f.shape, -1, dtype=np.int64)
    bar_out = np.full(f.shape, -1, dtype=np.int64)
    ord_out = np.full(f.shape, -1, dtype=np.int64)
    ok = (f >= parts.starts[0]) & (f <= parts.ends[-1])
    if np.any(ok):
        k = np.searchsorted(parts.starts, f[ok], side="right") - 1
        b = np.searchsorted(bars.onsets, f[ok], side="right") - 1
        b = np.maximum(b, bars.first_pos[k])
        part_out[ok] = k + 1
        bar_out[ok] = bars.bar_ids[b]
        ord_out[ok] = b
    return part_out, bar_out, ord_out


@dataclass(frozen=True)
class ScoreReference:
    """The loaded reference: HR/LR features plus part and bar annotations."""

    hr: FeatureSequence
    lr: FeatureSequence
    parts: PartTable
    bars: BarAnnotations

    def __post_init__(self):
        if self.hr.resolution != "HR" or self.lr.resolution != "LR":
            raise ValueError("ScoreReference needs one HR and one LR sequence")
        if self.parts.ends[-1] >= self.hr.frame_count:
            raise AnnotationError(
                f"part {self.parts.K} ends at frame {int(self.parts.ends[-1])}, "
                f"beyond feature range {self.hr.frame_count}"
            )
        if self.lr.frame_count != lr_frame_count(self.hr.frame_count):
            raise ValueError(
                f"LR frame count {self.lr.frame_count} inconsistent with "
                f"{self.hr.frame_count} HR frames (expected {lr_frame_count(self.hr.frame_count)})"
            )

    @property
    def frame_count(self) -> int:
        return self.hr.frame_count

    def locate(self, frame: int) -> tuple[int, int]:
        return locate(frame, self.parts, self.bars)


def load_annotations(path) -> tuple[PartTable, BarAnnotations]:
    """Parse the annotation CSV (``part,...`` and ``bar,...`` records).

    Gaps between consecutive parts are closed by extending the earlier
    part's end; overlaps are an error.
    """
    path = Path(path)
    if not path.exists():
        raise AnnotationError(f"annotation file not found: {path}")
    raw_parts: list[Part] = []
    raw_bars: list[Bar] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            kind = row[0].strip().lower()
            try:
                if kind == "part":
                    if len(row) != 5:
                        raise ValueError(f"expected 5 fields, got {len(row)}")
                    raw_parts.append(Part(int(row[1]), row[2], int(row[3]), int(row[4])))
                elif kind == "bar":
                    if len(row) != 4:
                        raise ValueError(f"expected 4 fields, got {len(row)}")
                    raw_bars.append(Bar(int(row[1]), int(row[2]), int(row[3])))
                else:
                    raise ValueError(f"unknown record kind {row[0]!r}")
            except ValueError as exc:
                raise AnnotationError(f"{path}:{lineno}: {exc}") from exc
    if not raw_parts:
        raise AnnotationError(f"{path}: no part records")
    fixed: list[Part] = []
    for p in sorted(raw_parts, key=lambda p: p.part_id):
        if fixed:
            prev = fixed[-1]
            if p.start_frame <= prev.end_frame:
                raise AnnotationError(
                    f"{path}: part {p.part_id} starts at {p.start_frame} inside part "
                    f"{prev.part_id} (ends {prev.end_frame})"
                )
            if p.start_frame > prev.end_frame + 1:
                fixed[-1] = Part(prev.part_id, prev.name, prev.start_frame, p.start_frame - 1)
        fixed.append(p)
    table = PartTable(fixed)
    bars = BarAnnotations(sorted(raw_bars, key=lambda b: b.onset_frame), table)
    return table, bars


def save_annotations(path, parts: PartTable, bars: BarAnnotations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for p in parts:
            writer.writerow(["part", p.part_id, p.name, p.start_frame, p.end_frame])
        for b in bars.bars:
            writer.writerow(["bar", b.bar_id, b.part_id, b.onset_frame])


def load_reference(feature_path, annotation_path, lr_feature_path=None) -> ScoreReference:
    """Load and validate a full reference; LR features are computed from the
    HR features when no LR file is given."""
    hr = load_features(feature_path)
    parts, bars = load_annotations(annotation_path)
    if parts.ends[-1] >= hr.frame_count:
        raise AnnotationError(
            f"{annotation_path}: part {parts.K} end frame {int(parts.ends[-1])} is outside "
            f"the feature range ({hr.frame_count} frames)"
        )
    if lr_feature_path is not None and Path(lr_feature_path).exists():
        lr = load_features(lr_feature_path)
    else:
        lr = downsample_lr(hr)
    return ScoreReference(hr=hr, lr=lr, parts=parts, bars=bars)
