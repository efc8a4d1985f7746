"""Fabricate structurally modified target versions with exact ground truth.

A scripted edit removes a random subset of parts (between one and two
thirds), repeats one surviving applause-followed part, and optionally
splices in interlude segments that match no score material. Every output
frame carries its source (part, bar) label, or the INSERTED sentinel.
Edits operate on feature sequences; splices are hard cuts at part
boundaries.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .features import FeatureSequence, HR_HOP_S, HR_WINDOW_S
from .score import BarAnnotations, PartTable, locate_many

log = logging.getLogger(__name__)

REMOVE_PART = "remove_part"
REPEAT_PART = "repeat_part"
INSERT = "insert"

INSERTED = -1


@dataclass(frozen=True)
class EditOp:
    kind: str
    part_id: int = 0        # remove / repeat target
    after_part: int = 0     # insert anchor (0 = before the first part)
    length: int = 0         # insert length in HR frames
    source_frame: int = -1  # insert source; -1 = synthesized segment


@dataclass(frozen=True)
class EditScript:
    seed: int
    removal_ratio: float
    ops: tuple[EditOp, ...]


@dataclass(frozen=True)
class SimParams:
    ratio_range: tuple[float, float] = (1.0 / 3.0, 2.0 / 3.0)
    applause_parts: tuple[int, ...] | None = None  # None: every 5th part
    n_inserts: int = 0
    insert_len_range: tuple[int, int] = (300, 1500)


@dataclass
class GroundTruth:
    """Per-frame (part, bar) labels of a modified target; -1 marks inserts."""

    part_ids: np.ndarray
    bar_ids: np.ndarray

    def __len__(self):
        return len(self.part_ids)

    @property
    def inserted_mask(self) -> np.ndarray:
        return self.part_ids == INSERTED


def default_applause_parts(k: int) -> tuple[int, ...]:
    return tuple(i for i in range(1, k + 1) if i % 5 == 0)


def generate_script(parts: PartTable, seed: int, params: SimParams | None = None) -> EditScript:
    """Sample a deterministic edit script for one target version."""
    params = params or SimParams()
    k = parts.K
    if k < 3:
        raise ValueError(f"need at least 3 parts to build a version, got {k}")
    rng = np.random.default_rng(seed)
    ratio = float(rng.uniform(*params.ratio_range))
    n_remove = int(ratio * k)
    removed = sorted(int(i) + 1 for i in rng.choice(k, size=n_remove, replace=False))
    ops = [EditOp(REMOVE_PART, part_id=pid) for pid in removed]
    applause = (
        params.applause_parts if params.applause_parts is not None else default_applause_parts(k)
    )
    survivors = [pid for pid in applause if pid not in removed]
    if survivors:
        ops.append(EditOp(REPEAT_PART, part_id=int(rng.choice(survivors))))
    else:
        log.warning("seed %d: no applause-followed part survived; repetition omitted", seed)
    all_survivors = [pid for pid in range(1, k + 1) if pid not in removed]
    lo, hi = params.insert_len_range
    for _ in range(params.n_inserts):
        ops.append(
            EditOp(
                INSERT,
                after_part=int(rng.choice(all_survivors)),
                length=int(rng.integers(lo, hi + 1)),
                source_frame=-1,
            )
        )
    return EditScript(seed=int(seed), removal_ratio=ratio, ops=tuple(ops))


def _synth_segment(length: int, dims: int, seed: int, op_index: int) -> np.ndarray:
    """Deterministic smooth noise segment unrelated to any score region."""
    rng = np.random.default_rng([seed & 0x7FFFFFFF, op_index, 0x1A5E])
    out = np.empty((length, dims), dtype=np.float64)
    v = rng.standard_normal(dims)
    rho = 0.97
    mix = np.sqrt(1.0 - rho * rho)
    for t in range(length):
        v = rho * v + mix * rng.standard_normal(dims)
        out[t] = v
    return out.astype(np.float32)


def _validate_script(parts: PartTable, script: EditScript):
    k = parts.K
    removed = [op.part_id for op in script.ops if op.kind == REMOVE_PART]
    if len(set(removed)) != len(removed):
        raise ValueError("script removes the same part twice")
    for op in script.ops:
        if op.kind in (REMOVE_PART, REPEAT_PART) and not 1 <= op.part_id <= k:
            raise ValueError(f"script references unknown part {op.part_id}")
        if op.kind == REPEAT_PART and op.part_id in removed:
            raise ValueError(f"script repeats removed part {op.part_id}")
        if op.kind == INSERT:
            if not 0 <= op.after_part <= k:
                raise ValueError(f"insert anchored to unknown part {op.after_part}")
            if op.after_part in removed:
                raise ValueError(f"insert anchored to removed part {op.after_part}")
            if op.length <= 0:
                raise ValueError("insert length must be positive")
        if op.kind not in (REMOVE_PART, REPEAT_PART, INSERT):
            raise ValueError(f"unknown edit op {op.kind!r}")
    return set(removed)


def apply_script(features: FeatureSequence, parts: PartTable, bars: BarAnnotations,
                 script: EditScript) -> tuple[FeatureSequence, GroundTruth]:
    """Build the modified target sequence and its frame-exact ground truth."""
    removed = _validate_script(parts, script)
    repeated = {op.part_id for op in script.ops if op.kind == REPEAT_PART}
    inserts: dict[int, list[tuple[int, EditOp]]] = {}
    for idx, op in enumerate(script.ops):
        if op.kind == INSERT:
            inserts.setdefault(op.after_part, []).append((idx, op))

    pieces: list[np.ndarray] = []
    truth_parts: list[np.ndarray] = []
    truth_bars: list[np.ndarray] = []

    def add_insert(idx: int, op: EditOp):
        if op.source_frame >= 0:
            if op.source_frame + op.length > features.frame_count:
                raise ValueError(
                    f"insert source range [{op.source_frame}, {op.source_frame + op.length}) "
                    f"outside feature range {features.frame_count}"
                )
            seg = features.data[op.source_frame:op.source_frame + op.length]
        else:
            seg = _synth_segment(op.length, features.dims, script.seed, idx)
        pieces.append(seg)
        truth_parts.append(np.full(op.length, INSERTED, dtype=np.int64))
        truth_bars.append(np.full(op.length, INSERTED, dtype=np.int64))

    def add_part(part):
        frames = np.arange(part.start_frame, part.end_frame + 1)
        p_ids, b_ids, _ = locate_many(frames, parts, bars)
        pieces.append(features.data[part.start_frame:part.end_frame + 1])
        truth_parts.append(p_ids)
        truth_bars.append(b_ids)

    for idx, op in inserts.get(0, []):
        add_insert(idx, op)
    for part in parts:
        if part.part_id in removed:
            continue
        add_part(part)
        if part.part_id in repeated:
            add_part(part)
        for idx, op in inserts.get(part.part_id, []):
            add_insert(idx, op)

    if pieces:
        data = np.concatenate(pieces, axis=0)
        t_part = np.concatenate(truth_parts)
        t_bar = np.concatenate(truth_bars)
    else:
        data = np.zeros((0, features.dims), dtype=np.float32)
        t_part = np.zeros(0, dtype=np.int64)
        t_bar = np.zeros(0, dtype=np.int64)
    modified = FeatureSequence(data, HR_HOP_S, HR_WINDOW_S, features.sample_rate_hz, "HR")
    return modified, GroundTruth(part_ids=t_part, bar_ids=t_bar)


# ---------------------------------------------------------------------------
# serialization

def script_to_json(script: EditScript) -> str:
    return json.dumps(
        {
            "seed": script.seed,
            "removal_ratio": script.removal_ratio,
            "ops": [asdict(op) for op in script.ops],
        },
        sort_keys=True,
    )


def script_from_json(text: str) -> EditScript:
    raw = json.loads(text)
    ops = tuple(EditOp(**op) for op in raw["ops"])
    return EditScript(seed=int(raw["seed"]), removal_ratio=float(raw["removal_ratio"]), ops=ops)


def save_truth(path, truth: GroundTruth) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "part_id", "bar_id"])
        for i, (p, b) in enumerate(zip(truth.part_ids, truth.bar_ids)):
            writer.writerow([i, int(p), int(b)])


def load_truth(path) -> GroundTruth:
    parts = []
    bars = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame", "part_id", "bar_id"]:
            raise ValueError(f"{path}: expected header frame,part_id,bar_id")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields")
            frame, p, b = (int(v) for v in row)
            if frame != len(parts):
                raise ValueError(f"{path}:{lineno}: frames out of order")
            parts.append(p)
            bars.append(b)
    return GroundTruth(
        part_ids=np.asarray(parts, dtype=np.int64),
        bar_ids=np.asarray(bars, dtype=np.int64),
    )
