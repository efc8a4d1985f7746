"""Alignment scoring against ground truth, plus an offline warping oracle.

Accuracies are frame-weighted percentages: the fraction of scored target
frames whose final position maps to the correct part, the correct bar,
or within five bars of the correct bar in the global bar ordering.
Frames labeled INSERTED have no correct position and are excluded from
every denominator.

The offline oracle computes the globally optimal monotone alignment over
the full cost matrix (the same step set as the on-line tracker, plus
part jump links when a part table is supplied). It exists for tests and
desk-scale analysis, not for real-time use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import distance_profile, precompute_norms, COST_SENTINEL
from .score import BarAnnotations, PartTable, locate_many
from .simulate import INSERTED, GroundTruth

BAR_TOLERANCE = 5


@dataclass(frozen=True)
class EvalResult:
    part_acc: float
    bar_acc: float
    at5_acc: float
    frames: int

    def to_dict(self, model: str | None = None) -> dict:
        out = {
            "part_acc": self.part_acc,
            "bar_acc": self.bar_acc,
            "at5_acc": self.at5_acc,
            "frames": self.frames,
        }
        if model is not None:
            out["model"] = model
        return out


def _final_positions(reports) -> np.ndarray:
    if isinstance(reports, np.ndarray):
        return reports.astype(np.int64)
    if reports and hasattr(reports[0], "final_pos"):
        return np.asarray([r.final_pos for r in reports], dtype=np.int64)
    return np.asarray(reports, dtype=np.int64)


def evaluate(reports, truth: GroundTruth, parts: PartTable, bars: BarAnnotations,
             bar_tolerance: int = BAR_TOLERANCE) -> EvalResult:
    """Score a report stream against ground truth (percentages in [0, 100])."""
    finals = _final_positions(reports)
    if len(finals) != len(truth):
        raise ValueError(f"report count {len(finals)} != truth length {len(truth)}")
    scored = truth.part_ids != INSERTED
    n = int(scored.sum())
    if n == 0:
        return EvalResult(0.0, 0.0, 0.0, 0)
    pred_part, pred_bar, pred_ord = locate_many(finals[scored], parts, bars)
    true_part = truth.part_ids[scored]
    true_bar = truth.bar_ids[scored]
    true_ord = np.asarray([bars.ordinal_of[int(b)] for b in true_bar], dtype=np.int64)
    part_hits = pred_part == true_part
    bar_hits = pred_bar == true_bar
    at5_hits = (pred_ord >= 0) & (np.abs(pred_ord - true_ord) <= bar_tolerance)
    return EvalResult(
        part_acc=100.0 * float(np.mean(part_hits)),
        bar_acc=100.0 * float(np.mean(bar_hits)),
        at5_acc=100.0 * float(np.mean(at5_hits)),
        frames=n,
    )


# ---------------------------------------------------------------------------
# offline oracle

_BEGIN, _DIAG, _VERT, _HORIZ, _JUMP = range(5)


@dataclass(frozen=True)
class DtwResult:
    cost: float
    path: tuple[tuple[int, int], ...]   # (target_frame, score_frame) pairs
    positions: np.ndarray               # forward-most score frame per target frame


def offline_dtw(ref_frames, target_frames, parts: PartTable | None = None,
                start: int = 0, cell_cap: int = 400_000) -> DtwResult:
    """Globally optimal alignment path by exhaustive dynamic programming.

    The first target frame is anchored at ``start`` (only that score cell
    has a zero prior); the end is free. Per-cell loops keep the recursion
    obvious; use offline_forward_positions for large instances.
    """
    x = np.asarray(ref_frames, dtype=np.float64)
    y = np.asarray(target_frames, dtype=np.float64)
    m, j_len = x.shape[0], y.shape[0]
    if m * j_len > cell_cap:
        raise ValueError(f"instance {j_len} x {m} exceeds the {cell_cap}-cell cap")
    if j_len == 0:
        return DtwResult(0.0, (), np.zeros(0, dtype=np.int64))
    norms = precompute_norms(x)
    starts = set(int(s) for s in parts.starts) if parts is not None else set()
    ends = np.asarray(parts.ends, dtype=np.int64) if parts is not None else None

    big = COST_SENTINEL
    acc = np.empty((j_len, m), dtype=np.float64)
    move = np.zeros((j_len, m), dtype=np.int8)
    jump_from = np.zeros(j_len, dtype=np.int64)
    prior = np.full(m, big)
    prior[start] = 0.0
    prev = prior
    for j in range(j_len):
        cost = distance_profile(x, norms, y[j])
        if ends is not None:
            e_vals = prev[ends]
            jump_best = int(ends[int(np.argmin(e_vals))])
            jump_val = float(e_vals.min())
        row = acc[j]
        mrow = move[j]
        for i in range(m):
            best = prev[i]
            code = _VERT if j > 0 else _BEGIN
            if i > 0:
                if prev[i - 1] < best:
                    best = prev[i - 1]
                    code = _DIAG if j > 0 else _BEGIN
                if row[i - 1] < best:
                    best = row[i - 1]
                    code = _HORIZ
            if ends is not None and i in starts and jump_val < best:
                best = jump_val
                code = _JUMP
            row[i] = cost[i] + best
            mrow[i] = code
        if ends is not None:
            jump_from[j] = jump_best
        prev = row

    end_i = int(np.argmin(acc[j_len - 1]))
    total = float(acc[j_len - 1, end_i])
    path = []
    j, i = j_len - 1, end_i
    while True:
        path.append((j, i))
        code = move[j][i]
        if code == _HORIZ:
            i -= 1
        elif code == _DIAG:
            j, i = j - 1, i - 1
        elif code == _VERT:
            j -= 1
        elif code == _JUMP:
            j, i = j - 1, int(jump_from[j])
        else:  # _BEGIN
            break
        if j < 0:
            break
    path.reverse()
    positions = np.zeros(j_len, dtype=np.int64)
    for j, i in path:
        positions[j] = max(positions[j], i)
    return DtwResult(total, tuple(path), positions)


def offline_forward_positions(ref_frames, target_frames, start: int = 0,
                              cell_cap: int = 50_000_000) -> np.ndarray:
    """Per-target-frame argmin of the full (unwindowed) cumulative matrix.

    This is what the windowed on-line tracker approximates; rows are
    computed with the same prefix-sum trick, over all score indices.
    """
    x = np.asarray(ref_frames, dtype=np.float64)
    y = np.asarray(target_frames, dtype=np.float64)
    m, j_len = x.shape[0], y.shape[0]
    if m * j_len > cell_cap:
        raise ValueError(f"instance {j_len} x {m} exceeds the {cell_cap}-cell cap")
    norms = precompute_norms(x)
    prev = np.full(m, COST_SENTINEL)
    prev[start] = 0.0
    out = np.zeros(j_len, dtype=np.int64)
    for j in range(j_len):
        cost = distance_profile(x, norms, y[j])
        floor_min = np.empty(m)
        floor_min[0] = prev[0]
        np.minimum(prev[1:], prev[:-1], out=floor_min[1:])
        csum = np.cumsum(cost)
        row = csum + np.minimum.accumulate(floor_min - (csum - cost))
        out[j] = int(np.argmin(row))
        prev = row
    return out
