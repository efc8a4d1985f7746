"""Frame-rate tracking of a live stream against the reference features.

On-line time warping over a bounded score window: each incoming frame
extends a cumulative cost vector and the reported position is the
cheapest cell. With jumps enabled the tracker additionally keeps up to
eight boundary transitions alive whenever the position closes in on the
current part's end: repeating the current part, continuing, or skipping
up to six parts ahead. Each candidate start gets a small sliding side
window seeded through a jump link from the current part's end cell, and
a new part is committed once the position settles outside both the
end region and every start region.

The per-step work is bounded by the window size: the main window costs
at most ``window + 1`` cells and the side windows ``window / 8`` cells
each, independent of the score length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import COST_SENTINEL, distance_profile, precompute_norms
from .score import ScoreReference

MODE_LINEAR = "linear"
MODE_HYPOTHESIS = "hypothesis"

MAX_TRANSITIONS = 8
FORWARD_SKIPS = 6
START_REGION = 500  # frames after a part start still counted as "just started"


def is_unreached(values):
    """True where a cumulative cost still carries the unreached sentinel."""
    return np.asarray(values) >= COST_SENTINEL / 2.0


def chain_min_pass(cost: np.ndarray, floor_min: np.ndarray) -> np.ndarray:
    """Left-to-right recursion ``out[i] = cost[i] + min(floor_min[i], out[i-1])``.

    Vectorized through prefix sums: with ``C`` the cumulative cost,
    ``out[i] = C[i] + min_{j<=i}(floor_min[j] - C[j-1])``.
    """
    csum = np.cumsum(cost)
    shifted = csum - cost
    return csum + np.minimum.accumulate(floor_min - shifted)


@dataclass
class _Branch:
    target: int  # score index of the candidate part start
    lo: int      # low edge of the sliding side window


class HrTracker:
    """Stateful frame-rate tracker; one instance per tracked performance.

    Single-threaded state machine: step() must be called once per target
    frame, in order. ``jumps_enabled=False`` gives the plain windowed
    tracker with no boundary handling.
    """

    def __init__(self, ref: ScoreReference, start: int = 0, window: int = 4000,
                 jumps_enabled: bool = True):
        m = ref.hr.frame_count
        if not 0 <= start < m:
            raise ValueError(f"start index {start} outside [0, {m})")
        if window < 8 or window % 8:
            raise ValueError(f"window must be a positive multiple of 8, got {window}")
        self._frames = ref.hr.data.astype(np.float64)
        self._norms = precompute_norms(self._frames)
        self._parts = ref.parts
        self._m = m
        self.window = int(window)
        self.half = self.window // 2
        self.branch_len = self.window // 8
        self.jumps_enabled = bool(jumps_enabled)
        self.cum = np.full(m, COST_SENTINEL, dtype=np.float64)
        self.cum[start] = 0.0
        self.position = int(start)
        self.mode = MODE_LINEAR
        self.current_part = self._parts.part_of_frame(start)
        self.branches: list[_Branch] = []
        self.steps = 0

    # ------------------------------------------------------------------ api

    @property
    def window_bounds(self) -> tuple[int, int]:
        lo = max(0, self.position - self.half)
        hi = min(self._m - 1, self.position + self.half)
        return lo, hi

    def step(self, target_frame) -> int:
        """Advance by one target frame and return the new score position."""
        y = np.asarray(target_frame, dtype=np.float64)
        segments = self._active_segments()
        jump_cost = None
        jump_starts: tuple[int, ...] = ()
        if self.mode == MODE_HYPOTHESIS and self.current_part > 0:
            jump_cost = float(self.cum[self._parts.end_of(self.current_part)])
            jump_starts = tuple(b.target for b in self.branches)
        best_pos = -1
        best_val = np.inf
        for lo, hi in segments:
            prev = self.cum[lo:hi + 1]
            left = np.empty(hi - lo + 1, dtype=np.float64)
            left[0] = self.cum[lo - 1] if lo > 0 else COST_SENTINEL
            left[1:] = prev[:-1]
            floor_min = np.minimum(left, prev)
            if jump_cost is not None:
                for s in jump_starts:
                    if lo <= s <= hi:
                        floor_min[s - lo] = min(floor_min[s - lo], jump_cost)
            cost = distance_profile(self._frames[lo:hi + 1], self._norms[lo:hi + 1], y)
            new = chain_min_pass(cost, floor_min)
            self.cum[lo:hi + 1] = new
            local = int(np.argmin(new))
            if new[local] < best_val:
                best_val = float(new[local])
                best_pos = lo + local
        self.position = best_pos
        self.steps += 1
        if self.mode == MODE_HYPOTHESIS:
            self._slide_branches()
            self.commit_part()
        if self.mode == MODE_LINEAR and self.jumps_enabled:
            self._maybe_activate()
        return self.position

    def commit_part(self) -> int | None:
        """Commit a new part if the position has settled in one.

        No commit while the position is still inside the current part's
        end region ``[t_k - window/2, t_k]`` or within the first 500
        frames after any part start. On commit, cells outside the
        committed part are invalidated and the tracker returns to plain
        windowed stepping.
        """
        if self.mode != MODE_HYPOTHESIS or self.current_part <= 0:
            return None
        pos = self.position
        t_k = self._parts.end_of(self.current_part)
        if t_k - self.half <= pos <= t_k:
            return None
        starts = self._parts.starts
        i0 = int(np.searchsorted(starts, pos - START_REGION, side="left"))
        i1 = int(np.searchsorted(starts, pos, side="right"))
        if i1 > i0:
            return None
        committed = self._parts.part_of_frame(pos)
        if committed <= 0:
            return None
        self.current_part = committed
        self.mode = MODE_LINEAR
        self.branches = []
        s_c = self._parts.start_of(committed)
        e_c = self._parts.end_of(committed)
        self.cum[:s_c] = COST_SENTINEL
        self.cum[e_c + 1:] = COST_SENTINEL
        return committed

    def reset(self, target_pos: int, seed_cost: float = 0.0) -> None:
        """Restart tracking at ``target_pos``: only that cell stays alive.

        """
        if not 0 <= target_pos < self._m:
            raise ValueError(f"reset target {target_pos} outside [0, {self._m})")
        self.cum[:] = COST_SENTINEL
        self.cum[target_pos] = float(seed_cost)
        self.position = int(target_pos)
        self.mode = MODE_LINEAR
        self.branches = []
        self.current_part = self._parts.part_of_frame(target_pos)

    # ------------------------------------------------------------ internals

    def _active_segments(self) -> list[tuple[int, int]]:
        if self.mode == MODE_LINEAR:
            return [self.window_bounds]
        t_k = self._parts.end_of(self.current_part)
        anchor = min(self.position, t_k)
        spans = [[max(0, anchor - self.half), min(anchor + self.half, t_k)]]
        for b in self.branches:
            b_hi = min(b.lo + self.branch_len - 1, self._m - 1)
            if b.lo <= b_hi:
                spans.append([b.lo, b_hi])
        spans.sort()
        merged = [spans[0]]
        for lo, hi in spans[1:]:
            if lo <= merged[-1][1] + 1:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return [(lo, hi) for lo, hi in merged]

    def _maybe_activate(self):
        if self.current_part <= 0:
            self.current_part = self._parts.part_of_frame(self.position)
            if self.current_part <= 0:
                return
        t_k = self._parts.end_of(self.current_part)
        if self.position > t_k - self.half:
            k = self.current_part
            last = min(k + MAX_TRANSITIONS - 1, self._parts.K)
            self.mode = MODE_HYPOTHESIS
            self.branches = [
                _Branch(target=self._parts.start_of(i), lo=self._parts.start_of(i))
                for i in range(k, last + 1)
            ]

    def _slide_branches(self):
        # only the branch actually holding the tracked position may slide,
        # so unmatched hypotheses stay anchored on their part starts instead
        # of ratcheting away on flat mismatch costs
        for b in self.branches:
            hi = min(b.lo + self.branch_len - 1, self._m - 1)
            if hi <= b.lo or not b.lo <= self.position <= hi:
                continue
            local = self.position - b.lo
            if local > (3 * self.branch_len) // 4:
                b.lo = min(b.lo + local - self.branch_len // 2, self._m - 1)
