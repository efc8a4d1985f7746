"""Whole-score tracking at the 300 ms frame rate.

Every incoming LR frame contributes one cosine distance row against all
LR reference frames. The last 30 rows are folded into a windowed
subsequence cost: a diagonal recursion that may start anywhere and may
jump from any part end to any part start. Successive window costs are
then chained with the same jump-aware recursion used by the frame-rate
tracker, which links the 9 s segments through time. The cheapest chained
cell is the reported position; a binary reliability factor fires only
when the last 30 lag-30 position deltas all correspond to a local slope
between 0.5 and 1.5.

Per frame the tracker touches O(30 * N) cells, N being the LR reference
length, which at full-opera scale fits comfortably inside the 300 ms
frame budget.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .features import COST_SENTINEL, LR_HOP_FRAMES, distance_profile, precompute_norms
from .hr_tracker import chain_min_pass
from .score import ScoreReference

WINDOW_ROWS = 30
DELTA_LAG = 30
DELTA_SPAN = 30
DELTA_MIN = 15
DELTA_MAX = 45
INTERVAL_HALF_HR = 30

#: Finite stand-in for unreachable window-cost cells inside the chained
#: recursion; keeps the prefix-sum pass inside float64 precision while
#: still dominating every real accumulated cost.
COST_CAP = 1e6


@dataclass(frozen=True)
class LrReport:
    """One LR tracking output: position, its HR interval, and the gate."""

    index: int
    position: int
    interval: tuple[int, int]
    rf: int
    seg_value: float


def reliability(history) -> int:
    """1 when the last 30 lag-30 deltas of the position history lie in [15, 45]."""
    need = DELTA_LAG + DELTA_SPAN
    if len(history) < need:
        return 0
    h = np.asarray(history[-need:], dtype=np.int64)
    deltas = h[DELTA_LAG:] - h[:DELTA_SPAN]
    return int(np.all((deltas >= DELTA_MIN) & (deltas <= DELTA_MAX)))


class LrTracker:
    """Stateful low-rate tracker; push() once per 300 ms target frame."""

    def __init__(self, ref: ScoreReference):
        if ref.lr.frame_count == 0:
            raise ValueError("reference has no LR frames")
        self._frames = ref.lr.data.astype(np.float64)
        self._norms = precompute_norms(self._frames)
        self.n = ref.lr.frame_count
        self._starts = np.minimum(ref.parts.lr_starts, self.n - 1)
        self._ends = np.minimum(ref.parts.lr_ends, self.n - 1)
        self._starts_pos = self._starts[self._starts >= 1]
        self._rows: deque[np.ndarray] = deque(maxlen=WINDOW_ROWS)
        self._chain: np.ndarray | None = None
        self._history: list[int] = []
        self._m_hr = ref.hr.frame_count
        self.index = 0

    def push(self, lr_frame) -> LrReport:
        y = np.asarray(lr_frame, dtype=np.float64)
        row = distance_profile(self._frames, self._norms, y)
        return self.push_cost_row(row)

    def push_cost_row(self, row: np.ndarray) -> LrReport:
        """Advance with a precomputed distance row (exposed for testing)."""
        self._rows.append(np.asarray(row, dtype=np.float64))
        window_cost = self._window_cost()
        self._chain = self._chain_update(window_cost)
        x = int(np.argmin(self._chain))
        self._history.append(x)
        rf = reliability(self._history)
        if len(self._rows) < WINDOW_ROWS:
            rf = 0
        center = LR_HOP_FRAMES * x
        interval = (
            max(0, center - INTERVAL_HALF_HR),
            min(self._m_hr - 1, center + INTERVAL_HALF_HR),
        )
        report = LrReport(self.index, x, interval, rf, float(self._chain[x]))
        self.index += 1
        return report

    @property
    def history(self) -> list[int]:
        return list(self._history)

    def _window_cost(self) -> np.ndarray:
        """Fold the buffered rows into the windowed subsequence cost.

        Row 1 starts the alignment anywhere; later rows advance the
        diagonal, except at part starts, which may also be entered from
        the cheapest part end of the previous row. Index 0 has no
        predecessor and only participates through its own first-row cost.
        """
        rows = list(self._rows)
        d = rows[0].copy()
        for row in rows[1:]:
            shifted = np.empty_like(d)
            shifted[0] = COST_SENTINEL
            shifted[1:] = d[:-1]
            if self._starts_pos.size:
                jump_val = float(d[self._ends].min())
                s = self._starts_pos
                shifted[s] = np.minimum(shifted[s], jump_val)
            d = row + shifted
            np.minimum(d, COST_SENTINEL, out=d)
        return d

    def _chain_update(self, window_cost: np.ndarray) -> np.ndarray:
        """Chain the new window cost onto the running cumulative vector.

        Same step set as the frame-rate recursion (stay, advance,
        horizontal run, jump from any part end into any part start),
        renormalized to min 0 each frame so values stay bounded; the
        renormalization never moves the argmin.
        """
        cost = np.minimum(window_cost, COST_CAP)
        if self._chain is None:
            seg = cost - cost.min()
            return np.minimum(seg, COST_CAP)
        prev = self._chain
        floor_min = np.empty_like(prev)
        floor_min[0] = prev[0]
        floor_min[1:] = np.minimum(prev[1:], prev[:-1])
        jump_val = float(prev[self._ends].min())
        s = self._starts
        floor_min[s] = np.minimum(floor_min[s], jump_val)
        seg = chain_min_pass(cost, floor_min)
        seg -= seg.min()
        return np.minimum(seg, COST_CAP)
