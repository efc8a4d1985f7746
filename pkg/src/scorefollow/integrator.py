"""Two-rate arbitration between the frame tracker and the score tracker.

The integrator owns both tracker states, feeds them from a single HR
feature stream (the LR stream is derived on the fly from the last 60 HR
frames, every 30th frame), and resolves a final position per frame:

* low-rate gate off: the frame tracker's position stands (a config
  switch flips this to the literal low-confidence handoff, where the
  low-rate position stands instead);
* gate on and the frame position inside the low-rate interval: the
  frame position stands;
* gate on and the frame position outside the interval: the interval
  middle becomes the final position and the frame tracker is reset
  there, seeded with the low-rate cumulative value, every other cell
  invalidated.

A held low-rate report describes the performance as of its analysis
window center, 30 to 59 frames in the past, so its interval is advanced
by that age before the comparison; otherwise a perfectly tracked stream
sits permanently on the interval edge and the reset fires on noise.
Three guards keep resets honest: the disagreement must persist for 45
of the last 60 frames (a single held report, computed before a
legitimate structural jump, would otherwise veto the frame tracker's
correct move); the frame tracker must be visibly failing, meaning its
best cumulative cost has been growing faster than the match-rate gate
(a tracker whose best path explains the incoming audio is never
overwritten on the strength of older evidence); and a short refractory
period after each reset prevents oscillation while the low-rate
estimate catches up.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .features import LR_HOP_FRAMES, LR_WINDOW_FRAMES, lr_window_weights, reflect_indices
from .hr_tracker import HrTracker
from .lr_tracker import LrReport, LrTracker
from .score import ScoreReference, locate

log = logging.getLogger(__name__)

MODELS = ("baseline", "joltw", "baseline+lr", "joltw+lr")

# a reset needs this many disagreeing gated frames out of the last window
RESET_DEBOUNCE_WINDOW = 60
RESET_DEBOUNCE_MIN = 45
# frames over which the frame tracker's best-cost growth is averaged
MATCH_RATE_SPAN = 30


@dataclass(frozen=True)
class TrackerConfig:
    """Run configuration for a tracking session."""

    model: str = "joltw+lr"
    window: int = 4000
    start: int = 0
    lr_final_when_unreliable: bool = False
    reset_refractory: int = 30
    # per-frame cost accrual below which the frame tracker counts as
    # matching the audio and is never reset; mismatched material runs
    # near the neutral distance of 1.0
    reset_match_guard: float = 0.25

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")


@dataclass(frozen=True)
class PositionReport:
    """Per-frame tracking output."""

    target_frame: int
    hr_pos: int
    lr_pos: int                        # -1 before the first LR output
    lr_interval: tuple[int, int] | None
    rf: int
    final_pos: int
    part_id: int
    bar_id: int
    reset_flag: bool

    def to_record(self) -> dict:
        return {
            "target_frame": self.target_frame,
            "hr_pos": self.hr_pos,
            "lr_pos": self.lr_pos,
            "rf": self.rf,
            "final_pos": self.final_pos,
            "part_id": self.part_id,
            "bar_id": self.bar_id,
            "reset_flag": self.reset_flag,
        }

    @classmethod
    def from_record(cls, record: dict) -> "PositionReport":
        return cls(
            target_frame=int(record["target_frame"]),
            hr_pos=int(record["hr_pos"]),
            lr_pos=int(record["lr_pos"]),
            lr_interval=None,
            rf=int(record["rf"]),
            final_pos=int(record["final_pos"]),
            part_id=int(record["part_id"]),
            bar_id=int(record["bar_id"]),
            reset_flag=bool(record["reset_flag"]),
        )


class Integrator:
    """Owns both trackers and produces one PositionReport per target frame."""

    def __init__(self, ref: ScoreReference, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        cfg = self.config
        self.ref = ref
        self.hr = HrTracker(
            ref, start=cfg.start, window=cfg.window,
            jumps_enabled=cfg.model.startswith("joltw"),
        )
        self.use_lr = cfg.model.endswith("+lr")
        self.lr = LrTracker(ref) if self.use_lr else None
        self._lr_weights = lr_window_weights()
        self._ring = np.zeros((LR_WINDOW_FRAMES + 1, ref.hr.dims), dtype=np.float64)
        self._m = ref.hr.frame_count
        self._last_lr: LrReport | None = None
        self._lr_center_time = 0  # target frame the held report describes
        self._frame = 0
        self._last_reset = -(10 ** 9)
        self._disagree = deque(maxlen=RESET_DEBOUNCE_WINDOW)
        self._disagree_sum = 0
        self._best_costs = deque(maxlen=MATCH_RATE_SPAN + 1)
        self.lr_pushes = 0

    @property
    def frames_seen(self) -> int:
        return self._frame

    def step(self, y) -> PositionReport:
        y = np.asarray(y, dtype=np.float64)
        hr_pos = self.hr.step(y)
        self._best_costs.append(float(self.hr.cum[hr_pos]))
        j = self._frame
        self._ring[j % (LR_WINDOW_FRAMES + 1)] = y
        if self.use_lr and j >= LR_HOP_FRAMES and j % LR_HOP_FRAMES == 0:
            self._last_lr = self.lr.push(self._lr_frame(j))
            self._lr_center_time = j - LR_HOP_FRAMES
            self.lr_pushes += 1
        rf = self._last_lr.rf if self._last_lr is not None else 0
        final = hr_pos
        reset_flag = False
        lr_pos = -1
        lr_interval = None
        if self._last_lr is not None:
            last = self._m - 1
            age = j - self._lr_center_time
            lr_pos = self._last_lr.position
            lo = min(self._last_lr.interval[0] + age, last)
            hi = min(self._last_lr.interval[1] + age, last)
            lr_interval = (lo, hi)
            disagree = rf == 1 and not lo <= hr_pos <= hi
            self._note_disagreement(disagree)
            if rf == 1:
                if disagree:
                    persistent = self._disagree_sum >= RESET_DEBOUNCE_MIN
                    if (persistent and self._hr_failing()
                            and j - self._last_reset > self.config.reset_refractory):
                        final = (lo + hi) // 2
                        self.hr.reset(final, seed_cost=self._last_lr.seg_value)
                        reset_flag = True
                        self._last_reset = j
                        self._disagree.clear()
                        self._disagree_sum = 0
                        self._best_costs.clear()
            elif self.config.lr_final_when_unreliable:
                final = (lo + hi) // 2
        part_id, bar_id = locate(final, self.ref.parts, self.ref.bars)
        report = PositionReport(
            target_frame=j,
            hr_pos=hr_pos,
            lr_pos=lr_pos,
            lr_interval=lr_interval,
            rf=rf,
            final_pos=final,
            part_id=part_id,
            bar_id=bar_id,
            reset_flag=reset_flag,
        )
        self._frame += 1
        return report

    def _hr_failing(self) -> bool:
        """True when the frame tracker's best path stopped matching.

        Measured as the growth rate of the best cumulative cost over the
        last 30 frames; a tracker aligned with the audio accrues close to
        nothing per frame, a lost one accrues near the neutral distance.
        """
        if len(self._best_costs) <= MATCH_RATE_SPAN:
            return True
        rate = (self._best_costs[-1] - self._best_costs[0]) / MATCH_RATE_SPAN
        return rate > self.config.reset_match_guard

    def _note_disagreement(self, disagree: bool):
        if len(self._disagree) == self._disagree.maxlen:
            self._disagree_sum -= self._disagree[0]
        self._disagree.append(int(disagree))
        self._disagree_sum += int(disagree)

    def _lr_frame(self, j: int) -> np.ndarray:
        # LR frame l = j/30 - 1, covering HR frames [30l - 30, 30l + 29];
        # that is exactly the 60 frames before j, left edge reflected.
        idx = reflect_indices(np.arange(j - LR_WINDOW_FRAMES, j), j + 1)
        rows = self._ring[idx % (LR_WINDOW_FRAMES + 1)]
        return self._lr_weights @ rows


def run_tracking(ref: ScoreReference, frames: Iterable, config: TrackerConfig | None = None,
                 ) -> Iterator[PositionReport]:
    """Drive a full tracking session over an HR feature frame stream.

    Emits one report per valid frame, in order. Malformed frames (wrong
    dimension or non-finite values) are skipped with a diagnostic.
    """
    integ = Integrator(ref, config)
    dims = ref.hr.dims
    for i, frame in enumerate(frames):
        y = np.asarray(frame, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != dims or not np.all(np.isfinite(y)):
            log.warning("skipping malformed target frame %d (shape %s)", i, y.shape)
            continue
        yield integ.step(y)


def write_reports(path, reports: Iterable[PositionReport]) -> int:
    """Write reports as JSON lines; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_record(), sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def read_reports(path) -> list[PositionReport]:
    out = []
    with open(Path(path), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PositionReport.from_record(json.loads(line)))
    return out
