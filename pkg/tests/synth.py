"""Synthetic fixtures shared across the test suite.

Feature material is a first-order autoregressive walk per part, so that
frames close in time are similar (small cosine distance), frames far
apart are near-orthogonal, and different parts are mutually unrelated.
That reproduces the geometry the trackers rely on without any audio.
"""

from __future__ import annotations

import numpy as np

from scorefollow.features import FeatureSequence, HR_HOP_S, HR_WINDOW_S, downsample_lr
from scorefollow.score import Bar, BarAnnotations, Part, PartTable, ScoreReference

DIMS = 20


def ar_stream(n: int, rng: np.random.Generator, dims: int = DIMS, rho: float = 0.97) -> np.ndarray:
    """Smooth stationary noise: successive frames correlate with factor rho."""
    out = np.empty((n, dims), dtype=np.float64)
    v = rng.standard_normal(dims)
    mix = np.sqrt(1.0 - rho * rho)
    for t in range(n):
        v = rho * v + mix * rng.standard_normal(dims)
        out[t] = v
    return out


def feature_sequence(data: np.ndarray) -> FeatureSequence:
    return FeatureSequence(np.asarray(data, dtype=np.float32), HR_HOP_S, HR_WINDOW_S, 22050, "HR")


#: Fixed "sung recitation" style vector; every recitative frame is this
#: plus per-performance noise, so recitatives are mutually confusable but
#: carry no frame-exact anchor, in any performance, at any score position.
_RECIT_STYLE = np.ones(DIMS)
_RECIT_NOISE = 1.4


def recitative_stream(n: int, rng: np.random.Generator, dims: int = DIMS) -> np.ndarray:
    return _RECIT_STYLE[:dims] + _RECIT_NOISE * ar_stream(n, rng, dims)


def make_reference(part_lens, seed: int = 0, bar_len: int = 50, dims: int = DIMS,
                   recitative_frac: float = 0.0, recit_parts: tuple = ()) -> ScoreReference:
    """Reference with one independent feature stream per part and bars every
    ``bar_len`` frames; parts tile [0, sum(part_lens)).

    Parts listed in ``recit_parts`` open with a recitative-like stretch
    covering ``recitative_frac`` of the part: one shared style component
    plus per-performance noise, confusable across parts and across
    performances, the way sung recitation sounds alike between numbers.
    """
    rng = np.random.default_rng(seed)
    recit_set = set(recit_parts)
    pieces = []
    for i, n in enumerate(part_lens):
        body = ar_stream(n, rng, dims)
        if recitative_frac > 0 and (i + 1) in recit_set:
            r = int(n * recitative_frac)
            body[:r] = recitative_stream(r, rng, dims)
        pieces.append(body)
    data = np.concatenate(pieces).astype(np.float32)
    hr = feature_sequence(data)
    parts = []
    bars = []
    pos = 0
    bar_id = 1
    for i, n in enumerate(part_lens):
        parts.append(Part(i + 1, f"part-{i + 1}", pos, pos + n - 1))
        for onset in range(pos, pos + n, bar_len):
            bars.append(Bar(bar_id, i + 1, onset))
            bar_id += 1
        pos += n
    table = PartTable(parts)
    annotations = BarAnnotations(bars, table)
    return ScoreReference(hr=hr, lr=downsample_lr(hr), parts=table, bars=annotations)


def reperform_recitatives(target_data: np.ndarray, truth_part_ids: np.ndarray,
                          recitative_frac: float, seed: int,
                          recit_parts: tuple = ()) -> np.ndarray:
    """Replace the target's recitative stretches with fresh performances.

    A live recitative shares only the style component with the reference
    recording, so the corresponding target frames are re-drawn instead of
    copied. Runs of a constant truth part are full part copies; the
    recitative opens each recitative-bearing run.
    """
    rng = np.random.default_rng(seed)
    recit_set = set(recit_parts)
    out = np.array(target_data, dtype=np.float64, copy=True)
    n = len(truth_part_ids)
    t = 0
    while t < n:
        pid = truth_part_ids[t]
        run_start = t
        while t < n and truth_part_ids[t] == pid:
            t += 1
        if pid not in recit_set:
            continue
        r = int((t - run_start) * recitative_frac)
        if r > 0:
            out[run_start:run_start + r] = recitative_stream(r, rng, out.shape[1])
    return out


def add_noise(data: np.ndarray, rng: np.random.Generator, sigma_ratio: float) -> np.ndarray:
    """Additive noise scaled to a fraction of the overall feature RMS."""
    if sigma_ratio <= 0:
        return np.asarray(data, dtype=np.float64)
    rms = float(np.sqrt(np.mean(np.square(data))))
    return data + sigma_ratio * rms * rng.standard_normal(data.shape)


def warp_indices(n_ref: int, rng: np.random.Generator, slope_range=(0.5, 1.5),
                 segment_len: int = 200) -> np.ndarray:
    """Monotone non-decreasing target->reference map with piecewise slope
    drawn from ``slope_range``, covering the full reference."""
    idx = []
    pos = 0.0
    while pos < n_ref - 1:
        slope = rng.uniform(*slope_range)
        for _ in range(segment_len):
            idx.append(min(int(round(pos)), n_ref - 1))
            pos += slope
            if pos >= n_ref - 1:
                break
    idx.append(n_ref - 1)
    return np.asarray(idx, dtype=np.int64)


def warped_target(ref_data: np.ndarray, idx_map: np.ndarray, rng: np.random.Generator,
                  sigma_ratio: float = 0.0) -> np.ndarray:
    return add_noise(ref_data[idx_map].astype(np.float64), rng, sigma_ratio)
