import numpy as np
import pytest

from scorefollow.evaluate import offline_forward_positions
from scorefollow.hr_tracker import (
    HrTracker,
    MODE_HYPOTHESIS,
    MODE_LINEAR,
    chain_min_pass,
    is_unreached,
)

from synth import add_noise, make_reference, warp_indices, warped_target


def track(tracker, frames):
    return np.array([tracker.step(f) for f in frames], dtype=np.int64)


# ------------------------------------------------------------------- init

def test_init_origin(medium_ref):
    tr = HrTracker(medium_ref, start=0, window=400)
    assert tr.position == 0
    assert tr.window_bounds == (0, 200)
    assert tr.mode == MODE_LINEAR
    assert tr.cum[0] == 0.0
    assert np.all(is_unreached(tr.cum[1:]))


def test_init_part_lookup(medium_ref):
    start = medium_ref.parts.start_of(5)
    tr = HrTracker(medium_ref, start=start, window=400)
    assert tr.current_part == 5


def test_init_end_clamp(medium_ref):
    m = medium_ref.frame_count
    tr = HrTracker(medium_ref, start=m - 1, window=400)
    assert tr.window_bounds == (m - 1 - 200, m - 1)


def test_init_out_of_range(medium_ref):
    with pytest.raises(ValueError, match="outside"):
        HrTracker(medium_ref, start=medium_ref.frame_count)
    with pytest.raises(ValueError, match="multiple of 8"):
        HrTracker(medium_ref, window=1001)


# ------------------------------------------------------------- chain pass

def test_chain_min_pass_matches_loop():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cost = rng.uniform(0, 2, size=50)
        floor = rng.uniform(0, 10, size=50)
        got = chain_min_pass(cost, floor)
        out = np.empty(50)
        run = np.inf
        for i in range(50):
            run = cost[i] + min(floor[i], run)
            out[i] = run
        np.testing.assert_allclose(got, out, rtol=1e-12)


# --------------------------------------------------------------- baseline

def test_identity_tracking_close_to_diagonal(medium_ref):
    rng = np.random.default_rng(1)
    target = add_noise(np.asarray(medium_ref.hr.data[:1200], np.float64), rng, 0.02)
    tr = HrTracker(medium_ref, window=400, jumps_enabled=False)
    positions = track(tr, target)
    devs = np.abs(positions - np.arange(1200))
    assert np.all(devs[100:] <= 2)
    oracle = offline_forward_positions(medium_ref.hr.data[:1500], target)
    assert np.mean(np.abs(positions - oracle) <= 2) > 0.95


def test_half_tempo_tracking(medium_ref):
    rng = np.random.default_rng(2)
    idx = np.repeat(np.arange(700), 2)
    target = add_noise(np.asarray(medium_ref.hr.data, np.float64)[idx], rng, 0.02)
    tr = HrTracker(medium_ref, window=400, jumps_enabled=False)
    positions = track(tr, target)
    j = np.arange(len(target))
    assert np.all(np.abs(positions[100:] - j[100:] / 2) <= 2)
    oracle = offline_forward_positions(medium_ref.hr.data[:1400], target)
    assert np.mean(np.abs(positions - oracle) <= 2) > 0.95


def test_single_frame_score():
    ref = make_reference([1], seed=3, bar_len=1)
    tr = HrTracker(ref, window=8, jumps_enabled=False)
    rng = np.random.default_rng(4)
    for _ in range(20):
        assert tr.step(rng.standard_normal(20)) == 0


def test_cost_monotonicity(medium_ref):
    rng = np.random.default_rng(5)
    tr = HrTracker(medium_ref, window=400, jumps_enabled=False)
    prev_min = 0.0
    for _ in range(50):
        tr.step(rng.standard_normal(20))
        finite = tr.cum[~is_unreached(tr.cum)]
        assert finite.size
        assert finite.min() >= prev_min - 1e-9
        prev_min = finite.min()


# ------------------------------------------------------------------ jumps

def test_hypothesis_activation(medium_ref):
    rng = np.random.default_rng(6)
    t1 = medium_ref.parts.end_of(1)
    tr = HrTracker(medium_ref, window=400, jumps_enabled=True)
    data = np.asarray(medium_ref.hr.data, np.float64)
    positions = []
    for j in range(1400):
        positions.append(tr.step(add_noise(data[j], rng, 0.02)))
        if tr.mode == MODE_HYPOTHESIS:
            break
    assert tr.mode == MODE_HYPOTHESIS
    assert positions[-1] > t1 - 200
    assert 1 <= len(tr.branches) <= 8
    targets = [b.target for b in tr.branches]
    assert targets[0] == medium_ref.parts.start_of(1)  # repetition hypothesis
    assert medium_ref.parts.start_of(2) in targets     # continuation


def test_branch_set_truncated_near_score_end(medium_ref):
    start = medium_ref.parts.start_of(5)
    tr = HrTracker(medium_ref, start=start + 100, window=400)
    tr.position = medium_ref.parts.end_of(5) - 10
    tr._maybe_activate()
    assert tr.mode == MODE_HYPOTHESIS
    assert [b.target for b in tr.branches] == [medium_ref.parts.start_of(5)]


def test_skip_recovery():
    ref = make_reference([1400] * 10, seed=7, bar_len=50)
    rng = np.random.default_rng(8)
    data = np.asarray(ref.hr.data, np.float64)
    # play parts 1..3, then skip parts 4-5, resume at part 6
    splice = ref.parts.end_of(3) + 1
    resume = ref.parts.start_of(6)
    target = np.concatenate([data[:splice], data[resume:resume + 3000]])
    tr = HrTracker(ref, window=800, jumps_enabled=True)
    positions = track(tr, add_noise(target, rng, 0.02))
    # correct part within 200 frames of the splice, stays correct after
    after = positions[splice + 200:]
    truth = np.arange(resume + 200, resume + 3000)
    parts_after = [ref.parts.part_of_frame(p) for p in after]
    truth_parts = [ref.parts.part_of_frame(t) for t in truth]
    assert np.mean(np.asarray(parts_after) == np.asarray(truth_parts)) >= 0.95


def test_repetition_recovery():
    ref = make_reference([1400] * 6, seed=9, bar_len=50)
    rng = np.random.default_rng(10)
    data = np.asarray(ref.hr.data, np.float64)
    s2, t2 = ref.parts.start_of(2), ref.parts.end_of(2)
    target = np.concatenate([data[: t2 + 1], data[s2: t2 + 1], data[t2 + 1: t2 + 1 + 2000]])
    tr = HrTracker(ref, window=800, jumps_enabled=True)
    positions = track(tr, add_noise(target, rng, 0.02))
    splice = t2 + 1
    window = positions[splice: splice + 200]
    assert np.any(np.abs(window - s2) <= 300), "no backward jump to the repeated part"


def test_equivalence_with_baseline_away_from_boundaries(medium_ref):
    rng = np.random.default_rng(11)
    data = np.asarray(medium_ref.hr.data, np.float64)
    target = add_noise(data[200:600], rng, 0.02)
    a = HrTracker(medium_ref, start=200, window=200, jumps_enabled=False)
    b = HrTracker(medium_ref, start=200, window=200, jumps_enabled=True)
    for y in target:
        pa, pb = a.step(y), b.step(y)
        assert pa == pb
        assert b.mode == MODE_LINEAR
        np.testing.assert_array_equal(a.cum, b.cum)


def test_window_work_bounded(medium_ref):
    tr = HrTracker(medium_ref, window=400, jumps_enabled=True)
    tr.position = medium_ref.parts.end_of(1) - 50
    tr._maybe_activate()
    assert tr.mode == MODE_HYPOTHESIS
    segments = tr._active_segments()
    cells = sum(hi - lo + 1 for lo, hi in segments)
    assert cells <= 2 * tr.window + len(segments)
    # segments disjoint and sorted
    for (l1, h1), (l2, h2) in zip(segments, segments[1:]):
        assert h1 + 1 < l2


# ----------------------------------------------------------------- commit

def _hypothesis_state(ref, window=800):
    tr = HrTracker(ref, window=window, jumps_enabled=True)
    tr.position = ref.parts.end_of(1) - 10
    tr._maybe_activate()
    assert tr.mode == MODE_HYPOTHESIS
    return tr

def test_commit_after_start_region():
    ref = make_reference([1400] * 6, seed=12, bar_len=50)
    tr = _hypothesis_state(ref)
    tr.position = ref.parts.start_of(3) + 501
    committed = tr.commit_part()
    assert committed == 3
    assert tr.mode == MODE_LINEAR
    assert tr.current_part == 3
    s, t = ref.parts.start_of(3), ref.parts.end_of(3)
    assert np.all(is_unreached(tr.cum[:s]))
    assert np.all(is_unreached(tr.cum[t + 1:]))


def test_no_commit_inside_start_region():
    ref = make_reference([1400] * 6, seed=12, bar_len=50)
    tr = _hypothesis_state(ref)
    tr.position = ref.parts.start_of(3) + 100
    assert tr.commit_part() is None
    assert tr.mode == MODE_HYPOTHESIS


def test_no_commit_inside_end_region():
    ref = make_reference([1400] * 6, seed=12, bar_len=50)
    tr = _hypothesis_state(ref)
    tr.position = ref.parts.end_of(1) - tr.window // 4
    assert tr.commit_part() is None
    assert tr.mode == MODE_HYPOTHESIS


# ------------------------------------------------------------------ reset

def test_reset_equals_fresh_init(medium_ref):
    rng = np.random.default_rng(13)
    target = add_noise(np.asarray(medium_ref.hr.data, np.float64)[300:400], rng, 0.02)
    s3 = medium_ref.parts.start_of(3)
    a = HrTracker(medium_ref, start=s3, window=400)
    b = HrTracker(medium_ref, start=0, window=400)
    for _ in range(5):
        b.step(rng.standard_normal(20))
    b.reset(s3, seed_cost=0.0)
    assert b.current_part == 3
    for y in target:
        assert a.step(y) == b.step(y)
    np.testing.assert_array_equal(a.cum, b.cum)


def test_reset_out_of_range(medium_ref):
    tr = HrTracker(medium_ref, window=400)
    with pytest.raises(ValueError, match="outside"):
        tr.reset(medium_ref.frame_count)


def test_reset_recovers_after_mistracking(medium_ref):
    rng = np.random.default_rng(14)
    data = np.asarray(medium_ref.hr.data, np.float64)
    tr = HrTracker(medium_ref, start=0, window=400, jumps_enabled=False)
    # mistrack: play material from part 4 while anchored at part 1
    region = medium_ref.parts.start_of(4)
    for j in range(300):
        tr.step(add_noise(data[region + j], rng, 0.02))
    assert abs(tr.position - (region + 300)) > 50
    # redirect to the truth and verify oracle agreement on the suffix
    tr.reset(region + 300, seed_cost=0.0)
    suffix = add_noise(data[region + 300: region + 800], rng, 0.02)
    positions = track(tr, suffix)
    oracle = offline_forward_positions(
        data[region + 300: region + 1000], suffix
    ) + region + 300
    assert np.mean(np.abs(positions - oracle) <= 5) >= 0.95


# ------------------------------------------------ window-oracle agreement

def test_windowed_tracker_agrees_with_full_dtw():
    ref = make_reference([1800], seed=15, bar_len=50)
    data = np.asarray(ref.hr.data, np.float64)
    for seed in (0, 1, 2):
        rng = np.random.default_rng(seed)
        idx = warp_indices(ref.frame_count, rng)
        target = warped_target(data, idx, rng, sigma_ratio=0.05)
        tr = HrTracker(ref, window=800, jumps_enabled=False)
        positions = track(tr, target)
        oracle = offline_forward_positions(data, target)
        agree = np.mean(np.abs(positions - oracle) <= 5)
        assert agree >= 0.95, f"seed {seed}: only {agree:.3f} within 5 frames"
