import numpy as np
import pytest

from scorefollow.evaluate import (
    evaluate,
    offline_dtw,
    offline_forward_positions,
)
from scorefollow.hr_tracker import HrTracker, is_unreached
from scorefollow.score import locate_many
from scorefollow.simulate import GroundTruth

from synth import add_noise, ar_stream, make_reference

REF = make_reference([100] * 4, seed=51, bar_len=10)


def truth_for_identity(ref):
    p, b, _ = locate_many(np.arange(ref.frame_count), ref.parts, ref.bars)
    return GroundTruth(part_ids=p, bar_ids=b)


# ------------------------------------------------------------- accuracy

def test_perfect_alignment_scores_100():
    truth = truth_for_identity(REF)
    res = evaluate(np.arange(REF.frame_count), truth, REF.parts, REF.bars)
    assert (res.part_acc, res.bar_acc, res.at5_acc) == (100.0, 100.0, 100.0)
    assert res.frames == REF.frame_count


def test_three_bars_late_inside_part():
    # constant 3-bar lateness within the right part: part 100, bar 0, @5 100
    truth = truth_for_identity(REF)
    finals = np.maximum(np.arange(REF.frame_count) - 30, 0)
    keep = np.arange(REF.frame_count) >= 30
    keep &= truth.part_ids == locate_many(finals, REF.parts, REF.bars)[0]
    res = evaluate(
        finals[keep],
        GroundTruth(part_ids=truth.part_ids[keep], bar_ids=truth.bar_ids[keep]),
        REF.parts,
        REF.bars,
    )
    assert res.part_acc == 100.0
    assert res.bar_acc == 0.0
    assert res.at5_acc == 100.0


def test_inserted_frames_excluded():
    truth = truth_for_identity(REF)
    part_ids = truth.part_ids.copy()
    part_ids[:50] = -1
    bar_ids = truth.bar_ids.copy()
    bar_ids[:50] = -1
    res = evaluate(
        np.arange(REF.frame_count),
        GroundTruth(part_ids=part_ids, bar_ids=bar_ids),
        REF.parts,
        REF.bars,
    )
    assert res.frames == REF.frame_count - 50
    assert res.part_acc == 100.0


def test_length_mismatch_rejected():
    truth = truth_for_identity(REF)
    with pytest.raises(ValueError, match="truth length"):
        evaluate(np.arange(10), truth, REF.parts, REF.bars)


def test_unannotated_prediction_counts_as_miss():
    truth = truth_for_identity(REF)
    finals = np.full(REF.frame_count, REF.frame_count + 50)  # out of range
    res = evaluate(finals, truth, REF.parts, REF.bars)
    assert res.part_acc == 0.0 and res.at5_acc == 0.0


def test_accuracies_bounded_and_bar_below_at5():
    rng = np.random.default_rng(0)
    truth = truth_for_identity(REF)
    for _ in range(10):
        finals = rng.integers(0, REF.frame_count, size=REF.frame_count)
        res = evaluate(finals, truth, REF.parts, REF.bars)
        assert 0.0 <= res.bar_acc <= res.at5_acc <= 100.0
        assert 0.0 <= res.part_acc <= 100.0


def test_order_independence():
    rng = np.random.default_rng(1)
    truth = truth_for_identity(REF)
    finals = rng.integers(0, REF.frame_count, size=REF.frame_count)
    res_a = evaluate(finals, truth, REF.parts, REF.bars)
    perm = rng.permutation(REF.frame_count)
    res_b = evaluate(
        finals[perm],
        GroundTruth(part_ids=truth.part_ids[perm], bar_ids=truth.bar_ids[perm]),
        REF.parts,
        REF.bars,
    )
    assert res_a == res_b


def test_empty_denominator():
    truth = GroundTruth(part_ids=np.full(5, -1), bar_ids=np.full(5, -1))
    res = evaluate(np.zeros(5, dtype=np.int64), truth, REF.parts, REF.bars)
    assert res.frames == 0


# ---------------------------------------------------------------- oracle

def brute_force_min_cost(cost, start=0):
    """Exponential enumeration of every monotone path; no memoization."""
    j_len, m = cost.shape
    best = [np.inf]

    def walk(j, i, acc):
        if acc >= best[0]:
            return
        if j == j_len - 1:
            best[0] = min(best[0], acc)
            # horizontal continuations on the last row
            run = acc
            for i2 in range(i + 1, m):
                run += cost[j, i2]
                best[0] = min(best[0], run)
            return
        walk(j + 1, i, acc + cost[j + 1, i])          # stay
        if i + 1 < m:
            walk(j + 1, i + 1, acc + cost[j + 1, i + 1])  # advance
            walk(j, i + 1, acc + cost[j, i + 1])          # horizontal
    walk(0, start, cost[0, start])
    return best[0]


def test_identity_pair_gives_diagonal():
    rng = np.random.default_rng(2)
    x = ar_stream(60, rng)
    res = offline_dtw(x, x)
    assert res.cost == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_array_equal(res.positions, np.arange(60))
    assert res.path == tuple((j, j) for j in range(60))


def test_doubled_frames_give_half_slope():
    rng = np.random.default_rng(3)
    x = ar_stream(40, rng)
    y = np.repeat(x, 2, axis=0)
    res = offline_dtw(x, y)
    assert res.cost == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(res.positions, np.arange(80) // 2, atol=1)


def test_dtw_cost_matches_exhaustive_enumeration():
    from scorefollow.features import distance_profile, precompute_norms

    rng = np.random.default_rng(4)
    for trial in range(4):
        x = rng.standard_normal((8, 6))
        y = rng.standard_normal((7, 6))
        res = offline_dtw(x, y)
        norms = precompute_norms(x)
        cost = np.stack([distance_profile(x, norms, y[j]) for j in range(7)])
        want = brute_force_min_cost(cost)
        assert res.cost == pytest.approx(want, rel=1e-9), f"trial {trial}"


def test_dtw_path_cost_consistent():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((50, 8))
    y = rng.standard_normal((60, 8))
    res = offline_dtw(x, y)
    from scorefollow.features import cosine_distance

    acc = sum(cosine_distance(x[i], y[j]) for j, i in res.path)
    assert res.cost == pytest.approx(acc, rel=1e-9)


def test_dtw_cell_cap():
    with pytest.raises(ValueError, match="cap"):
        offline_dtw(np.zeros((1000, 4)), np.zeros((1000, 4)), cell_cap=1000)


def test_dtw_with_jump_links_recovers_skip():
    ref = make_reference([80, 80, 80], seed=52, bar_len=10)
    data = np.asarray(ref.hr.data, np.float64)
    target = np.concatenate([data[:80], data[160:]])  # skip part 2
    res = offline_dtw(data, target, parts=ref.parts)
    # after the splice the path should sit in part 3
    assert res.positions[90] >= 160
    no_jumps = offline_dtw(data, target)
    assert res.cost <= no_jumps.cost


def test_forward_positions_match_path_dp():
    rng = np.random.default_rng(6)
    x = ar_stream(120, rng)
    idx = np.clip((np.arange(150) * 0.8).astype(int), 0, 119)
    y = add_noise(x[idx], rng, 0.05)
    res = offline_dtw(x, y)
    fwd = offline_forward_positions(x, y)
    assert np.mean(np.abs(fwd - res.positions) <= 2) > 0.9


def test_offline_cost_lower_bounds_online():
    ref = make_reference([600], seed=53, bar_len=20)
    rng = np.random.default_rng(7)
    data = np.asarray(ref.hr.data, np.float64)
    target = add_noise(data[:500], rng, 0.05)
    tracker = HrTracker(ref, window=200, jumps_enabled=False)
    for y in target:
        tracker.step(y)
    online_best = tracker.cum[~is_unreached(tracker.cum)].min()
    offline = offline_dtw(data, target)
    assert offline.cost <= online_best + 1e-9
