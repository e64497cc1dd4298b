import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stfusion.exceptions import ShapeError
from stfusion.io import EventList
from stfusion.scoring import (ScoreReport, composite_score, latency_stats, match_events, overlap,
                              segment_accuracy)

from oracles import accuracy_loop, best_total_overlap, greedy_by_search


def random_events(rng, n, horizon=100.0):
    cuts = np.sort(rng.uniform(0, horizon, 2 * n))
    return EventList(tuple((float(cuts[2 * i]), float(cuts[2 * i + 1])) for i in range(n)
                           if cuts[2 * i] < cuts[2 * i + 1]))


# --------------------------------------------------------------------------
# segment accuracy


def test_segment_accuracy_examples():
    assert segment_accuracy([0.9, 0.1], [1, 0], 0.5) == 1.0
    assert segment_accuracy([0.5], [1], 0.5) == 0.0
    assert segment_accuracy([0.5], [0], 0.5) == 1.0


def test_segment_accuracy_matches_loop():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        # quantized probabilities make exact ties with the threshold common
        p = np.round(rng.uniform(0, 1, n), int(rng.integers(1, 4)))
        y = rng.integers(0, 2, n)
        th = float(rng.choice([0.5, 0.3, 0.7, float(rng.uniform())]))
        assert segment_accuracy(p, y, th) == accuracy_loop(p.tolist(), y.tolist(), th)


def test_segment_accuracy_shape_errors():
    with pytest.raises(ShapeError):
        segment_accuracy([0.1, 0.2], [1])
    with pytest.raises(ShapeError):
        segment_accuracy([], [])


# --------------------------------------------------------------------------
# matching


def test_match_identical_and_disjoint():
    ev = EventList(((0.0, 5.0), (10.0, 12.0), (20.0, 30.0)))
    m = match_events(ev, ev)
    assert sorted(m.pairs) == [(0, 0), (1, 1), (2, 2)]
    assert m.unmatched_pred == m.unmatched_true == ()
    d = match_events(EventList(((0.0, 1.0),)), EventList(((1.0, 2.0), (3.0, 4.0))))
    assert d.pairs == () and d.unmatched_true == (0, 1) and d.unmatched_pred == (0,)


def test_match_prefers_largest_overlap():
    pred = EventList(((0.0, 10.0),))
    truth = EventList(((0.0, 2.0), (3.0, 10.0)))
    assert match_events(pred, truth).pairs == ((0, 1),)


def test_match_equals_greedy_search_oracle():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        pred, truth = random_events(rng, int(rng.integers(0, 7))), random_events(rng, int(rng.integers(0, 7)))
        m = match_events(pred, truth)
        ref = greedy_by_search(list(pred), list(truth))
        assert list(m.pairs) == ref
        assert m.total_overlap == pytest.approx(sum(overlap(pred[i], truth[j]) for i, j in ref), abs=1e-12)


def test_match_against_exhaustive_optimum():
    rng = np.random.default_rng(2)
    equal = 0
    for _ in range(300):
        pred, truth = random_events(rng, int(rng.integers(0, 7))), random_events(rng, int(rng.integers(0, 7)))
        best = best_total_overlap(list(pred), list(truth))
        got = match_events(pred, truth).total_overlap
        assert got <= best + 1e-9
        assert got >= 0.5 * best - 1e-9  # greedy weighted-matching bound
        equal += abs(got - best) <= 1e-9
    assert equal >= 270  # greedy is optimal on the vast majority of sparse lists


def test_greedy_can_be_suboptimal():
    # the widest overlap (A with X) blocks two smaller ones that sum higher
    pred = EventList(((0.0, 4.0), (5.0, 14.0)))
    truth = EventList(((0.0, 10.0), (10.0, 20.0)))
    m = match_events(pred, truth)
    assert m.pairs == ((1, 0),)
    assert m.total_overlap == pytest.approx(5.0)
    assert best_total_overlap(list(pred), list(truth)) == pytest.approx(8.0)


@given(st.integers(0, 2 ** 32 - 1))
def test_match_total_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_events(rng, int(rng.integers(0, 8))), random_events(rng, int(rng.integers(0, 8)))
    assert match_events(a, b).total_overlap == pytest.approx(match_events(b, a).total_overlap, abs=1e-9)


# --------------------------------------------------------------------------
# latency and composite


def test_latency_examples():
    lat = latency_stats([((10.0, 20.0), (9.5, 20.5))])
    assert lat.onsets == (0.5,) and lat.offsets == (-0.5,)
    zero = latency_stats([((1.0, 2.0), (1.0, 2.0))])
    assert zero.onset_mean == zero.onset_mean_abs == zero.offset_max_abs == 0.0


def test_latency_summaries():
    lat = latency_stats([((1.0, 5.0), (0.0, 6.0)), ((10.0, 12.0), (13.0, 12.5))])
    assert lat.onset_mean == pytest.approx(-1.0)
    assert lat.onset_mean_abs == pytest.approx(2.0)
    assert lat.onset_max_abs == pytest.approx(3.0)
    assert lat.offset_mean == pytest.approx(-0.75)
    assert lat.offset_mean_abs == pytest.approx(0.75)


def test_composite_examples():
    assert composite_score(1.0, 0, 0, 0, 0, 5) == 100.0
    assert composite_score(0.9, 2.0, 2.0, 0, 0, 3) == pytest.approx(88.0)
    assert composite_score(0.1, 1e6, 1e6, 0, 0, 1) == 0.0
    assert composite_score(0.9, 0, 0, 1, 1, 4) == pytest.approx(87.5)
    assert composite_score(0.9, 0, 0, 1, 0, 0) == pytest.approx(85.0)


@given(st.floats(0, 1), st.floats(0, 50), st.floats(0, 50), st.integers(0, 10), st.integers(0, 10),
       st.integers(0, 20), st.floats(0, 5), st.integers(0, 3))
def test_composite_monotone(acc, on, off, ut, up, n, delta, which):
    base = composite_score(acc, on, off, ut, up, n)
    assert 0.0 <= base <= 100.0
    if which == 0:
        assert composite_score(acc, on + delta, off, ut, up, n) <= base
        assert composite_score(acc, on, off + delta, ut, up, n) <= base
    elif which == 1:
        assert composite_score(acc, on, off, ut + 1, up, n) <= base
        assert composite_score(acc, on, off, ut, up + 1, n) <= base
    else:
        assert composite_score(min(1.0, acc + delta / 10), on, off, ut, up, n) >= base


def test_score_report_accumulates():
    rep = ScoreReport()
    truth = EventList(((0.0, 10.0), (20.0, 30.0)))
    rep.add_trace(90, 100, EventList(((1.0, 9.0),)), truth)
    rep.add_trace(50, 50, EventList(((5.0, 6.0),)), EventList())
    rep.finalize()
    assert rep.frame_accuracy == pytest.approx(140 / 150)
    assert rep.onset_latencies_s == [1.0] and rep.offset_latencies_s == [-1.0]
    assert rep.unmatched_true == 1 and rep.unmatched_pred == 1 and rep.n_true_events == 2
    assert rep.composite == pytest.approx(100 * 140 / 150 - 1.0 - 5.0)
    assert rep.mean_abs_boundary_s == 1.0
    lines = dict(line.split("=", 1) for line in rep.to_lines().splitlines())
    assert float(lines["composite"]) == rep.composite
    assert lines["unmatched_true"] == "1"


def test_score_report_segment_only():
    assert ScoreReport(segment_accuracy=0.75).finalize().to_lines() == "segment_accuracy=0.75\n"
