import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windwatch import detection

from oracles import naive_percentile, naive_weighted_f1


# ---------------------------------------------------------------------------
# percentile


def test_percentile_single_value():
    for p in (0.0, 0.37, 1.0):
        assert detection.percentile([4.2], p) == 4.2


def test_percentile_interpolates_rank():
    values = list(range(1, 21))
    assert detection.percentile(values, 0.90) == pytest.approx(18.1)


def test_percentile_boundaries():
    values = [5.0, 1.0, 3.0]
    assert detection.percentile(values, 1.0) == 5.0
    assert detection.percentile(values, 0.0) == 1.0


def test_percentile_empty_raises():
    with pytest.raises(ValueError):
        detection.percentile([], 0.5)


@settings(max_examples=150, deadline=None)
@given(values=st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=60),
       p=st.floats(min_value=0.0, max_value=1.0))
def test_percentile_matches_naive_and_numpy(values, p):
    ours = detection.percentile(values, p)
    assert ours == pytest.approx(naive_percentile(values, p), rel=1e-9, abs=1e-9)
    assert ours == pytest.approx(float(np.quantile(values, p)), rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------------------
# cutoffs


def errs(rmse_values, rmspe_values=None, truths=None, undefined=()):
    rmspe_values = rmspe_values or [v / 100 for v in rmse_values]
    truths = truths if truths is not None else [0] * len(rmse_values)
    out = []
    for i, (a, b, t) in enumerate(zip(rmse_values, rmspe_values, truths)):
        defined = i not in undefined
        out.append(detection.WindowError(
            start=np.datetime64("2023-01-01T00", "s") + np.timedelta64(24 * i, "h"),
            rmse=float(a), rmspe=float(b) if defined else float("nan"),
            rmspe_defined=defined, truth_bad_fraction=float(t)))
    return out


def test_cutoffs_from_percentiles():
    cut = detection.compute_cutoffs(errs(list(range(1, 21))), turbine_id=5)
    assert cut.rmse_cutoff == pytest.approx(18.1)
    assert cut.n_validation_windows == 20
    assert not cut.low_sample_warning


def test_cutoffs_constant_errors():
    cut = detection.compute_cutoffs(errs([7.0] * 12, [0.2] * 12), turbine_id=1)
    assert cut.rmse_cutoff == 7.0
    assert cut.rmspe_cutoff == 0.2


def test_cutoffs_exclude_undefined_rmspe_windows():
    e = errs([1, 2, 3, 4], [0.1, 0.2, 0.3, 9.9], undefined={3})
    cut = detection.compute_cutoffs(e, turbine_id=1)
    assert cut.rmspe_cutoff <= 0.3


def test_cutoffs_low_sample_warning_and_empty():
    assert detection.compute_cutoffs(errs([1.0] * 9), 1).low_sample_warning
    with pytest.raises(ValueError):
        detection.compute_cutoffs([], 1)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 200), seed=st.integers(0, 10_000))
def test_cutoff_construction_bound(n, seed):
    rng = np.random.default_rng(seed)
    e = errs(rng.uniform(0, 100, n).tolist(), rng.uniform(0, 10, n).tolist())
    cut = detection.compute_cutoffs(e, turbine_id=1)
    frac_rmse = np.mean([x.rmse > cut.rmse_cutoff for x in e])
    frac_rmspe = np.mean([x.rmspe > cut.rmspe_cutoff for x in e])
    assert frac_rmse <= 0.10 + 1.0 / n
    assert frac_rmspe <= 0.05 + 1.0 / n


# ---------------------------------------------------------------------------
# labelling


def limits(rmse_cutoff=10.0, rmspe_cutoff=1.0):
    return detection.CutoffLimits(1, rmse_cutoff, rmspe_cutoff, 20)


def test_mixed_triggers_on_either_metric():
    e = errs([15.0], [0.5])           # rmse above, rmspe below
    cut = limits()
    assert detection.label_windows(e, cut, "rmse").tolist() == [1]
    assert detection.label_windows(e, cut, "rmspe").tolist() == [0]
    assert detection.label_windows(e, cut, "mixed").tolist() == [1]


def test_both_below_is_good_in_all_modes():
    e = errs([5.0], [0.5])
    for mode in detection.MODES:
        assert detection.label_windows(e, limits(), mode).tolist() == [0]


def test_mixed_is_union_of_single_metrics():
    rng = np.random.default_rng(3)
    e = errs(rng.uniform(0, 20, 50).tolist(), rng.uniform(0, 2, 50).tolist())
    cut = limits()
    by_rmse = detection.label_windows(e, cut, "rmse")
    by_rmspe = detection.label_windows(e, cut, "rmspe")
    mixed = detection.label_windows(e, cut, "mixed")
    assert np.array_equal(mixed, by_rmse | by_rmspe)


def test_undefined_rmspe_falls_back_to_rmse_rule():
    e = errs([15.0, 5.0], undefined={0, 1})
    labels = detection.label_windows(e, limits(), "rmspe")
    assert labels.tolist() == [1, 0]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 1000), bump=st.floats(min_value=0.0, max_value=50.0))
def test_labelling_is_monotone_in_cutoffs(seed, bump):
    rng = np.random.default_rng(seed)
    e = errs(rng.uniform(0, 20, 30).tolist(), rng.uniform(0, 2, 30).tolist())
    lo = limits()
    hi = detection.CutoffLimits(1, lo.rmse_cutoff + bump, lo.rmspe_cutoff + bump, 20)
    for mode in detection.MODES:
        a = detection.label_windows(e, lo, mode)
        b = detection.label_windows(e, hi, mode)
        assert np.all(b <= a)


# ---------------------------------------------------------------------------
# confusion and scores


def test_confusion_counts_and_totals():
    cm = detection.confusion([0, 0, 1, 1], [0, 0, 0, 1])
    assert (cm.tn, cm.fp, cm.fn, cm.tp) == (2, 1, 0, 1)
    assert cm.total == 4


def test_all_correct_scores_weighted_f1_one():
    cm = detection.confusion([0, 1, 0, 1], [0, 1, 0, 1])
    assert detection.scores(cm).weighted_f1 == pytest.approx(1.0)


def test_weighted_f1_worked_example():
    truth = [0, 0, 0, 1]
    pred = [0, 0, 1, 1]
    s = detection.scores(detection.confusion(pred, truth))
    assert s.per_class[0].f1 == pytest.approx(0.8)
    assert s.per_class[1].f1 == pytest.approx(2 / 3)
    assert s.weighted_f1 == pytest.approx(0.75 * 0.8 + 0.25 * (2 / 3))
    assert s.weighted_f1 == pytest.approx(0.7667, abs=1e-4)


def test_zero_support_class_contributes_zero_weight():
    s = detection.scores(detection.confusion([0, 0, 0], [0, 0, 0]))
    assert s.per_class[1].support == 0
    assert s.per_class[1].f1 == 0.0
    assert s.weighted_f1 == pytest.approx(1.0)


def test_confusion_length_mismatch():
    with pytest.raises(ValueError):
        detection.confusion([0, 1], [0])


@settings(max_examples=120, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=80))
def test_weighted_f1_matches_naive_reference(pairs):
    pred = [p for p, _ in pairs]
    truth = [t for _, t in pairs]
    s = detection.scores(detection.confusion(pred, truth))
    assert s.weighted_f1 == pytest.approx(naive_weighted_f1(pred, truth), abs=1e-12)
    assert 0.0 <= s.weighted_f1 <= 1.0


# ---------------------------------------------------------------------------
# reports


def test_report_mixed_recall_dominates_singles():
    rng = np.random.default_rng(9)
    truths = (rng.uniform(0, 1, 40) < 0.3).astype(float)
    e = errs(rng.uniform(0, 20, 40).tolist(), rng.uniform(0, 2, 40).tolist(),
             truths=truths.tolist())
    report = detection.build_detection_report(e, limits(), turbine_id=3)
    recalls = {m: report.modes[m].result.per_class[1].recall for m in detection.MODES}
    assert recalls["mixed"] >= max(recalls["rmse"], recalls["rmspe"])
    for mode in detection.MODES:
        assert report.modes[mode].matrix.total == len(e)


def test_window_truth_majority_ties_to_bad():
    assert detection.WindowError(np.datetime64("2023-01-01"), 1, 1, True, 0.5).truth == 1
    assert detection.WindowError(np.datetime64("2023-01-01"), 1, 1, True, 0.49).truth == 0
