import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windwatch import ensemble, scada, training

from oracles import naive_rmse, naive_rmspe

curves = st.lists(st.floats(min_value=0.0, max_value=2000.0), min_size=1, max_size=48)


def test_rmse_examples():
    assert ensemble.rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ensemble.rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(np.sqrt(12.5))
    assert ensemble.rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(3.5355, abs=1e-4)


def test_rmspe_examples():
    assert ensemble.rmspe([4.0, 1.0], [4.0, 1.0]) == 0.0
    assert ensemble.rmspe([4.0, 1.0], [2.0, 1.0]) == pytest.approx(np.sqrt(0.8))
    assert ensemble.rmspe([4.0, 1.0], [2.0, 1.0]) == pytest.approx(0.8944, abs=1e-4)


def test_rmspe_undefined_for_zero_power_window():
    with pytest.raises(ensemble.UndefinedWindowError):
        ensemble.rmspe([0.0, 0.0], [1.0, 2.0])


def test_metric_length_mismatch():
    with pytest.raises(ValueError):
        ensemble.rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        ensemble.rmspe([1.0], [1.0, 2.0])


@settings(max_examples=120, deadline=None)
@given(y=curves, seed=st.integers(0, 1000))
def test_rmse_matches_naive_reference(y, seed):
    rng = np.random.default_rng(seed)
    yhat = rng.uniform(0, 2000, len(y))
    assert ensemble.rmse(y, yhat) == pytest.approx(naive_rmse(y, yhat), abs=1e-12)


@settings(max_examples=120, deadline=None)
@given(y=curves, seed=st.integers(0, 1000))
def test_rmspe_matches_naive_reference(y, seed):
    rng = np.random.default_rng(seed)
    yhat = rng.uniform(0, 2000, len(y))
    if sum(y) <= 0:
        with pytest.raises(ensemble.UndefinedWindowError):
            ensemble.rmspe(y, yhat)
    else:
        assert ensemble.rmspe(y, yhat) == pytest.approx(naive_rmspe(y, yhat), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(y=curves, lam=st.floats(min_value=0.1, max_value=9.0), seed=st.integers(0, 99))
def test_rmse_homogeneity_and_symmetry(y, lam, seed):
    y = np.asarray(y)
    yhat = np.random.default_rng(seed).uniform(0, 2000, len(y))
    base = ensemble.rmse(y, yhat)
    assert ensemble.rmse(lam * y, lam * yhat) == pytest.approx(lam * base, rel=1e-9)
    assert ensemble.rmse(yhat, y) == pytest.approx(base, rel=0, abs=1e-12)


def test_rmspe_is_not_symmetric():
    y = np.array([10.0, 20.0])   # sums to 30
    yhat = np.array([5.0, 10.0])  # sums to 15, so the denominators differ
    assert ensemble.rmspe(y, yhat) != pytest.approx(ensemble.rmspe(yhat, y))


class StubModel:
    """TrainedModel stand-in with a constant prediction."""

    def __init__(self, value, turbine_id=1, rated_power=2000.0):
        self.value = value
        self.turbine_id = turbine_id
        self.rated_power = rated_power

    def predict(self, inputs):
        inputs = np.asarray(inputs)
        return np.full(inputs.shape[:-1], self.value, dtype=np.float64)


def make_pair(w=6, target=None, seed=0):
    rng = np.random.default_rng(seed)
    target = np.full(w, 500.0) if target is None else np.asarray(target, float)
    mk = lambda: scada.WindowSample(inputs=rng.normal(size=(w, 4)), target=target,
                                    group_id=0, offset=0, split="test")
    return ensemble.PairedWindow(mk(), mk())


def stub_ensemble(a, b, weights=(0.5, 0.5)):
    return ensemble.EnsembleModel(StubModel(a), StubModel(b), weights)


def test_ensemble_midpoint_of_members():
    pair = make_pair()
    out = ensemble.ensemble_predict(stub_ensemble(10.0, 20.0), pair)
    assert np.allclose(out, 15.0)


def test_ensemble_degenerate_weights_reproduce_member():
    pair = make_pair()
    out = ensemble.ensemble_predict(stub_ensemble(10.0, 20.0, weights=(1.0, 0.0)), pair)
    assert np.allclose(out, 10.0)


def test_ensemble_identical_members_unchanged():
    pair = make_pair()
    out = ensemble.ensemble_predict(stub_ensemble(42.0, 42.0), pair)
    assert np.allclose(out, 42.0)


def test_ensemble_weight_swap_symmetry():
    pair = make_pair()
    a = ensemble.ensemble_predict(stub_ensemble(10.0, 30.0), pair)
    b = ensemble.ensemble_predict(stub_ensemble(30.0, 10.0), pair)
    assert np.allclose(a, b)


def test_ensemble_clamps_to_power_range():
    pair = make_pair()
    model = ensemble.EnsembleModel(StubModel(3000.0, rated_power=2000.0),
                                   StubModel(2600.0, rated_power=2000.0))
    assert np.allclose(model.predict([pair]), 2000.0)


def test_ensemble_weight_validation():
    with pytest.raises(ValueError):
        stub_ensemble(1.0, 2.0, weights=(0.7, 0.7))
    with pytest.raises(ValueError):
        stub_ensemble(1.0, 2.0, weights=(-0.5, 1.5))
    with pytest.raises(ValueError):
        ensemble.EnsembleModel(StubModel(1.0, turbine_id=1), StubModel(1.0, turbine_id=2))


def test_pairing_matches_group_and_offset():
    rng = np.random.default_rng(0)
    target = rng.uniform(0, 100, 6)
    mk = lambda g, o, t: scada.WindowSample(inputs=rng.normal(size=(6, 4)),
                                            target=t, group_id=g, offset=o)
    lstm_side = [mk(0, 0, target), mk(0, 1, target), mk(1, 0, target)]
    fnn_side = [mk(0, 1, target), mk(1, 0, target), mk(2, 0, target)]
    pairs = ensemble.pair_windows(lstm_side, fnn_side)
    assert [(p.lstm.group_id, p.lstm.offset) for p in pairs] == [(0, 1), (1, 0)]


def test_paired_window_rejects_target_mismatch():
    rng = np.random.default_rng(1)
    a = scada.WindowSample(inputs=rng.normal(size=(4, 4)), target=np.ones(4),
                           group_id=0, offset=0)
    b = scada.WindowSample(inputs=rng.normal(size=(4, 4)), target=np.zeros(4),
                           group_id=0, offset=0)
    with pytest.raises(ValueError):
        ensemble.PairedWindow(a, b)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_ensemble_rmse_convexity(seed):
    rng = np.random.default_rng(seed)
    w = 24
    y = rng.uniform(0, 2000, w)
    a = rng.uniform(0, 2000, w)
    b = rng.uniform(0, 2000, w)
    combined = np.clip(0.5 * a + 0.5 * b, 0, 2000)
    lhs = ensemble.rmse(y, combined)
    rhs = 0.5 * ensemble.rmse(y, a) + 0.5 * ensemble.rmse(y, b)
    assert lhs <= rhs + 1e-9
