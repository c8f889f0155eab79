import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from jackson_mpnn import MPNNRegressor, queueing
from jackson_mpnn.topology import GenConfig, generate_dataset
from jackson_mpnn.validation import check_labels, check_networks

CFG = GenConfig.ba(n_range=(8, 16))


@pytest.fixture(scope="module")
def fitted():
    train = generate_dataset(CFG, 64, 1)
    test = generate_dataset(CFG, 16, 2)
    est = MPNNRegressor(max_steps=40, batch_size=16, eval_interval=20, calibration_size=64)
    est.fit([s.network for s in train], eval_set=[s.network for s in test])
    return est, train, test


def test_params_round_trip():
    est = MPNNRegressor(hidden_dim=8, max_steps=10)
    params = est.get_params()
    assert params["hidden_dim"] == 8 and params["max_steps"] == 10
    other = clone(est).set_params(learning_rate=0.01)
    assert other.learning_rate == 0.01 and est.learning_rate == 1e-3


def test_not_fitted():
    with pytest.raises(NotFittedError):
        MPNNRegressor().predict(generate_dataset(CFG, 2, 0))


def test_fit_uses_analytic_labels_when_missing(fitted):
    est, train, _ = fitted
    W = np.array([s.W for s in train])
    assert est.transform_.mean == pytest.approx(W.mean()) and est.transform_.std == pytest.approx(W.std())
    assert len(est.curve_) == 2


def test_predict_transform_score(fitted):
    est, _, test = fitted
    nets = [s.network for s in test]
    pred = est.predict(nets)
    assert pred.shape == (16,) and np.isfinite(pred).all()
    assert est.transform(nets).shape == (16, 16)
    y = [queueing.solve(n).average_delay for n in nets]
    assert est.score(nets, y) == pytest.approx(est.score(test))


def test_save_load(fitted, tmp_path):
    est, _, test = fitted
    est.save(tmp_path / "est.ckpt")
    back = MPNNRegressor.load(tmp_path / "est.ckpt")
    np.testing.assert_array_equal(back.predict(test), est.predict(test))
    assert back.get_params() == est.get_params()


def test_samples_carry_their_labels():
    train = generate_dataset(CFG, 40, 7)
    est = MPNNRegressor(max_steps=5, batch_size=16, eval_interval=5)
    est.fit(train, y=np.full(40, 3.0) + np.arange(40))
    assert est.transform_.mean == pytest.approx(3.0 + 19.5)


def test_validation_helpers():
    nets = [s.network for s in generate_dataset(CFG, 3, 0)]
    assert len(check_networks(nets)) == 3
    assert len(check_networks([n for n in nets])) == 3
    with pytest.raises(TypeError):
        check_networks(nets[0])
    with pytest.raises(ValueError):
        check_networks([])
    with pytest.raises(TypeError):
        check_networks([1, 2])
    with pytest.raises(ValueError):
        check_labels([1.0, 2.0], 3)
    with pytest.raises(ValueError):
        check_labels([1.0, -2.0, 3.0], 3)
    with pytest.raises(ValueError):
        check_labels([1.0, np.nan, 3.0], 3)
    np.testing.assert_array_equal(check_labels([[1.0], [2.0]], 2), [1.0, 2.0])
