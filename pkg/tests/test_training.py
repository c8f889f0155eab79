import math

import numpy as np
import pytest

from jackson_mpnn.dataset import LabelTransform
from jackson_mpnn.exceptions import NonFiniteLoss
from jackson_mpnn.model import GraphBatch, ModelConfig
from jackson_mpnn.topology import GenConfig, generate_dataset
from jackson_mpnn.training import (
    TrainConfig,
    TrainingCurve,
    batch_mse,
    load_model,
    load_training_state,
    save_model,
    save_training_state,
    train,
)

SMALL = GenConfig.ba(n_range=(8, 16))


@pytest.fixture(scope="module")
def data():
    return generate_dataset(SMALL, 96, 1), generate_dataset(SMALL, 24, 2)


def quick(steps=60, **kw):
    return TrainConfig(steps=steps, batch_size=16, eval_interval=20, **kw)


def test_overfits_tiny_set():
    tiny = generate_dataset(SMALL, 50, 3)
    res = train(tiny, None, ModelConfig(), TrainConfig(steps=2000, eval_interval=100, seed=1))
    first, last = res.curve.records[0], res.curve.records[-1]
    assert last.train_mse < 0.1 * first.train_mse
    assert batch_mse(res.model, tiny, res.transform) < 0.1


def test_identical_seeds_identical_curves(data, tmp_path):
    a = train(*data, hyper=quick(seed=5))
    b = train(*data, hyper=quick(seed=5))
    a.curve.write_csv(tmp_path / "a.csv")
    b.curve.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.model.store.equals(b.model.store)
    c = train(*data, hyper=quick(seed=6))
    assert c.curve.records[-1].train_mse != a.curve.records[-1].train_mse


def test_curve_and_best_checkpoint(data):
    res = train(*data, hyper=quick(steps=100))
    steps = [r.step for r in res.curve.records]
    assert steps == [20, 40, 60, 80, 100]
    assert res.best_test_mse == min(r.test_mse for r in res.curve.records)
    assert res.best_test_mse <= res.curve.records[-1].test_mse
    assert batch_mse(res.model, data[1], res.transform) == pytest.approx(res.best_test_mse, rel=1e-12)
    r0, r1 = res.curve.records[:2]
    assert r1.train_mse_smooth == pytest.approx(0.9 * r0.train_mse + 0.1 * r1.train_mse)


def test_resume_reproduces_the_uninterrupted_run(data, tmp_path):
    full = train(*data, hyper=quick(steps=80, seed=3))
    half = train(*data, hyper=quick(steps=40, seed=3))
    save_training_state(tmp_path / "state.ckpt", half, quick(steps=40, seed=3))
    state, hyper = load_training_state(tmp_path / "state.ckpt")
    assert hyper.seed == 3 and state["step"] == 40
    rest = train(*data, hyper=quick(steps=80, seed=3), resume=state)
    assert [r.test_mse for r in rest.curve.records] == [r.test_mse for r in full.curve.records]
    assert rest.final_model.store.equals(full.final_model.store)


def test_checkpoint_round_trip(data, tmp_path):
    res = train(*data, hyper=quick(steps=20))
    save_model(tmp_path / "m.ckpt", res.model, res.transform, {"note": "x"})
    model, transform, header = load_model(tmp_path / "m.ckpt")
    batch = GraphBatch([s.network for s in data[1]])
    np.testing.assert_array_equal(model.predict(batch), res.model.predict(batch))
    assert transform == res.transform and header["note"] == "x"


def test_non_finite_loss_reports_step(data):
    with pytest.raises(NonFiniteLoss) as info, np.errstate(over="ignore", invalid="ignore"):
        train(data[0], None, hyper=quick(steps=50, learning_rate=1e300))
    assert info.value.step >= 2 and not math.isfinite(info.value.value)


def test_overlapping_sets_rejected(data):
    with pytest.raises(ValueError, match="disjoint"):
        train(data[0], data[0][:5], hyper=quick())


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(steps=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)


def test_external_transform_is_used(data):
    lt = LabelTransform(10.0, 5.0)
    res = train(data[0], None, hyper=quick(steps=20), transform=lt)
    assert res.transform is lt


def test_curve_csv_round_trip(tmp_path):
    curve = TrainingCurve()
    curve.append(100, 0.5, 0.6)
    curve.append(200, 0.25, 0.3)
    curve.write_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "step,train_mse,test_mse,train_mse_smooth,test_mse_smooth"
    back = TrainingCurve.read_csv(tmp_path / "c.csv")
    assert back.to_dicts() == curve.to_dicts()
    with pytest.raises(ValueError):
        curve.append(200, 0.1, 0.1)
