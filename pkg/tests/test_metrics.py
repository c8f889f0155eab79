import math

import numpy as np
import pytest

from jackson_mpnn.exceptions import ZeroVariance
from jackson_mpnn.metrics import EvalReport, format_table, metrics_report, mse, pearson, r2, read_table_csv, table_report


@pytest.fixture
def pair(rng):
    y = rng.normal(size=300)
    return y, y + rng.normal(scale=0.3, size=300)


def test_perfect_prediction():
    y = np.array([1.0, 2.0, 4.0])
    assert mse(y, y) == 0 and r2(y, y) == 1 and pearson(y, y) == pytest.approx(1.0)


def test_constant_prediction():
    y = np.array([1.0, 2.0, 4.0])
    assert r2(y, np.full(3, y.mean())) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ZeroVariance):
        pearson(y, np.full(3, y.mean()))
    with pytest.raises(ZeroVariance):
        metrics_report(y, np.full(3, y.mean()))


def test_constant_labels():
    with pytest.raises(ZeroVariance):
        r2(np.ones(4), np.arange(4.0))


def test_rho_affine_invariant_mse_not(pair):
    y, p = pair
    assert pearson(y, 3 * p + 7) == pytest.approx(pearson(y, p), rel=1e-12)
    assert mse(y, 3 * p + 7) != pytest.approx(mse(y, p))


def test_against_numpy_oracles(pair):
    y, p = pair
    assert pearson(y, p) == pytest.approx(np.corrcoef(y, p)[0, 1], rel=1e-12)
    from sklearn.metrics import mean_squared_error, r2_score

    assert r2(y, p) == pytest.approx(r2_score(y, p), rel=1e-12)
    assert mse(y, p) == pytest.approx(mean_squared_error(y, p), rel=1e-12)


def test_bootstrap_bound_direction(pair):
    y, p = pair
    rep = metrics_report(y, p, seed=1)
    assert rep.mse_bound >= rep.mse
    assert rep.r2_bound <= rep.r2 and rep.rho_bound <= rep.rho
    assert -1 <= rep.rho <= 1 and rep.r2 <= 1 and rep.mse >= 0


def test_bootstrap_bounds_stable_in_resamples(pair):
    y, p = pair
    small = [metrics_report(y, p, resamples=2000, seed=s) for s in range(5)]
    big = metrics_report(y, p, resamples=20_000, seed=99)
    for field in ("mse_bound", "r2_bound", "rho_bound"):
        vals = np.array([getattr(r, field) for r in small])
        jitter = vals.max() - vals.min()
        assert abs(getattr(big, field) - vals.mean()) <= jitter + 1e-12


def test_bootstrap_deterministic(pair):
    y, p = pair
    assert metrics_report(y, p, seed=3) == metrics_report(y, p, seed=3)


def test_training_mean_predictor_has_zero_r2(pair):
    y, _ = pair
    assert r2(y, np.full_like(y, y.mean())) == pytest.approx(0.0, abs=1e-12)


def test_table_rows_and_dash_for_negative_r2_bound():
    good = EvalReport("ER", "ER", 0.02, 0.98, 0.99, 0.03, 0.97, 0.98, 500, 1.5)
    bad = EvalReport("BA", "ER", 3.0, -2.0, 0.85, 4.0, -3.0, 0.8, 500, 100.0)
    text, table = table_report([good])
    assert len(text.strip().splitlines()) == 2
    text = format_table([good, bad])
    assert "—" in text.splitlines()[2] and "—" not in text.splitlines()[1]
    assert table.splitlines()[0].startswith("train,eval,n,mse")


def test_table_csv_round_trip():
    reps = [EvalReport("ER", "BA", 0.1, 0.9, 0.95, 0.12, 0.88, 0.94, 500, math.nan)]
    back = read_table_csv(table_report(reps)[1])
    assert back[0].rho == reps[0].rho and back[0].eval_name == "BA" and math.isnan(back[0].raw_mse)
