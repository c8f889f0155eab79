"""Regression metrics with bootstrap bounds, and the evaluation table."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ZeroVariance
from .seeding import make_rng

BOOTSTRAP_RESAMPLES = 2000
MISSING = "—"


def mse(y, y_hat) -> float:
    y, y_hat = np.asarray(y, float), np.asarray(y_hat, float)
    return float(np.mean((y - y_hat) ** 2))


def r2(y, y_hat) -> float:
    """Coefficient of determination; ``ZeroVariance`` if ``y`` is constant."""
    y, y_hat = np.asarray(y, float), np.asarray(y_hat, float)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVariance("labels are constant; R² is undefined")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


def pearson(y, y_hat) -> float:
    y, y_hat = np.asarray(y, float), np.asarray(y_hat, float)
    dy, dp = y - y.mean(), y_hat - y_hat.mean()
    sy, sp = float(np.sqrt(np.sum(dy**2))), float(np.sqrt(np.sum(dp**2)))
    if sy == 0.0 or sp == 0.0:
        raise ZeroVariance("constant labels or predictions; Pearson correlation is undefined")
    return float(np.clip(np.sum(dy * dp) / (sy * sp), -1.0, 1.0))


def _bootstrap(y, y_hat, resamples, rng):
    """Vectorized statistics over ``resamples`` index draws with replacement."""
    n = y.size
    idx = rng.integers(0, n, size=(resamples, n))
    yb, pb = y[idx], y_hat[idx]
    err = np.mean((yb - pb) ** 2, axis=1)
    dy = yb - yb.mean(axis=1, keepdims=True)
    dp = pb - pb.mean(axis=1, keepdims=True)
    ss_tot = np.sum(dy**2, axis=1)
    ss_pred = np.sum(dp**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2b = 1.0 - n * err / ss_tot
        rhob = np.sum(dy * dp, axis=1) / np.sqrt(ss_tot * ss_pred)
    # degenerate resamples (all one point) carry no information
    ok = np.isfinite(r2b) & np.isfinite(rhob)
    return err, r2b[ok], np.clip(rhob[ok], -1.0, 1.0)


@dataclass
class EvalReport:
    train_name: str
    eval_name: str
    mse: float
    r2: float
    rho: float
    mse_bound: float
    r2_bound: float
    rho_bound: float
    n: int
    raw_mse: float = math.nan

    def to_dict(self):
        return asdict(self)


def metrics_report(y, y_hat, train_name="", eval_name="", resamples=BOOTSTRAP_RESAMPLES, seed=0, raw=None) -> EvalReport:
    """Point metrics plus percentile bootstrap bounds.

    The bounds are one-sided: 97.5th percentile for MSE, 2.5th percentile for
    R² and ρ. ``raw`` is an optional ``(y_raw, y_hat_raw)`` pair for the MSE in
    original units.
    """
    y, y_hat = np.asarray(y, float), np.asarray(y_hat, float)
    if y.shape != y_hat.shape or y.ndim != 1 or y.size == 0:
        raise ValueError("y and y_hat must be non-empty 1-D arrays of equal length")
    point_mse = mse(y, y_hat)
    point_rho = pearson(y, y_hat)
    point_r2 = r2(y, y_hat)
    err, r2b, rhob = _bootstrap(y, y_hat, resamples, make_rng(seed))
    return EvalReport(
        train_name,
        eval_name,
        point_mse,
        point_r2,
        point_rho,
        float(np.percentile(err, 97.5)),
        float(np.percentile(r2b, 2.5)) if r2b.size else math.nan,
        float(np.percentile(rhob, 2.5)) if rhob.size else math.nan,
        int(y.size),
        mse(*raw) if raw is not None else math.nan,
    )


def predict_samples(model, samples, batch_size=256) -> np.ndarray:
    """Standardized-space predictions for a list of samples, in order."""
    from .model import GraphBatch

    out = []
    for lo in range(0, len(samples), batch_size):
        out.append(model.predict(GraphBatch([s.network for s in samples[lo : lo + batch_size]])))
    return np.concatenate(out) if out else np.empty(0)


def evaluate(model, eval_set, transform, train_name="", eval_name="", resamples=BOOTSTRAP_RESAMPLES, seed=0) -> EvalReport:
    """Inference-mode metrics of ``model`` on labelled ``eval_set``.

    Labels go through the training ``transform``; MSE, R² and ρ are computed
    in that space, and the raw-unit MSE is reported alongside.
    """
    eval_set = list(eval_set)
    if not eval_set:
        raise ValueError("evaluation set is empty")
    pred = predict_samples(model, eval_set)
    w = np.array([s.W for s in eval_set])
    y = transform.apply(w)
    return metrics_report(y, pred, train_name, eval_name, resamples, seed, raw=(w, transform.invert(pred)))


# --- tables ----------------------------------------------------------------------

TABLE_COLUMNS = ["train", "eval", "n", "mse", "mse_bound", "r2", "r2_bound", "rho", "rho_bound", "raw_mse"]


def _fmt(x, digits=4):
    return "nan" if not math.isfinite(x) else f"{x:.{digits}f}"


def format_table(reports) -> str:
    """Aligned text table. Bounds are shown in brackets; a negative R² bound shows as a dash."""
    header = ["train", "eval", "n", "MSE [97.5%]", "R² [2.5%]", "rho [2.5%]", "raw MSE"]
    rows = []
    for r in reports:
        r2_bound = MISSING if r.r2_bound < 0 else _fmt(r.r2_bound)
        rows.append(
            [
                r.train_name,
                r.eval_name,
                str(r.n),
                f"{_fmt(r.mse)} [{_fmt(r.mse_bound)}]",
                f"{_fmt(r.r2)} [{r2_bound}]",
                f"{_fmt(r.rho)} [{_fmt(r.rho_bound)}]",
                _fmt(r.raw_mse, 3),
            ]
        )
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header] + rows]
    return "\n".join(lines) + "\n"


def table_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in reports:
        w.writerow([r.train_name, r.eval_name, r.n] + [repr(float(getattr(r, k))) for k in TABLE_COLUMNS[3:]])
    return buf.getvalue()


def table_report(reports) -> tuple[str, str]:
    """The evaluation table as ``(text, csv)``."""
    reports = list(reports)
    return format_table(reports), table_csv(reports)


def read_table_csv(text: str) -> list[EvalReport]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            EvalReport(
                row["train"],
                row["eval"],
                float(row["mse"]),
                float(row["r2"]),
                float(row["rho"]),
                float(row["mse_bound"]),
                float(row["r2_bound"]),
                float(row["rho_bound"]),
                int(row["n"]),
                float(row["raw_mse"]),
            )
        )
    return out
