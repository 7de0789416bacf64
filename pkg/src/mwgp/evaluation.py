"""Point metrics and quantile-stratified (QP) evaluation of predictive uncertainty."""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySet


@dataclass
class PredictionSet:
    mean: np.ndarray
    std: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64)
            if self.y.shape != self.mean.shape:
                raise ValueError("ground truth and predictions differ in length")
        if self.std.shape != self.mean.shape:
            raise ValueError("mean and std differ in length")

    def __len__(self):
        return self.mean.shape[0]

    def with_truth(self, y):
        return PredictionSet(self.mean, self.std, y)

    def subset(self, mask):
        return PredictionSet(self.mean[mask], self.std[mask], None if self.y is None else self.y[mask])


def _errors(preds):
    if preds.y is None:
        raise ValueError("prediction set has no ground truth attached")
    if len(preds) == 0:
        raise EmptySet("cannot evaluate an empty prediction set")
    return preds.mean - preds.y


def rmse(preds):
    e = _errors(preds)
    return float(np.sqrt(np.mean(e**2)))


def mae(preds):
    return float(np.mean(np.abs(_errors(preds))))


METRICS = {"rmse": rmse, "mae": mae}


@dataclass
class QpCurve:
    metric: str
    q: list = field(default_factory=list)
    values: list = field(default_factory=list)
    counts: list = field(default_factory=list)

    def __len__(self):
        return len(self.q)

    def at(self, q):
        """Value at the grid point closest to ``q``."""
        k = int(np.argmin(np.abs(np.asarray(self.q) - q)))
        return self.values[k]

    def rows(self):
        return list(zip(self.q, self.values, self.counts))


def qp_curve(preds, num_quantiles=10, metric="rmse"):
    """Metric over the predictions whose std is at most the q-quantile, q = 1/Q, ..., 1.

    The q-quantile is the nearest-rank value: the ceil(q*n)-th smallest std.
    Every prediction tied with the threshold is included.
    """
    if num_quantiles < 1:
        raise ValueError("num_quantiles must be >= 1")
    fn = METRICS[metric]
    n = len(preds)
    if n == 0:
        raise EmptySet("cannot build a QP curve from an empty prediction set")
    s_sorted = np.sort(preds.std)
    curve = QpCurve(metric)
    for k in range(1, num_quantiles + 1):
        rank = (k * n + num_quantiles - 1) // num_quantiles  # ceil(k/Q * n) in integers
        mask = preds.std <= s_sorted[rank - 1]
        curve.q.append(k / num_quantiles)
        curve.values.append(fn(preds.subset(mask)))
        curve.counts.append(int(mask.sum()))
    return curve


def export_qp_csv(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "metric", "value", "count"])
        for q, v, c in curve.rows():
            w.writerow([f"{q:.6g}", curve.metric, f"{v:.6g}", c])


def read_qp_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    curve = QpCurve(rows[0]["metric"] if rows else "rmse")
    for row in rows:
        curve.q.append(float(row["q"]))
        curve.values.append(float(row["value"]))
        curve.counts.append(int(row["count"]))
    return curve


def summarize(preds, num_quantiles=10):
    """Metrics dict in the layout printed by the CLI."""
    curve_rmse = qp_curve(preds, num_quantiles, "rmse")
    curve_mae = qp_curve(preds, num_quantiles, "mae")
    out = {"rmse": rmse(preds), "mae": mae(preds), "n": len(preds), "quantiles": {}}
    for q in (0.8, 0.9, 1.0):
        out["quantiles"][f"{q:.1f}"] = {
            "rmse": qp_at(preds, q, "rmse"),
            "mae": qp_at(preds, q, "mae"),
        }
    out["qp_rmse"] = curve_rmse.values
    out["qp_mae"] = curve_mae.values
    return out


def qp_at(preds, q, metric="rmse"):
    """d_q at an arbitrary q in (0, 1] using the same nearest-rank rule."""
    n = len(preds)
    rank = max(1, int(np.ceil(q * n - 1e-9)))
    threshold = np.sort(preds.std)[rank - 1]
    return METRICS[metric](preds.subset(preds.std <= threshold))
