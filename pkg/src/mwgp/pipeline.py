"""End-to-end fit/evaluate helpers shared by the CLI and the experiment scripts."""
import logging
from dataclasses import dataclass, fields

import numpy as np

from .data import center, holdout_split, kfold_split
from .evaluation import qp_curve, summarize
from .model import ModelConfig, init_model, with_y_mean
from .svgp import predict
from .trainer import TrainOptions, train

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Every knob of a run. Field names double as config-file keys (``-`` or ``_``)."""

    data: str = ""
    format: str = "movielens-dat"
    out: str = "run"
    rank: int = 8
    inducing: int = 128
    batch_size: int = 65536
    epochs: int = 500
    lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    jitter: float = 1e-6
    centering: bool = True
    quantiles: int = 10
    folds: int = 5
    validation_fraction: float = 0.05
    patience: int = 0
    checkpoint_every: int = 0
    log_every: int = 1
    jester_count_column: bool = False

    def model_config(self, num_users, num_items):
        return ModelConfig(num_users, num_items, self.rank, self.inducing, self.seed,
                           self.jitter, self.centering)

    def train_options(self, out_dir=None):
        return TrainOptions(
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.lr,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            shuffle_seed=self.seed,
            checkpoint_every=self.checkpoint_every,
            checkpoint_path=f"{out_dir}/checkpoint.mwgp" if out_dir and self.checkpoint_every else None,
            log_every=self.log_every,
            log_path=f"{out_dir}/history.csv" if out_dir else None,
            patience=self.patience,
        )

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}


def fit(train_data, cfg, out_dir=None):
    """Center, split off the monitoring set, initialize and train. Returns (state, history)."""
    if cfg.validation_fraction > 0 and len(train_data) > 20:
        fit_data, val_data = holdout_split(train_data, cfg.validation_fraction, seed=cfg.seed + 1)
    else:
        fit_data, val_data = train_data, None
    if cfg.centering:
        fit_data, y_mean = center(fit_data)
    else:
        y_mean = 0.0
    model_cfg = cfg.model_config(train_data.num_users, train_data.num_items)
    if model_cfg.num_inducing > len(fit_data):
        log.warning("reducing inducing pairs from %d to %d (training set size)",
                    model_cfg.num_inducing, len(fit_data))
        cfg_m = min(model_cfg.num_inducing, len(fit_data))
        model_cfg = ModelConfig(**{**model_cfg.__dict__, "num_inducing": cfg_m})
    state = with_y_mean(init_model(model_cfg), y_mean)
    return train(state, fit_data, cfg.train_options(out_dir), validation=val_data)


def evaluate(state, test_data, num_quantiles=10):
    preds = predict(state, test_data).with_truth(test_data.ratings)
    return preds, summarize(preds, num_quantiles), qp_curve(preds, num_quantiles, "rmse")


def crossval(data, cfg, fold_callback=None, parallel=False):
    """k-fold cross-validation; returns (per-fold summaries, aggregate)."""
    split = kfold_split(data, cfg.folds, cfg.seed)
    jobs = [(fold, *split.split(data, fold)) for fold in range(cfg.folds)]
    if parallel:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_run_fold, [(cfg, f, tr, te) for f, tr, te in jobs]))
    else:
        results = [_run_fold((cfg, f, tr, te)) for f, tr, te in jobs]
    reports = []
    for (fold, _, _), (state, summary) in zip(jobs, results):
        summary["fold"] = fold
        reports.append(summary)
        if fold_callback:
            fold_callback(fold, state, summary)
    return reports, aggregate(reports)


def _run_fold(args):
    cfg, fold, train_data, test_data = args
    state, _ = fit(train_data, cfg)
    _, summary, _ = evaluate(state, test_data, cfg.quantiles)
    log.info("fold %d: rmse %.4f mae %.4f", fold, summary["rmse"], summary["mae"])
    return state, summary


def aggregate(reports):
    def stats(values):
        values = np.asarray(values, dtype=np.float64)
        return {"mean": float(values.mean()), "std": float(values.std(ddof=1)) if values.size > 1 else 0.0}

    out = {
        "folds": len(reports),
        "rmse": stats([r["rmse"] for r in reports]),
        "mae": stats([r["mae"] for r in reports]),
        "quantiles": {},
        "qp_rmse": [stats(col) for col in zip(*[r["qp_rmse"] for r in reports])],
        "qp_mae": [stats(col) for col in zip(*[r["qp_mae"] for r in reports])],
    }
    for q in reports[0]["quantiles"]:
        out["quantiles"][q] = {
            metric: stats([r["quantiles"][q][metric] for r in reports]) for metric in ("rmse", "mae")
        }
    return out
