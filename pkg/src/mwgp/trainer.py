"""Minibatch training loop: shuffled epochs, joint Adam ascent on every parameter."""
import csv
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FactorizationFailure, InvalidConfig, NonFiniteObjective
from .gradients import elbo_grad
from .model import flatten_params, unflatten_params
from .svgp import elbo_minibatch, predict

log = logging.getLogger(__name__)


@dataclass
class TrainOptions:
    batch_size: int = 65536
    epochs: int = 500
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle_seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 disables
    checkpoint_path: str | None = None
    log_every: int = 1  # steps
    log_path: str | None = None
    # early stopping on validation RMSE; 0 disables
    patience: int = 0
    track_full_elbo: bool = False

    def validate(self):
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.epochs < 1:
            raise InvalidConfig("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be positive")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1)")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    epoch_elbo: list = field(default_factory=list)  # full-data bound at epoch ends
    val_rmse: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def steps(self):
        return [r["step"] for r in self.records]


def adam_step(params, grads, moments, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step in the ascent direction; updates ``moments`` in place."""
    moments.t += 1
    moments.m *= beta1
    moments.m += (1.0 - beta1) * grads
    moments.v *= beta2
    moments.v += (1.0 - beta2) * grads**2
    m_hat = moments.m / (1.0 - beta1**moments.t)
    v_hat = moments.v / (1.0 - beta2**moments.t)
    return params + lr * m_hat / (np.sqrt(v_hat) + eps), moments


LOG_FIELDS = ["step", "epoch", "elbo", "data_fit", "kl", "seconds"]


class _CsvLog:
    def __init__(self, path):
        self.path = path
        self.fh = None
        if path:
            new = not os.path.exists(path)
            self.fh = open(path, "a", newline="")
            self.writer = csv.writer(self.fh)
            if new:
                self.writer.writerow(LOG_FIELDS)

    def write(self, rec):
        if self.fh:
            self.writer.writerow([rec[k] for k in LOG_FIELDS])

    def close(self):
        if self.fh:
            self.fh.close()


def train(state, data, opts=None, validation=None, moments=None):
    """Fit ``state`` to ``data`` (ratings already centered by ``state.y_mean``).

    ``validation`` is an optional uncentered dataset used only for monitoring
    and early stopping. Returns (state, history).
    """
    from .serialization import save_checkpoint

    opts = opts or TrainOptions()
    opts.validate()
    n_total = len(data)
    if n_total == 0:
        raise ValueError("training data is empty")
    cfg = state.config
    if cfg.num_inducing > n_total:
        raise InvalidConfig(f"num_inducing={cfg.num_inducing} exceeds {n_total} training triples")
    if data.users.max() >= cfg.num_users or data.items.max() >= cfg.num_items:
        raise InvalidConfig("dataset indices exceed the model's user/item ranges")

    theta, layout = flatten_params(state)
    moments = moments or AdamState.zeros(layout.size)
    rng = np.random.default_rng(opts.shuffle_seed)
    history = TrainHistory()
    csv_log = _CsvLog(opts.log_path)
    t0 = time.perf_counter()
    step = 0
    best_val, bad_epochs = np.inf, 0
    bs = min(opts.batch_size, n_total)
    try:
        for epoch in range(opts.epochs):
            perm = rng.permutation(n_total)
            for start in range(0, n_total, bs):
                idx = perm[start:start + bs]
                batch = (data.users[idx], data.items[idx], data.ratings[idx])
                current = unflatten_params(theta, state)
                try:
                    elbo, grad = elbo_grad(current, batch, n_total)
                except FactorizationFailure as exc:
                    raise FactorizationFailure(f"epoch {epoch} step {step}: {exc}") from exc
                if not (np.isfinite(elbo.total) and np.all(np.isfinite(grad))):
                    raise NonFiniteObjective(f"non-finite objective at epoch {epoch} step {step}")
                new_theta, moments = adam_step(theta, grad, moments, opts.learning_rate,
                                               opts.adam_beta1, opts.adam_beta2, opts.adam_eps)
                if not np.all(np.isfinite(new_theta)):
                    raise NonFiniteObjective(f"non-finite parameters after step {step}")
                theta = new_theta
                step += 1
                if opts.log_every and step % opts.log_every == 0:
                    rec = dict(step=step, epoch=epoch, elbo=elbo.total, data_fit=elbo.data_fit,
                               kl=elbo.kl, trace_sigma=elbo.trace_sigma,
                               trace_knn_qnn=elbo.trace_knn_qnn,
                               seconds=time.perf_counter() - t0)
                    history.records.append(rec)
                    csv_log.write(rec)
                    log.debug("epoch %d step %d elbo %.4f", epoch, step, elbo.total)

            state = unflatten_params(theta, state)
            if opts.track_full_elbo:
                history.epoch_elbo.append(elbo_minibatch(state, data, n_total).total)
            if opts.checkpoint_every and opts.checkpoint_path and (epoch + 1) % opts.checkpoint_every == 0:
                save_checkpoint(opts.checkpoint_path, state, moments, epoch=epoch + 1)
            if validation is not None and len(validation):
                err = predict(state, validation).mean - validation.ratings
                val = float(np.sqrt(np.mean(err**2)))
                history.val_rmse.append(val)
                if val < best_val - 1e-6:
                    best_val, bad_epochs = val, 0
                else:
                    bad_epochs += 1
                if opts.patience and bad_epochs >= opts.patience:
                    log.info("early stop at epoch %d (val rmse %.4f)", epoch, val)
                    history.stopped_early = True
                    break
    except NonFiniteObjective:
        # last good parameters survive in the checkpoint
        if opts.checkpoint_path:
            save_checkpoint(opts.checkpoint_path, unflatten_params(theta, state), moments, epoch=-1)
        raise
    finally:
        csv_log.close()
    return unflatten_params(theta, state), history
