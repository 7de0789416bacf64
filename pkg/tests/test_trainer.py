import csv

import numpy as np
import pytest

from mwgp.data import Dataset, center, synthetic_low_rank
from mwgp.errors import InvalidConfig, NonFiniteObjective
from mwgp.model import ModelConfig, flatten_params, init_model, with_y_mean
from mwgp.serialization import load_checkpoint
from mwgp.trainer import AdamState, TrainOptions, adam_step, train


def small_problem(seed=0, m=8):
    task = synthetic_low_rank(12, 10, rank=2, observed=0.5, noise=0.1, seed=seed)
    data, y_mean = center(task.train)
    state = with_y_mean(init_model(ModelConfig(12, 10, 2, m, seed=seed)), y_mean)
    return state, data


def test_adam_zero_gradient():
    x = np.array([1.0, -2.0])
    out, _ = adam_step(x, np.zeros(2), AdamState.zeros(2))
    np.testing.assert_array_equal(out, x)


def test_adam_first_step_magnitude_and_sign():
    x = np.zeros(3)
    g = np.array([0.5, -3.0, 1e-3])
    out, mom = adam_step(x, g, AdamState.zeros(3), lr=0.01)
    # m_hat = g, v_hat = g^2 at t = 1, so the step is lr * g / (|g| + eps)
    np.testing.assert_allclose(out, 0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    np.testing.assert_allclose(np.abs(out), 0.01, rtol=1e-4)
    assert np.all(np.sign(out) == np.sign(g))
    assert mom.t == 1


def test_option_validation():
    with pytest.raises(InvalidConfig):
        TrainOptions(epochs=0).validate()
    with pytest.raises(InvalidConfig):
        TrainOptions(batch_size=0).validate()
    with pytest.raises(InvalidConfig):
        TrainOptions(adam_beta2=1.0).validate()


def test_single_step_when_batch_covers_data():
    state, data = small_problem()
    _, hist = train(state, data, TrainOptions(batch_size=10_000, epochs=1))
    assert hist.steps == [1]


def test_step_count_with_short_last_batch():
    state, data = small_problem()
    n = len(data)
    _, hist = train(state, data, TrainOptions(batch_size=7, epochs=2))
    per_epoch = -(-n // 7)
    assert hist.steps == list(range(1, 2 * per_epoch + 1))


def test_inducing_cannot_exceed_data():
    state, data = small_problem(m=8)
    with pytest.raises(InvalidConfig):
        train(state, data.subset(np.arange(5)), TrainOptions(epochs=1))


def test_reproducible():
    opts = TrainOptions(batch_size=16, epochs=3, shuffle_seed=4)
    s1, _ = train(*small_problem(), opts)
    s2, _ = train(*small_problem(), opts)
    np.testing.assert_array_equal(flatten_params(s1)[0], flatten_params(s2)[0])


def test_elbo_settles_upward():
    task = synthetic_low_rank(50, 50, rank=2, observed=0.3, noise=0.1, seed=0)
    data, y_mean = center(task.train)
    state = with_y_mean(init_model(ModelConfig(50, 50, 4, 32, seed=0)), y_mean)
    _, hist = train(state, data, TrainOptions(batch_size=len(data), epochs=100, track_full_elbo=True,
                                              log_every=0))
    elbo = np.array(hist.epoch_elbo)
    assert elbo[-1] > elbo[0]
    tail = elbo[-10:]
    tol = 0.01 * np.abs(tail).max()
    assert np.all(np.diff(tail) >= -tol)


def test_log_and_checkpoint(tmp_path):
    state, data = small_problem()
    opts = TrainOptions(batch_size=20, epochs=2, log_path=str(tmp_path / "h.csv"),
                        checkpoint_every=1, checkpoint_path=str(tmp_path / "ck.mwgp"))
    final, hist = train(state, data, opts)
    with open(tmp_path / "h.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["step", "epoch", "elbo", "data_fit", "kl", "seconds"]
    assert len(rows) == len(hist.records)
    steps = [int(r["step"]) for r in rows]
    assert steps == sorted(set(steps))
    ck_state, moments, header = load_checkpoint(tmp_path / "ck.mwgp")
    assert header["epoch"] == 2
    np.testing.assert_array_equal(flatten_params(ck_state)[0], flatten_params(final)[0])
    assert moments.t == hist.steps[-1]


def test_non_finite_aborts_and_keeps_checkpoint(tmp_path):
    state, data = small_problem()
    bad = data.with_ratings(np.where(np.arange(len(data)) == 3, np.nan, data.ratings))
    opts = TrainOptions(batch_size=len(data), epochs=1, checkpoint_path=str(tmp_path / "ck.mwgp"))
    with pytest.raises(NonFiniteObjective):
        train(state, bad, opts)
    kept, _, header = load_checkpoint(tmp_path / "ck.mwgp")
    np.testing.assert_array_equal(flatten_params(kept)[0], flatten_params(state)[0])


def test_early_stopping():
    state, data = small_problem()
    # predictions start at the training mean, so an all-mean validation set only gets worse
    val = Dataset.from_arrays([0, 1, 2], [0, 1, 2], np.full(3, state.y_mean), 12, 10)
    _, hist = train(state, data, TrainOptions(batch_size=len(data), epochs=300, patience=3), validation=val)
    assert hist.stopped_early
    assert len(hist.val_rmse) == 4
