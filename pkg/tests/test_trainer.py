import numpy as np
import pytest

from graphnorm import autodiff as ad
from graphnorm.gnn import forward_batch, init_model
from graphnorm.netdata import simulate_population, split_folds
from graphnorm.trainer import (
    AdamState,
    TrainConfig,
    TrainingError,
    _LossContext,
    adam_step,
    loss_and_grads,
    refine,
    run_cv,
    train_fold,
)

from conftest import small_spec

FAST = dict(dims=(6, 4, 3), hidden=8, subset_size=4)


def test_first_adam_step():
    cfg = TrainConfig()
    out, _ = adam_step({"p": np.array(1.0)}, {"p": np.array(1.0)}, AdamState(), cfg, 1)
    assert float(out["p"]) == pytest.approx(1.0 - 0.0006 / (1 + 1e-8), abs=1e-15)
    assert float(out["p"]) == pytest.approx(0.99940, abs=1e-5)


def test_zero_gradient_is_fixed_point():
    cfg = TrainConfig()
    p, state = {"w": np.array([1.0, -2.0])}, AdamState()
    for t in range(1, 20):
        p, state = adam_step(p, {"w": np.zeros(2)}, state, cfg, t)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_rejects_nonfinite():
    with pytest.raises(TrainingError, match="w"):
        adam_step({"w": np.ones(2)}, {"w": np.array([np.nan, 0.0])}, AdamState(), TrainConfig(), 1)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(patience=10, max_epochs=10).validate()
    with pytest.raises(ValueError):
        TrainConfig(lr=-1).validate()
    with pytest.raises(ValueError):
        TrainConfig(readout="max").validate()


def test_training_makes_progress():
    X = simulate_population(small_spec(n_subjects=20)).tensor()
    res = train_fold(X[:16], X[16:], TrainConfig(max_epochs=200, patience=199, seed=0))
    assert res.history[-1].train_loss < res.history[0].train_loss
    assert len(res.history) == 200


def test_early_stop_on_plateau(small_population):
    X = small_population.tensor()
    res = train_fold(X[:6], X[6:], TrainConfig(lr=0.0, patience=1, max_epochs=50, **FAST))
    assert res.stopped_epoch == 2 and res.best_epoch == 1


def test_best_model_restored(small_population):
    X = small_population.tensor()
    res = train_fold(X[:6], X[6:], TrainConfig(max_epochs=40, patience=5, lr=0.01, **FAST))
    assert res.best_test_loss == min(r.test_loss for r in res.history)
    ctx = _LossContext(X[:6])
    subsets = np.tile(np.arange(6), (2, 1))
    again = loss_and_grads(res.model, X[6:], subsets, ctx, 25.0, need_grad=False)[0]
    assert again == pytest.approx(res.best_test_loss, abs=1e-12)


def test_training_deterministic(small_population):
    X = small_population.tensor()
    cfg = TrainConfig(max_epochs=15, patience=5, **FAST)
    a, b = train_fold(X[:6], X[6:], cfg), train_fold(X[:6], X[6:], cfg)
    strip = lambda h: [(r.epoch, r.train_loss, r.test_loss, r.train_centeredness, r.train_kl) for r in h]
    assert strip(a.history) == strip(b.history)
    assert a.refined_template.tobytes() == b.refined_template.tobytes()


def test_beta_zero_logs_zero_kl(small_population):
    X = small_population.tensor()
    res = train_fold(X[:6], X[6:], TrainConfig(max_epochs=5, patience=2, beta=0.0, **FAST))
    assert all(r.train_kl == 0.0 for r in res.history)
    assert all(r.train_loss == pytest.approx(r.train_centeredness, rel=1e-14) for r in res.history)


def test_mean_gradient_is_gradient_of_mean(small_population):
    X = small_population.tensor()[:3]
    model = init_model((4, 3, 2), n_v=2, hidden=5, seed=4)
    ctx = _LossContext(X)
    subsets = np.array([[1, 2], [0, 2], [0, 1]])
    _, _, _, g_all = loss_and_grads(model, X, subsets, ctx, 2.0)
    singles = [loss_and_grads(model, X[i : i + 1], subsets[i : i + 1], ctx, 2.0)[3] for i in range(3)]
    for k in g_all:
        np.testing.assert_allclose(g_all[k], np.mean([s[k] for s in singles], axis=0), atol=1e-12)


def test_subset_larger_than_train(small_population):
    X = small_population.tensor()
    with pytest.raises(TrainingError):
        train_fold(X[:3], X[3:], TrainConfig(max_epochs=5, patience=2, **FAST))


def test_refine_medians(monkeypatch):
    import graphnorm.trainer as tr

    for vals, expected in (([1.0, 2.0, 9.0], 2.0), ([1.0, 3.0], 2.0)):
        T = np.zeros((len(vals), 2, 2))
        T[:, 0, 1] = T[:, 1, 0] = vals
        monkeypatch.setattr(tr, "forward_batch", lambda model, X, T=T: (None, T))
        assert refine(None, np.zeros((len(vals), 2, 2, 1)))[0, 1] == expected


def test_refine_identical_subjects(small_population):
    X = np.repeat(small_population.tensor()[:1], 4, axis=0)
    model = init_model((4, 3, 2), n_v=2, hidden=5)
    np.testing.assert_array_equal(refine(model, X), forward_batch(model, X[:1])[1][0])


def test_run_cv_shapes_and_seeds():
    pop = simulate_population(small_spec(n_subjects=20))
    cfg = TrainConfig(max_epochs=4, patience=2, **FAST)
    report = run_cv(pop, 5, cfg)
    assert len(report.results) == 5 and len(report.centeredness) == 5
    assert all(len(split_folds(pop, 5, 0).train_indices(f)) == 16 for f in range(5))
    assert report.mean_centeredness == pytest.approx(np.mean(report.centeredness))
    seeds = [r.model.seed for r in report.results]
    assert seeds == [0, 1, 2, 3, 4]
    again = run_cv(pop, 5, cfg)
    for a, b in zip(report.results, again.results):
        assert a.refined_template.tobytes() == b.refined_template.tobytes()


def test_run_cv_parallel_matches_serial():
    pop = simulate_population(small_spec(n_subjects=10))
    cfg = TrainConfig(max_epochs=3, patience=2, **FAST)
    serial, parallel = run_cv(pop, 2, cfg), run_cv(pop, 2, cfg, jobs=2)
    for a, b in zip(serial.results, parallel.results):
        assert a.refined_template.tobytes() == b.refined_template.tobytes()
