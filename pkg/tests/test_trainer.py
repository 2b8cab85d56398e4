import numpy as np
import pytest

from toolbody import sim
from toolbody.dataset import GraspGroup, TrainSet, collect_sim
from toolbody.mlp import NormStats, forward, init_mlp, to_bytes
from toolbody.trainer import TrainConfig, dataset_mse, finetune, train_offline

SMALL = dict(hidden=(32, 32), batch_size=50)


@pytest.fixture(scope="module")
def small_set():
    return collect_sim(sim.pr2_like_arm(), sim.ToolModel(), sim.pr2_grasp_grid()[::4], 150, seed=0)


def test_recovers_frozen_random_network():
    # targets from a fixed random net at p=0: the architecture can fit them exactly
    teacher = init_mlp(3, 2, (16,), seed=11)
    u = np.random.default_rng(0).uniform(-2, 2, (400, 3))
    x = forward(teacher, u, np.zeros(2))
    ds = TrainSet([GraspGroup(0, u, x)])
    res = train_offline(ds, TrainConfig(hidden=(32,), batch_size=40, epochs=300, seed=1,
                                        learning_rate=3e-3))
    assert res.final_mse < 1e-3


def test_zero_epochs_is_initialization(small_set):
    cfg = TrainConfig(epochs=0, seed=3, **SMALL)
    res = train_offline(small_set, cfg)
    ref = init_mlp(7, 2, cfg.hidden, seed=3)
    for a, b in zip(res.model.weights, ref.weights):
        np.testing.assert_array_equal(a, b)
    assert all(np.all(v == 0) for v in res.latents.values())
    assert res.history == [(0, res.initial_mse)]


def test_loss_decreases_and_history_shape(small_set):
    res = train_offline(small_set, TrainConfig(epochs=30, **SMALL))
    assert len(res.history) == 31
    assert res.final_mse < res.initial_mse
    assert res.final_mse == pytest.approx(dataset_mse(res.model, small_set, res.latents))
    assert sorted(res.latents) == small_set.grasp_ids


def test_fixed_seed_is_bit_identical(small_set):
    cfg = TrainConfig(epochs=5, seed=4, **SMALL)
    a = train_offline(small_set, cfg)
    b = train_offline(small_set, cfg)
    assert to_bytes(a.model, a.latents) == to_bytes(b.model, b.latents)


def test_group_order_does_not_matter(small_set):
    cfg = TrainConfig(epochs=5, seed=2, **SMALL)
    shuffled = TrainSet(list(reversed(small_set.groups)))
    a = train_offline(small_set, cfg)
    b = train_offline(shuffled, cfg)
    assert to_bytes(a.model, a.latents) == to_bytes(b.model, b.latents)


def test_n_batches_reading():
    cfg = TrainConfig(n_batches=300)
    assert cfg.resolved_batch_size(9000) == 30
    assert TrainConfig().resolved_batch_size(9000) == 300


def test_finetune_resets_latents_and_keeps_normalization(small_set):
    base = train_offline(small_set, TrainConfig(epochs=10, **SMALL))
    new = collect_sim(sim.pr2_like_arm(), sim.ToolModel(), sim.pr2_grasp_grid()[:2], 50,
                      seed=9, noise_mm=10.0)
    res = finetune(base.model, new, TrainConfig(epochs=0, batch_size=30, hidden=(32, 32)))
    assert all(np.all(v == 0) for v in res.latents.values())
    for a, b in zip(res.model.weights, base.model.weights):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(res.model.in_norm.mean, base.model.in_norm.mean)
    assert res.model is not base.model

    tuned = finetune(base.model, new, TrainConfig(epochs=5, batch_size=30))
    assert np.isfinite(tuned.final_mse)
    # the original is untouched by fine-tuning
    for a, b in zip(base.model.weights, res.model.weights):
        np.testing.assert_array_equal(a, b)


def test_finetune_on_training_data_does_not_reset(small_set):
    base = train_offline(small_set, TrainConfig(epochs=40, **SMALL))
    res = finetune(base.model, small_set, TrainConfig(epochs=20, **SMALL))
    assert res.final_mse <= base.final_mse * 1.5


def test_finetune_refit_normalization(small_set):
    base = train_offline(small_set, TrainConfig(epochs=1, **SMALL))
    shifted = TrainSet([GraspGroup(0, small_set.groups[0].u, small_set.groups[0].x + 1000.0)])
    res = finetune(base.model, shifted, TrainConfig(epochs=0), refit_normalization=True)
    assert not np.allclose(res.model.out_norm.mean, base.model.out_norm.mean)


def test_dimension_mismatch():
    m = init_mlp(4, 2, (8,), out_norm=NormStats(np.zeros(3), np.ones(3)))
    ds = TrainSet([GraspGroup(0, np.zeros((3, 5)), np.zeros((3, 3)))])
    with pytest.raises(ValueError, match="command dim"):
        finetune(m, ds, TrainConfig(epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_loss_is_reported(small_set):
    g = small_set.groups[0]
    x = g.x.copy()
    x[3, 1] = np.inf
    bad = TrainSet([GraspGroup(0, g.u, x)])
    with pytest.raises(FloatingPointError, match="epoch 1, batch"):
        train_offline(bad, TrainConfig(epochs=2, **SMALL))
