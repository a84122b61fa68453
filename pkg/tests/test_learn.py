import math

import numpy as np
import pytest

from python_rotkit import learn, metrics, so3
from python_rotkit.autodiff import DiffValue
from python_rotkit.const import (
    MetricType,
    OptimizerType,
    PickingPolicy,
    ProjectionType,
    RepresentationType,
    TargetSpace,
)
from python_rotkit.exceptions import ConfigError, DataError
from python_rotkit.model import Dataset, LossSpec, OutputHead, TrainConfig


@pytest.mark.parametrize(
    "widths",
    [(3,), (0, 4), (3, 4, 0), (3, -1, 2)],
    ids=["single layer", "no inputs", "no outputs", "negative"],
)
def test_model_rejects_bad_widths(widths):
    with pytest.raises(ConfigError, match="invalid layer widths"):
        learn.MLPModel(widths)


def test_model_head_width_must_match():
    with pytest.raises(ConfigError, match="needs output width 6"):
        learn.MLPModel((3, 8, 9), head=OutputHead(RepresentationType.SIXD, ProjectionType.GSO))


def test_forward_shapes(rng):
    model = learn.MLPModel((5, 8, 8, 9), rng)
    assert model.predict(rng.normal(size=(7, 5))).shape == (7, 9)
    assert len(model.parameters()) == 6
    with pytest.raises(DataError, match="expects 5 input features"):
        model.forward(np.zeros((2, 4)))


def test_zero_width_hidden_layer_outputs_bias(rng):
    model = learn.MLPModel((3, 0, 2), rng)
    assert np.array_equal(model.predict(rng.normal(size=(4, 3))), np.zeros((4, 2)))


def test_forward_function_matches_method(rng):
    model = learn.MLPModel((2, 4, 1), rng)
    x = rng.normal(size=(3, 2))
    assert np.array_equal(learn.forward(model, x).value, model.predict(x))


# loss policies


def test_validate_loss_spec_collects_errors():
    spec = LossSpec(
        MetricType.L2,
        ProjectionType.GSO,
        PickingPolicy.QUAT_PICK_I,
        TargetSpace.SO3,
        RepresentationType.NINED,
    )
    with pytest.raises(ConfigError) as exc_info:
        learn.validate_loss_spec(spec)
    assert len(exc_info.value.errors) == 3


@pytest.mark.parametrize(
    "spec, message",
    [
        (LossSpec(MetricType.L2, ProjectionType.SVD_PLUS, representation=RepresentationType.NINED), "target_space=so3"),
        (LossSpec(MetricType.QUAT_PICK_I, representation=RepresentationType.EULER), "quat head"),
        (LossSpec(MetricType.MSE, picking=PickingPolicy.QUAT_PICK_II, representation=RepresentationType.EXP), "quat head"),
        (LossSpec(MetricType.EULER_PICK, representation=RepresentationType.QUAT), "euler head"),
        (LossSpec(MetricType.CHORDAL, representation=RepresentationType.NINED), "not a representation-space metric"),
        (
            LossSpec(MetricType.GEODESIC, ProjectionType.GSO, target_space=TargetSpace.SO3, representation=RepresentationType.NINED),
            "needs a sixd head",
        ),
    ],
    ids=["projection in rep space", "pick metric", "picking policy", "euler pick", "matrix metric", "gso head"],
)
def test_invalid_loss_specs(spec, message):
    with pytest.raises(ConfigError, match=message):
        learn.validate_loss_spec(spec)


def test_loss_label():
    spec = LossSpec(MetricType.MSE, picking=PickingPolicy.QUAT_PICK_I, representation=RepresentationType.QUAT)
    assert spec.label == "mse-quat_pick_i"
    spec = LossSpec(MetricType.CHORDAL_SQ, ProjectionType.SVD_PLUS, target_space=TargetSpace.SO3)
    assert spec.label == "chordal_sq-svd_plus"


def test_vector_losses_match_metrics(rng):
    p, t = rng.normal(size=(20, 4)), rng.normal(size=(20, 4))
    t_unit = t / np.linalg.norm(t, axis=-1, keepdims=True)
    for metric, fn in [
        (MetricType.L2, metrics.l2),
        (MetricType.MSE, metrics.mse),
        (MetricType.MAE, metrics.mae),
        (MetricType.COSINE, metrics.cosine_distance),
        (MetricType.QUAT_PICK_I, metrics.quat_pick_i),
    ]:
        spec = LossSpec(metric, representation=RepresentationType.QUAT)
        value = learn.loss(spec, DiffValue(p), t_unit).value
        assert value == pytest.approx(np.mean(fn(p, t_unit)))


def test_picking_policies_are_sign_invariant(rng):
    p = rng.normal(size=(20, 4))
    t = rng.normal(size=(20, 4))
    t /= np.linalg.norm(t, axis=-1, keepdims=True)
    for picking in (PickingPolicy.QUAT_PICK_I, PickingPolicy.QUAT_PICK_II):
        spec = LossSpec(MetricType.MSE, picking=picking, representation=RepresentationType.QUAT)
        assert learn.loss(spec, DiffValue(p), t).value == pytest.approx(learn.loss(spec, DiffValue(p), -t).value)


def test_so3_losses(rotations):
    r = rotations[:50]
    nined = so3.vec(r)
    for metric in (MetricType.CHORDAL, MetricType.CHORDAL_SQ):
        spec = LossSpec(metric, ProjectionType.SVD_PLUS, target_space=TargetSpace.SO3, representation=RepresentationType.NINED)
        assert learn.loss(spec, DiffValue(nined), r).value == pytest.approx(0.0, abs=1e-12)
    spec = LossSpec(MetricType.GEODESIC, ProjectionType.GSO, target_space=TargetSpace.SO3, representation=RepresentationType.SIXD)
    flipped = r @ so3.rot_z(math.pi / 2)
    value = learn.loss(spec, DiffValue(nined[:, :6]), flipped).value
    assert value == pytest.approx(math.pi / 2)


def test_prediction_to_matrix_normalizes_quaternions():
    r = learn.prediction_to_matrix(RepresentationType.QUAT, [[2.0, 0.0, 0.0, 0.0]])
    assert np.allclose(r, np.eye(3))
    r = learn.prediction_to_matrix(RepresentationType.NINED, so3.vec(2.0 * np.eye(3)))
    assert np.allclose(r, np.eye(3))


# optimizers


def test_gd_momentum_step():
    params, state = learn.gd_momentum_step([np.array([1.0])], [np.array([2.0])], None, 0.1, 0.9)
    assert params[0] == pytest.approx(0.8)
    params, state = learn.gd_momentum_step(params, [np.array([2.0])], state, 0.1, 0.9)
    assert state[0] == pytest.approx(3.8)
    assert params[0] == pytest.approx(0.8 - 0.38)


def test_adam_first_step_moves_by_learning_rate():
    params, state = learn.adam_step([np.array([1.0, 1.0])], [np.array([4.0, -0.01])], None, 0.1, (0.9, 0.999))
    assert np.allclose(params[0], [0.9, 1.1], atol=1e-6)
    assert state.t == 1


def test_make_optimizer():
    assert isinstance(learn.make_optimizer(TrainConfig()), learn.Adam)
    sgd = learn.make_optimizer(TrainConfig(optimizer=OptimizerType.SGD_MOMENTUM, momentum=0.5))
    assert isinstance(sgd, learn.SGDMomentum)
    assert sgd.momentum == 0.5


def test_train_config_collects_errors():
    with pytest.raises(ConfigError) as exc_info:
        TrainConfig(learning_rate=0.0, batch_size=0, patience=200)
    assert len(exc_info.value.errors) == 3


# training


def _regression(rng, n):
    x = rng.normal(size=(n, 3))
    a = np.array([[1.0, 0.5, 0.0], [0.0, -1.0, 0.3], [0.2, 0.0, 0.8]])
    return Dataset(x, x @ a)


def test_train_reduces_loss(rng):
    train_set, val_set = _regression(rng, 256), _regression(rng, 64)
    spec = LossSpec(MetricType.MSE, representation=RepresentationType.EXP)
    model = learn.MLPModel((3, 32, 3), np.random.default_rng(1))
    before = learn.evaluate(model, val_set, spec)
    config = TrainConfig(learning_rate=1e-2, batch_size=32, max_epochs=60, patience=None)
    result = learn.train(model, train_set, spec, config, val_set)
    assert len(result.history) == 60
    assert not result.stopped_early
    assert result.best_val_loss < 0.2 * before
    assert learn.evaluate(model, val_set, spec) == result.best_val_loss


def test_train_is_deterministic(rng):
    train_set, val_set = _regression(rng, 64), _regression(rng, 16)
    spec = LossSpec(MetricType.L2, representation=RepresentationType.EXP)
    config = TrainConfig(learning_rate=1e-2, batch_size=16, max_epochs=5, seed=3)
    histories = []
    for _ in range(2):
        model = learn.MLPModel((3, 8, 3), np.random.default_rng(4))
        histories.append(learn.train(model, train_set, spec, config, val_set).history)
    assert histories[0] == histories[1]


def test_early_stopping_keeps_best_epoch(rng):
    # noise targets: validation loss cannot keep improving
    train_set = Dataset(rng.normal(size=(64, 3)), rng.normal(size=(64, 3)))
    val_set = Dataset(rng.normal(size=(32, 3)), rng.normal(size=(32, 3)))
    spec = LossSpec(MetricType.MSE, representation=RepresentationType.EXP)
    model = learn.MLPModel((3, 64, 3), np.random.default_rng(2))
    config = TrainConfig(learning_rate=0.1, batch_size=8, max_epochs=50, patience=0)
    result = learn.train(model, train_set, spec, config, val_set)
    assert result.stopped_early
    assert len(result.history) < 50
    assert result.history[result.best_epoch - 1].val_loss == result.best_val_loss
    assert learn.evaluate(model, val_set, spec) == result.best_val_loss


def test_batch_transform_sees_every_batch(rng):
    train_set, val_set = _regression(rng, 40), _regression(rng, 8)
    seen = []

    def transform(inputs, targets, generator):
        seen.append(len(inputs))
        return inputs, targets

    spec = LossSpec(MetricType.MSE, representation=RepresentationType.EXP)
    config = TrainConfig(batch_size=16, max_epochs=2, patience=None)
    learn.train(learn.MLPModel((3, 4, 3)), train_set, spec, config, val_set, batch_transform=transform)
    assert seen == [16, 16, 8, 16, 16, 8]


def test_dataset_checks():
    with pytest.raises(DataError, match="differ in length"):
        Dataset(np.zeros((3, 2)), np.zeros((2, 2)))
    with pytest.raises(DataError, match="empty"):
        Dataset(np.zeros((0, 2)), np.zeros((0, 2)))


# checkpoints


def test_checkpoint_round_trip(tmp_path, rng):
    head = OutputHead(RepresentationType.QUAT, halfspace=True)
    model = learn.MLPModel((5, 7, 0, 4), rng, head)
    path = learn.save_checkpoint(model, tmp_path / "model.ckpt")
    loaded = learn.load_checkpoint(path)
    assert loaded.widths == model.widths
    assert loaded.head == head
    for a, b in zip(loaded.get_state(), model.get_state(), strict=True):
        assert np.array_equal(a, b)
    x = rng.normal(size=(3, 5))
    assert np.array_equal(loaded.predict(x), model.predict(x))


def test_checkpoint_header_errors():
    with pytest.raises(DataError, match="line 1: not a model checkpoint"):
        learn.checkpoint_from_text("hello\n")
    with pytest.raises(DataError, match="line 1: malformed widths"):
        learn.checkpoint_from_text("# rotkit-mlp widths=a,b head=none\n")


def test_checkpoint_truncated(rng):
    text = learn.checkpoint_to_text(learn.MLPModel((2, 3, 1), rng))
    lines = text.splitlines()
    with pytest.raises(DataError, match="line 5: expected 3 values"):
        learn.checkpoint_from_text("\n".join([*lines[:4], "1 2"]))
    with pytest.raises(DataError, match="ends early"):
        learn.checkpoint_from_text("\n".join(lines[:3]))
