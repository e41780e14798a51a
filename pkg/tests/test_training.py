import numpy as np
import pandas as pd
import pytest
import yaml

from squaremamba import training
from squaremamba.autodiff import Tensor
from squaremamba.config import TrainConfig
from squaremamba.dataset import DatasetSplit, Samples, build_splits
from squaremamba.errors import (
    DivergenceError,
    NonFiniteError,
    NonFiniteGradientError,
    UsageError,
)
from squaremamba.io import load_checkpoint, load_records, read_manifest, save_checkpoint
from squaremamba.model import SquareMamba
from squaremamba.simulations import synthetic_dataset
from squaremamba.training import (
    AdamW,
    OptimizerState,
    adamw_step,
    cosine_lr,
    evaluate,
    minibatches,
    mse_loss,
    train,
)

CENTER = (-29.25, 153.25)
TINY = TrainConfig(epochs=2, batch_size=3)


def tiny_dataset(seed=0, sizes=(6, 4, 3)):
    rng = np.random.default_rng(seed)

    def samples(count, start):
        tz = rng.normal(size=(count, 105, 3, 3))
        months = pd.period_range(start, periods=count, freq="M")
        return Samples(tz[:, :, 1, 1].copy(), tz, rng.uniform(-2, 2, count), months)

    return DatasetSplit(
        samples(sizes[0], "1970-01"),
        samples(sizes[1], "1990-01"),
        samples(sizes[2], "2010-01"),
        location=CENTER,
    )


# loss and optimizer
# ------------------


def test_mse_loss():
    assert mse_loss([0.5, -1.0], [0.5, -1.0]).item() == 0.0
    assert mse_loss([1.0, -1.0], [0.0, 0.0]).item() == 1.0
    with pytest.raises(UsageError):
        mse_loss([], [])
    with pytest.raises(UsageError):
        mse_loss([1.0], [1.0, 2.0])


def test_adamw_zero_gradient():
    p = Tensor([1.0, -2.0], requires_grad=True)
    p.grad = np.zeros(2)
    adamw_step([("p", p)], OptimizerState(weight_decay=0.0))
    np.testing.assert_equal(p.values, [1.0, -2.0])


def test_adamw_first_step():
    p = Tensor([1.0, -2.0], requires_grad=True)
    p.grad = np.array([0.5, -3.0])
    state = OptimizerState(lr=0.1, weight_decay=0.01)
    adamw_step([("p", p)], state)
    # bias-corrected first step moves by lr·g/(|g| + eps)
    expected = np.array([1.0, -2.0]) * (1 - 0.1 * 0.01) - 0.1 * p.grad / (np.abs(p.grad) + 1e-8)
    np.testing.assert_allclose(p.values, expected, rtol=1e-12)
    assert state.step == 1


def test_adamw_rejects_non_finite():
    good = Tensor([1.0], requires_grad=True)
    bad = Tensor([2.0], requires_grad=True)
    good.grad, bad.grad = np.array([1.0]), np.array([np.inf])
    state = OptimizerState()
    with pytest.raises(NonFiniteGradientError) as ex:
        adamw_step([("good", good), ("bad", bad)], state)
    assert ex.value.names == ["bad"]
    assert good.values[0] == 1.0 and state.step == 0


def test_adamw_class():
    p = Tensor([1.0], requires_grad=True)
    optimizer = AdamW([("p", p)], lr=0.5, weight_decay=0.0)
    p.grad = np.array([2.0])
    optimizer.step()
    np.testing.assert_allclose(p.values, [0.5])
    optimizer.zero_grad()
    assert p.grad is None


def test_cosine_lr():
    config = TrainConfig()
    assert cosine_lr(0, config) == pytest.approx(1e-3)
    assert cosine_lr(125, config) == pytest.approx(5e-4)
    assert cosine_lr(249, config) < 1e-7
    for epoch in (-1, 250):
        with pytest.raises(UsageError):
            cosine_lr(epoch, config)


def test_minibatches():
    rng = np.random.default_rng(0)
    assert [len(b) for b in minibatches(33, 32, rng)] == [33]
    assert [len(b) for b in minibatches(64, 32, rng)] == [32, 32]
    batches = minibatches(70, 32, rng)
    assert [len(b) for b in batches] == [32, 32, 6]
    np.testing.assert_equal(np.sort(np.concatenate(batches)), np.arange(70))


# training
# --------


def test_train_deterministic(tmp_path):
    dataset = tiny_dataset()
    first = train(dataset, TINY, out=tmp_path / "a", show_progress=False)
    second = train(dataset, TINY, out=tmp_path / "b", show_progress=False)
    assert first.checkpoint.read_bytes() == second.checkpoint.read_bytes()
    assert [r["val_loss"] for r in first.history] == [r["val_loss"] for r in second.history]


def test_training_log(tmp_path):
    result = train(tiny_dataset(), TINY, out=tmp_path, show_progress=False)
    with (tmp_path / "training_log.yaml").open() as file:
        log = yaml.safe_load(file)
    assert [record["epoch"] for record in log] == [0, 1]
    assert set(log[0]) == {
        "epoch",
        "lr",
        "train_loss",
        "val_loss",
        "val_mae",
        "val_rmse",
        "val_r2",
        "wall_time",
    }
    assert log[0]["lr"] == pytest.approx(1e-3)
    assert result.best_epoch in (0, 1)
    assert result.best_r2 == max(r["val_r2"] for r in log)


def test_checkpoint_reproduces_validation(tmp_path):
    dataset = tiny_dataset()
    result = train(dataset, TINY, out=tmp_path, show_progress=False)
    model, manifest = load_checkpoint(result.checkpoint, layout=dataset.layout)
    assert manifest["epoch"] == result.best_epoch
    assert manifest["val_r2"] == pytest.approx(result.best_r2)
    report = evaluate(model, dataset.validation)
    assert report.r2 == pytest.approx(result.best_r2, rel=1e-12)
    np.testing.assert_equal(
        model.predict(dataset.test.z, dataset.test.tz),
        result.model.predict(dataset.test.z, dataset.test.tz),
    )


def test_early_stopping():
    config = TrainConfig(epochs=20, batch_size=3, patience=1, min_delta=1e9)
    result = train(tiny_dataset(), config, show_progress=False)
    assert result.stopped_early
    assert len(result.history) == 2
    assert result.checkpoint is None


def test_divergence_keeps_best_state(tmp_path, monkeypatch):
    calls = []

    def exploding(pred, target):
        calls.append(1)
        # two batches per epoch, the second epoch diverges
        if len(calls) > 2:
            raise NonFiniteError("loss is not finite")
        return mse_loss(pred, target)

    monkeypatch.setattr(training, "mse_loss", exploding)
    with pytest.raises(DivergenceError) as ex:
        train(tiny_dataset(), TrainConfig(epochs=3, batch_size=3), out=tmp_path, show_progress=False)
    assert ex.value.epoch == 0
    assert ex.value.checkpoint.exists()
    assert read_manifest(ex.value.checkpoint)["epoch"] == 0


def test_ablated_training_freezes_bypassed_blocks():
    config = TrainConfig(epochs=1, batch_size=3, no_seb=True, no_qltem=True)
    result = train(tiny_dataset(), config, show_progress=False)
    fresh = SquareMamba(seed=0)
    model = result.model
    assert not model.use_seb and not model.use_qltem
    np.testing.assert_equal(model.seb.conv.kernel.values, fresh.seb.conv.kernel.values)
    np.testing.assert_equal(model.teb.qltems[3].angles.values, fresh.teb.qltems[3].angles.values)
    assert not np.array_equal(model.ffb.fc.weight.values, fresh.ffb.fc.weight.values)


def test_train_requirements():
    with pytest.raises(UsageError):
        train(tiny_dataset(sizes=(1, 4, 3)), TINY, show_progress=False)
    with pytest.raises(UsageError):
        train(tiny_dataset(sizes=(6, 0, 3)), TINY, show_progress=False)


def test_checkpoint_bytes_stable(tmp_path):
    model = SquareMamba(seed=4, use_qltem=False)
    save_checkpoint(tmp_path / "a.npz", model, epoch=3)
    save_checkpoint(tmp_path / "b.npz", model, epoch=3)
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    loaded, manifest = load_checkpoint(tmp_path / "a.npz")
    assert not loaded.use_qltem
    assert manifest["model"]["seed"] == 4


# end to end
# ----------


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    path = tmp_path_factory.mktemp("synthetic") / "synthetic.csv"
    synthetic_dataset(path, center=CENTER)
    return build_splits(load_records(path), CENTER, show_progress=False)


@pytest.mark.slow
def test_synthetic_end_to_end(synthetic, tmp_path):
    result = train(synthetic, TrainConfig(), out=tmp_path, show_progress=False)
    report = evaluate(result.model, synthetic.test)
    assert len(report) == 216
    assert report.r2 >= 0.9


@pytest.mark.slow
@pytest.mark.parametrize("no_seb, no_qltem", [(True, False), (False, True), (True, True)])
def test_synthetic_ablations(synthetic, no_seb, no_qltem):
    config = TrainConfig(epochs=60, no_seb=no_seb, no_qltem=no_qltem)
    result = train(synthetic, config, show_progress=False)
    scores = evaluate(result.model, synthetic.test).scores()
    assert all(np.isfinite(list(scores.values())))
    assert scores["r2"] > 0


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_quantum_encoding_does_not_hurt_validation(synthetic, seed):
    full = train(synthetic, TrainConfig(seed=seed), show_progress=False)
    classical = train(synthetic, TrainConfig(seed=seed, no_qltem=True), show_progress=False)
    assert full.best_r2 >= classical.best_r2 - 0.02
