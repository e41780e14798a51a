from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter
from typing import Dict, List, Optional

import numpy as np
import yaml

from squaremamba.autodiff import Tape, Tensor, astensor
from squaremamba.config import TrainConfig
from squaremamba.console_utils import TQDM_BAR_FORMAT, info, tqdm, warning
from squaremamba.errors import (
    DimensionError,
    DivergenceError,
    NonFiniteError,
    NonFiniteGradientError,
    UsageError,
)
from squaremamba.io.checkpoint import save_checkpoint
from squaremamba.metrics import MetricsReport, mae, r2, rmse
from squaremamba.model import SquareMamba, ablate

LOG_FILE = "training_log.yaml"
CHECKPOINT_FILE = "checkpoint.npz"


def mse_loss(pred, target) -> Tensor:
    """Mean squared error of a batch"""
    pred, target = astensor(pred), astensor(target)
    if pred.size == 0:
        raise UsageError("mse_loss of an empty batch")
    if pred.shape != target.shape:
        raise UsageError(f"prediction {pred.shape} and target {target.shape} differ")
    residual = pred - target
    return (residual * residual).mean()


@dataclass
class OptimizerState:
    """AdamW moments and hyperparameters"""

    lr: float = 1e-3
    """initial (base) learning rate"""
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    """decoupled weight decay"""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    """first moments, by parameter name"""
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    """second moments, by parameter name"""


def adamw_step(params, state: OptimizerState, lr: float = None):
    """One AdamW update, in place.

    Weight decay is applied multiplicatively (``θ ← θ(1 - lr·λ)``) before the
    bias-corrected Adam update. Missing gradients count as zeros.

    Parameters
    ----------
    params : list of (str, Tensor)
        named parameters
    state : OptimizerState
        optimizer state, updated in place
    lr : float, optional
        learning rate of this step, by default ``state.lr``

    Raises
    ------
    NonFiniteGradientError
        some gradients are not finite, nothing is updated
    """
    lr = state.lr if lr is None else lr
    params = list(params)
    grads = {}
    for name, p in params:
        g = np.zeros_like(p.values) if p.grad is None else np.asarray(p.grad)
        if g.shape != p.shape:
            raise DimensionError(f"gradient of '{name}' has shape {g.shape}, expected {p.shape}")
        grads[name] = g
    bad = [name for name, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(bad)

    beta1, beta2 = state.betas
    state.step += 1
    correction1 = 1 - beta1**state.step
    correction2 = 1 - beta2**state.step

    for name, p in params:
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p.values))
        v = state.v.setdefault(name, np.zeros_like(p.values))
        if state.weight_decay:
            p.values *= 1 - lr * state.weight_decay
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p.values -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


class AdamW:
    """AdamW optimizer over named parameters

    Parameters
    ----------
    params : iterable of (str, Tensor)
        named parameters, e.g. ``model.named_parameters(active_only=True)``
    lr, betas, eps, weight_decay
        see :py:class:`OptimizerState`
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay)

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self, lr=None):
        adamw_step(self.params, self.state, lr)


def cosine_lr(epoch: int, config: TrainConfig) -> float:
    """Cosine-annealed learning rate of ``epoch``, from ``config.lr`` down to 0"""
    if not 0 <= epoch < config.epochs:
        raise UsageError(f"epoch {epoch} outside [0, {config.epochs})")
    return config.lr * (1 + np.cos(np.pi * epoch / config.epochs)) / 2


def minibatches(n: int, batch_size: int, rng) -> List[np.ndarray]:
    """Shuffled batch indices; a last batch of one sample joins the previous batch"""
    order = rng.permutation(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def _rank(score):
    return score if np.isfinite(score) else -np.inf


@dataclass
class TrainResult:
    model: SquareMamba
    """network holding the selected (best validation R²) state"""
    best_epoch: int
    best_r2: float
    history: List[dict]
    """one record per epoch, as written to the training log"""
    stopped_early: bool = False
    checkpoint: Optional[Path] = None


def train(dataset, config: TrainConfig = None, out=None, show_progress=True, model=None) -> TrainResult:
    """Train a network on the train split, selecting the epoch of best validation R².

    Every epoch shuffles the training samples (seeded), runs minibatch AdamW
    steps on the MSE loss with a cosine-annealed learning rate and evaluates
    the validation split. Training stops after ``config.epochs`` epochs or once
    the validation loss has not improved by ``config.min_delta`` for
    ``config.patience`` epochs.

    Parameters
    ----------
    dataset : DatasetSplit
        samples
    config : TrainConfig, optional
        training protocol, by default :py:class:`TrainConfig` defaults
    out : str or Path, optional
        folder receiving ``training_log.yaml`` and ``checkpoint.npz``, by default
        nothing is written
    show_progress : bool, optional
        whether to show a progress bar, by default True
    model : SquareMamba, optional
        network to train, by default a new one seeded with ``config.seed``

    Raises
    ------
    DivergenceError
        the loss became non-finite; the best state so far is saved to the
        checkpoint first
    """
    config = TrainConfig() if config is None else config
    train_set, val_set = dataset.train, dataset.validation
    if len(train_set) < 2:
        raise UsageError(f"training needs at least 2 samples, got {len(train_set)}")
    if len(val_set) == 0:
        raise UsageError("training needs a non-empty validation split")

    if model is None:
        model = SquareMamba(seed=config.seed, layout=dataset.layout)
    model = ablate(model, no_seb=config.no_seb, no_qltem=config.no_qltem)
    optimizer = AdamW(
        model.named_parameters(active_only=True),
        lr=config.lr,
        betas=config.betas,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    # the first four children seed the network
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(5)[4])

    log_path = checkpoint_path = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / LOG_FILE
        checkpoint_path = out / CHECKPOINT_FILE
        log_path.write_text("")

    def save(epoch, score):
        if checkpoint_path is not None:
            save_checkpoint(
                checkpoint_path,
                model,
                epoch=epoch,
                val_r2=float(score),
                location=[float(v) for v in dataset.location] if dataset.location else None,
                train=dict(
                    epochs=config.epochs,
                    batch_size=config.batch_size,
                    seed=config.seed,
                    lr=config.lr,
                ),
            )

    info(
        f"training {model.parameter_count(active_only=True)} parameters on "
        f"{len(train_set)} samples (SEB {'on' if model.use_seb else 'off'}, "
        f"QLTEM {'on' if model.use_qltem else 'off'})"
    )

    history = []
    best_state, best_epoch, best_score = None, None, -np.inf
    best_loss, wait, stopped_early = np.inf, 0, False

    bar = tqdm(
        range(config.epochs),
        bar_format=TQDM_BAR_FORMAT,
        desc="training",
        unit="epoch",
        disable=not show_progress,
    )
    for epoch in bar:
        t0 = perf_counter()
        lr = cosine_lr(epoch, config)
        model.train()
        total = 0.0
        try:
            for index in minibatches(len(train_set), config.batch_size, shuffle_rng):
                optimizer.zero_grad()
                with Tape() as tape:
                    pred = model(train_set.z[index], train_set.tz[index])
                    loss = mse_loss(pred, train_set.target[index])
                tape.backward(loss)
                optimizer.step(lr)
                total += loss.item() * len(index)
        except NonFiniteError as ex:
            if best_state is not None:
                model.load_state_dict(best_state)
                save(best_epoch, best_score)
            raise DivergenceError(
                f"training diverged at epoch {epoch} ({ex})",
                checkpoint=checkpoint_path if best_state is not None else None,
                epoch=best_epoch,
            ) from ex

        pred = model.predict(val_set.z, val_set.tz, batch_size=config.eval_batch_size)
        val_loss = float(np.mean((pred - val_set.target) ** 2))
        record = dict(
            epoch=epoch,
            lr=float(lr),
            train_loss=total / len(train_set),
            val_loss=val_loss,
            val_mae=mae(val_set.target, pred),
            val_rmse=rmse(val_set.target, pred),
            val_r2=r2(val_set.target, pred),
            wall_time=perf_counter() - t0,
        )
        history.append(record)
        if log_path is not None:
            with log_path.open("a") as file:
                file.write(yaml.safe_dump([record], default_flow_style=None, sort_keys=False))
        bar.set_postfix(loss=f"{record['train_loss']:.4f}", val_r2=f"{record['val_r2']:.4f}")

        # ties keep the earliest epoch
        if best_state is None or _rank(record["val_r2"]) > best_score:
            best_state, best_epoch, best_score = model.state_dict(), epoch, _rank(record["val_r2"])

        if val_loss < best_loss - config.min_delta:
            best_loss, wait = val_loss, 0
        else:
            wait += 1
            if wait >= config.patience:
                stopped_early = True
                info(f"validation loss stable for {config.patience} epochs, stopping at epoch {epoch}")
                break

    bar.close()
    model.load_state_dict(best_state)
    best_r2 = history[best_epoch]["val_r2"]
    save(best_epoch, best_r2)
    if not np.isfinite(best_r2):
        warning("validation R² undefined for every epoch, kept the first epoch")
    info(f"best validation R² {best_r2:.4f} at epoch {best_epoch}")

    return TrainResult(
        model=model,
        best_epoch=best_epoch,
        best_r2=best_r2,
        history=history,
        stopped_early=stopped_early,
        checkpoint=checkpoint_path,
    )


def evaluate(model, samples, batch_size=256) -> MetricsReport:
    """Evaluation-mode forecasts of ``samples`` compared to their targets"""
    predicted = model.predict(samples.z, samples.tz, batch_size=batch_size)
    return MetricsReport(samples.months, samples.target, predicted)
