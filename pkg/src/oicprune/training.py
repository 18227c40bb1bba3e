"""SGD training with Nesterov momentum and structured regularization.

The data loss is differentiated through the autodiff tape; the
structured penalty contributes its analytic gradient (scaled by
lambda_s) on top, and the plain L2 term is applied as decoupled weight
decay inside the optimizer step. Everything is deterministic given the
config seed: fixed init, fixed per-epoch shuffles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, TrainingDiverged
from .importance import energy_out_in_channel
from .model import WEIGHTED_KINDS, Model
from .regularizers import REGULARIZER_KINDS, structured_value_grad

# Group energy below this counts as a dead group in the metrics.
DEAD_GROUP_EPS = 1e-8


@dataclass
class RunConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lambda_s: float = 1e-4
    regularizer: str = "oicsr_gl"
    batch_size: int = 32
    epochs: int = 30
    lr_schedule: list = None  # (epoch, multiplier) pairs; None = x0.1 at 50%/75%
    seed: int = 0
    iterations: int = 1  # pruning iterations T
    flops_targets: list = field(default_factory=lambda: [0.5])  # cumulative P_t
    criterion: str = "out_in_channel"
    fine_tune_epochs: int = 20

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.regularizer not in REGULARIZER_KINDS:
            raise ConfigError(f"unknown regularizer {self.regularizer!r}")
        if self.lr_schedule is None:
            self.lr_schedule = default_schedule(self.epochs)
        epochs = [e for e, _ in self.lr_schedule]
        if sorted(set(epochs)) != epochs:
            raise ConfigError(f"lr_schedule epochs must be strictly increasing: {epochs}")


def default_schedule(epochs):
    """Multiply lr by 0.1 at 50% and 75% of the epoch budget."""
    marks = sorted({max(1, epochs // 2), max(1, epochs * 3 // 4)})
    return [(e, 0.1) for e in marks]


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    reg: float
    train_acc: float
    eval_acc: float
    energy_sum: float
    dead_groups: int


class SgdState:
    """Per-parameter velocity buffers, keyed by parameter identity."""

    def __init__(self):
        self.velocity = {}

    def get(self, param):
        v = self.velocity.get(id(param))
        if v is None:
            v = np.zeros_like(param.data)
            self.velocity[id(param)] = v
        return v


def sgd_nesterov_step(params, state: SgdState, lr, momentum, weight_decay=0.0, decay_mask=None):
    """v <- mu*v + g;  w <- w - lr*(g + mu*v) - lr*wd*w (decoupled decay).

    ``decay_mask``: parameters (by identity) that receive weight decay;
    None decays everything.
    """
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        v = state.get(p)
        v *= momentum
        v += g
        p.data -= lr * (g + momentum * v)
        if weight_decay and (decay_mask is None or id(p) in decay_mask):
            p.data -= lr * weight_decay * p.data


def evaluate_accuracy(model: Model, dataset, batch_size=256) -> float:
    correct = 0
    n = len(dataset.labels)
    for start in range(0, n, batch_size):
        logits = model.predict(dataset.inputs[start : start + batch_size])
        pred = logits.argmax(axis=1)
        correct += int((pred == dataset.labels[start : start + batch_size]).sum())
    return correct / n


def _group_energy_stats(model):
    total = 0.0
    dead = 0
    for pair in model.pairs:
        for i in range(pair.channel_count):
            e = energy_out_in_channel(model, pair, i)
            total += e
            if e < DEAD_GROUP_EPS:
                dead += 1
    return total, dead


def train(
    model: Model,
    train_set,
    eval_set,
    config: RunConfig,
    epochs=None,
    metrics_sink=None,
):
    """Minimize data loss + lambda_s * structured penalty.

    Returns the per-epoch metrics history. ``epochs`` overrides the
    config (used by fine-tuning); ``metrics_sink`` is called with each
    EpochMetrics as it is produced.
    """
    epochs = config.epochs if epochs is None else epochs
    rng = np.random.default_rng(config.seed)
    n = len(train_set.labels)
    structured = config.regularizer != "l2" and config.lambda_s > 0
    decay_targets = {
        id(model.layers[i].weight)
        for i in range(len(model.layers))
        if model.layers[i].kind in WEIGHTED_KINDS
    }
    state = SgdState()
    lr = config.lr
    schedule = dict(config.lr_schedule)
    history = []
    for epoch in range(epochs):
        if epoch in schedule:
            lr *= schedule[epoch]
        order = rng.permutation(n)
        loss_sum = 0.0
        reg_sum = 0.0
        correct = 0
        batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = Tensor(train_set.inputs[idx])
            labels = train_set.labels[idx]
            model.zero_grads()
            logits = model.forward(x)
            loss = ad.softmax_cross_entropy(logits, labels)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch offset {start}"
                )
            loss.backward()
            if structured:
                reg_val, reg_grads = structured_value_grad(model, config.regularizer)
                for layer_idx, g in reg_grads.items():
                    model.layers[layer_idx].weight.grad += config.lambda_s * g
            else:
                reg_val = 0.0
            sgd_nesterov_step(
                model.parameters(),
                state,
                lr,
                config.momentum,
                config.weight_decay,
                decay_targets,
            )
            loss_sum += float(loss.data)
            reg_sum += config.lambda_s * reg_val if structured else 0.0
            correct += int((logits.data.argmax(axis=1) == labels).sum())
            batches += 1
        energy_sum, dead = _group_energy_stats(model)
        metrics = EpochMetrics(
            epoch=epoch,
            loss=loss_sum / batches,
            reg=reg_sum / batches,
            train_acc=correct / n,
            eval_acc=evaluate_accuracy(model, eval_set),
            energy_sum=energy_sum,
            dead_groups=dead,
        )
        history.append(metrics)
        if metrics_sink is not None:
            metrics_sink(metrics)
    return history


def fine_tune(model: Model, train_set, eval_set, config: RunConfig, epochs):
    """Post-surgery retraining; keeps the structured penalty active."""
    return train(model, train_set, eval_set, config, epochs=epochs)


def write_metrics_csv(history, path):
    lines = ["epoch,loss,reg,train_acc,eval_acc,energy_sum,dead_groups"]
    for m in history:
        lines.append(
            f"{m.epoch},{m.loss!r},{m.reg!r},{m.train_acc!r},"
            f"{m.eval_acc!r},{m.energy_sum!r},{m.dead_groups}"
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
