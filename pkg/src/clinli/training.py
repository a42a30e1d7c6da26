"""Optimization loop with early stopping and sequential transfer chains.

Training iterates shuffled mini-batches; after every ``step_fraction`` of
the training data (default 20%) it evaluates dev loss and accuracy.  A run
stops once dev loss has gone ``early_stop_patience`` consecutive
evaluations without strictly improving on the best seen, and returns the
checkpoint captured at the best evaluation.  "Decreased" means strict
improvement; ties count as non-improving.

Transfer chains run several (dataset, config) stages in order, each stage
starting from the previous stage's best parameters.  The classification
head is kept across stage boundaries by default (all stages share one
3-class label space); a reset policy re-initializes it instead.  Optimizer
state starts fresh at each stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .checkpoint import Checkpoint, MetricRow
from .data import LABELS
from .errors import ConfigError, DataError, NumericError
from .tensor import Tensor

__all__ = [
    "AdamState",
    "EarlyStopper",
    "Stage",
    "TrainConfig",
    "TransferChain",
    "adam_step",
    "clip_gradients",
    "run_chain",
    "train",
]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    max_epochs: int = 50
    clip_norm: float = 5.0
    early_stop_patience: int = 4
    step_fraction: float = 0.2
    dropout: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 < self.step_fraction <= 1.0:
            raise ConfigError(f"step_fraction must be in (0, 1], got {self.step_fraction}")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be at least 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")

    @classmethod
    def paper_preset(cls, **overrides) -> "TrainConfig":
        """Fixed 2e-5 learning rate, as used when fine-tuning from large
        pretrained weights; the desk-scale default is 1e-3."""
        overrides.setdefault("learning_rate", 2e-5)
        return cls(**overrides)


class AdamState:
    """First/second moment estimates for a named parameter collection."""

    def __init__(self, params: dict[str, Tensor]):
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.t = 0


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update over every parameter in place.

    Parameters whose grad is unset are treated as having zero gradient:
    their moments decay and their values stay put.
    """
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter {name!r}")
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * (g * g)
        m_hat = state.m[name] / (1 - beta1**t)
        v_hat = state.v[name] / (1 - beta2**t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def clip_gradients(params: dict[str, Tensor], threshold: float) -> float:
    """Scale all gradients by threshold/norm when their global L2 norm
    exceeds the threshold.  Returns the pre-clip norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = math.sqrt(total)
    if norm > threshold:
        factor = threshold / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


class EarlyStopper:
    """Stop after ``patience`` consecutive evaluations without a strict
    improvement of the best dev loss."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError("patience must be at least 1")
        self.patience = patience
        self.best = math.inf
        self.best_index = 0
        self.count = 0
        self._bad = 0

    def observe(self, dev_loss: float) -> bool:
        """Record one evaluation; returns True when training should stop."""
        self.count += 1
        if dev_loss < self.best:
            self.best = dev_loss
            self.best_index = self.count
            self._bad = 0
        else:
            self._bad += 1
        return self._bad >= self.patience


def _validate_dataset(name: str, dataset) -> None:
    if not dataset:
        raise DataError(f"{name} dataset is empty")
    for ex in dataset:
        if ex.gold_label not in LABELS:
            raise DataError(f"{name} dataset: label {ex.gold_label!r} not in {LABELS}")


def _snapshot(params: dict[str, Tensor], state: AdamState):
    return (
        {name: p.data.copy() for name, p in params.items()},
        {name: a.copy() for name, a in state.m.items()},
        {name: a.copy() for name, a in state.v.items()},
        state.t,
    )


def train(
    model,
    train_set,
    dev_set,
    config: TrainConfig,
    dataset_name: str = "train",
    prior_provenance: tuple[str, ...] = (),
    prior_history: tuple[MetricRow, ...] = (),
    step_offset: int = 0,
) -> Checkpoint:
    """Train ``model`` until early stopping or ``max_epochs``; return the
    best-dev-loss checkpoint and leave the model holding those parameters."""
    _validate_dataset("train", train_set)
    _validate_dataset("dev", dev_set)

    if config.dropout is not None:
        model.dropout = config.dropout

    params = model.parameters()
    state = AdamState(params)
    shuffle_rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng(config.seed + 1)
    stopper = EarlyStopper(config.early_stop_patience)
    eval_every = max(1, math.ceil(config.step_fraction * len(train_set)))

    best = _snapshot(params, state)
    history: list[MetricRow] = list(prior_history)
    since_eval = 0
    run_loss = 0.0
    run_count = 0
    stop = False

    for _ in range(config.max_epochs):
        order = shuffle_rng.permutation(len(train_set))
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            for p in params.values():
                p.grad = None
            loss, _ = model.batch_loss(batch, training=True, rng=dropout_rng)
            loss.backward()
            clip_gradients(params, config.clip_norm)
            adam_step(params, state, config.learning_rate)

            run_loss += float(loss.data)
            run_count += len(batch)
            since_eval += len(batch)
            if since_eval >= eval_every:
                since_eval = 0
                dev_loss_t, dev_correct = model.batch_loss(dev_set, training=False)
                dev_loss = float(dev_loss_t.data) / len(dev_set)
                dev_acc = dev_correct / len(dev_set)
                train_loss = run_loss / max(run_count, 1)
                run_loss, run_count = 0.0, 0
                improved = dev_loss < stopper.best
                stop = stopper.observe(dev_loss)
                history.append(MetricRow(step_offset + stopper.count, train_loss, dev_loss, dev_acc))
                if improved:
                    best = _snapshot(params, state)
                if stop:
                    break
        if stop:
            break

    best_params, best_m, best_v, best_t = best
    model.load_parameters(best_params)
    return Checkpoint(
        kind=model.kind,
        model_config=model.config_dict(),
        vocab_tokens=list(model.vocab.tokens),
        tokenizer_mode=model.tokenizer_mode,
        params=best_params,
        adam_m=best_m,
        adam_v=best_v,
        adam_t=best_t,
        provenance=list(prior_provenance) + [dataset_name],
        history=history,
    )


@dataclass
class Stage:
    name: str
    train_set: list
    dev_set: list
    config: TrainConfig


@dataclass
class TransferChain:
    stages: list[Stage]
    head_reset: str = "keep"

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("a transfer chain needs at least one stage")
        if self.head_reset not in ("keep", "reset"):
            raise ConfigError(f"head_reset must be 'keep' or 'reset', got {self.head_reset!r}")


def run_chain(model_factory, chain: TransferChain) -> Checkpoint:
    """Run the chain's stages in order, each initialized from the previous
    stage's best checkpoint; returns the final checkpoint whose provenance
    lists every stage name in order."""
    model = model_factory()
    provenance: tuple[str, ...] = ()
    history: tuple[MetricRow, ...] = ()
    ckpt: Checkpoint | None = None
    offset = 0
    for i, stage in enumerate(chain.stages):
        if i > 0 and chain.head_reset == "reset":
            model.reset_head(seed=stage.config.seed)
        ckpt = train(
            model,
            stage.train_set,
            stage.dev_set,
            stage.config,
            dataset_name=stage.name,
            prior_provenance=provenance,
            prior_history=history,
            step_offset=offset,
        )
        provenance = tuple(ckpt.provenance)
        history = tuple(ckpt.history)
        offset = history[-1].step if history else offset
    return ckpt
