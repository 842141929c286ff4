"""Adam training of either surrogate under the relative-L2 loss.

Fixed-seed batching (per-epoch shuffle seeds derived as seed + epoch),
validation-based early stopping with best-snapshot restoration, and a
loss-trajectory log. Single-threaded runs are bitwise reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tape
from .data import Dataset
from .errors import DegenerateTargetError, PoisonedUpdateError
from .models import forward_for
from .solver import Grid

EVAL_BATCH = 64


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 2026
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def validate(self) -> None:
        if min(self.learning_rate, self.epsilon) < 0:
            raise ValueError("learning_rate and epsilon must be non-negative")
        if min(self.batch_size, self.max_epochs, self.patience) < 1:
            raise ValueError("batch_size, max_epochs, patience must be >= 1")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


class AdamState:
    """First/second-moment accumulators over the real views of all parameters."""

    def __init__(self, params: ParameterStore):
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self._scratch: dict[str, np.ndarray] = {}
        for name, tensor in params.items():
            real = tensor.data.view(np.float64) if tensor.is_complex else tensor.data
            self.m[name] = np.zeros_like(real)
            self.v[name] = np.zeros_like(real)
            self._scratch[name] = np.empty_like(real)


def adam_step(
    params: ParameterStore,
    grads: list[np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> None:
    """Bias-corrected Adam update in place; complex tensors update their re/im pairs."""
    state.t += 1
    bias1 = 1.0 - cfg.beta1**state.t
    bias2 = 1.0 - cfg.beta2**state.t
    for (name, tensor), grad in zip(params.items(), grads):
        g = grad.view(np.float64) if np.iscomplexobj(grad) else grad
        if not np.all(np.isfinite(g)):
            raise PoisonedUpdateError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        buf = state._scratch[name]
        m *= cfg.beta1
        np.multiply(g, 1.0 - cfg.beta1, out=buf)
        m += buf
        v *= cfg.beta2
        np.multiply(g, g, out=buf)
        buf *= 1.0 - cfg.beta2
        v += buf
        # theta -= lr * (m / bias1) / (sqrt(v / bias2) + eps)
        np.divide(v, bias2, out=buf)
        np.sqrt(buf, out=buf)
        buf += cfg.epsilon
        np.divide(m, buf, out=buf)
        buf *= cfg.learning_rate / bias1
        theta = tensor.data.view(np.float64) if tensor.is_complex else tensor.data
        theta -= buf


def per_sample_relative_l2(model, u0s, cs, uTs, grid: Grid) -> np.ndarray:
    """Relative L2 error of each sample, batched forward, no parameter mutation."""
    norms = np.linalg.norm(uTs, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.argmin(norms))
        raise DegenerateTargetError(f"target sample {bad} has zero norm")
    errors = np.empty(len(uTs))
    for start in range(0, len(uTs), EVAL_BATCH):
        sl = slice(start, start + EVAL_BATCH)
        pred = forward_for(model, u0s[sl], cs[sl], grid).data
        errors[sl] = np.linalg.norm(pred - uTs[sl], axis=1) / norms[sl]
    return errors


def evaluate_split(model, ds: Dataset, grid: Grid) -> float:
    """Mean per-sample relative L2 over a dataset."""
    u0s, cs, uTs = ds.arrays()
    return float(np.mean(per_sample_relative_l2(model, u0s, cs, uTs, grid)))


def train_epoch(
    model,
    u0s: np.ndarray,
    cs: np.ndarray,
    uTs: np.ndarray,
    grid: Grid,
    cfg: TrainConfig,
    state: AdamState,
    epoch: int,
) -> float:
    """One shuffled pass; returns the batch-size-weighted mean training loss."""
    n = len(u0s)
    order = np.random.default_rng(cfg.seed + epoch).permutation(n)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        tape = Tape(model.params)
        try:
            with tape.recording():
                pred = forward_for(model, u0s[idx], cs[idx], grid)
                loss = ad.relative_l2_loss(pred, uTs[idx])
            grads = ad.backward(tape, loss)
            adam_step(model.params, grads, state, cfg)
        except PoisonedUpdateError as exc:
            raise PoisonedUpdateError(
                f"epoch {epoch}, batch starting at {start}: {exc}"
            ) from exc
        total += loss.item() * len(idx)
    return total / n


@dataclass
class TrainingLog:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    def best_val_loss(self) -> float:
        return min(self.val_loss)


def fit(model, train_ds: Dataset, val_ds: Dataset, grid: Grid, cfg: TrainConfig):
    """Train with early stopping; restores and returns the best-validation snapshot.

    Returns (model, TrainingLog). The model's parameters are mutated in place
    and finish at the best-validation-epoch values.
    """
    cfg.validate()
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("train and validation datasets must be non-empty")
    u0s, cs, uTs = train_ds.arrays()
    val_u0s, val_cs, val_uTs = val_ds.arrays()
    state = AdamState(model.params)
    log = TrainingLog()
    best_val = np.inf
    best_snapshot = model.params.snapshot()
    stall = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        train_loss = train_epoch(model, u0s, cs, uTs, grid, cfg, state, epoch)
        val_loss = float(
            np.mean(per_sample_relative_l2(model, val_u0s, val_cs, val_uTs, grid))
        )
        log.epochs.append(epoch)
        log.train_loss.append(train_loss)
        log.val_loss.append(val_loss)
        log.seconds.append(time.perf_counter() - t0)
        if val_loss < best_val:
            best_val = val_loss
            log.best_epoch = epoch
            best_snapshot = model.params.snapshot()
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                log.stop_reason = "early_stop"
                break
    if not log.stop_reason:
        log.stop_reason = "max_epochs"
    model.params.restore(best_snapshot)
    return model, log


def write_training_log_csv(log: TrainingLog, path) -> None:
    """Deterministic CSV of the loss trajectory (wall times live in the manifest)."""
    lines = ["epoch,train_loss,val_loss"]
    for e, tr, vl in zip(log.epochs, log.train_loss, log.val_loss):
        lines.append(f"{e},{format(tr, '.17g')},{format(vl, '.17g')}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
