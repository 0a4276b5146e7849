"""Mini-batch training loop with plateau LR reduction, early stopping, and
best-model checkpointing.

Callbacks run in a fixed order at every epoch end: checkpoint first (so the
best model is on disk even when the same epoch triggers the stop), then the
learning-rate reduction, then the early-stop decision. "Improvement" means
validation accuracy strictly above the best seen so far; the two plateau
counters are independent, and the LR counter also resets after a reduction.
"""

import csv
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TrainingDiverged
from .model_io import load_model, save_model
from .nn import backward, forward, loss_sparse_ce
from .optim import AdamState, adam_step
from .tensor import as_array


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 640
    initial_lr: float = 1e-3
    lr_factor: float = 0.5
    lr_patience: int = 2
    min_lr: float = 1e-5
    early_stop_patience: int = 2
    monitor: str = "val_accuracy"
    seed: int = 0
    checkpoint_dir: str | None = None  # None: private temporary directory

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0 < self.lr_factor < 1:
            raise ValueError("lr_factor must lie in (0, 1)")
        if self.min_lr > self.initial_lr:
            raise ValueError("min_lr must not exceed initial_lr")
        if self.lr_patience < 0 or self.early_stop_patience < 0:
            raise ValueError("patience values must be >= 0")
        if self.monitor != "val_accuracy":
            raise ValueError("only val_accuracy monitoring is supported")


@dataclass
class TrainingState:
    """Epoch histories plus the callback bookkeeping."""

    checkpoint_dir: Path
    class_names: tuple
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_val_acc: float = -math.inf
    best_val_loss: float | None = None
    best_epoch: int | None = None
    checkpoint_path: Path | None = None
    lr_stall_epochs: int = 0
    stop_stall_epochs: int = 0
    stopped_early: bool = False

    def record_epoch(self, epoch, train_loss, train_acc, val_loss, val_acc, lr):
        self.epochs.append(epoch)
        self.train_loss.append(train_loss)
        self.train_acc.append(train_acc)
        self.val_loss.append(val_loss)
        self.val_acc.append(val_acc)
        self.lr.append(lr)

    def history_to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "train_acc",
                             "val_loss", "val_acc", "lr"])
            for row in zip(self.epochs, self.train_loss, self.train_acc,
                           self.val_loss, self.val_acc, self.lr):
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return path


def checkpoint(network, state, epoch, val_loss, val_acc):
    """Save the model when val_acc strictly exceeds the best seen; ties and
    regressions write nothing."""
    if val_acc > state.best_val_acc:
        state.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        path = state.checkpoint_dir / f"checkpoint-{epoch:03d}-{val_loss:.4}.model"
        save_model(path, network, state.class_names)
        state.best_val_acc = val_acc
        state.best_val_loss = val_loss
        state.best_epoch = epoch
        state.checkpoint_path = path
    return state


def epoch_end(network, state, config, adam, epoch, val_loss, val_acc):
    """Apply the callback ladder; returns True when training should stop."""
    improved = val_acc > state.best_val_acc
    checkpoint(network, state, epoch, val_loss, val_acc)
    if improved:
        state.lr_stall_epochs = 0
        state.stop_stall_epochs = 0
    else:
        state.lr_stall_epochs += 1
        state.stop_stall_epochs += 1
    if state.lr_stall_epochs >= config.lr_patience:
        adam.learning_rate = max(adam.learning_rate * config.lr_factor,
                                 config.min_lr)
        state.lr_stall_epochs = 0
    return state.stop_stall_epochs >= config.early_stop_patience


def evaluate(network, dataset, batch_size=1024):
    """Inference-mode (loss, accuracy, predictions, probabilities)."""
    x, y = as_array(dataset[0]), np.asarray(dataset[1])
    chunks = []
    for start in range(0, len(y), batch_size):
        probs, _ = forward(network, x[start:start + batch_size], "inference")
        chunks.append(probs.array)
    probs = np.concatenate(chunks) if chunks else np.zeros((0, network.num_classes))
    loss = loss_sparse_ce(probs, y)
    predictions = probs.argmax(axis=1)
    accuracy = float(np.mean(predictions == y)) if len(y) else 0.0
    return loss, accuracy, predictions, probs


def train(network, train_set, val_set, config, class_names=None):
    """Seeded mini-batch training; returns (best network, state).

    Shuffles every epoch, keeps the last partial batch, evaluates validation
    at epoch end, applies the callbacks, and finally reloads the network
    from the best checkpoint file. Raises TrainingDiverged on a non-finite
    batch loss.
    """
    x_train, y_train = as_array(train_set[0]), np.asarray(train_set[1])
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(network.num_classes))

    tmp = None
    if config.checkpoint_dir is None:
        tmp = tempfile.TemporaryDirectory(prefix="csocnn-ckpt-")
        ckpt_dir = Path(tmp.name)
    else:
        ckpt_dir = Path(config.checkpoint_dir)

    try:
        state = TrainingState(checkpoint_dir=ckpt_dir,
                              class_names=tuple(class_names))
        adam = AdamState(learning_rate=config.initial_lr)
        rng = np.random.default_rng(config.seed)
        n = len(y_train)

        for epoch in range(1, config.epochs + 1):
            lr_this_epoch = adam.learning_rate
            perm = rng.permutation(n)
            loss_sum = 0.0
            correct = 0
            for start in range(0, n, config.batch_size):
                idx = perm[start:start + config.batch_size]
                xb, yb = x_train[idx], y_train[idx]
                probs, cache = forward(network, xb, "train")
                batch_loss = loss_sparse_ce(probs, yb)
                if not math.isfinite(batch_loss):
                    raise TrainingDiverged(
                        f"non-finite loss in epoch {epoch} at sample {start}")
                loss_sum += batch_loss * len(yb)
                correct += int((probs.array.argmax(axis=1) == yb).sum())
                grads = backward(network, cache, yb)
                adam_step(adam, network.params, grads)

            val_loss, val_acc, _, _ = evaluate(network, val_set)
            state.record_epoch(epoch, loss_sum / n, correct / n,
                               val_loss, val_acc, lr_this_epoch)
            if epoch_end(network, state, config, adam, epoch, val_loss, val_acc):
                state.stopped_early = True
                break

        best = load_model(state.checkpoint_path).network
        return best, state
    finally:
        if tmp is not None:
            tmp.cleanup()
