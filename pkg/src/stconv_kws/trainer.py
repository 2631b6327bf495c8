"""Mini-batch training: cross-entropy, Adam, LR decay, best-on-dev checkpoint.

The learning-rate schedule follows three rules: after each epoch the dev
loss is compared to the previous epoch's, and if it failed to drop by at
least 3% (relative) the rate is multiplied by 0.6; the rate never goes
below 1e-5; and every rate is held for at least 2 epochs before it may
decay again.  The checkpoint returned is the one with the highest dev
accuracy seen during the run.
"""

from dataclasses import dataclass, field

import numpy as np

from stconv_kws.model import STConvModel
from stconv_kws.numerics import ShapeMismatchError, softmax

LOG_HEADER = "epoch\tlr\ttrain_loss\tdev_loss\tdev_acc"


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    lr_init: float = 0.001
    lr_decay_factor: float = 0.6
    lr_floor: float = 1e-5
    improvement_threshold: float = 0.03   # relative dev-loss drop required
    min_epochs_per_lr: int = 2
    max_epochs: int = 80
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    stop_at_train_accuracy: float | None = None  # optional early exit for sanity runs

    def validate(self):
        if not 0.0 < self.lr_decay_factor < 1.0:
            raise ValueError(f"lr_decay_factor must be in (0, 1), got {self.lr_decay_factor}")
        if self.lr_floor <= 0:
            raise ValueError(f"lr_floor must be positive, got {self.lr_floor}")


def cross_entropy(posteriors: np.ndarray, labels: np.ndarray):
    """Mean negative log-likelihood and its gradient w.r.t. the logits.

    Rows of `posteriors` must already be softmax-normalised; the logit
    gradient is then (posteriors - onehot) / batch_size.
    """
    posteriors = np.asarray(posteriors, dtype=np.float64)
    labels = np.asarray(labels)
    batch, num_classes = posteriors.shape
    if labels.shape != (batch,):
        raise ShapeMismatchError(f"labels shape {labels.shape} vs batch {batch}")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise ValueError(f"labels outside [0, {num_classes})")
    picked = posteriors[np.arange(batch), labels]
    loss = float(np.mean(-np.log(np.maximum(picked, 1e-12))))
    dlogits = posteriors.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    return loss, dlogits / batch


class Adam:
    """Bias-corrected Adam over a dict of named parameter arrays."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeMismatchError(f"{name}: grad {g.shape} vs param {p.shape}")
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m += (1 - b1) * (g - m)
            v += (1 - b2) * (g * g - v)
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class ScheduleState:
    lr: float
    epochs_at_lr: int = 0


def lr_schedule_update(prev_dev_loss, curr_dev_loss, state: ScheduleState, cfg: TrainConfig):
    """Apply the end-of-epoch decay rule; returns the (possibly new) rate.

    Call after incrementing `epochs_at_lr` for the finished epoch.  The
    rate decays only when it has been held for the minimum number of
    epochs and the dev loss failed to improve by the relative threshold.
    """
    if prev_dev_loss is None or state.epochs_at_lr < cfg.min_epochs_per_lr:
        return state.lr
    if curr_dev_loss >= prev_dev_loss * (1.0 - cfg.improvement_threshold):
        state.lr = max(state.lr * cfg.lr_decay_factor, cfg.lr_floor)
        state.epochs_at_lr = 0
    return state.lr


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    dev_loss: float
    dev_acc: float

    def as_line(self) -> str:
        return (
            f"{self.epoch}\t{self.lr:.8g}\t{self.train_loss:.6f}"
            f"\t{self.dev_loss:.6f}\t{self.dev_acc:.6f}"
        )


@dataclass
class TrainResult:
    log: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_acc: float = -1.0
    best_state: dict = field(default_factory=dict)   # params + BN buffers

    def restore_best(self, model: STConvModel):
        model.set_parameters({k: v for k, v in self.best_state.items() if k in model.parameters()})
        for name, arr in model.buffers().items():
            arr[...] = self.best_state[name]

    def write_log(self, path):
        with open(path, "w") as fh:
            fh.write(LOG_HEADER + "\n")
            for row in self.log:
                fh.write(row.as_line() + "\n")


def _snapshot(model: STConvModel) -> dict:
    state = {k: v.copy() for k, v in model.parameters().items()}
    state.update({k: v.copy() for k, v in model.buffers().items()})
    return state


def evaluate_split(model: STConvModel, features, labels, batch_size=256):
    """(mean loss, accuracy, posteriors) of a split in inference mode."""
    n = len(labels)
    losses = []
    posteriors = np.empty((n, model.config.num_classes))
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        post = model.forward(features[start:stop], train=False)
        loss, _ = cross_entropy(post, labels[start:stop])
        losses.append(loss * (stop - start))
        posteriors[start:stop] = post
    correct = np.argmax(posteriors, axis=1) == np.asarray(labels)
    return float(np.sum(losses) / n), float(np.mean(correct)), posteriors


def train(model: STConvModel, train_set, dev_set, cfg: TrainConfig) -> TrainResult:
    """Run the training loop; returns per-epoch log and best-on-dev snapshot.

    `train_set` and `dev_set` are (features, labels) pairs with features
    shaped (N, frames, coeffs).  The model is left in its final-epoch
    state; use `TrainResult.restore_best` for the returned checkpoint.
    """
    cfg.validate()
    x_train, y_train = train_set
    x_dev, y_dev = dev_set
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train)
    if len(y_train) == 0 or len(dev_set[1]) == 0:
        raise ValueError("train and dev splits must be nonempty")

    rng = np.random.default_rng(cfg.seed)
    adam = Adam(cfg.beta1, cfg.beta2, cfg.eps)
    sched = ScheduleState(lr=cfg.lr_init)
    prev_dev_loss = None
    result = TrainResult()

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(y_train))
        epoch_loss = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            logits = model.forward_logits(x_train[idx], train=True)
            post = softmax(logits, axis=-1)
            loss, dlogits = cross_entropy(post, y_train[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            epoch_loss += loss * len(idx)
            model.zero_grads()
            model.backward(dlogits)
            adam.step(model.parameters(), model.gradients(), sched.lr)
        train_loss = epoch_loss / len(perm)

        dev_loss, dev_acc, _ = evaluate_split(model, x_dev, y_dev)
        result.log.append(EpochLog(epoch, sched.lr, train_loss, dev_loss, dev_acc))
        if dev_acc > result.best_dev_acc:
            result.best_dev_acc = dev_acc
            result.best_epoch = epoch
            result.best_state = _snapshot(model)

        sched.epochs_at_lr += 1
        lr_schedule_update(prev_dev_loss, dev_loss, sched, cfg)
        prev_dev_loss = dev_loss

        if cfg.stop_at_train_accuracy is not None:
            _, train_acc, _ = evaluate_split(model, x_train, y_train)
            if train_acc >= cfg.stop_at_train_accuracy:
                break
    return result
