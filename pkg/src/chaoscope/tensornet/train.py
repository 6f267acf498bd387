"""Mini-batch training with Adam and early stopping on a held-out split."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .layers import cross_entropy
from .optim import AdamState, adam_update

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


class TrainingCollapsedError(RuntimeError):
    """Most probe inputs reach the output unit with all-zero features.

    Those inputs carry no gradient (dead ReLUs), so the network cannot
    learn them back; a fully dead layer gives a constant output.
    """


@dataclass
class TrainingConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    validation_fraction: float = 0.1
    collapse_fraction: float = 0.5
    seed: int = 0

    def to_dict(self):
        return asdict(self)


def _mean_loss(model, X, y, batch_size=1024):
    total = 0.0
    for i in range(0, len(X), batch_size):
        a = model.forward(X[i:i + batch_size])
        total += float(np.sum(cross_entropy(a, y[i:i + batch_size])))
    return total / max(len(X), 1)


def fit_model(model, X, y, config=TrainingConfig()):
    """Train ``model`` in place; returns the per-epoch history.

    A ``validation_fraction`` slice of the shuffled data is held out; when it
    is non-empty, training stops after ``patience`` epochs without a new best
    held-out loss and the best weights are restored. After every epoch a
    fixed probe of training inputs is checked for dead-ReLU collapse.
    """
    X = model.check_input(X)
    y = np.asarray(y, dtype=model.dtype).ravel()
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(X))
    n_val = int(round(config.validation_fraction * len(X)))
    val_idx, tr_idx = order[:n_val], order[n_val:]
    Xtr, ytr = X[tr_idx], y[tr_idx]
    Xval, yval = X[val_idx], y[val_idx]

    params = model.parameters()
    state = AdamState.for_params(params, lr=config.lr, beta1=config.beta1,
                                 beta2=config.beta2, eps=config.eps)
    probe = Xtr[:256]
    history = []
    best, best_params, stale = np.inf, None, 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(Xtr))
        running, seen = 0.0, 0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            a = model.forward(Xtr[idx])
            running += float(np.sum(cross_entropy(a, ytr[idx])))
            seen += len(idx)
            grads = model.backward(ytr[idx])
            adam_update(params, grads, state)
        train_loss = running / max(seen, 1)
        val_loss = _mean_loss(model, Xval, yval) if n_val else float("nan")
        if not np.isfinite(train_loss) or not all(np.isfinite(p).all() for p in params):
            raise TrainingDivergedError(f"non-finite loss or weights at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        dead = model.dead_fraction(probe) if len(probe) else 0.0
        history[-1]["dead_fraction"] = dead
        if dead >= config.collapse_fraction:
            raise TrainingCollapsedError(f"{dead:.0%} of probe inputs dead after epoch {epoch}")
        log.debug("epoch %d train %.4f val %.4f", epoch, train_loss, val_loss)
        if n_val:
            if val_loss < best:
                best, best_params, stale = val_loss, model.copy_parameters(), 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if best_params is not None:
        model.set_parameters(best_params)
    return history
