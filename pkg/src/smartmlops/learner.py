"""Toy logistic regression trained by batch gradient descent.

Small enough to retrain in milliseconds, real enough that accuracy
genuinely degrades under concept drift, which is what the monitoring
loop needs to exercise its posterior trigger. Categorical features are
one-hot encoded as "col=label"; numeric features are standardized with
the training split's moments (stored on the model for scoring).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LearnerError
from .validation import NUMERIC, Dataset

DEFAULT_EPOCHS = 300
DEFAULT_LR = 0.5
HOLDOUT_FRACTION = 0.2


def design_matrix(
    dataset: Dataset,
    target: str | None = None,
    feature_columns: list[str] | None = None,
) -> tuple[np.ndarray, np.ndarray | None, list[str]]:
    """Encode a dataset into (X, y, feature_names).

    Rows with a null in any used column are dropped. y is None when
    target is None; otherwise target values must be binary 0/1.
    """
    if feature_columns is None:
        feature_columns = [c for c in dataset.columns if c != target]
    for c in feature_columns:
        if c not in dataset.columns:
            raise LearnerError(f"feature column {c!r} absent from dataset")
    if target is not None and target not in dataset.columns:
        raise LearnerError(f"target column {target!r} absent from dataset")

    used = list(feature_columns) + ([target] if target else [])
    idx = {c: dataset.columns.index(c) for c in used}
    rows = [r for r in dataset.rows if all(r[idx[c]] is not None for c in used)]
    if not rows:
        raise LearnerError("no complete rows after dropping nulls")

    blocks: list[np.ndarray] = []
    names: list[str] = []
    for c in feature_columns:
        col = [r[idx[c]] for r in rows]
        if dataset.types[c] == NUMERIC:
            blocks.append(np.asarray(col, dtype=float).reshape(-1, 1))
            names.append(c)
        else:
            cats = sorted({str(v) for v in col})
            arr = np.zeros((len(col), len(cats)))
            pos = {cat: j for j, cat in enumerate(cats)}
            for i, v in enumerate(col):
                arr[i, pos[str(v)]] = 1.0
            blocks.append(arr)
            names.extend(f"{c}={cat}" for cat in cats)
    X = np.hstack(blocks)

    y = None
    if target is not None:
        raw = [r[idx[target]] for r in rows]
        try:
            y = np.asarray([float(v) for v in raw])
        except (TypeError, ValueError):
            raise LearnerError(f"target {target!r} is not numeric 0/1") from None
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise LearnerError(f"target {target!r} must be binary 0/1")
    return X, y, names


def align_matrix(X: np.ndarray, names: list[str], wanted: list[str]) -> np.ndarray:
    """Reorder columns to `wanted`; absent columns become zeros."""
    out = np.zeros((X.shape[0], len(wanted)))
    pos = {n: j for j, n in enumerate(names)}
    for j, n in enumerate(wanted):
        if n in pos:
            out[:, j] = X[:, pos[n]]
    return out


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    feature_names: list[str]
    means: np.ndarray
    stds: np.ndarray
    meta: dict = field(default_factory=dict)

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.means) / self.stds

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self._standardize(X) @ self.weights + self.bias
        return _sigmoid(z)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(float)

    def accuracy(self, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.predict(X) == y))

    def accuracy_on(self, dataset: Dataset, target: str) -> float:
        X, y, names = design_matrix(dataset, target=target)
        return self.accuracy(align_matrix(X, names, self.feature_names), y)

    def save(self, path: Path | str) -> None:
        payload = {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "feature_names": self.feature_names,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "meta": self.meta,
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: Path | str) -> "LogRegModel":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(
            weights=np.asarray(d["weights"]),
            bias=float(d["bias"]),
            feature_names=list(d["feature_names"]),
            means=np.asarray(d["means"]),
            stds=np.asarray(d["stds"]),
            meta=d.get("meta", {}),
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def holdout_indices(n: int, seed: int = 42, fraction: float = HOLDOUT_FRACTION) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (eval_idx, train_idx) split; eval gets ceil-ish 20% but >= 1 row."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_eval = max(1, int(round(fraction * n)))
    return perm[:n_eval], perm[n_eval:]


def loss_and_gradient(
    weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss and its analytic gradient.

    Uses logaddexp for the loss so large margins cannot overflow.
    """
    z = X @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    err = _sigmoid(z) - y
    grad_w = X.T @ err / len(y)
    grad_b = float(np.mean(err))
    return loss, grad_w, grad_b


@dataclass
class TrainResult:
    model: LogRegModel
    metrics: dict[str, float]
    losses: list[float]


def train_logreg(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: list[str] | None = None,
    seed: int = 42,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
) -> TrainResult:
    """Full-batch gradient descent with a seeded 80/20 holdout split."""
    if X.ndim != 2 or len(X) != len(y):
        raise LearnerError("X and y shapes do not match")
    classes = np.unique(y)
    if classes.size < 2:
        raise LearnerError("degenerate single-class target")
    if epochs < 1 or lr <= 0:
        raise LearnerError("epochs must be >= 1 and lr > 0")

    eval_idx, train_idx = holdout_indices(len(y), seed=seed)
    if train_idx.size == 0:
        raise LearnerError("not enough rows to split off a holdout set")

    means = X[train_idx].mean(axis=0)
    stds = X[train_idx].std(axis=0)
    stds[stds == 0.0] = 1.0
    Xs = (X - means) / stds

    w = np.zeros(X.shape[1])
    b = 0.0
    losses = []
    for _ in range(epochs):
        loss, grad_w, grad_b = loss_and_gradient(w, b, Xs[train_idx], y[train_idx])
        losses.append(loss)
        w = w - lr * grad_w
        b = b - lr * grad_b

    model = LogRegModel(
        weights=w,
        bias=b,
        feature_names=list(feature_names or [f"x{i}" for i in range(X.shape[1])]),
        means=means,
        stds=stds,
        meta={"seed": seed, "epochs": epochs, "lr": lr},
    )
    final_loss, _, _ = loss_and_gradient(w, b, Xs[train_idx], y[train_idx])
    metrics = {
        "accuracy": model.accuracy(X[eval_idx], y[eval_idx]),
        "train_accuracy": model.accuracy(X[train_idx], y[train_idx]),
        "loss": final_loss,
        "n_train": float(train_idx.size),
        "n_eval": float(eval_idx.size),
    }
    return TrainResult(model=model, metrics=metrics, losses=losses)


def builtin_train_logreg(
    dataset: Dataset,
    target: str,
    seed: int = 42,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
    feature_columns: list[str] | None = None,
) -> TrainResult:
    """Train on a Dataset: encode, fit, report holdout accuracy."""
    X, y, names = design_matrix(dataset, target=target, feature_columns=feature_columns)
    return train_logreg(X, y, feature_names=names, seed=seed, epochs=epochs, lr=lr)
