"""Background-aware losses for class-incremental segmentation.

Pixels are independent rows. Index 0 is the background. At step t the label
space is laid out as ``[old classes (incl. background) | new classes]``, so
an old model over ``n_old`` outputs and a new model over ``n_old + n_new``
share the first ``n_old`` columns. Ground truth at step t only names new
classes; everything else, old classes included, is labeled background.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .numerics import PROB_FLOOR, OptimState, RngStream, log_softmax, logsumexp, one_hot, sgd_step, softmax

BACKGROUND = 0


def _check_labels(labels, n_old: int, n_total: int) -> np.ndarray:
    y = np.asarray(labels, dtype=int)
    bad = (y != BACKGROUND) & ((y < n_old) | (y >= n_total))
    if np.any(bad):
        raise ValueError("labels must be background or a new class")
    return y


class LossGrad(NamedTuple):
    loss: float
    grad: np.ndarray  # w.r.t. the new model's logits


def mib_ce(logits, labels, n_old: int) -> LossGrad:
    """Cross-entropy where the background target absorbs every old class.

    For y = b the predicted mass is sum_{k < n_old} q_k, so the logit
    gradient is q - r with r the softmax restricted to the old columns.
    """
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    n, k = z.shape
    y = _check_labels(labels, n_old, k)
    logq = log_softmax(z)
    q = np.exp(logq)
    bg = y == BACKGROUND
    picked = logq[np.arange(n), y]
    old_lse = logsumexp(z[:, :n_old])
    picked = np.where(bg, old_lse - logsumexp(z), picked)
    target = one_hot(y, k)
    if np.any(bg):
        target[bg] = 0.0
        target[bg, :n_old] = softmax(z[bg, :n_old])
    return LossGrad(float(-picked.mean()), (q - target) / n)


def mib_kd(logits, old_probs) -> LossGrad:
    """Distillation where the new model's background absorbs the new classes.

    q_hat_b = q_b + sum_{new} q and q_hat_c = q_c for old c != b; nothing is
    renormalized.
    """
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    p = np.atleast_2d(np.asarray(old_probs, dtype=np.float64))
    n, k = z.shape
    n_old = p.shape[1]
    logq = log_softmax(z)
    cols = np.r_[BACKGROUND, n_old:k]
    log_bg = logsumexp(z[:, cols]) - logsumexp(z)
    log_hat = logq[:, :n_old].copy()
    log_hat[:, BACKGROUND] = log_bg
    loss = -(p * log_hat).sum(axis=1).mean()
    target = np.zeros_like(z)
    target[:, :n_old] = p
    target[:, BACKGROUND] = 0.0
    target[:, cols] += p[:, [BACKGROUND]] * softmax(z[:, cols])
    q = np.exp(logq)
    return LossGrad(float(loss), (q * p.sum(axis=1, keepdims=True) - target) / n)


def lwf_kd(logits, old_probs) -> LossGrad:
    """Standard distillation: the new model is renormalized over old columns."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    p = np.atleast_2d(np.asarray(old_probs, dtype=np.float64))
    n, k = z.shape
    n_old = p.shape[1]
    log_r = log_softmax(z[:, :n_old])
    loss = -(p * np.maximum(log_r, np.log(PROB_FLOOR))).sum(axis=1).mean()
    grad = np.zeros_like(z)
    grad[:, :n_old] = np.exp(log_r) * p.sum(axis=1, keepdims=True) - p
    return LossGrad(float(loss), grad / n)


def init_new_classifier(W, b, n_new: int) -> tuple[np.ndarray, np.ndarray]:
    """Extend a linear head so the old background mass is split evenly.

    The background belongs to the step's class set, so the mass is divided
    among ``n_new + 1`` heads: every new head copies the background weights,
    and both the new heads and the background get the bias shifted by
    ``-log(n_new + 1)``. Non-background old heads are left untouched.
    """
    if n_new < 1:
        raise ValueError("need at least one new class")
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    shift = np.log(n_new + 1.0)
    W_new = np.vstack([W, np.repeat(W[[BACKGROUND]], n_new, axis=0)])
    b_new = np.concatenate([b, np.full(n_new, b[BACKGROUND] - shift)])
    b_new[BACKGROUND] = b[BACKGROUND] - shift
    return W_new, b_new


class IoUReport(NamedTuple):
    per_class: dict[int, float]
    mean: float


def miou(pred, gt, classes) -> IoUReport:
    pred = np.asarray(pred, dtype=int).ravel()
    gt = np.asarray(gt, dtype=int).ravel()
    if pred.size == 0 or pred.shape != gt.shape:
        raise ValueError("need equal-length, nonempty prediction and ground truth")
    per = {}
    for c in classes:
        tp = np.sum((pred == c) & (gt == c))
        fp = np.sum((pred == c) & (gt != c))
        fn = np.sum((pred != c) & (gt == c))
        if tp + fp + fn == 0:
            continue
        per[int(c)] = float(tp / (tp + fp + fn))
    if not per:
        raise ValueError("no evaluation class occurs in predictions or ground truth")
    return IoUReport(per, float(np.mean(list(per.values()))))


# --------------------------------------------------------------------------
# a linear per-pixel model and the incremental step


@dataclass
class PixelModel:
    W: np.ndarray
    b: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    def logits(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self.W.T + self.b

    def predict(self, x) -> np.ndarray:
        return self.logits(x).argmax(axis=1)

    def proba(self, x) -> np.ndarray:
        return softmax(self.logits(x))


def train_pixels(x, y, n_classes: int, rng: RngStream, steps: int = 300, lr: float = 0.5,
                 batch: int = 128, model: PixelModel | None = None) -> PixelModel:
    """Plain cross-entropy training (first step or any fine-tuning)."""
    if model is None:
        model = PixelModel(np.zeros((n_classes, x.shape[1])), np.zeros(n_classes))
    return _fit(model, x, y, rng, steps, lr, batch, lambda z, yy, xx: _ce(z, yy))


def _ce(z, y) -> LossGrad:
    q = softmax(z)
    n = len(z)
    return LossGrad(float(-np.log(np.maximum(q[np.arange(n), y], PROB_FLOOR)).mean()),
                    (q - one_hot(y, z.shape[1])) / n)


def _fit(model, x, y, rng, steps, lr, batch, loss_fn):
    params = {"W": model.W, "b": model.b}
    opt = OptimState(lr, 0.9, 1e-4)
    for _ in range(steps):
        i = rng.choice(len(x), size=min(batch, len(x)), replace=False)
        z = x[i] @ params["W"].T + params["b"]
        g = loss_fn(z, y[i], x[i]).grad
        params = sgd_step(params, {"W": g.T @ x[i], "b": g.sum(axis=0)}, opt)
    return PixelModel(params["W"], params["b"])


def incremental_step(old: PixelModel, x, y, n_new: int, lam: float, rng: RngStream,
                     method: str = "mib", steps: int = 300, lr: float = 0.5,
                     batch: int = 128) -> PixelModel:
    """Extend ``old`` with ``n_new`` classes and train on step-t data.

    method: 'mib' (background-aware CE + KD, background-split init),
    'ft' (plain CE, zero-initialized new heads) or 'lwf' (plain CE +
    standard KD).
    """
    n_old = old.n_classes
    y = _check_labels(y, n_old, n_old + n_new)
    if method == "mib":
        W, b = init_new_classifier(old.W, old.b, n_new)
    elif method in ("ft", "lwf"):
        W = np.vstack([old.W, np.zeros((n_new, old.W.shape[1]))])
        b = np.concatenate([old.b, np.zeros(n_new)])
    else:
        raise ValueError(f"unknown method {method!r}")

    def loss_fn(z, yy, xx):
        if method == "ft":
            return _ce(z, yy)
        p_old = old.proba(xx)
        if method == "lwf":
            ce, kd = _ce(z, yy), lwf_kd(z, p_old)
        else:
            ce, kd = mib_ce(z, yy, n_old), mib_kd(z, p_old)
        return LossGrad(ce.loss + lam * kd.loss, ce.grad + lam * kd.grad)

    return _fit(PixelModel(W, b), x, y, rng, steps, lr, batch, loss_fn)
