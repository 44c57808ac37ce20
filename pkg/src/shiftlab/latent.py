"""Latent-domain discovery and multi-source classifier fusion.

The domain branch predicts soft assignments that drive mDA normalization;
the losses here train it jointly with the classifier. Also holds the WBN
training loss and the BSF fusion rule for per-source classification heads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import alignment as al
from .numerics import (
    PROB_FLOOR,
    OptimState,
    RngStream,
    entropy_grad_logits,
    one_hot,
    sgd_step,
    softmax,
    softmax_backward,
)


@dataclass(frozen=True)
class LatentConfig:
    k_s: int = 2
    k_t: int = 1
    lambda_c: float = 0.1
    lambda_e: float = 0.1
    lambda_b: float = 0.05
    lambda_d: float = 0.5

    def __post_init__(self):
        if self.k_s < 1 or self.k_t < 1:
            raise ValueError("k_s and k_t must be at least 1")
        for name in ("lambda_c", "lambda_e", "lambda_b", "lambda_d"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative")


def _log(p):
    return np.log(np.maximum(p, PROB_FLOOR))


def _row_entropy(p):
    return -(p * _log(p)).sum(axis=-1)


def classification_loss(source_probs, source_labels, target_probs=None, lambda_c: float = 0.0) -> float:
    """Mean source log-loss plus lambda_c times mean target prediction entropy."""
    source_probs = np.atleast_2d(source_probs)
    if source_probs.shape[0] == 0:
        raise ValueError("classification loss needs at least one source sample")
    labels = np.asarray(source_labels, dtype=int)
    ce = -_log(source_probs[np.arange(len(labels)), labels]).mean()
    if target_probs is None or len(target_probs) == 0 or lambda_c == 0:
        return float(ce)
    return float(ce + lambda_c * _row_entropy(np.atleast_2d(target_probs)).mean())


def _side_terms(p, lam_b, lam_e, unlabeled_mask):
    """Balancing + per-sample entropy for one side, with gradient w.r.t. p."""
    n = p.shape[0]
    mean_p = p.mean(axis=0)
    loss = -lam_b * _row_entropy(mean_p)
    grad = np.broadcast_to(lam_b * (_log(mean_p) + 1.0) / n, p.shape).copy()
    n_u = int(unlabeled_mask.sum())
    if n_u:
        pu = p[unlabeled_mask]
        loss += lam_e * _row_entropy(pu).mean()
        grad[unlabeled_mask] += -lam_e * (_log(pu) + 1.0) / n_u
    return loss, grad


def domain_loss_and_grad(source_dom_probs, target_dom_probs, known_labels, config: LatentConfig):
    """Domain-branch objective and its gradient w.r.t. both probability stacks.

    ``known_labels`` holds a domain index per source row, or -1 where the
    domain is unknown. Subset means use the in-batch subset sizes; an empty
    subset contributes nothing.
    """
    ps = np.atleast_2d(np.asarray(source_dom_probs, dtype=np.float64))
    known = np.asarray(known_labels, dtype=int) if known_labels is not None else -np.ones(len(ps), int)
    if known.shape[0] != ps.shape[0]:
        raise ValueError("known_labels must have one entry per source row")
    labeled = known >= 0
    loss = 0.0
    gs = np.zeros_like(ps)
    n_l = int(labeled.sum())
    if n_l:
        rows = np.flatnonzero(labeled)
        picked = ps[rows, known[rows]]
        loss += config.lambda_d * -_log(picked).mean()
        gs[rows, known[rows]] += -config.lambda_d / (n_l * np.maximum(picked, PROB_FLOOR))
    side_loss, side_grad = _side_terms(ps, config.lambda_b, config.lambda_e, ~labeled)
    loss += side_loss
    gs += side_grad

    gt = None
    if target_dom_probs is not None and len(target_dom_probs):
        pt = np.atleast_2d(np.asarray(target_dom_probs, dtype=np.float64))
        t_loss, gt = _side_terms(pt, config.lambda_b, config.lambda_e, np.ones(len(pt), bool))
        loss += t_loss
    return float(loss), gs, gt


def domain_loss(source_dom_probs, target_dom_probs, known_labels, config: LatentConfig) -> float:
    return domain_loss_and_grad(source_dom_probs, target_dom_probs, known_labels, config)[0]


def wbn_loss(class_probs, class_labels, dom_probs, dom_labels, lam: float) -> float:
    """Mean of -log f_C(y|x) - lam * log f_D(d|x)."""
    class_probs = np.atleast_2d(class_probs)
    dom_probs = np.atleast_2d(dom_probs)
    idx = np.arange(class_probs.shape[0])
    ce_c = -_log(class_probs[idx, np.asarray(class_labels, int)])
    ce_d = -_log(dom_probs[idx, np.asarray(dom_labels, int)])
    return float((ce_c + lam * ce_d).mean())


def bsf_predict(source_scores, weights, alpha: float) -> np.ndarray:
    """Fuse per-source class distributions.

    source_scores: (k, K) or (b, k, K); weights: (k,) or (b, k).
    Output: (1 - alpha) * sum_j w_j f_j + (alpha / k) * sum_j f_j.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    f = np.asarray(source_scores, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    k = f.shape[-2]
    weighted = np.einsum("...j,...jc->...c", w, f)
    return (1 - alpha) * weighted + (alpha / k) * f.sum(axis=-2)


def bsf_train_weights(domain_label: int, k: int, alpha: float, rng: RngStream) -> np.ndarray:
    """Training-time fusion weights: uniform with probability alpha, else one-hot."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if rng.random() < alpha:
        return np.full(k, 1.0 / k)
    w = np.zeros(k)
    w[domain_label] = 1.0
    return w


# --------------------------------------------------------------------------
# models


class DomainBranch:
    """Linear probe + softmax producing domain assignment probabilities."""

    def __init__(self, dim: int, k: int, rng: RngStream, scale: float = 0.01):
        self.W = rng.normal(0.0, scale, size=(k, dim))
        self.b = np.zeros(k)

    def __call__(self, x) -> np.ndarray:
        return softmax(np.atleast_2d(x) @ self.W.T + self.b)

    @staticmethod
    def backward(x, probs, grad_probs):
        dz = softmax_backward(probs, grad_probs)
        return dz.T @ np.atleast_2d(x), dz.sum(axis=0)


class LatentDAModel:
    """mDA normalization on input features followed by a linear classifier.

    ``mode='mda'`` normalizes source rows with soft latent-domain statistics
    from the domain branch and target rows with their own statistics;
    ``mode='bn'`` is the single-BN baseline where one set of statistics is
    computed over the joint source+target batch.
    """

    def __init__(self, dim: int, n_classes: int, config: LatentConfig, rng: RngStream,
                 mode: str = "mda", momentum: float = 0.1):
        if mode not in ("mda", "bn"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode, self.config, self.momentum = mode, config, momentum
        self.dim, self.n_classes = dim, n_classes
        self.params = {
            "gamma": np.ones(dim),
            "beta": np.zeros(dim),
            "cls_W": rng.normal(0.0, 0.1, size=(n_classes, dim)),
            "cls_b": np.zeros(n_classes),
        }
        if mode == "mda":
            src = DomainBranch(dim, config.k_s, rng)
            self.params["src_W"], self.params["src_b"] = src.W, src.b
            if config.k_t > 1:
                tgt = DomainBranch(dim, config.k_t, rng)
                self.params["tgt_W"], self.params["tgt_b"] = tgt.W, tgt.b
        n_src = config.k_s if mode == "mda" else 1
        n_tgt = config.k_t if mode == "mda" else 0
        self.running = al.MixtureStats(np.zeros((n_src + n_tgt, dim)), np.ones((n_src + n_tgt, dim)),
                                       np.zeros(n_src + n_tgt, bool))
        self._seen = False

    # assignment heads -----------------------------------------------------
    def _assign(self, x, side: str):
        p = self.params
        if side == "src":
            return softmax(x @ p["src_W"].T + p["src_b"])
        if self.config.k_t == 1:
            return np.ones((x.shape[0], 1))
        return softmax(x @ p["tgt_W"].T + p["tgt_b"])

    def _update_running(self, stats: al.MixtureStats, offset: int):
        m = 1.0 if not self._seen else self.momentum
        k = stats.mean.shape[0]
        mean, var = self.running.mean.copy(), self.running.var.copy()
        live = ~stats.empty
        sl = slice(offset, offset + k)
        mean[sl][live] = (1 - m) * mean[sl][live] + m * stats.mean[live]
        var[sl][live] = (1 - m) * var[sl][live] + m * stats.var[live]
        self.running = al.MixtureStats(mean, var, self.running.empty)

    def loss_and_grads(self, xs, ys, xt, known_domains=None):
        p, cfg = self.params, self.config
        grads = {}
        if self.mode == "bn":
            x_all = np.vstack([xs, xt])
            w = np.ones((len(x_all), 1))
            st = al.mda_statistics(x_all, w)
            z = al.mda_forward(x_all, w, st.mean, st.var, p["gamma"], p["beta"])
            logits = z @ p["cls_W"].T + p["cls_b"]
            probs = softmax(logits)
            ns = len(xs)
            loss = classification_loss(probs[:ns], ys, probs[ns:], cfg.lambda_c)
            dlog = np.zeros_like(logits)
            dlog[:ns] = (probs[:ns] - one_hot(ys, self.n_classes)) / ns
            if len(xt):
                dlog[ns:] = cfg.lambda_c * entropy_grad_logits(probs[ns:]) / len(xt)
            grads["cls_W"] = dlog.T @ z
            grads["cls_b"] = dlog.sum(axis=0)
            back = al.mda_backward(x_all, w, st.mean, st.var, dlog @ p["cls_W"], p["gamma"])
            grads["gamma"], grads["beta"] = back.gamma, back.beta
            self._update_running(st, 0)
            self._seen = True
            return loss, grads

        ns, nt = len(xs), len(xt)
        known = -np.ones(ns, int) if known_domains is None else np.asarray(known_domains, int)
        labeled = known >= 0
        ws_pred = self._assign(xs, "src")
        ws = ws_pred.copy()
        ws[labeled] = one_hot(known[labeled], cfg.k_s)
        wt = self._assign(xt, "tgt")
        st_s = al.mda_statistics(xs, ws)
        st_t = al.mda_statistics(xt, wt)
        zs = al.mda_forward(xs, ws, st_s.mean, st_s.var, p["gamma"], p["beta"])
        zt = al.mda_forward(xt, wt, st_t.mean, st_t.var, p["gamma"], p["beta"])
        ps_ = softmax(zs @ p["cls_W"].T + p["cls_b"])
        pt_ = softmax(zt @ p["cls_W"].T + p["cls_b"])
        loss = classification_loss(ps_, ys, pt_, cfg.lambda_c)
        tgt_dom = wt if cfg.k_t > 1 else None
        d_loss, g_ws, g_wt = domain_loss_and_grad(ws_pred, tgt_dom, known, cfg)
        loss += d_loss

        dls = (ps_ - one_hot(ys, self.n_classes)) / ns
        dlt = cfg.lambda_c * entropy_grad_logits(pt_) / nt
        grads["cls_W"] = dls.T @ zs + dlt.T @ zt
        grads["cls_b"] = dls.sum(axis=0) + dlt.sum(axis=0)
        bs = al.mda_backward(xs, ws, st_s.mean, st_s.var, dls @ p["cls_W"], p["gamma"])
        bt = al.mda_backward(xt, wt, st_t.mean, st_t.var, dlt @ p["cls_W"], p["gamma"])
        grads["gamma"] = bs.gamma + bt.gamma
        grads["beta"] = bs.beta + bt.beta

        dws = np.where(labeled[:, None], 0.0, bs.w) + g_ws
        grads["src_W"], grads["src_b"] = DomainBranch.backward(xs, ws_pred, dws)
        if cfg.k_t > 1:
            grads["tgt_W"], grads["tgt_b"] = DomainBranch.backward(xt, wt, bt.w + g_wt)

        self._update_running(st_s, 0)
        self._update_running(st_t, cfg.k_s)
        self._seen = True
        return loss, grads

    def predict_target(self, x) -> np.ndarray:
        p = self.params
        x = np.atleast_2d(x)
        if self.mode == "bn":
            w = np.ones((len(x), 1))
            mean, var = self.running.mean[:1], self.running.var[:1]
        else:
            w = self._assign(x, "tgt")
            mean, var = self.running.mean[self.config.k_s:], self.running.var[self.config.k_s:]
        z = al.mda_forward(x, w, mean, var, p["gamma"], p["beta"])
        return softmax(z @ p["cls_W"].T + p["cls_b"])


def train_latent(model: LatentDAModel, xs, ys, xt, rng: RngStream, steps: int = 300,
                 batch: int = 64, lr: float = 0.05, momentum: float = 0.9,
                 weight_decay: float = 5e-4, known_domains=None) -> list[float]:
    """Minibatch SGD over paired source/target batches. Returns the loss trace."""
    opt = OptimState(lr, momentum, weight_decay)
    trace = []
    for _ in range(steps):
        i = rng.choice(len(xs), size=min(batch, len(xs)), replace=False)
        j = rng.choice(len(xt), size=min(batch, len(xt)), replace=False)
        kd = None if known_domains is None else np.asarray(known_domains)[i]
        loss, grads = model.loss_and_grads(xs[i], ys[i], xt[j], kd)
        model.params = sgd_step(model.params, grads, opt)
        trace.append(loss)
    return trace
