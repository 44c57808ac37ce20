"""Open-world recognition with nearest-centroid classifiers.

Two families live here. DeepNNO scores a feature by exp(-||f - mu_c|| / 2)
and rejects when every score falls below one global threshold that follows a
weighted running average. B-DOC trains the extractor with a softmax over
squared centroid distances (global clustering) and a soft nearest-neighbour
term (local clustering), then learns one distance threshold per class on
held-out memory samples with a hinge loss.

The feature extractor is a single linear map f = A x. Every loss below
returns its gradient w.r.t. the features; chain with ``x`` for A.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .numerics import PROB_FLOOR, OptimState, RngStream, log_softmax, logsumexp, one_hot, sgd_step, softmax

UNKNOWN = -1
STORE_FORMAT_VERSION = 1
DEFAULT_CAPACITY = 2000
DEFAULT_HELDOUT = 0.2
DEFAULT_MEMORY_RATIO = 0.4
W_ACCEPT, W_REJECT = 1.0, 3.0


class LossGrad(NamedTuple):
    loss: float
    grad: np.ndarray


# --------------------------------------------------------------------------
# class store


@dataclass
class ClassStore:
    dim: int
    centroids: np.ndarray = None
    counts: np.ndarray = None
    deltas: np.ndarray = None
    global_delta: float = 0.0
    sigma2: float = 1.0
    threshold_steps: int = 0

    def __post_init__(self):
        if self.centroids is None:
            self.centroids = np.zeros((0, self.dim))
            self.counts = np.zeros(0)
            self.deltas = np.zeros(0)
        self.centroids = np.asarray(self.centroids, dtype=np.float64).reshape(-1, self.dim)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        self.deltas = np.asarray(self.deltas, dtype=np.float64)
        if np.any(self.counts < 0):
            raise ValueError("class counts must be nonnegative")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids must be finite")

    @property
    def n_classes(self) -> int:
        return self.centroids.shape[0]

    def ensure(self, n: int) -> None:
        """Grow storage so class ids 0..n-1 exist."""
        extra = n - self.n_classes
        if extra > 0:
            self.centroids = np.vstack([self.centroids, np.zeros((extra, self.dim))])
            self.counts = np.concatenate([self.counts, np.zeros(extra)])
            self.deltas = np.concatenate([self.deltas, np.zeros(extra)])


def update_means(store: ClassStore, feats, labels) -> ClassStore:
    """Streaming class means: mu <- (n mu + n_B mu_B) / (n + n_B)."""
    f = np.atleast_2d(np.asarray(feats, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    store.ensure(int(y.max()) + 1 if y.size else 0)
    for c in np.unique(y):
        sel = f[y == c]
        n_b = len(sel)
        n = store.counts[c]
        store.centroids[c] = (n * store.centroids[c] + sel.sum(axis=0)) / (n + n_b)
        store.counts[c] = n + n_b
    return store


def store_to_json(store: ClassStore) -> str:
    doc = {
        "version": STORE_FORMAT_VERSION,
        "classes": [
            {"id": c, "centroid": store.centroids[c].tolist(), "count": float(store.counts[c]),
             "delta": float(store.deltas[c])}
            for c in range(store.n_classes)
        ],
        "global_delta": store.global_delta,
        "sigma2": store.sigma2,
    }
    return json.dumps(doc, indent=1)


def store_from_json(text: str) -> ClassStore:
    doc = json.loads(text)
    if doc.get("version") != STORE_FORMAT_VERSION:
        raise ValueError(f"unsupported store format version {doc.get('version')!r}")
    classes = sorted(doc["classes"], key=lambda c: c["id"])
    if [c["id"] for c in classes] != list(range(len(classes))):
        raise ValueError("class ids must be dense from 0")
    dim = len(classes[0]["centroid"]) if classes else 0
    return ClassStore(dim, np.array([c["centroid"] for c in classes]).reshape(-1, dim),
                      np.array([c["count"] for c in classes]), np.array([c["delta"] for c in classes]),
                      float(doc["global_delta"]), float(doc["sigma2"]))


# --------------------------------------------------------------------------
# distances and scores


def sq_distances(f, centroids) -> np.ndarray:
    f = np.atleast_2d(f)
    return ((f[:, None, :] - np.asarray(centroids)[None]) ** 2).sum(axis=2)


def nno_score(x, mu, tau: float, Z: float = 1.0) -> float:
    if tau <= 0:
        raise ValueError("tau must be positive")
    return float(Z * (1.0 - np.linalg.norm(np.asarray(x) - np.asarray(mu)) / tau))


def dnno_score(f, centroids) -> np.ndarray:
    """exp(-||f - mu_c|| / 2); (n, C) for a batch, (C,) for one feature."""
    single = np.ndim(f) == 1
    s = np.exp(-0.5 * np.sqrt(sq_distances(f, np.atleast_2d(centroids))))
    return s[0] if single else s


def dnno_predict(scores, delta: float) -> np.ndarray | int:
    """argmax score (lowest index on ties), UNKNOWN when all scores <= delta."""
    s = np.asarray(scores, dtype=np.float64)
    if s.shape[-1] == 0:
        raise ValueError("need at least one known class")
    single = s.ndim == 1
    s = np.atleast_2d(s)
    pred = s.argmax(axis=1)
    pred = np.where((s > delta).any(axis=1), pred, UNKNOWN)
    return int(pred[0]) if single else pred


def update_threshold(delta: float, t: int, scores, labels, w_pos: float = W_ACCEPT,
                     w_neg: float = W_REJECT) -> tuple[float, int]:
    """Running average of per-class weighted ground-truth scores.

    Within a class, accepted samples (score > delta) weigh ``w_pos`` and
    rejected ones ``w_neg``; the batch statistic is the mean over the
    classes present. Returns (new delta, t + 1).
    """
    if w_pos <= 0 or w_neg <= 0:
        raise ValueError("sample weights must be positive")
    s = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    if y.size == 0:
        raise ValueError("batch has no labeled samples")
    gt = s[np.arange(len(y)), y]
    per_class = []
    for c in np.unique(y):
        v = gt[y == c]
        w = np.where(v > delta, w_pos, w_neg)
        per_class.append((w * v).sum() / w.sum())
    stat = float(np.mean(per_class))
    return (t * delta + stat) / (t + 1), t + 1


def distill_loss(f, f_old) -> LossGrad:
    """mean ||f - f_old|| with gradient (f - f_old) / ||.|| / n."""
    diff = np.atleast_2d(f) - np.atleast_2d(f_old)
    norm = np.linalg.norm(diff, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    return LossGrad(float(norm.mean()), diff / safe[:, None] / len(diff))


def dnno_loss(f, labels, centroids, f_old=None, lam: float = 1.0) -> LossGrad:
    """Binary cross-entropy over the class scores plus feature distillation."""
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    n = len(f)
    diff = f[:, None, :] - centroids[None]
    r = np.sqrt((diff ** 2).sum(axis=2))
    r_safe = np.where(r > 0, r, 1.0)
    s = np.exp(-0.5 * r)
    pos = one_hot(y, centroids.shape[0]).astype(bool)
    neg_s = np.minimum(s, 1 - PROB_FLOOR)
    per = np.where(pos, 0.5 * r, -np.log1p(-neg_s))
    loss = per.sum(axis=1).mean()
    coef = np.where(pos, 0.5, -0.5 * neg_s / (1 - neg_s)) / r_safe
    coef = np.where(r > 0, coef, 0.0)
    grad = (coef[:, :, None] * diff).sum(axis=1) / n
    if f_old is not None and lam > 0:
        d = distill_loss(f, f_old)
        loss += lam * d.loss
        grad = grad + lam * d.grad
    return LossGrad(float(loss), grad)


def bdoc_global(f, labels, centroids, sigma2: float) -> LossGrad:
    """Cross-entropy of softmax(-||f - mu_k||^2 / T) with T = sigma2.

    T and the centroids are constants for the gradient.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    n = len(f)
    logits = -sq_distances(f, centroids) / sigma2
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), y].mean()
    coeff = np.exp(logp) - one_hot(y, centroids.shape[0])
    grad = (2.0 / sigma2) * coeff @ centroids / n
    return LossGrad(float(loss), grad)


class LocalResult(NamedTuple):
    loss: float
    grad: np.ndarray
    excluded: np.ndarray  # anchors without a same-class peer


def bdoc_local(f, labels, sigma2: float) -> LocalResult:
    """Soft nearest-neighbour loss with temperature sigma2; the anchor is left
    out of both sums and anchors without a same-class peer are dropped."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    f = np.atleast_2d(np.asarray(f, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    n = len(f)
    d = sq_distances(f, f)
    logits = -d / sigma2
    np.fill_diagonal(logits, -np.inf)
    same = (y[:, None] == y[None, :]) & ~np.eye(n, dtype=bool)
    valid = same.any(axis=1)
    if not valid.any():
        return LocalResult(0.0, np.zeros_like(f), ~valid)
    lse_all = logsumexp(logits, axis=1)
    same_logits = np.where(same, logits, -np.inf)
    lse_same = logsumexp(same_logits, axis=1)
    per = np.where(valid, lse_all - lse_same, 0.0)
    n_valid = int(valid.sum())
    a = np.exp(logits - lse_all[:, None])
    b = np.where(valid[:, None], np.exp(same_logits - np.where(valid, lse_same, 0.0)[:, None]), 0.0)
    a = np.where(valid[:, None], a, 0.0)
    # dL/dd_ij = (b_ij - a_ij) / T for valid anchors
    C = (b - a) / sigma2 / n_valid
    S = C + C.T
    grad = 2.0 * (S.sum(axis=1)[:, None] * f - S @ f)
    return LocalResult(float(per.sum() / n_valid), grad, ~valid)


def bdoc_loss(f, labels, centroids, sigma2: float, f_old=None, lam: float = 1.0,
              gamma: float = 1.0, step: int = 1) -> LossGrad:
    """Global clustering + lam * local clustering + gamma * distillation
    (the last only after the first learning step)."""
    g = bdoc_global(f, labels, centroids, sigma2)
    loss, grad = g.loss, g.grad
    if lam > 0:
        lc = bdoc_local(f, labels, sigma2)
        loss += lam * lc.loss
        grad = grad + lam * lc.grad
    if step > 1 and f_old is not None and gamma > 0:
        ds = distill_loss(f, f_old)
        loss += gamma * ds.loss
        grad = grad + gamma * ds.grad
    return LossGrad(float(loss), grad)


# --------------------------------------------------------------------------
# per-class thresholds


def margin_loss(dist, labels, deltas) -> np.ndarray:
    """Per-class hinge loss, mean over samples.

    In-class pairs pay max(0, d - delta_c); cross-class pairs pay
    max(0, delta_k - d). ``dist`` is (n, C) scaled squared distances.
    """
    d = np.atleast_2d(dist)
    pos = one_hot(labels, d.shape[1]).astype(bool)
    m = np.where(pos, 1.0, -1.0)
    return np.maximum(0.0, m * (d - deltas[None])).sum(axis=0) / len(d)


def _margin_subgrad(d, pos, deltas):
    m = np.where(pos, 1.0, -1.0)
    active = m * (d - deltas[None]) > 0
    return (np.where(active, -m, 0.0)).sum(axis=0) / len(d)


class ThresholdResult(NamedTuple):
    deltas: np.ndarray
    missing: np.ndarray  # classes absent from the held-out set


def learn_thresholds(dist, labels, init, lr: float = 0.01, iters: int = 3000) -> ThresholdResult:
    """Subgradient descent on the margin loss, one threshold per class.

    The loss separates across classes, so the best iterate is tracked per
    class. Classes without held-out samples keep their initial value.
    """
    d = np.atleast_2d(np.asarray(dist, dtype=np.float64))
    y = np.asarray(labels, dtype=int)
    deltas = np.asarray(init, dtype=np.float64).copy()
    pos = one_hot(y, d.shape[1]).astype(bool)
    missing = ~pos.any(axis=0)
    best = deltas.copy()
    best_loss = margin_loss(d, y, deltas)
    for _ in range(iters):
        g = _margin_subgrad(d, pos, deltas)
        g[missing] = 0.0
        if not np.any(g):
            break
        deltas = np.maximum(deltas - lr * g, 0.0)
        cur = margin_loss(d, y, deltas)
        better = cur < best_loss
        best[better], best_loss[better] = deltas[better], cur[better]
    best[missing] = np.asarray(init, dtype=np.float64)[missing]
    return ThresholdResult(best, missing)


def init_thresholds(dist, labels, n_classes: int, q: float = 95.0) -> np.ndarray:
    d = np.atleast_2d(dist)
    y = np.asarray(labels, dtype=int)
    out = np.zeros(n_classes)
    for c in range(n_classes):
        sel = d[y == c, c]
        out[c] = np.percentile(sel, q) if sel.size else 0.0
    return out


def bdoc_predict(dist, deltas) -> np.ndarray | int:
    """argmin scaled distance; UNKNOWN when every class threshold is exceeded."""
    d = np.asarray(dist, dtype=np.float64)
    single = d.ndim == 1
    d = np.atleast_2d(d)
    pred = d.argmin(axis=1)
    pred = np.where((d <= np.asarray(deltas)[None]).any(axis=1), pred, UNKNOWN)
    return int(pred[0]) if single else pred


# --------------------------------------------------------------------------
# episodic memory


@dataclass
class _ClassSlot:
    train: np.ndarray     # (n, F) inputs, most relevant first
    heldout: np.ndarray   # (h, F)
    train_rel: np.ndarray = None  # distances, ascending
    held_rel: np.ndarray = None


@dataclass
class EpisodicMemory:
    capacity: int = DEFAULT_CAPACITY
    heldout_fraction: float = DEFAULT_HELDOUT
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        if not 0.0 <= self.heldout_fraction < 1.0:
            raise ValueError("heldout fraction must lie in [0, 1)")

    def size(self, c=None) -> int:
        if c is not None:
            s = self.slots[c]
            return len(s.train) + len(s.heldout)
        return sum(self.size(k) for k in self.slots)

    def reserve(self, n: int) -> int:
        return math.ceil(self.heldout_fraction * n)

    def train_pool(self):
        xs = [s.train for s in self.slots.values() if len(s.train)]
        ys = [np.full(len(s.train), c) for c, s in self.slots.items() if len(s.train)]
        if not xs:
            return np.zeros((0, 0)), np.zeros(0, int)
        return np.vstack(xs), np.concatenate(ys)

    def heldout_pool(self):
        xs = [s.heldout for s in self.slots.values() if len(s.heldout)]
        ys = [np.full(len(s.heldout), c) for c, s in self.slots.items() if len(s.heldout)]
        if not xs:
            return np.zeros((0, 0)), np.zeros(0, int)
        return np.vstack(xs), np.concatenate(ys)


def split_heldout(x, y, fraction: float, rng: RngStream):
    """Per-class random split; ceil(fraction * n_c) samples go to the heldout side."""
    tr, ho = [], []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        k = math.ceil(fraction * len(idx))
        ho.append(idx[:k])
        tr.append(idx[k:])
    return np.sort(np.concatenate(tr)), np.sort(np.concatenate(ho))


def memory_update(memory: EpisodicMemory, centroids, embed: Callable = lambda x: x,
                  new_train=None, new_heldout=None) -> EpisodicMemory:
    """Insert new samples, re-rank every class by distance to its centroid
    and prune to capacity.

    ``new_train`` / ``new_heldout`` are (x, y) pairs. Pruning repeatedly
    shrinks the largest class (ties go to the class holding the globally
    least relevant entry) by dropping its least relevant entry from
    whichever partition keeps the heldout share at ceil(fraction * size).
    """
    for part, data in (("train", new_train), ("heldout", new_heldout)):
        if data is None:
            continue
        x, y = data
        for c in np.unique(y):
            c = int(c)
            slot = memory.slots.setdefault(c, _ClassSlot(np.zeros((0, x.shape[1])), np.zeros((0, x.shape[1]))))
            setattr(slot, part, np.vstack([getattr(slot, part), x[y == c]]))

    for c, slot in memory.slots.items():
        mu = centroids[c]
        for part in ("train", "heldout"):
            arr = getattr(slot, part)
            rel = np.linalg.norm(embed(arr) - mu, axis=1) if len(arr) else np.zeros(0)
            order = np.argsort(rel, kind="stable")
            setattr(slot, part, arr[order])
            setattr(slot, "train_rel" if part == "train" else "held_rel", rel[order])

    while memory.size() > memory.capacity:
        def worst(c):
            s = memory.slots[c]
            return max(s.train_rel[-1] if len(s.train_rel) else -np.inf,
                       s.held_rel[-1] if len(s.held_rel) else -np.inf)
        c = max(memory.slots, key=lambda k: (memory.size(k), worst(k)))
        s = memory.slots[c]
        target_held = memory.reserve(memory.size(c) - 1)
        if len(s.heldout) > target_held or len(s.train) == 0:
            s.heldout, s.held_rel = s.heldout[:-1], s.held_rel[:-1]
        else:
            s.train, s.train_rel = s.train[:-1], s.train_rel[:-1]
    return memory


class Batch(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    n_memory: int
    fallback: bool  # memory was empty although ratio > 0


def balanced_batch(memory: EpisodicMemory, x_new, y_new, ratio: float, size: int,
                   rng: RngStream) -> Batch:
    """floor(ratio * size) rehearsal samples from memory, the rest new data."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError("ratio must lie in [0, 1)")
    mx, my = memory.train_pool()
    n_mem = int(math.floor(ratio * size))
    fallback = n_mem > 0 and len(my) == 0
    if fallback:
        n_mem = 0
    n_new = size - n_mem
    i = rng.choice(len(y_new), size=n_new, replace=n_new > len(y_new))
    if n_mem == 0:
        return Batch(x_new[i], y_new[i], 0, fallback)
    j = rng.choice(len(my), size=n_mem, replace=n_mem > len(my))
    return Batch(np.vstack([mx[j], x_new[i]]), np.concatenate([my[j], y_new[i]]), n_mem, False)


# --------------------------------------------------------------------------
# metrics


def _harmonic(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2 * a * b / (a + b)


def owr_metrics(closed_pred, closed_rej_pred, known_labels, unknown_pred) -> dict:
    """Closed accuracy with and without rejection, open-set rejection accuracy
    and their arithmetic (OWR) and harmonic (OWR-H) means."""
    y = np.asarray(known_labels, dtype=int)
    if y.size == 0 or np.size(unknown_pred) == 0:
        raise ValueError("known and unknown pools must be nonempty")
    closed = float((np.asarray(closed_pred) == y).mean())
    closed_rej = float((np.asarray(closed_rej_pred) == y).mean())
    open_acc = float((np.asarray(unknown_pred) == UNKNOWN).mean())
    return {
        "closed_acc": closed,
        "closed_rej_acc": closed_rej,
        "open_acc": open_acc,
        "known_rejection": float((np.asarray(closed_rej_pred) == UNKNOWN).mean()),
        "owr": (closed_rej + open_acc) / 2,
        "owr_h": _harmonic(closed_rej, open_acc),
    }


# --------------------------------------------------------------------------
# episodic trainers


@dataclass
class OWRConfig:
    method: str = "bdoc"          # 'bdoc' or 'dnno'
    feat_dim: int = 8
    capacity: int = DEFAULT_CAPACITY
    heldout_fraction: float = DEFAULT_HELDOUT
    memory_ratio: float = DEFAULT_MEMORY_RATIO
    lam: float = 1.0
    gamma: float = 1.0
    steps: int = 300
    batch: int = 64
    lr: float = 0.05
    threshold_lr: float = 0.01
    heldout_noise: float = 0.05
    sigma_momentum: float = 0.1


class OWRLearner:
    """Linear extractor + class store trained episode by episode."""

    def __init__(self, in_dim: int, config: OWRConfig, rng: RngStream):
        if config.method not in ("bdoc", "dnno"):
            raise ValueError(f"unknown method {config.method!r}")
        self.cfg = config
        self.rng = rng
        self.A = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(config.feat_dim, in_dim))
        self.store = ClassStore(config.feat_dim)
        self.memory = EpisodicMemory(config.capacity, config.heldout_fraction)
        self.episode = 0

    def embed(self, x) -> np.ndarray:
        return np.atleast_2d(x) @ self.A.T

    def _recompute_centroids(self, x, y):
        f = self.embed(x)
        for c in np.unique(y):
            self.store.centroids[c] = f[y == c].mean(axis=0)
            self.store.counts[c] = float((y == c).sum())

    def learn_episode(self, x, y) -> None:
        cfg, rng = self.cfg, self.rng
        self.episode += 1
        tr, ho = split_heldout(x, y, cfg.heldout_fraction, rng)
        x_tr, y_tr = x[tr], y[tr]
        A_old = self.A.copy() if self.episode > 1 else None
        self.store.ensure(int(y.max()) + 1)
        mem_x, mem_y = self.memory.train_pool()
        all_x = np.vstack([mem_x, x_tr]) if len(mem_y) else x_tr
        all_y = np.concatenate([mem_y, y_tr]) if len(mem_y) else y_tr
        self._recompute_centroids(all_x, all_y)
        opt = OptimState(cfg.lr, 0.9, 1e-4)
        first_sigma = self.episode == 1
        for _ in range(cfg.steps):
            b = balanced_batch(self.memory, x_tr, y_tr, cfg.memory_ratio, cfg.batch, rng)
            f = self.embed(b.x)
            f_old = b.x @ A_old.T if A_old is not None else None
            if cfg.method == "dnno":
                lg = dnno_loss(f, b.y, self.store.centroids, f_old, cfg.lam)
                scores = dnno_score(f, self.store.centroids)
                self.store.global_delta, self.store.threshold_steps = update_threshold(
                    self.store.global_delta, self.store.threshold_steps, scores, b.y)
            else:
                s2 = float(np.var(f)) + 1e-8
                m = 1.0 if first_sigma else cfg.sigma_momentum
                self.store.sigma2 = (1 - m) * self.store.sigma2 + m * s2
                first_sigma = False
                lg = bdoc_loss(f, b.y, self.store.centroids, s2, f_old, cfg.lam, cfg.gamma, self.episode)
            self.A = sgd_step({"A": self.A}, {"A": lg.grad.T @ b.x}, opt)["A"]
            # centroids follow the data seen in this batch
            self.store = update_means(self.store, self.embed(b.x), b.y)
        self._recompute_centroids(all_x, all_y)
        self.memory = memory_update(self.memory, self.store.centroids, self.embed,
                                    (x_tr, y_tr), (x[ho], y[ho]))
        if cfg.method == "bdoc":
            self._fit_thresholds()

    def distances(self, x) -> np.ndarray:
        return sq_distances(self.embed(x), self.store.centroids) / self.store.sigma2

    def _fit_thresholds(self):
        cfg = self.cfg
        mx, my = self.memory.train_pool()
        init = init_thresholds(self.distances(mx), my, self.store.n_classes)
        hx, hy = self.memory.heldout_pool()
        if len(hy) == 0:
            self.store.deltas = init
            return
        if cfg.heldout_noise > 0:
            hx = hx + self.rng.normal(0.0, cfg.heldout_noise, size=hx.shape)
        res = learn_thresholds(self.distances(hx), hy, init, cfg.threshold_lr)
        self.store.deltas = res.deltas

    def predict(self, x, reject: bool = True) -> np.ndarray:
        if self.cfg.method == "dnno":
            s = dnno_score(self.embed(x), self.store.centroids)
            return dnno_predict(s, self.store.global_delta) if reject else s.argmax(axis=1)
        d = self.distances(x)
        return bdoc_predict(d, self.store.deltas) if reject else d.argmin(axis=1)
