"""Curriculum mixup for zero-shot recognition in unseen domains.

A sample is mixed with a same-domain peer or, with probability alpha, with
a sample from another domain. Mixing strength lambda ~ Beta(beta, beta).
Both alpha and beta ramp up on a fixed epoch schedule. Mixing happens at
two levels with independent draws: on raw inputs and on extracted features.
Labels are mixed with the same coefficients as their inputs.

Model: h = relu(A x + a) is the feature extractor (or the identity when
``hidden`` is 0), z = P h its projection into the class-embedding space,
and compatibility logits are E z for embedding rows E.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .numerics import OptimState, RngStream, log_softmax, one_hot, sgd_step, softmax

EMBEDDING_FORMAT_VERSION = 1


def mix2(a_i, a_j, lam: float):
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    a_i, a_j = np.asarray(a_i, dtype=np.float64), np.asarray(a_j, dtype=np.float64)
    if a_i.shape != a_j.shape:
        raise ValueError("mixed values must share a shape")
    return lam * a_i + (1 - lam) * a_j


def mix3(a_i, a_j, a_k, lam: float, gamma: int):
    """lam * a_i + (1 - lam) * (gamma * a_j + (1 - gamma) * a_k).

    gamma = 1 mixes across domains (a_j), gamma = 0 within the anchor's
    domain (a_k).
    """
    if gamma not in (0, 1):
        raise ValueError("gamma must be 0 or 1")
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    a_i, a_j, a_k = (np.asarray(a, dtype=np.float64) for a in (a_i, a_j, a_k))
    if not (a_i.shape == a_j.shape == a_k.shape):
        raise ValueError("mixed values must share a shape")
    return lam * a_i + (1 - lam) * (gamma * a_j + (1 - gamma) * a_k)


def sample_triplet(domains, i: int, rng: RngStream) -> tuple[int, int]:
    """j from another domain, k a different sample of the anchor's domain."""
    d = np.asarray(domains)
    same = np.flatnonzero((d == d[i]) & (np.arange(len(d)) != i))
    other = np.flatnonzero(d != d[i])
    if same.size == 0 or other.size == 0:
        raise ValueError("batch cannot satisfy the triplet constraints for this anchor")
    return int(rng.choice(other)), int(rng.choice(same))


@dataclass(frozen=True)
class MixSchedule:
    warmup: int
    beta_max: float

    def __post_init__(self):
        if self.warmup < 1:
            raise ValueError("warm-up length must be at least 1")
        if self.beta_max <= 0:
            raise ValueError("beta_max must be positive")

    def at(self, s: float) -> tuple[float, float]:
        return schedule(s, self.warmup, self.beta_max)


def schedule(s: float, N: int, beta_max: float) -> tuple[float, float]:
    """(alpha, beta) at epoch s: beta ramps to beta_max over N epochs; alpha
    then ramps from 0 to 1 over the next N."""
    if s < 0:
        raise ValueError("epoch must be nonnegative")
    beta = min(s / N * beta_max, beta_max)
    alpha = max(0.0, min((s - N) / N, 1.0))
    return alpha, beta


class MixPlan(NamedTuple):
    j: np.ndarray
    k: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray


def sample_plan(domains, alpha: float, beta: float, rng: RngStream) -> MixPlan:
    """One (j, k, lambda, gamma) per anchor. beta = 0 means no mixing.

    When the batch holds a single domain only same-domain mixes are possible;
    that is allowed as long as alpha = 0.
    """
    d = np.asarray(domains)
    n = len(d)
    single = np.unique(d).size == 1
    if single and alpha > 0:
        raise ValueError("cross-domain mixing needs at least two domains in the batch")
    j, k = np.empty(n, int), np.empty(n, int)
    for i in range(n):
        if single:
            same = np.flatnonzero(np.arange(n) != i)
            if same.size == 0:
                raise ValueError("batch cannot satisfy the triplet constraints")
            k[i] = j[i] = int(rng.choice(same))
        else:
            j[i], k[i] = sample_triplet(d, i, rng)
    lam = np.ones(n) if beta <= 0 else rng.beta(beta, beta, size=n)
    gam = (rng.random(n) < alpha).astype(int)
    return MixPlan(j, k, lam, gam)


def _mix_rows(a, plan: MixPlan):
    lam = plan.lam.reshape(-1, *([1] * (a.ndim - 1)))
    gam = plan.gamma.reshape(-1, *([1] * (a.ndim - 1)))
    return lam * a + (1 - lam) * (gam * a[plan.j] + (1 - gam) * a[plan.k])


def _unmix_rows(g, plan: MixPlan):
    """Adjoint of _mix_rows: scatter a gradient on mixed rows to the sources."""
    lam = plan.lam[:, None]
    gam = plan.gamma[:, None]
    out = lam * g
    np.add.at(out, plan.j, (1 - lam) * gam * g)
    np.add.at(out, plan.k, (1 - lam) * (1 - gam) * g)
    return out


def soft_ce(logits, targets) -> tuple[float, np.ndarray]:
    """Mean cross-entropy against (possibly soft) targets and its logit gradient."""
    logp = log_softmax(logits)
    n = len(logits)
    loss = -(targets * logp).sum(axis=1).mean()
    return float(loss), (np.exp(logp) * targets.sum(axis=1, keepdims=True) - targets) / n


def agg_loss(z, labels, embeddings) -> float:
    """CE of softmax over E z against integer or soft labels."""
    z = np.atleast_2d(z)
    E = np.asarray(embeddings, dtype=np.float64)
    t = np.asarray(labels)
    t = one_hot(t, E.shape[0]) if t.ndim == 1 else t.astype(np.float64)
    return soft_ce(z @ E.T, t)[0]


def zsl_predict(z, embeddings) -> np.ndarray | int:
    """argmax_y E[y] . z, lowest index on ties."""
    E = np.asarray(embeddings, dtype=np.float64)
    if E.shape[0] == 0:
        raise ValueError("no candidate classes")
    s = np.atleast_2d(z) @ E.T
    pred = s.argmax(axis=1)
    return int(pred[0]) if np.ndim(z) == 1 else pred


# --------------------------------------------------------------------------
# model and objective


def init_params(in_dim: int, hidden: int, emb_dim: int, rng: RngStream) -> dict:
    if hidden == 0:
        return {"P": rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(emb_dim, in_dim))}
    return {
        "A": rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(hidden, in_dim)),
        "a": np.zeros(hidden),
        "P": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(emb_dim, hidden)),
    }


def _features(params, x):
    if "A" not in params:
        return x, None
    pre = x @ params["A"].T + params["a"]
    return np.maximum(pre, 0.0), pre


def project(params, x) -> np.ndarray:
    return _features(params, np.atleast_2d(x))[0] @ params["P"].T


def _head(params, h, targets, E):
    """Loss + gradients of soft CE on E P h w.r.t. P and h."""
    z = h @ params["P"].T
    loss, dlog = soft_ce(z @ E.T, targets)
    dz = dlog @ E
    return loss, dz.T @ h, dz @ params["P"]


def _extractor_grads(x, pre, dh):
    if pre is None:
        return None, None
    dpre = dh * (pre > 0)
    return dpre.T @ x, dpre.sum(axis=0)


class Objective(NamedTuple):
    loss: float
    parts: dict
    grads: dict


def cumix_objective(params, x, y, E, plan_img: MixPlan | None, plan_feat: MixPlan | None,
                    eta_i: float = 1.0, eta_f: float = 1.0) -> Objective:
    """L_AGG + eta_i * L_M-IMG + eta_f * L_M-F for fixed mixing plans.

    Plans come from ``sample_plan``; passing them in keeps the objective a
    deterministic function of the parameters.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    E = np.asarray(E, dtype=np.float64)
    Y = one_hot(y, E.shape[0])
    h, pre = _features(params, x)
    l_agg, dP, dh = _head(params, h, Y, E)
    grads = {"P": dP}
    has_f = "A" in params
    if has_f:
        grads["A"], grads["a"] = _extractor_grads(x, pre, dh)
    parts = {"agg": l_agg, "img": 0.0, "feat": 0.0}

    if eta_i > 0 and plan_img is not None:
        xm, ym = _mix_rows(x, plan_img), _mix_rows(Y, plan_img)
        hm, prem = _features(params, xm)
        l_img, dP, dhm = _head(params, hm, ym, E)
        parts["img"] = l_img
        grads["P"] = grads["P"] + eta_i * dP
        if has_f:
            dA, da = _extractor_grads(xm, prem, dhm)
            grads["A"] = grads["A"] + eta_i * dA
            grads["a"] = grads["a"] + eta_i * da

    if eta_f > 0 and plan_feat is not None:
        hm, ym = _mix_rows(h, plan_feat), _mix_rows(Y, plan_feat)
        l_feat, dP, dhm = _head(params, hm, ym, E)
        parts["feat"] = l_feat
        grads["P"] = grads["P"] + eta_f * dP
        if has_f:
            dA, da = _extractor_grads(x, pre, _unmix_rows(dhm, plan_feat))
            grads["A"] = grads["A"] + eta_f * dA
            grads["a"] = grads["a"] + eta_f * da

    loss = l_agg + eta_i * parts["img"] + eta_f * parts["feat"]
    return Objective(float(loss), parts, grads)


def mimg_loss(params, x, y, domains, E, alpha: float, beta: float, rng: RngStream) -> float:
    plan = sample_plan(domains, alpha, beta, rng)
    return cumix_objective(params, x, y, E, plan, None, 1.0, 0.0).parts["img"]


def mfeat_loss(params, x, y, domains, E, alpha: float, beta: float, rng: RngStream) -> float:
    plan = sample_plan(domains, alpha, beta, rng)
    return cumix_objective(params, x, y, E, None, plan, 0.0, 1.0).parts["feat"]


@dataclass
class CuMixConfig:
    hidden: int = 32
    epochs: int = 30
    warmup: int = 5
    beta_max: float = 0.5
    eta_i: float = 1.0
    eta_f: float = 1.0
    batch_per_domain: int = 16
    steps_per_epoch: int = 20
    lr: float = 0.05
    weight_decay: float = 1e-4


def _domain_batch(domains, per_domain: int, rng: RngStream) -> np.ndarray:
    idx = []
    for d in np.unique(domains):
        pool = np.flatnonzero(domains == d)
        idx.append(rng.choice(pool, size=per_domain, replace=per_domain > len(pool)))
    return np.concatenate(idx)


def train_cumix(x, y, domains, E, config: CuMixConfig, rng: RngStream, mixing: bool = True) -> dict:
    """Train on seen classes. ``mixing=False`` gives the plain AGG baseline
    with identical batches and optimizer."""
    params = init_params(x.shape[1], config.hidden, E.shape[1], rng)
    opt = OptimState(config.lr, 0.9, config.weight_decay)
    sched = MixSchedule(config.warmup, config.beta_max)
    for epoch in range(config.epochs):
        alpha, beta = sched.at(epoch)
        for _ in range(config.steps_per_epoch):
            i = _domain_batch(domains, config.batch_per_domain, rng)
            if mixing:
                p_img = sample_plan(domains[i], alpha, beta, rng)
                p_feat = sample_plan(domains[i], alpha, beta, rng)
                obj = cumix_objective(params, x[i], y[i], E, p_img, p_feat, config.eta_i, config.eta_f)
            else:
                obj = cumix_objective(params, x[i], y[i], E, None, None, 0.0, 0.0)
            params = sgd_step(params, obj.grads, opt)
    return params


# --------------------------------------------------------------------------
# embedding bank


def embeddings_to_json(ids, vectors) -> str:
    V = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    doc = {"version": EMBEDDING_FORMAT_VERSION, "dim": int(V.shape[1]),
           "classes": [{"id": int(c), "vector": v.tolist()} for c, v in zip(ids, V)]}
    return json.dumps(doc, indent=1)


def embeddings_from_json(text: str) -> tuple[np.ndarray, np.ndarray]:
    doc = json.loads(text)
    if doc.get("version") != EMBEDDING_FORMAT_VERSION:
        raise ValueError(f"unsupported embedding format version {doc.get('version')!r}")
    dim = int(doc["dim"])
    ids = np.array([c["id"] for c in doc["classes"]], dtype=int)
    V = np.array([c["vector"] for c in doc["classes"]], dtype=np.float64).reshape(-1, dim)
    return ids, V
