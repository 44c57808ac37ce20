"""Shared numerics: stable softmax/entropy, seeded streams, momentum SGD and a
central-difference gradient oracle.

Arrays are plain float64 numpy arrays. Every function returns fresh arrays and
leaves its inputs untouched, except ``sgd_step`` which advances the velocity
buffer owned by its ``OptimState``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

PROB_FLOOR = 1e-12


def _check_finite(x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    _check_finite(z, "logits")
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    _check_finite(z, "logits")
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def logsumexp(z, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    m = z.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):  # an all -inf slice is -inf
        return (m + np.log(np.exp(z - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def entropy(p, axis: int = -1) -> np.ndarray | float:
    """Shannon entropy in nats with 0 log 0 = 0. Accepts a single distribution
    or a stack of them along ``axis``."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("probabilities must be nonnegative")
    if not np.allclose(p.sum(axis=axis), 1.0, atol=1e-9):
        raise ValueError("probabilities must sum to 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    h = -terms.sum(axis=axis)
    return float(h) if np.ndim(h) == 0 else h


def cross_entropy(p, label) -> np.ndarray | float:
    """-log p[label] with the probability floored at ``PROB_FLOOR``.

    ``p`` may be one distribution with an int label, or an (n, K) stack with
    an (n,) label array (returns per-row losses).
    """
    p = np.asarray(p, dtype=np.float64)
    lab = np.asarray(label)
    k = p.shape[-1]
    if np.any(lab < 0) or np.any(lab >= k):
        raise IndexError(f"label out of range for {k} classes")
    if p.ndim == 1:
        return float(-np.log(max(p[int(lab)], PROB_FLOOR)))
    picked = p[np.arange(p.shape[0]), lab.astype(int)]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def entropy_grad_logits(p: np.ndarray) -> np.ndarray:
    """d H(softmax(z)) / dz evaluated from p = softmax(z), row-wise."""
    logp = np.log(np.maximum(p, PROB_FLOOR))
    h = -(p * logp).sum(axis=-1, keepdims=True)
    return -p * (logp + h)


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. softmax outputs back to the logits (row-wise)."""
    return p * (grad_p - (p * grad_p).sum(axis=-1, keepdims=True))


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


# --------------------------------------------------------------------------
# seeded randomness


class RngStream:
    """Seeded stream on numpy's Philox4x64-10 counter-based generator.

    Philox output depends only on (key, counter), so equal seeds give
    byte-identical draws on every platform numpy supports. Child streams for
    parallel work come from ``spawn``, which derives independent keys from the
    parent seed via ``SeedSequence``.
    """

    def __init__(self, seed: int, _seq: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._seq = _seq if _seq is not None else np.random.SeedSequence(self.seed)
        self.gen = np.random.Generator(np.random.Philox(self._seq))

    def spawn(self, n: int) -> list["RngStream"]:
        return [RngStream(self.seed, s) for s in self._seq.spawn(n)]

    # thin pass-throughs keep call sites short
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def choice(self, a, size=None, replace=True, p=None):
        return self.gen.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        return self.gen.permutation(x)

    def beta(self, a, b, size=None):
        return self.gen.beta(a, b, size)

    def bernoulli(self, p, size=None):
        return (self.gen.random(size) < p).astype(float) if size is not None else float(self.gen.random() < p)


def as_stream(rng: RngStream | int) -> RngStream:
    return rng if isinstance(rng, RngStream) else RngStream(int(rng))


# --------------------------------------------------------------------------
# optimizer


@dataclass
class OptimState:
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
             state: OptimState) -> dict[str, np.ndarray]:
    """One momentum step with coupled weight decay:
    v <- momentum*v + grad + wd*param;  param <- param - lr*v.

    Parameters without a gradient entry are passed through unchanged.
    """
    out = {}
    for name, p in params.items():
        p = np.asarray(p, dtype=np.float64)
        if name not in grads:
            out[name] = p
            continue
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"shape mismatch for {name!r}: param {p.shape} vs grad {g.shape}")
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(p)
        elif v.shape != p.shape:
            raise ValueError(f"velocity shape mismatch for {name!r}")
        v = state.momentum * v + g + state.weight_decay * p
        state.velocity[name] = v
        out[name] = p - state.learning_rate * v
    return out


# --------------------------------------------------------------------------
# gradient oracle


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h, any input shape."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"f is non-finite near coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def relative_error(analytic, numeric, floor: float = 1e-10) -> float:
    """max|a - n| / max(max|a|, max|n|, floor): a scale-aware gradient mismatch."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(n).max(), floor)
    return float(np.abs(a - n).max() / scale)
