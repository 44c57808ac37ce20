"""Online adaptation of normalization statistics on a target stream (ONDA).

Samples are classified with the current global statistics, then buffered.
Every ``n_t`` samples a partial estimate is folded into the global estimate
as an exponential moving average with decay ``alpha``. Only statistics
change; scale and bias stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import numpy as np

from .alignment import BNState, da_normalize
from .numerics import softmax

DEFAULT_ALPHA = 0.1
DEFAULT_NT = 10


def onda_partial(buffer) -> tuple[np.ndarray, np.ndarray]:
    """Biased mean and variance over a full buffer."""
    buf = np.asarray(buffer, dtype=np.float64)
    if buf.ndim != 2 or buf.shape[0] < 2:
        raise ValueError("partial estimate needs a buffer of at least 2 samples")
    mu = buf.mean(axis=0)
    return mu, ((buf - mu) ** 2).mean(axis=0)


def onda_update(state: BNState, mu_hat, var_hat, alpha: float, n_t: int) -> BNState:
    """Fold a partial estimate into the global statistics.

    The variance gets the n_t/(n_t - 1) correction; the mean does not.
    """
    if n_t < 2:
        raise ValueError("n_t must be at least 2")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    mu = (1 - alpha) * state.mean + alpha * np.asarray(mu_hat, dtype=np.float64)
    var = (1 - alpha) * state.var + alpha * (n_t / (n_t - 1)) * np.asarray(var_hat, dtype=np.float64)
    return replace(state, mean=mu, var=var, count=state.count + n_t)


@dataclass
class OnlineBN:
    state: BNState
    n_t: int = DEFAULT_NT
    alpha: float = DEFAULT_ALPHA
    buffer: list = field(default_factory=list)
    updates: int = 0

    def __post_init__(self):
        if self.n_t < 2:
            raise ValueError("n_t must be at least 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    def push(self, x) -> bool:
        """Buffer one sample; fire an update when the buffer fills. Returns
        True when an update happened."""
        self.buffer.append(np.asarray(x, dtype=np.float64))
        if len(self.buffer) < self.n_t:
            return False
        mu, var = onda_partial(np.stack(self.buffer))
        self.state = onda_update(self.state, mu, var, self.alpha, self.n_t)
        self.buffer.clear()
        self.updates += 1
        return True


class BNClassifier:
    """Normalization followed by a linear softmax head."""

    def __init__(self, bn: BNState, W, b):
        self.bn = bn
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)

    def predict_proba(self, x, state: BNState | None = None) -> np.ndarray:
        z = da_normalize(np.atleast_2d(x), state if state is not None else self.bn)
        return softmax(z @ self.W.T + self.b)

    def predict(self, x, state: BNState | None = None) -> np.ndarray:
        return self.predict_proba(x, state).argmax(axis=1)


class StreamResult(NamedTuple):
    predictions: np.ndarray
    state: BNState
    mean_history: np.ndarray  # (updates + 1, F), starting with the initial mean
    updates: int


def onda_stream(model: BNClassifier, stream: Iterable, n_t: int = DEFAULT_NT,
                alpha: float = DEFAULT_ALPHA) -> StreamResult:
    """Classify each sample with pre-update statistics, then buffer it.

    Leftover samples that never fill a buffer are dropped.
    """
    online = OnlineBN(model.bn, n_t, alpha)
    preds, history = [], [online.state.mean.copy()]
    for x in stream:
        preds.append(int(model.predict(x, online.state)[0]))
        if online.push(x):
            history.append(online.state.mean.copy())
    return StreamResult(np.array(preds, dtype=int), online.state, np.array(history), online.updates)


def relative_gap(history, target_mean) -> np.ndarray:
    """||mu_t - target|| / ||target|| along a mean history (the absolute gap
    when the target is the origin)."""
    target = np.asarray(target_mean, dtype=np.float64)
    scale = np.linalg.norm(target)
    return np.linalg.norm(np.asarray(history) - target, axis=1) / (scale if scale > 0 else 1.0)


def time_to_fraction(history, start_mean, target_mean, fraction: float = 0.9) -> int:
    """First update index at which the mean has covered ``fraction`` of the
    shift along the start->target direction. Returns len(history) if never."""
    start = np.asarray(start_mean, dtype=np.float64)
    shift = np.asarray(target_mean, dtype=np.float64) - start
    progress = (np.asarray(history) - start) @ shift / (shift @ shift)
    hit = np.flatnonzero(progress >= fraction)
    return int(hit[0]) if hit.size else len(history)
