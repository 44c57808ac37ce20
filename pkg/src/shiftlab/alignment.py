"""Domain alignment layers over flat feature vectors.

Covers plain domain-specific normalization, the soft multi-domain (mDA)
variant driven by per-sample assignment weights, its analytic backward pass,
the weighted test-time combination used for domain generalization (WBN) and
running-statistic maintenance.

Shapes: a batch ``x`` is (b, F); assignments ``w`` are (b, D); per-domain
statistics are (D, F).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_EPS = 1e-5


@dataclass(frozen=True)
class BNState:
    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    count: float = 0.0
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        for name in ("mean", "var", "gamma", "beta"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"BNState.{name} must be finite")
            object.__setattr__(self, name, arr)
        if np.any(self.var < 0):
            raise ValueError("BNState.var must be nonnegative")
        if self.eps <= 0:
            raise ValueError("BNState.eps must be positive")
        if not (self.mean.shape == self.var.shape == self.gamma.shape == self.beta.shape):
            raise ValueError("BNState fields must share one shape")

    @classmethod
    def identity(cls, dim: int, eps: float = DEFAULT_EPS) -> "BNState":
        return cls(np.zeros(dim), np.ones(dim), np.ones(dim), np.zeros(dim), 0.0, eps)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class MixtureStats(NamedTuple):
    mean: np.ndarray   # (D, F)
    var: np.ndarray    # (D, F)
    empty: np.ndarray  # (D,) bool, True where the column weight summed to zero


class MDAGrads(NamedTuple):
    x: np.ndarray
    w: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def check_assignments(w, atol: float = 1e-9) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("assignment matrix must be 2-D (samples, domains)")
    if np.any(w < -atol) or np.any(w > 1 + atol):
        raise ValueError("assignment entries must lie in [0, 1]")
    if not np.allclose(w.sum(axis=1), 1.0, atol=atol):
        raise ValueError("assignment rows must sum to 1")
    return w


def da_normalize(x, s: BNState) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != s.dim:
        raise ValueError(f"feature dim {x.shape[-1]} does not match state dim {s.dim}")
    return s.gamma * (x - s.mean) / np.sqrt(s.var + s.eps) + s.beta


def mda_statistics(x, w, previous: MixtureStats | None = None) -> MixtureStats:
    """Weighted per-domain mean and biased variance.

    Column weights are renormalized to sum to one over the batch. Domains
    whose column sums to zero are marked empty and keep ``previous`` values
    (identity statistics when no previous estimate exists).
    """
    x = _as_batch(x)
    w = np.asarray(w, dtype=np.float64)
    if w.shape[0] != x.shape[0]:
        raise ValueError("x and w disagree on batch size")
    totals = w.sum(axis=0)
    empty = totals <= 0
    safe = np.where(empty, 1.0, totals)
    w_hat = w / safe
    mean = w_hat.T @ x
    var = np.einsum("id,idf->df", w_hat, (x[:, None, :] - mean[None]) ** 2)
    if np.any(empty):
        if previous is not None:
            mean[empty] = previous.mean[empty]
            var[empty] = previous.var[empty]
        else:
            mean[empty] = 0.0
            var[empty] = 1.0
    return MixtureStats(mean, var, empty)


def _normalized_parts(x, mean, var, eps):
    std = np.sqrt(var + eps)
    xhat = (x[:, None, :] - mean[None]) / std[None]
    return std, xhat


def mda_forward(x, w, mean, var, gamma=1.0, beta=0.0, eps: float = DEFAULT_EPS) -> np.ndarray:
    x = _as_batch(x)
    w = np.asarray(w, dtype=np.float64)
    mean = np.atleast_2d(np.asarray(mean, dtype=np.float64))
    var = np.atleast_2d(np.asarray(var, dtype=np.float64))
    if mean.shape[0] < w.shape[1]:
        raise ValueError("missing statistics for some assignment columns")
    if mean.shape[1] != x.shape[1]:
        raise ValueError("statistics and batch disagree on feature dim")
    _, xhat = _normalized_parts(x, mean, var, eps)
    return gamma * np.einsum("id,idf->if", w, xhat) + beta


def mda_backward(x, w, mean, var, grad_y, gamma=1.0, eps: float = DEFAULT_EPS) -> MDAGrads:
    """Analytic gradients of an mDA layer whose statistics were computed from
    this same batch (``mda_statistics(x, w)``).

    Input and assignment gradients follow the closed forms built on the
    per-domain reductions A_d = sum_i w_hat[i,d] g_i and
    B_d = sum_i w_hat[i,d] xhat[i,d] g_i, with g = gamma * dL/dy. The
    assignment gradient is summed over features because one weight is shared
    by every feature of a sample. Scale and bias get the usual BN gradients.
    """
    x = _as_batch(x)
    w = np.asarray(w, dtype=np.float64)
    grad_y = _as_batch(grad_y)
    if grad_y.shape != x.shape or w.shape[0] != x.shape[0]:
        raise ValueError("shape mismatch between x, w and grad_y")
    mean = np.atleast_2d(mean)
    var = np.atleast_2d(var)
    std, xhat = _normalized_parts(x, mean, var, eps)
    totals = w.sum(axis=0)
    w_hat = w / np.where(totals > 0, totals, 1.0)

    g = gamma * grad_y
    a = w_hat.T @ g                                    # (D, F)
    b = np.einsum("id,idf,if->df", w_hat, xhat, g)     # (D, F)

    inner = g[:, None, :] - a[None] - xhat * b[None]   # (b, D, F)
    dx = np.einsum("id,idf->if", w, inner / std[None])

    ratio = var / (var + eps)
    dw = (xhat * (g[:, None, :] - a[None]) - 0.5 * (xhat ** 2 - ratio[None]) * b[None]).sum(axis=2)

    u = np.einsum("id,idf->if", w, xhat)
    dgamma = (grad_y * u).sum(axis=0)
    dbeta = grad_y.sum(axis=0)
    return MDAGrads(dx, dw, dgamma, dbeta)


def bn_forward(x, gamma=1.0, beta=0.0, eps: float = DEFAULT_EPS):
    """Standard batch normalization with batch statistics: the mDA layer with
    one domain. Returns (output, mean, var)."""
    x = _as_batch(x)
    w = np.ones((x.shape[0], 1))
    st = mda_statistics(x, w)
    return mda_forward(x, w, st.mean, st.var, gamma, beta, eps), st.mean[0], st.var[0]


def bn_backward(x, grad_y, gamma=1.0, eps: float = DEFAULT_EPS) -> MDAGrads:
    x = _as_batch(x)
    w = np.ones((x.shape[0], 1))
    st = mda_statistics(x, w)
    return mda_backward(x, w, st.mean, st.var, grad_y, gamma, eps)


def wbn_forward(x, weights, states: Sequence[BNState], gamma=None, beta=None) -> np.ndarray:
    """Soft combination of per-domain normalizations with a shared affine.

    ``weights`` is one distribution over domains (applied to every row of x)
    or one row per sample. The shared scale/bias default to the first state's.
    """
    x = _as_batch(x)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim == 1:
        weights = np.broadcast_to(weights, (x.shape[0], weights.shape[0]))
    if weights.shape[1] > len(states):
        raise IndexError("weights reference an unknown domain index")
    if np.any(weights < 0) or not np.allclose(weights.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("weights must be a nonnegative distribution")
    gamma = states[0].gamma if gamma is None else gamma
    beta = states[0].beta if beta is None else beta
    out = np.zeros_like(x)
    for j in range(weights.shape[1]):
        s = states[j]
        out += weights[:, j:j + 1] * (x - s.mean) / np.sqrt(s.var + s.eps)
    return gamma * out + beta


def running_update(s: BNState, batch_mean, batch_var, m: float, n: float = 1.0) -> BNState:
    """Exponential moving average of statistics with momentum ``m``."""
    if not 0.0 < m <= 1.0:
        raise ValueError("momentum must lie in (0, 1]")
    return replace(
        s,
        mean=(1 - m) * s.mean + m * np.asarray(batch_mean, dtype=np.float64),
        var=(1 - m) * s.var + m * np.asarray(batch_var, dtype=np.float64),
        count=s.count + n,
    )
