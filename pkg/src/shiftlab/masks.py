"""Task-specific binary masks applied as an affine transform of frozen weights.

For a base matrix W and a real-valued mask R with M = 1[R >= 0]:

    W_task = k0 * W + k1 + k2 * M + k3 * (W o M)

R is trained with a straight-through surrogate derivative. The base W is
never written; each task owns its (R, k) and its classifier head.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .numerics import OptimState, RngStream, one_hot, sgd_step, softmax

MASK_INIT_LOW, MASK_INIT_HIGH = 1e-4, 2e-4
BUNDLE_MAGIC = b"SLMB"
BUNDLE_VERSION = 1
SURROGATES = ("identity", "sigmoid")


@dataclass
class MaskedAffine:
    W: np.ndarray
    R: np.ndarray
    k: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    surrogate: str = "identity"
    fix_k0: bool = False

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64).copy()
        if self.W.shape != self.R.shape:
            raise ValueError("W and R must share a shape")
        if self.k.shape != (4,):
            raise ValueError("k must hold exactly four scalars")
        if self.surrogate not in SURROGATES:
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        if self.fix_k0:
            self.k[0] = 1.0

    @classmethod
    def init(cls, W, rng: RngStream, surrogate: str = "identity", fix_k0: bool = False) -> "MaskedAffine":
        """Masks start as all ones; k starts where the transform equals W."""
        W = np.asarray(W, dtype=np.float64)
        R = rng.uniform(MASK_INIT_LOW, MASK_INIT_HIGH, size=W.shape)
        k = np.array([1.0, 0.0, 0.0, 0.0]) if fix_k0 else np.array([0.0, 0.0, 0.0, 1.0])
        return cls(W, R, k, surrogate, fix_k0)

    @property
    def M(self) -> np.ndarray:
        return (self.R >= 0).astype(np.float64)


def effective_weights(layer: MaskedAffine, M: np.ndarray | None = None) -> np.ndarray:
    M = layer.M if M is None else M
    k0, k1, k2, k3 = layer.k
    return k0 * layer.W + k1 + k2 * M + k3 * (layer.W * M)


def surrogate_grad(r, kind: str) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if kind == "identity":
        return np.ones_like(r)
    if kind == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-r))
        return s * (1.0 - s)
    raise ValueError(f"unknown surrogate {kind!r}")


class MaskGrads(NamedTuple):
    R: np.ndarray
    k: np.ndarray


def masked_backward(layer: MaskedAffine, grad_w) -> MaskGrads:
    """Gradients for R (straight-through) and the four k scalars (exact)."""
    g = np.asarray(grad_w, dtype=np.float64)
    if g.shape != layer.W.shape:
        raise ValueError("upstream gradient must match the weight shape")
    M = layer.M
    _, _, k2, k3 = layer.k
    dR = g * (k2 + k3 * layer.W) * surrogate_grad(layer.R, layer.surrogate)
    dk = np.array([(g * layer.W).sum(), g.sum(), (g * M).sum(), (g * layer.W * M).sum()])
    if layer.fix_k0:
        dk[0] = 0.0
    return MaskGrads(dR, dk)


def sign_agreement_check(layer: MaskedAffine, loss_fn: Callable[[np.ndarray], float],
                         grad_fn: Callable[[np.ndarray], np.ndarray]) -> float | None:
    """Fraction of mask entries whose surrogate gradient sign matches the
    discrete effect of the bit, E(m=1) - E(m=0), found by flipping it.

    ``loss_fn`` maps effective weights to a loss, ``grad_fn`` returns its
    gradient there. Entries with a zero surrogate gradient or a zero discrete
    effect are skipped; None is returned when nothing is checkable.
    """
    M = layer.M
    dR = masked_backward(layer, grad_fn(effective_weights(layer, M))).R
    hits = total = 0
    for idx in np.ndindex(M.shape):
        on, off = M.copy(), M.copy()
        on[idx], off[idx] = 1.0, 0.0
        delta = loss_fn(effective_weights(layer, on)) - loss_fn(effective_weights(layer, off))
        if dR[idx] == 0 or delta == 0:
            continue
        total += 1
        hits += np.sign(dR[idx]) == np.sign(delta)
    return None if total == 0 else hits / total


def param_overhead(n_params: int, bits_per_param: int, tasks: int) -> float:
    """Storage for T tasks relative to one float32 model, heads excluded."""
    if tasks < 1:
        raise ValueError("need at least one task")
    if n_params <= 0:
        raise ValueError("n_params must be positive")
    return 1.0 + bits_per_param * n_params * (tasks - 1) / (32.0 * n_params)


# --------------------------------------------------------------------------
# bundle serialization
#
# layout, little-endian:
#   b"SLMB" | u8 version | u32 layer count
#   per layer: u32 rows | u32 cols | 4 x f64 (k0..k3) | ceil(rows*cols/8) bytes
#   of mask bits, row-major, bit j of byte i = mask entry 8*i + j


def pack_bundle(layers: Sequence[MaskedAffine]) -> bytes:
    out = [BUNDLE_MAGIC, struct.pack("<BI", BUNDLE_VERSION, len(layers))]
    for layer in layers:
        M = layer.M
        if M.ndim != 2:
            raise ValueError("bundle layers must be 2-D")
        out.append(struct.pack("<II4d", M.shape[0], M.shape[1], *layer.k))
        out.append(np.packbits(M.astype(np.uint8).ravel(), bitorder="little").tobytes())
    return b"".join(out)


def unpack_bundle(data: bytes) -> list[tuple[np.ndarray, np.ndarray]]:
    """Returns [(binary mask, k)] per layer."""
    if data[:4] != BUNDLE_MAGIC:
        raise ValueError("not a mask bundle")
    version, n = struct.unpack_from("<BI", data, 4)
    if version != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {version}")
    pos = 9
    out = []
    for _ in range(n):
        rows, cols, *k = struct.unpack_from("<II4d", data, pos)
        pos += struct.calcsize("<II4d")
        nbytes = (rows * cols + 7) // 8
        bits = np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=pos)
        pos += nbytes
        M = np.unpackbits(bits, bitorder="little")[: rows * cols].reshape(rows, cols).astype(np.float64)
        out.append((M, np.array(k)))
    if pos != len(data):
        raise ValueError("trailing bytes in mask bundle")
    return out


# --------------------------------------------------------------------------
# training a new task on top of a frozen base layer


@dataclass
class TaskHead:
    layer: MaskedAffine
    V: np.ndarray  # (classes, hidden)
    c: np.ndarray


def _hidden(layer: MaskedAffine, x):
    pre = np.atleast_2d(x) @ effective_weights(layer).T
    return np.maximum(pre, 0.0), pre


def task_logits(task: TaskHead, x) -> np.ndarray:
    h, _ = _hidden(task.layer, x)
    return h @ task.V.T + task.c


def task_accuracy(task: TaskHead, x, y) -> float:
    return float((task_logits(task, x).argmax(axis=1) == np.asarray(y)).mean())


def train_base(x, y, hidden: int, n_classes: int, rng: RngStream, steps: int = 400,
               lr: float = 0.1, batch: int = 64) -> TaskHead:
    """Ordinary training of the first task: W and head are learned directly.

    The returned layer has k = (1, 0, 0, 0), so its transform is W itself.
    """
    W = rng.normal(0.0, 1.0 / np.sqrt(x.shape[1]), size=(hidden, x.shape[1]))
    V = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(n_classes, hidden))
    params = {"W": W, "V": V, "c": np.zeros(n_classes)}
    opt = OptimState(lr, 0.9, 1e-4)
    for _ in range(steps):
        i = rng.choice(len(x), size=min(batch, len(x)), replace=False)
        pre = x[i] @ params["W"].T
        h = np.maximum(pre, 0.0)
        p = softmax(h @ params["V"].T + params["c"])
        d = (p - one_hot(y[i], n_classes)) / len(i)
        dh = (d @ params["V"]) * (pre > 0)
        params = sgd_step(params, {"W": dh.T @ x[i], "V": d.T @ h, "c": d.sum(axis=0)}, opt)
    layer = MaskedAffine(params["W"], np.full(params["W"].shape, MASK_INIT_LOW), np.array([1.0, 0, 0, 0]))
    return TaskHead(layer, params["V"], params["c"])


def train_task(base_W, x, y, n_classes: int, rng: RngStream, steps: int = 400, lr: float = 0.1,
               mask_lr: float = 0.1, batch: int = 64, surrogate: str = "identity",
               fix_k0: bool = False) -> TaskHead:
    """Learn masks, k and a private head for a new task; base_W is read only."""
    layer = MaskedAffine.init(base_W, rng, surrogate, fix_k0)
    hidden = base_W.shape[0]
    head = {"V": rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(n_classes, hidden)), "c": np.zeros(n_classes)}
    opt, mask_opt = OptimState(lr, 0.9, 1e-4), OptimState(mask_lr, 0.9)
    for _ in range(steps):
        i = rng.choice(len(x), size=min(batch, len(x)), replace=False)
        h, pre = _hidden(layer, x[i])
        p = softmax(h @ head["V"].T + head["c"])
        d = (p - one_hot(y[i], n_classes)) / len(i)
        dh = (d @ head["V"]) * (pre > 0)
        g = masked_backward(layer, dh.T @ x[i])
        head = sgd_step(head, {"V": d.T @ h, "c": d.sum(axis=0)}, opt)
        upd = sgd_step({"R": layer.R, "k": layer.k}, {"R": g.R, "k": g.k}, mask_opt)
        layer.R, layer.k = upd["R"], upd["k"]
    return TaskHead(layer, head["V"], head["c"])
