"""Predictive adaptation through a metadata graph of normalization parameters.

Each node stores, for every normalization site, a BNState (statistics plus
scale/bias) and the metadata vector of its domain. Edges carry
``exp(-||m1 - m2||^2 / (2 sigma_d))``. Parameters for a domain with no
data are regressed from its metadata; during training the scale and bias of
a node are blended through the edges while its statistics stay local.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .alignment import BNState, DEFAULT_EPS, da_normalize, mda_statistics
from .numerics import OptimState, RngStream, entropy_grad_logits, one_hot, sgd_step, softmax
from .online import onda_partial, onda_update

GRAPH_FORMAT_VERSION = 1
DEFAULT_SIGMA = 0.1
_FIELDS = ("mean", "var", "gamma", "beta")
_JSON_KEYS = {"mean": "mu", "var": "var", "gamma": "gamma", "beta": "beta"}


def edge_weight(m1, m2, sigma_d: float = DEFAULT_SIGMA) -> float:
    a = np.asarray(m1, dtype=np.float64)
    b = np.asarray(m2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("metadata vectors must have equal length")
    if sigma_d <= 0:
        raise ValueError("sigma_d must be positive")
    return float(np.exp(-np.sum((a - b) ** 2) / (2.0 * sigma_d)))


@dataclass
class GBNNode:
    metadata: np.ndarray
    layers: list[BNState]

    def __post_init__(self):
        self.metadata = np.asarray(self.metadata, dtype=np.float64)
        if not np.all(np.isfinite(self.metadata)):
            raise ValueError("metadata must be finite")


@dataclass
class DomainGraph:
    sigma_d: float = DEFAULT_SIGMA
    nodes: list[GBNNode] = field(default_factory=list)

    def __post_init__(self):
        if self.sigma_d <= 0:
            raise ValueError("sigma_d must be positive")

    def add(self, node: GBNNode) -> int:
        for other in self.nodes:
            if other.metadata.shape != node.metadata.shape:
                raise ValueError("metadata length differs across the graph")
            if np.array_equal(other.metadata, node.metadata):
                raise ValueError("node metadata must be pairwise distinct")
        self.nodes.append(node)
        return len(self.nodes) - 1

    def weights_to(self, metadata) -> np.ndarray:
        if not self.nodes:
            raise ValueError("graph is empty")
        return np.array([edge_weight(metadata, n.metadata, self.sigma_d) for n in self.nodes])


def _blend(layer_sets: Sequence[Sequence[BNState]], coeffs, fields=_FIELDS) -> list[BNState]:
    """Componentwise combination sum_v coeffs[v] * layers_v for chosen fields."""
    out = []
    for site in zip(*layer_sets):
        base = site[0]
        vals = {f: sum(c * getattr(s, f) for c, s in zip(coeffs, site)) for f in fields}
        out.append(replace(base, **vals))
    return out


def regress_params_metadata(graph: DomainGraph, metadata) -> list[BNState]:
    """Normalized edge-weighted average of every node's parameters."""
    w = graph.weights_to(metadata)
    total = w.sum()
    if total <= 0:
        # every node is numerically disconnected; fall back to the nearest one
        d = [np.sum((np.asarray(metadata) - n.metadata) ** 2) for n in graph.nodes]
        w = one_hot([int(np.argmin(d))], len(graph.nodes))[0]
        total = 1.0
    return _blend([n.layers for n in graph.nodes], w / total)


def regress_params_image(graph: DomainGraph, probs) -> list[BNState]:
    """Mixture of node parameters under p(v|x); ``probs`` covers every node."""
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != (len(graph.nodes),):
        raise IndexError("probabilities must cover exactly the graph's nodes")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
        raise ValueError("node probabilities must form a distribution")
    return _blend([n.layers for n in graph.nodes], p)


def scalebias_coeffs(graph: DomainGraph, v: int) -> np.ndarray:
    w = graph.weights_to(graph.nodes[v].metadata)
    return w / w.sum()


def graph_scalebias(graph: DomainGraph, v: int, layer: int = 0) -> tuple[np.ndarray, np.ndarray]:
    c = scalebias_coeffs(graph, v)
    gamma = sum(ci * n.layers[layer].gamma for ci, n in zip(c, graph.nodes))
    beta = sum(ci * n.layers[layer].beta for ci, n in zip(c, graph.nodes))
    return gamma, beta


def gbn_forward(x, v: int, graph: DomainGraph, layer: int = 0, domains=None,
                batch_stats: bool = False):
    """Normalize with node v's statistics and the graph-blended scale/bias.

    With ``batch_stats`` the statistics come from the batch itself, which
    must then be domain-pure (``domains`` all equal to v when given); the
    batch (mean, var) is returned alongside the output so the caller can
    fold it into the node.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    node_state = graph.nodes[v].layers[layer]
    gamma, beta = graph_scalebias(graph, v, layer)
    if not batch_stats:
        return da_normalize(x, replace(node_state, gamma=gamma, beta=beta))
    if domains is not None and np.any(np.asarray(domains) != v):
        raise ValueError("training batches must be domain-pure")
    st = mda_statistics(x, np.ones((len(x), 1)))
    y = da_normalize(x, replace(node_state, mean=st.mean[0], var=st.var[0], gamma=gamma, beta=beta))
    return y, st.mean[0], st.var[0]


# --------------------------------------------------------------------------
# a one-site GBN model with a shared linear head


@dataclass
class GBNModel:
    graph: DomainGraph
    W: np.ndarray
    b: np.ndarray
    momentum: float = 0.1

    def logits(self, x, state: BNState) -> np.ndarray:
        return da_normalize(np.atleast_2d(x), state) @ self.W.T + self.b

    def predict(self, x, state: BNState) -> np.ndarray:
        return self.logits(x, state).argmax(axis=1)

    def node_state(self, v: int) -> BNState:
        gamma, beta = graph_scalebias(self.graph, v)
        return replace(self.graph.nodes[v].layers[0], gamma=gamma, beta=beta)

    def _fold_stats(self, v: int, mean, var, first: bool):
        node = self.graph.nodes[v]
        s = node.layers[0]
        m = 1.0 if first else self.momentum
        node.layers[0] = replace(s, mean=(1 - m) * s.mean + m * mean, var=(1 - m) * s.var + m * var,
                                 count=s.count + 1)

    def domain_grads(self, v: int, x, y=None, lam: float = 1.0):
        """Loss on a domain-pure batch with batch statistics.

        Labeled batches use cross-entropy, unlabeled ones ``lam`` times the
        mean prediction entropy. Returns (loss, dlogits, xhat, z) where xhat
        is the statistics-normalized input and z the normalized output."""
        yb, mu, var = gbn_forward(x, v, self.graph, batch_stats=True)
        eps = self.graph.nodes[v].layers[0].eps
        xhat = (np.atleast_2d(x) - mu) / np.sqrt(var + eps)
        logits = yb @ self.W.T + self.b
        p = softmax(logits)
        n = len(p)
        if y is not None:
            loss = float(-np.log(np.maximum(p[np.arange(n), y], 1e-12)).mean())
            dlog = (p - one_hot(y, p.shape[1])) / n
        else:
            loss = float(lam * -(p * np.log(np.maximum(p, 1e-12))).sum(axis=1).mean())
            dlog = lam * entropy_grad_logits(p) / n
        return loss, dlog, xhat, yb, mu, var

    def scalebias_grads(self, v: int, dlog, xhat):
        """Push output gradients back to every node's own gamma/beta through
        the graph blend (statistics are treated as constants)."""
        dz = dlog @ self.W
        dgamma_g = (dz * xhat).sum(axis=0)
        dbeta_g = dz.sum(axis=0)
        c = scalebias_coeffs(self.graph, v)
        return {k: (c[k] * dgamma_g, c[k] * dbeta_g) for k in range(len(c))}


def _apply_node_grads(model: GBNModel, node_grads: dict, opts: dict):
    for k, (dg, db) in node_grads.items():
        s = model.graph.nodes[k].layers[0]
        new = sgd_step({"gamma": s.gamma, "beta": s.beta}, {"gamma": dg, "beta": db}, opts[k])
        model.graph.nodes[k].layers[0] = replace(s, gamma=new["gamma"], beta=new["beta"])


def train_source(model: GBNModel, source: int, xs, ys, rng: RngStream, steps: int = 300,
                 batch: int = 64, lr: float = 0.1) -> list[float]:
    """Source phase: shared head plus source-node scale/bias, cross-entropy only."""
    head_opt = OptimState(lr, 0.9, 1e-4)
    node_opts = {k: OptimState(lr, 0.9) for k in range(len(model.graph.nodes))}
    trace = []
    for step in range(steps):
        i = rng.choice(len(xs), size=min(batch, len(xs)), replace=False)
        loss, dlog, xhat, z, mu, var = model.domain_grads(source, xs[i], ys[i])
        head = sgd_step({"W": model.W, "b": model.b},
                        {"W": dlog.T @ z, "b": dlog.sum(axis=0)}, head_opt)
        _apply_node_grads(model, model.scalebias_grads(source, dlog, xhat), node_opts)
        model.W, model.b = head["W"], head["b"]
        model._fold_stats(source, mu, var, first=step == 0)
        trace.append(loss)
    return trace


def train_with_auxiliaries(model: GBNModel, source: int, xs, ys, auxiliaries: dict, lam: float,
                           rng: RngStream, steps: int = 300, batch: int = 64,
                           lr: float = 0.05) -> list[float]:
    """Second phase: head frozen; per-node scale/bias and statistics adapt to
    source cross-entropy plus ``lam`` times the auxiliary entropy.

    ``auxiliaries`` maps node index -> unlabeled features of that domain.
    """
    for v in auxiliaries:
        if not 0 <= v < len(model.graph.nodes):
            raise ValueError(f"auxiliary domain {v} has no metadata node")
    node_opts = {k: OptimState(lr, 0.9) for k in range(len(model.graph.nodes))}
    first = {v: model.graph.nodes[v].layers[0].count == 0 for v in auxiliaries}
    trace = []
    for _ in range(steps):
        i = rng.choice(len(xs), size=min(batch, len(xs)), replace=False)
        loss, dlog, xhat, _, mu, var = model.domain_grads(source, xs[i], ys[i])
        _apply_node_grads(model, model.scalebias_grads(source, dlog, xhat), node_opts)
        model._fold_stats(source, mu, var, first=False)
        total = loss
        n_aux = max(len(auxiliaries), 1)
        for v, xa in auxiliaries.items():
            j = rng.choice(len(xa), size=min(batch, len(xa)), replace=False)
            a_loss, a_dlog, a_xhat, _, a_mu, a_var = model.domain_grads(v, xa[j], None, lam / n_aux)
            if lam > 0:
                _apply_node_grads(model, model.scalebias_grads(v, a_dlog, a_xhat), node_opts)
            model._fold_stats(v, a_mu, a_var, first=first[v])
            first[v] = False
            total += a_loss
        trace.append(total)
    return trace


def refine(model: GBNModel, state: BNState, stream, memory: int = 16, lam: float = 1.0,
           alpha: float = 0.1, lr: float = 0.01) -> BNState:
    """Test-time refinement of a predicted node on the target stream.

    Every ``memory`` samples the buffered statistics are folded in (ONDA-style)
    and one entropy step is taken on scale/bias using the buffer normalized by
    the updated statistics. The buffer is then cleared.
    """
    if memory < 2:
        raise ValueError("memory size must be at least 2")
    buf = []
    for x in stream:
        buf.append(np.asarray(x, dtype=np.float64))
        if len(buf) < memory:
            continue
        mem = np.stack(buf)
        buf.clear()
        mu_hat, var_hat = onda_partial(mem)
        state = onda_update(state, mu_hat, var_hat, alpha, memory)
        xhat = (mem - state.mean) / np.sqrt(state.var + state.eps)
        p = softmax(model.logits(mem, state))
        dz = (lam * entropy_grad_logits(p) / len(mem)) @ model.W
        state = replace(state, gamma=state.gamma - lr * (dz * xhat).sum(axis=0),
                        beta=state.beta - lr * dz.sum(axis=0))
    return state


class NodeClassifier:
    """Linear softmax predicting p(v|x) over graph nodes from features."""

    def __init__(self, dim: int, n_nodes: int):
        self.W = np.zeros((n_nodes, dim))
        self.b = np.zeros(n_nodes)

    def fit(self, x, v, rng: RngStream, steps: int = 300, lr: float = 0.1, batch: int = 64):
        opt = OptimState(lr, 0.9, 1e-4)
        n_nodes = self.W.shape[0]
        for _ in range(steps):
            i = rng.choice(len(x), size=min(batch, len(x)), replace=False)
            p = self.predict_proba(x[i])
            d = (p - one_hot(v[i], n_nodes)) / len(i)
            new = sgd_step({"W": self.W, "b": self.b}, {"W": d.T @ x[i], "b": d.sum(axis=0)}, opt)
            self.W, self.b = new["W"], new["b"]
        return self

    def predict_proba(self, x) -> np.ndarray:
        return softmax(np.atleast_2d(x) @ self.W.T + self.b)


# --------------------------------------------------------------------------
# serialization


def graph_to_json(graph: DomainGraph) -> str:
    doc = {
        "version": GRAPH_FORMAT_VERSION,
        "sigma_d": graph.sigma_d,
        "nodes": [
            {
                "metadata": n.metadata.tolist(),
                "layers": [{_JSON_KEYS[f]: getattr(s, f).tolist() for f in _FIELDS} for s in n.layers],
            }
            for n in graph.nodes
        ],
    }
    return json.dumps(doc, indent=1)


def graph_from_json(text: str, eps: float = DEFAULT_EPS) -> DomainGraph:
    doc = json.loads(text)
    if doc.get("version") != GRAPH_FORMAT_VERSION:
        raise ValueError(f"unsupported graph format version {doc.get('version')!r}")
    graph = DomainGraph(float(doc["sigma_d"]))
    for n in doc["nodes"]:
        layers = [BNState(*(np.array(l[_JSON_KEYS[f]]) for f in _FIELDS), eps=eps) for l in n["layers"]]
        graph.add(GBNNode(np.array(n["metadata"]), layers))
    return graph
