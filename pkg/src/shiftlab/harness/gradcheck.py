"""Finite-difference checks for every hand-derived backward pass.

Each registered check draws one random small instance from a stream and
returns the relative error between the analytic gradient and central
differences. ``gradcheck`` runs many trials and reports the worst one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import alignment as al
from .. import cumix as cm
from .. import incremental as inc
from .. import masks as mk
from .. import openworld as ow
from ..numerics import RngStream, finite_diff_grad, relative_error, softmax

Check = Callable[[RngStream], float]
REGISTRY: dict[str, Check] = {}


def register(name: str):
    def deco(fn: Check) -> Check:
        REGISTRY[name] = fn
        return fn
    return deco


def _assignments(rng, b, k):
    return softmax(rng.normal(0.0, 1.5, size=(b, k)))


@register("mda_backward")
def _mda(rng: RngStream) -> float:
    b, f, k = int(rng.integers(3, 9)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
    x = rng.normal(size=(b, f))
    w = _assignments(rng, b, k)
    gamma, beta = rng.normal(size=f), rng.normal(size=f)
    up = rng.normal(size=(b, f))

    def loss(x_, w_, g_=gamma, b_=beta):
        st = al.mda_statistics(x_, w_)
        return float((up * al.mda_forward(x_, w_, st.mean, st.var, g_, b_)).sum())

    st = al.mda_statistics(x, w)
    an = al.mda_backward(x, w, st.mean, st.var, up, gamma)
    errs = [relative_error(an.x, finite_diff_grad(lambda v: loss(v, w), x)),
            relative_error(an.w, finite_diff_grad(lambda v: loss(x, v), w)),
            relative_error(an.gamma, finite_diff_grad(lambda v: loss(x, w, v), gamma)),
            relative_error(an.beta, finite_diff_grad(lambda v: loss(x, w, gamma, v), beta))]
    return max(errs)


@register("bat_k")
def _bat(rng: RngStream) -> float:
    shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
    W, R = rng.normal(size=shape), rng.normal(size=shape)
    up = rng.normal(size=shape)
    layer = mk.MaskedAffine(W, R, rng.normal(size=4))

    def loss(k):
        return float((up * mk.effective_weights(mk.MaskedAffine(W, R, k))).sum())

    return relative_error(mk.masked_backward(layer, up).k, finite_diff_grad(loss, layer.k))


def _mib_instance(rng):
    n_old, n_new = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    n = int(rng.integers(2, 7))
    z = rng.normal(0.0, 2.0, size=(n, n_old + n_new))
    y = np.where(rng.random(n) < 0.4, 0, rng.integers(n_old, n_old + n_new, size=n))
    p = softmax(rng.normal(0.0, 2.0, size=(n, n_old)))
    return z, y, p, n_old


@register("mib_ce")
def _mib_ce(rng: RngStream) -> float:
    z, y, _, n_old = _mib_instance(rng)
    return relative_error(inc.mib_ce(z, y, n_old).grad,
                          finite_diff_grad(lambda v: inc.mib_ce(v, y, n_old).loss, z))


@register("mib_kd")
def _mib_kd(rng: RngStream) -> float:
    z, _, p, _ = _mib_instance(rng)
    return relative_error(inc.mib_kd(z, p).grad, finite_diff_grad(lambda v: inc.mib_kd(v, p).loss, z))


@register("lwf_kd")
def _lwf(rng: RngStream) -> float:
    z, _, p, _ = _mib_instance(rng)
    return relative_error(inc.lwf_kd(z, p).grad, finite_diff_grad(lambda v: inc.lwf_kd(v, p).loss, z))


def _owr_instance(rng):
    c, f = int(rng.integers(2, 4)), int(rng.integers(2, 5))
    y = np.repeat(np.arange(c), 2)
    y = np.concatenate([y, rng.integers(0, c, size=int(rng.integers(0, 3)))])
    feats = rng.normal(size=(len(y), f))
    mu = rng.normal(size=(c, f))
    return feats, y, mu, float(rng.uniform(0.5, 2.0))


@register("bdoc_global")
def _bdoc_global(rng: RngStream) -> float:
    f, y, mu, t = _owr_instance(rng)
    return relative_error(ow.bdoc_global(f, y, mu, t).grad,
                          finite_diff_grad(lambda v: ow.bdoc_global(v, y, mu, t).loss, f))


@register("bdoc_local")
def _bdoc_local(rng: RngStream) -> float:
    f, y, _, t = _owr_instance(rng)
    return relative_error(ow.bdoc_local(f, y, t).grad,
                          finite_diff_grad(lambda v: ow.bdoc_local(v, y, t).loss, f))


@register("bdoc_loss")
def _bdoc_loss(rng: RngStream) -> float:
    f, y, mu, t = _owr_instance(rng)
    f_old = f + rng.normal(0.0, 0.5, size=f.shape)
    lam, gam = float(rng.uniform(0, 2)), float(rng.uniform(0, 2))

    def loss(v):
        return ow.bdoc_loss(v, y, mu, t, f_old, lam, gam, step=2).loss

    return relative_error(ow.bdoc_loss(f, y, mu, t, f_old, lam, gam, step=2).grad,
                          finite_diff_grad(loss, f))


@register("dnno_loss")
def _dnno(rng: RngStream) -> float:
    f, y, mu, _ = _owr_instance(rng)
    f_old = f + rng.normal(0.0, 0.5, size=f.shape)
    return relative_error(ow.dnno_loss(f, y, mu, f_old, 0.7).grad,
                          finite_diff_grad(lambda v: ow.dnno_loss(v, y, mu, f_old, 0.7).loss, f))


@register("cumix_objective")
def _cumix(rng: RngStream) -> float:
    n_per, in_dim, hid, emb, c = 3, int(rng.integers(2, 5)), int(rng.integers(2, 6)), 3, 3
    dom = np.repeat([0, 1], n_per)
    x = rng.normal(size=(len(dom), in_dim))
    y = rng.integers(0, c, size=len(dom))
    E = rng.normal(size=(c, emb))
    params = cm.init_params(in_dim, hid, emb, rng)
    params["a"] = rng.normal(0.0, 0.5, size=hid)
    plan_i = cm.sample_plan(dom, 0.5, 1.0, rng)
    plan_f = cm.sample_plan(dom, 0.5, 1.0, rng)
    obj = cm.cumix_objective(params, x, y, E, plan_i, plan_f, 0.8, 0.6)
    errs = []
    for name in params:
        def loss(v, name=name):
            q = dict(params)
            q[name] = v
            return cm.cumix_objective(q, x, y, E, plan_i, plan_f, 0.8, 0.6).loss
        errs.append(relative_error(obj.grads[name], finite_diff_grad(loss, params[name])))
    return max(errs)


@dataclass
class GradcheckReport:
    op: str
    trials: int
    tolerance: float
    max_error: float
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def gradcheck(op: str, trials: int = 100, tolerance: float = 1e-6, seed: int = 0,
              registry: dict[str, Check] | None = None) -> GradcheckReport:
    reg = REGISTRY if registry is None else registry
    if op not in reg:
        raise KeyError(f"unknown gradient check {op!r}; registered: {sorted(reg)}")
    streams = RngStream(seed).spawn(trials)
    errors = [float(reg[op](s)) for s in streams]
    return GradcheckReport(op, trials, tolerance, max(errors) if errors else 0.0, errors)
