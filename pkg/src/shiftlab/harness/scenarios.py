"""End-to-end scenario runners.

Each runner takes a flat config (defaults merged with user overrides) and a
seed, checks the class/domain contract of the data it builds, and returns a
metrics dict. ``run_scenario`` wraps a runner into a RunReport.
"""

from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__
from .. import adagraph as ag
from .. import alignment as al
from .. import cumix as cm
from .. import incremental as inc
from .. import latent as lt
from .. import masks as mk
from .. import online as on
from .. import openworld as ow
from ..numerics import OptimState, RngStream, one_hot, sgd_step, softmax
from .data import FeatureDataset, SyntheticSpec, gen_synthetic, read_dataset


class ConfigError(ValueError):
    """Invalid scenario name or configuration."""


class ContractError(ValueError):
    """A dataset violates the class/domain split a scenario relies on."""


def _check_disjoint(name: str, a, b) -> None:
    if set(a) & set(b):
        raise ContractError(f"{name}: sets overlap ({sorted(set(a) & set(b))})")


def _acc(pred, y) -> float:
    return float((np.asarray(pred) == np.asarray(y)).mean())


def _split(ds: FeatureDataset, frac: float, rng: RngStream):
    idx = rng.permutation(len(ds.y))
    k = int(round(frac * len(idx)))
    te = np.zeros(len(idx), bool)
    te[idx[:k]] = True
    return ds.subset(~te), ds.subset(te)


def _spec(cfg: dict, **overrides) -> SyntheticSpec:
    keys = SyntheticSpec.__dataclass_fields__
    base = {k: v for k, v in cfg.get("data", {}).items() if k in keys}
    unknown = set(cfg.get("data", {})) - set(keys)
    if unknown:
        raise ConfigError(f"unknown data keys: {sorted(unknown)}")
    merged = {**overrides, **base}
    if "scale_range" in merged:
        merged["scale_range"] = tuple(merged["scale_range"])
    return SyntheticSpec(**merged)


def _dataset(cfg: dict, seed: int, **overrides) -> FeatureDataset:
    if "dataset" in cfg:
        path = Path(cfg["dataset"])
        if not path.exists():
            raise ConfigError(f"dataset not found: {path}")
        return read_dataset(path)
    return gen_synthetic(_spec(cfg, **overrides), seed)


def _softmax_regression(x, y, k, rng, steps=300, lr=0.1, batch=64):
    params = {"W": np.zeros((k, x.shape[1])), "b": np.zeros(k)}
    opt = OptimState(lr, 0.9, 1e-4)
    for _ in range(steps):
        i = rng.choice(len(x), size=min(batch, len(x)), replace=False)
        d = (softmax(x[i] @ params["W"].T + params["b"]) - one_hot(y[i], k)) / len(i)
        params = sgd_step(params, {"W": d.T @ x[i], "b": d.sum(axis=0)}, opt)
    return params["W"], params["b"]


# --------------------------------------------------------------------------
# latent-domain discovery


def run_latent(cfg: dict, seed: int) -> dict:
    """Sources are two unlabeled latent domains, the target a third domain."""
    rng = RngStream(seed)
    data_rng, model_rng, train_rng, base_rng, base_train = rng.spawn(5)
    ds = _dataset(cfg, int(data_rng.integers(0, 2**31)), classes=4, domains=3, dim=6, samples=80,
                  noise=0.6, mean_scale=1.5, shift_scale=4.0, rotation_scale=0.1, scale_range=[0.4, 2.5])
    src_domains, tgt_domains = [0, 1], [2]
    _check_disjoint("latent source/target domains", src_domains, tgt_domains)
    src = ds.where(domains=src_domains)
    tgt_train, tgt_test = _split(ds.where(domains=tgt_domains), 0.5, data_rng)
    conf = lt.LatentConfig(k_s=2, k_t=1, lambda_c=cfg["lambda_c"], lambda_e=cfg["lambda_e"],
                           lambda_b=cfg["lambda_b"], lambda_d=cfg["lambda_d"])
    kw = dict(steps=cfg["steps"], batch=cfg["batch"], lr=cfg["lr"])
    mda = lt.LatentDAModel(ds.dim, ds.n_classes, conf, model_rng, mode="mda")
    lt.train_latent(mda, src.x, src.y, tgt_train.x, train_rng, **kw)
    bn = lt.LatentDAModel(ds.dim, ds.n_classes, conf, base_rng, mode="bn")
    lt.train_latent(bn, src.x, src.y, tgt_train.x, base_train, **kw)
    acc_mda = _acc(mda.predict_target(tgt_test.x).argmax(axis=1), tgt_test.y)
    acc_bn = _acc(bn.predict_target(tgt_test.x).argmax(axis=1), tgt_test.y)
    return {"target_acc_mda": acc_mda, "target_acc_bn": acc_bn, "improvement": acc_mda - acc_bn}


# --------------------------------------------------------------------------
# domain generalization: WBN and BSF


def _per_domain_states(x, d, domains):
    states = []
    for j in domains:
        st = al.mda_statistics(x[d == j], np.ones(((d == j).sum(), 1)))
        states.append(al.BNState(st.mean[0], st.var[0], np.ones(x.shape[1]), np.zeros(x.shape[1])))
    return states


def _train_bsf(x, y, d_local, k, n_classes, alpha, rng, steps, lr, batch):
    """Per-source softmax heads trained through the fused prediction."""
    Ws = np.zeros((k, n_classes, x.shape[1]))
    bs = np.zeros((k, n_classes))
    opt = OptimState(lr, 0.9, 1e-4)
    params = {"W": Ws, "b": bs}
    for _ in range(steps):
        i = rng.choice(len(x), size=min(batch, len(x)), replace=False)
        xi, yi = x[i], y[i]
        w = np.stack([lt.bsf_train_weights(dj, k, alpha, rng) for dj in d_local[i]])
        p = softmax(np.einsum("jcf,nf->njc", params["W"], xi) + params["b"][None])  # (n, k, C)
        c = (1 - alpha) * w + alpha / k                                             # fused coefficients
        py = p[np.arange(len(i)), :, yi]                                             # (n, k)
        tot = (c * py).sum(axis=1, keepdims=True)
        resp = c * py / tot                                                          # (n, k)
        dz = -(resp[:, :, None] * (one_hot(yi, n_classes)[:, None, :] - p)) / len(i)
        params = sgd_step(params, {"W": np.einsum("njc,nf->jcf", dz, xi), "b": dz.sum(axis=0)}, opt)
    return params["W"], params["b"]


def run_dg(cfg: dict, seed: int) -> dict:
    """Leave-one-domain-out over four domains."""
    rng = RngStream(seed)
    data_rng, r_cls, r_dom, r_bsf, r_base = rng.spawn(5)
    ds = _dataset(cfg, int(data_rng.integers(0, 2**31)), classes=4, domains=4, dim=6, samples=60,
                  noise=0.6, mean_scale=2.0, shift_scale=2.0, rotation_scale=0.2)
    target = int(cfg["target_domain"])
    sources = [j for j in range(ds.n_domains) if j != target]
    _check_disjoint("dg source/target domains", sources, [target])
    src, tgt = ds.where(domains=sources), ds.where(domains=[target])
    d_local = np.searchsorted(sources, src.d)
    k = len(sources)
    states = _per_domain_states(src.x, src.d, sources)
    order = np.concatenate([np.flatnonzero(src.d == j) for j in sources])
    z = np.vstack([al.da_normalize(src.x[src.d == j], s) for j, s in zip(sources, states)])
    zy = src.y[order]
    Wc, bc = _softmax_regression(z, zy, ds.n_classes, r_cls, cfg["steps"], cfg["lr"])
    Wd, bd = _softmax_regression(src.x, d_local, k, r_dom, cfg["steps"], cfg["lr"])
    dom_p = softmax(tgt.x @ Wd.T + bd)
    z_t = np.vstack([al.wbn_forward(tgt.x[i], dom_p[i], states) for i in range(len(tgt.y))])
    p_wbn = softmax(z_t @ Wc.T + bc)
    wbn_train_loss = lt.wbn_loss(softmax(z @ Wc.T + bc), zy, softmax(src.x[order] @ Wd.T + bd),
                                 d_local[order], cfg["lambda_dom"])
    Wb, bb = _train_bsf(src.x, src.y, d_local, k, ds.n_classes, cfg["alpha"], r_bsf, cfg["steps"],
                        cfg["lr"], 64)
    f = softmax(np.einsum("jcf,nf->njc", Wb, tgt.x) + bb[None])
    p_bsf = lt.bsf_predict(f, dom_p, cfg["alpha"])
    agg = al.mda_statistics(src.x, np.ones((len(src.y), 1)))
    agg_state = al.BNState(agg.mean[0], agg.var[0], np.ones(ds.dim), np.zeros(ds.dim))
    zb = al.da_normalize(src.x, agg_state)
    Wg, bg = _softmax_regression(zb, src.y, ds.n_classes, r_base, cfg["steps"], cfg["lr"])
    p_base = softmax(al.da_normalize(tgt.x, agg_state) @ Wg.T + bg)
    return {"target_domain": target, "acc_wbn": _acc(p_wbn.argmax(1), tgt.y),
            "acc_bsf": _acc(p_bsf.argmax(1), tgt.y), "acc_baseline": _acc(p_base.argmax(1), tgt.y),
            "wbn_train_loss": wbn_train_loss}


# --------------------------------------------------------------------------
# online adaptation


def onda_source(dim: int, rng: RngStream, n: int = 400, sep: float = 0.3, noise: float = 0.4):
    """Two Gaussian classes at +/- sep along every feature (per-feature std
    sqrt(sep^2 + noise^2))."""
    y = rng.integers(0, 2, size=n)
    x = (2 * y[:, None] - 1) * sep + rng.normal(0.0, noise, size=(n, dim))
    return x, y


def train_bn_classifier(x, y, rng: RngStream, steps: int = 300, lr: float = 0.1) -> on.BNClassifier:
    st = al.mda_statistics(x, np.ones((len(x), 1)))
    bn = al.BNState(st.mean[0], st.var[0], np.ones(x.shape[1]), np.zeros(x.shape[1]))
    W, b = _softmax_regression(al.da_normalize(x, bn), y, int(y.max()) + 1, rng, steps, lr)
    return on.BNClassifier(bn, W, b)


def run_onda(cfg: dict, seed: int) -> dict:
    rng = RngStream(seed)
    src_rng, cls_rng, stream_rng = rng.spawn(3)
    dim, shift = int(cfg["dim"]), float(cfg["shift"])
    xs, ys = onda_source(dim, src_rng)
    model = train_bn_classifier(xs, ys, cls_rng)
    n = int(cfg["updates"]) * int(cfg["n_t"])
    xt, yt = onda_source(dim, stream_rng, n=n)
    xt = xt + shift
    target_mean = np.full(dim, shift)  # the classes are balanced and symmetric
    res = on.onda_stream(model, xt, cfg["n_t"], cfg["alpha"])
    gap = on.relative_gap(res.mean_history, target_mean)
    frozen = _acc(model.predict(xt), yt)
    speeds = {}
    for a in cfg["alpha_sweep"]:
        h = on.onda_stream(model, xt, cfg["n_t"], a).mean_history
        speeds[str(a)] = on.time_to_fraction(h, model.bn.mean, target_mean, 0.9)
    k = min(50, res.updates)
    return {"updates": res.updates, "rel_gap_final": float(gap[-1]), "rel_gap_at_50": float(gap[k]),
            "acc_frozen": frozen, "acc_onda": _acc(res.predictions, yt),
            "time_to_90": speeds}


# --------------------------------------------------------------------------
# predictive DA


def pda_domains(spec: SyntheticSpec, metadata, seed: int):
    """Data for domains whose shift and scale are smooth in a scalar metadata."""
    rng = RngStream(seed)
    base_rng, tf_rng = rng.spawn(2)
    base = gen_synthetic(replace(spec, domains=1, samples=spec.samples * len(metadata)), seed)
    direction = tf_rng.normal(0.0, spec.shift_scale, size=spec.dim)
    parts = []
    per = spec.samples * spec.classes
    idx = base_rng.permutation(len(base.y))
    for v, m in enumerate(metadata):
        take = idx[v * per:(v + 1) * per]
        x = base.x[take] * (1.0 + m) + m * direction
        parts.append((x, base.y[take], np.full(len(take), v)))
    x = np.vstack([p[0] for p in parts])
    return FeatureDataset(x, np.concatenate([p[1] for p in parts]), np.concatenate([p[2] for p in parts]),
                          spec.classes, len(metadata)), direction


def pda_truth(ds: FeatureDataset, v: int) -> np.ndarray:
    return ds.x[ds.d == v].mean(axis=0)


def build_pda(cfg: dict, seed: int):
    rng = RngStream(seed)
    data_rng, head_rng, train_rng, aux_rng = rng.spawn(4)
    metadata = [float(m) for m in cfg["metadata"]]
    target, source = int(cfg["target_node"]), int(cfg["source_node"])
    aux = [v for v in range(len(metadata)) if v not in (target, source)]
    _check_disjoint("pda target/known domains", [target], aux + [source])
    spec = _spec(cfg, classes=3, dim=5, samples=60, noise=0.5, mean_scale=2.0, shift_scale=1.5)
    ds, _ = pda_domains(spec, metadata, int(data_rng.integers(0, 2**31)))
    graph = ag.DomainGraph(cfg["sigma_d"])
    known = [source] + aux
    node_ids = {}
    for v in known:
        node_ids[v] = graph.add(ag.GBNNode(np.array([metadata[v]]), [al.BNState.identity(ds.dim)]))
    W = head_rng.normal(0.0, 0.1, size=(ds.n_classes, ds.dim))
    model = ag.GBNModel(graph, W, np.zeros(ds.n_classes))
    s = ds.where(domains=[source])
    ag.train_source(model, node_ids[source], s.x, s.y, train_rng, cfg["steps"], lr=cfg["lr"])
    auxiliaries = {node_ids[v]: ds.x[ds.d == v] for v in aux}
    ag.train_with_auxiliaries(model, node_ids[source], s.x, s.y, auxiliaries, cfg["lambda"], aux_rng,
                              cfg["steps"], lr=cfg["lr"] / 2)
    return ds, model, metadata, target, node_ids[source]


def run_pda(cfg: dict, seed: int) -> dict:
    ds, model, metadata, target, src_node = build_pda(cfg, seed)
    t = ds.where(domains=[target])
    regressed = ag.regress_params_metadata(model.graph, np.array([metadata[target]]))[0]
    source_state = model.node_state(src_node)
    refined = ag.refine(model, regressed, t.x, cfg["memory"], cfg["lambda"])
    truth = pda_truth(ds, target)
    return {
        "acc_source_params": _acc(model.predict(t.x, source_state), t.y),
        "acc_regressed": _acc(model.predict(t.x, regressed), t.y),
        "acc_refined": _acc(model.predict(t.x, refined), t.y),
        "mu_l2_before": float(np.linalg.norm(regressed.mean - truth)),
        "mu_l2_after": float(np.linalg.norm(refined.mean - truth)),
    }


# --------------------------------------------------------------------------
# binary masks


def run_bat(cfg: dict, seed: int) -> dict:
    rng = RngStream(seed)
    da, db, r_a, r_b = rng.spawn(4)
    spec = _spec(cfg, classes=4, domains=1, dim=8, samples=60, noise=0.7, mean_scale=1.5)
    task_a = gen_synthetic(spec, int(da.integers(0, 2**31)))
    task_b = gen_synthetic(replace(spec, classes=3), int(db.integers(0, 2**31)))
    a_tr, a_te = _split(task_a, 0.3, da)
    b_tr, b_te = _split(task_b, 0.3, db)
    head_a = mk.train_base(a_tr.x, a_tr.y, cfg["hidden"], task_a.n_classes, r_a, cfg["steps"])
    base_W = head_a.layer.W
    snapshot = base_W.copy()
    acc_a_before = mk.task_accuracy(head_a, a_te.x, a_te.y)
    head_b = mk.train_task(base_W, b_tr.x, b_tr.y, task_b.n_classes, r_b, cfg["steps"],
                           surrogate=cfg["surrogate"])
    acc_a_after = mk.task_accuracy(head_a, a_te.x, a_te.y)
    return {"acc_a_before": acc_a_before, "acc_a_after": acc_a_after,
            "acc_b": mk.task_accuracy(head_b, b_te.x, b_te.y),
            "base_unchanged": bool(np.array_equal(snapshot, base_W)),
            "mask_density_b": float(head_b.layer.M.mean()),
            "param_overhead": mk.param_overhead(base_W.size, 1, 2)}


# --------------------------------------------------------------------------
# incremental segmentation


def build_mib(cfg: dict, seed: int):
    """Five pixel classes: 0 background, 1-2 learned first, 3-4 added later."""
    rng = RngStream(seed)
    data_rng, r0 = rng.spawn(2)
    spec = _spec(cfg, classes=5, domains=1, dim=6, samples=200, noise=0.8, mean_scale=1.5)
    ds = gen_synthetic(spec, int(data_rng.integers(0, 2**31)))
    tr, te = _split(ds, 0.3, data_rng)
    old, new = [1, 2], [3, 4]
    _check_disjoint("mib old/new classes", old, new)
    step0, step1 = _split(tr, 0.5, data_rng)
    # overlapped protocol: anything not in the step's class set is background
    y0 = np.where(np.isin(step0.y, old), step0.y, 0)
    y1 = np.where(np.isin(step1.y, new), step1.y, 0)
    m0 = inc.train_pixels(step0.x, y0, 3, r0, cfg["steps"], cfg["lr"])
    return m0, step1.x, y1, te, old, new


def run_mib(cfg: dict, seed: int) -> dict:
    m0, x1, y1, te, old, new = build_mib(cfg, seed)
    rng = RngStream(seed + 1)
    out = {}
    for method, lam in (("mib", cfg["lambda"]), ("ft", 0.0), ("lwf", cfg["lambda"])):
        model = inc.incremental_step(m0, x1, y1, len(new), lam, rng.spawn(1)[0], method,
                                     cfg["steps"], cfg["lr"])
        pred = model.predict(te.x)
        out[f"{method}_old_miou"] = inc.miou(pred, te.y, old).mean * 100
        out[f"{method}_new_miou"] = inc.miou(pred, te.y, new).mean * 100
        out[f"{method}_all_miou"] = inc.miou(pred, te.y, range(5)).mean * 100
    out["old_gap_mib_vs_ft"] = out["mib_old_miou"] - out["ft_old_miou"]
    return out


# --------------------------------------------------------------------------
# open world


def build_owr(cfg: dict, seed: int):
    rng = RngStream(seed)
    data_rng = rng.spawn(1)[0]
    spec = _spec(cfg, classes=8, domains=1, dim=10, samples=200, noise=1.0, mean_scale=1.5)
    ds = gen_synthetic(spec, int(data_rng.integers(0, 2**31)))
    known, unknown = [0, 1, 2, 3], [4, 5, 6, 7]
    _check_disjoint("owr known/unknown classes", known, unknown)
    tr, te = _split(ds.where(classes=known), 0.3, data_rng)
    unk = ds.where(classes=unknown)
    return tr, te, unk, [[0, 1], [2, 3]]


def run_owr(cfg: dict, seed: int) -> dict:
    tr, te, unk, episodes = build_owr(cfg, seed)
    out = {}
    for method in ("bdoc", "dnno"):
        conf = ow.OWRConfig(method=method, feat_dim=cfg["feat_dim"], steps=cfg["steps"], lr=cfg["lr"],
                            capacity=cfg["capacity"])
        learner = ow.OWRLearner(tr.dim, conf, RngStream(seed).spawn(2)[1])
        for ep in episodes:
            sel = np.isin(tr.y, ep)
            learner.learn_episode(tr.x[sel], tr.y[sel])
        m = ow.owr_metrics(learner.predict(te.x, reject=False), learner.predict(te.x), te.y,
                           learner.predict(unk.x))
        for k, v in m.items():
            out[f"{method}_{k}"] = v
        out[f"{method}_gap"] = m["open_acc"] - m["known_rejection"]
    return out


# --------------------------------------------------------------------------
# zero-shot + domain generalization


def build_zsl(cfg: dict, seed: int):
    rng = RngStream(seed)
    data_rng = rng.spawn(1)[0]
    spec = _spec(cfg, classes=10, domains=4, dim=12, samples=40, noise=0.6, mean_scale=2.0,
                 shift_scale=1.0, rotation_scale=0.3, scale_range=[0.7, 1.4], attr_dim=6)
    ds = gen_synthetic(spec, int(data_rng.integers(0, 2**31)))
    seen, unseen = list(range(7)), [7, 8, 9]
    src_dom, tgt_dom = [0, 1, 2], [3]
    _check_disjoint("zsl seen/unseen classes", seen, unseen)
    _check_disjoint("zsl source/target domains", src_dom, tgt_dom)
    train = ds.where(classes=seen, domains=src_dom)
    test = ds.where(classes=unseen, domains=tgt_dom)
    return ds, train, test, seen, unseen


def run_zsl(cfg: dict, seed: int) -> dict:
    ds, train, test, seen, unseen = build_zsl(cfg, seed)
    E = ds.attributes
    conf = cm.CuMixConfig(**{k: cfg[k] for k in ("hidden", "epochs", "warmup", "beta_max", "eta_i", "eta_f",
                                                 "steps_per_epoch", "lr")})
    out = {}
    for name, mixing in (("cumix", True), ("agg", False)):
        params = cm.train_cumix(train.x, train.y, train.d, E[seen], conf, RngStream(seed + 7), mixing)
        pred = cm.zsl_predict(cm.project(params, test.x), E[unseen])
        out[f"acc_{name}"] = _acc(np.asarray(unseen)[pred], test.y)
    out["improvement"] = out["acc_cumix"] - out["acc_agg"]
    return out


# --------------------------------------------------------------------------
# registry and reports


DEFAULTS: dict[str, dict] = {
    "latent": {"lambda_c": 0.1, "lambda_e": 0.1, "lambda_b": 0.05, "lambda_d": 0.5,
               "steps": 400, "batch": 64, "lr": 0.05},
    "dg": {"target_domain": 3, "alpha": 0.25, "lambda_dom": 1.0, "steps": 300, "lr": 0.1},
    "onda": {"dim": 8, "shift": 5.0, "n_t": 10, "alpha": 0.1, "updates": 100,
             "alpha_sweep": [0.05, 0.1, 0.2, 0.5]},
    "pda": {"metadata": [0.0, 0.25, 0.5, 0.75, 1.0], "source_node": 0, "target_node": 2,
            "sigma_d": 0.1, "lambda": 1.0, "steps": 200, "lr": 0.1, "memory": 16},
    "bat": {"hidden": 16, "steps": 400, "surrogate": "identity"},
    "mib": {"lambda": 10.0, "steps": 300, "lr": 0.5},
    "owr": {"feat_dim": 8, "steps": 200, "lr": 0.05, "capacity": 2000},
    "zsl": {"hidden": 32, "epochs": 30, "warmup": 5, "beta_max": 0.5, "eta_i": 1.0, "eta_f": 1.0,
            "steps_per_epoch": 20, "lr": 0.05},
}

RUNNERS: dict[str, Callable[[dict, int], dict]] = {
    "latent": run_latent, "dg": run_dg, "onda": run_onda, "pda": run_pda,
    "bat": run_bat, "mib": run_mib, "owr": run_owr, "zsl": run_zsl,
}


def merge_config(name: str, user: dict | None) -> dict:
    if name not in RUNNERS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(RUNNERS)}")
    cfg = copy.deepcopy(DEFAULTS[name])
    user = dict(user or {})
    unknown = set(user) - set(cfg) - {"data", "dataset"}
    if unknown:
        raise ConfigError(f"unknown config keys for {name}: {sorted(unknown)}")
    cfg.update(user)
    return cfg


def _clean(v):
    """Round-trip-safe JSON values (numpy scalars -> Python)."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class RunReport:
    scenario: str
    seed: int
    config: dict
    metrics: dict
    version: str = __version__
    wall_time: float = 0.0

    def to_json(self) -> str:
        """Deterministic document; wall time is kept out on purpose."""
        doc = {"scenario": self.scenario, "seed": self.seed, "version": self.version,
               "config": _clean(self.config), "metrics": _clean(self.metrics)}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def run_scenario(name: str, config: dict | None = None, seed: int = 0) -> RunReport:
    cfg = merge_config(name, config)
    t0 = time.perf_counter()
    metrics = RUNNERS[name](cfg, int(seed))
    return RunReport(name, int(seed), cfg, metrics, wall_time=time.perf_counter() - t0)


def write_report(report: RunReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(report.to_json())
    (out / "timing.json").write_text(json.dumps({"wall_time": report.wall_time}) + "\n")
    return path
