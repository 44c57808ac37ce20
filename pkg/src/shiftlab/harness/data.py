"""Synthetic multi-domain feature data and its text file format.

A sample of class c in domain d is ``s_d * R_d z + t_d`` with
``z ~ N(mean_c, noise^2 I)``. Domain 0 uses the identity transform; the
others use a Cayley rotation of a random skew matrix, a shift and a scale.

File format (text, one record per line)::

    SHIFTLAB-DS v1 dim=<d> classes=<K> domains=<D>
    ATTR <class> a_1 ... a_m          (optional, one per class)
    <class> <domain> f_1 ... f_d

Reals are written with 17 significant digits so a round trip is exact.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..numerics import RngStream

HEADER_RE = re.compile(r"^SHIFTLAB-DS v1 dim=(\d+) classes=(\d+) domains=(\d+)$")


@dataclass
class FeatureDataset:
    x: np.ndarray          # (n, dim)
    y: np.ndarray          # (n,) class ids
    d: np.ndarray          # (n,) domain ids
    n_classes: int
    n_domains: int
    attributes: np.ndarray | None = None  # (n_classes, m)

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=int)
        self.d = np.asarray(self.d, dtype=int)
        if not (len(self.x) == len(self.y) == len(self.d)):
            raise ValueError("x, y and d must have equal length")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("features must be finite")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError("class ids must be dense in [0, n_classes)")
        if len(self.d) and (self.d.min() < 0 or self.d.max() >= self.n_domains):
            raise ValueError("domain ids must be dense in [0, n_domains)")

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, mask) -> "FeatureDataset":
        mask = np.asarray(mask)
        return FeatureDataset(self.x[mask], self.y[mask], self.d[mask], self.n_classes,
                              self.n_domains, self.attributes)

    def where(self, classes=None, domains=None) -> "FeatureDataset":
        m = np.ones(len(self.y), bool)
        if classes is not None:
            m &= np.isin(self.y, list(classes))
        if domains is not None:
            m &= np.isin(self.d, list(domains))
        return self.subset(m)


@dataclass
class SyntheticSpec:
    classes: int = 4
    domains: int = 2
    dim: int = 8
    noise: float = 0.5
    samples: int = 50               # per (class, domain)
    mean_scale: float = 2.0
    shift_scale: float = 2.0
    rotation_scale: float = 0.5
    scale_range: tuple = (0.7, 1.5)
    attr_dim: int = 0               # > 0: class means are a linear image of attributes
    shifts: list | None = None      # explicit per-domain shift vectors override random ones
    scales: list | None = None

    def __post_init__(self):
        if self.classes < 1 or self.domains < 1 or self.dim < 1 or self.samples < 1:
            raise ValueError("classes, domains, dim and samples must be positive")
        if self.noise <= 0:
            raise ValueError("noise must be positive")
        lo, hi = self.scale_range
        if lo <= 0 or hi < lo:
            raise ValueError("scale_range must be positive and ordered")


@dataclass
class DomainTransform:
    R: np.ndarray
    shift: np.ndarray
    scale: float

    def __call__(self, z):
        return self.scale * z @ self.R.T + self.shift


def cayley(S) -> np.ndarray:
    """Orthogonal matrix (I - S)^{-1}(I + S) for skew-symmetric S."""
    I = np.eye(S.shape[0])
    return np.linalg.solve(I - S, I + S)


def make_transforms(spec: SyntheticSpec, rng: RngStream) -> list[DomainTransform]:
    out = [DomainTransform(np.eye(spec.dim), np.zeros(spec.dim), 1.0)]
    for d in range(1, spec.domains):
        G = rng.normal(0.0, spec.rotation_scale, size=(spec.dim, spec.dim))
        R = cayley((G - G.T) / 2)
        shift = rng.normal(0.0, spec.shift_scale, size=spec.dim)
        scale = float(rng.uniform(*spec.scale_range))
        if spec.shifts is not None:
            shift = np.asarray(spec.shifts[d], dtype=np.float64)
        if spec.scales is not None:
            scale = float(spec.scales[d])
        if abs(np.linalg.det(scale * R)) < 1e-10:
            raise ValueError("degenerate domain transform")
        out.append(DomainTransform(R, shift, scale))
    return out


def gen_synthetic(spec: SyntheticSpec, seed: int) -> FeatureDataset:
    rng = RngStream(seed)
    base_rng, tf_rng, noise_rng = rng.spawn(3)
    attributes = None
    if spec.attr_dim > 0:
        attributes = base_rng.normal(0.0, 1.0, size=(spec.classes, spec.attr_dim))
        M = base_rng.normal(0.0, 1.0 / np.sqrt(spec.attr_dim), size=(spec.dim, spec.attr_dim))
        means = spec.mean_scale * attributes @ M.T
    else:
        means = base_rng.normal(0.0, spec.mean_scale, size=(spec.classes, spec.dim))
    transforms = make_transforms(spec, tf_rng)
    xs, ys, ds = [], [], []
    for d, tf in enumerate(transforms):
        for c in range(spec.classes):
            z = means[c] + noise_rng.normal(0.0, spec.noise, size=(spec.samples, spec.dim))
            xs.append(tf(z))
            ys.append(np.full(spec.samples, c))
            ds.append(np.full(spec.samples, d))
    return FeatureDataset(np.vstack(xs), np.concatenate(ys), np.concatenate(ds),
                          spec.classes, spec.domains, attributes)


def _fmt(v) -> str:
    return " ".join("%.17g" % t for t in v)


def dumps_dataset(ds: FeatureDataset) -> str:
    buf = io.StringIO()
    buf.write(f"SHIFTLAB-DS v1 dim={ds.dim} classes={ds.n_classes} domains={ds.n_domains}\n")
    if ds.attributes is not None:
        for c, a in enumerate(ds.attributes):
            buf.write(f"ATTR {c} {_fmt(a)}\n")
    for f, c, d in zip(ds.x, ds.y, ds.d):
        buf.write(f"{c} {d} {_fmt(f)}\n")
    return buf.getvalue()


def loads_dataset(text: str) -> FeatureDataset:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty dataset file")
    m = HEADER_RE.match(lines[0].strip())
    if not m:
        raise ValueError("bad dataset header")
    dim, k, n_dom = map(int, m.groups())
    attrs: dict[int, list[float]] = {}
    xs, ys, ds = [], [], []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "ATTR":
            attrs[int(parts[1])] = [float(t) for t in parts[2:]]
            continue
        if len(parts) != dim + 2:
            raise ValueError(f"line {ln}: expected {dim + 2} fields, got {len(parts)}")
        ys.append(int(parts[0]))
        ds.append(int(parts[1]))
        xs.append([float(t) for t in parts[2:]])
    attributes = None
    if attrs:
        if sorted(attrs) != list(range(k)):
            raise ValueError("attribute block must cover every class")
        attributes = np.array([attrs[c] for c in range(k)])
    x = np.array(xs, dtype=np.float64).reshape(-1, dim)
    return FeatureDataset(x, np.array(ys, int), np.array(ds, int), k, n_dom, attributes)


def write_dataset(ds: FeatureDataset, path) -> None:
    Path(path).write_text(dumps_dataset(ds))


def read_dataset(path) -> FeatureDataset:
    return loads_dataset(Path(path).read_text())
