"""
Finite-sum objectives distributed over n nodes.

    F(x) = 1/n sum_i f_i(x),   f_i(x) = 1/m_i sum_j f_ij(x)

Per-node data is stored padded to ``M = max m_i`` rows so that every
gradient kernel is vectorised over nodes; padded rows are never sampled and
are masked out of averages.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, NumericalFailure

QUADRATIC = "quadratic"
LOGISTIC = "logistic"

OPT_GRAD_TOL = 1e-13
OPT_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class ProblemConstants:
    ell: float
    mu: float

    @property
    def kappa(self):
        return self.ell / self.mu


def _sigmoid(t):
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _softplus(t):
    return np.log1p(np.exp(-np.abs(t))) + np.maximum(t, 0.0)


def _split_even(total, n):
    base, extra = divmod(total, n)
    return [base + 1 if i < extra else base for i in range(n)]


class FiniteSumProblem:
    """Component oracles for a quadratic or l2-regularised logistic finite sum.

    Quadratic components are ``1/2 ||x - theta_ij||^2``. Logistic components
    are ``log(1 + exp(-y xi^T x)) + lam/2 ||x||^2``.
    """

    def __init__(self, kind, data, labels=None, lam=0.0):
        if kind not in (QUADRATIC, LOGISTIC):
            raise ValueError(f"unknown problem kind {kind!r}")
        blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in data]
        if not blocks:
            raise ValueError("problem needs at least one node")
        dims = {b.shape[1] for b in blocks}
        if len(dims) != 1:
            raise ValueError(f"inconsistent dimensions across nodes: {sorted(dims)}")
        counts = np.array([b.shape[0] for b in blocks], dtype=int)
        if (counts < 1).any():
            raise ValueError("every node needs at least one component")
        if kind == LOGISTIC:
            if lam <= 0:
                raise ValueError("logistic problems need lambda > 0 for strong convexity")
            if labels is None or len(labels) != len(blocks):
                raise ValueError("logistic problems need one label vector per node")
        self.kind = kind
        self.n = len(blocks)
        self.dim = dims.pop()
        self.counts = counts
        self.lam = float(lam)
        M = int(counts.max())
        self.data = np.zeros((self.n, M, self.dim))
        self.labels = np.zeros((self.n, M))
        self.mask = np.zeros((self.n, M), dtype=bool)
        for i, b in enumerate(blocks):
            self.data[i, : counts[i]] = b
            self.mask[i, : counts[i]] = True
            if kind == LOGISTIC:
                y = np.asarray(labels[i], dtype=float).ravel()
                if y.shape[0] != counts[i]:
                    raise ValueError(f"node {i}: {counts[i]} rows but {y.shape[0]} labels")
                if not np.isin(y, (-1.0, 1.0)).all():
                    raise ValueError(f"node {i}: labels must be -1 or +1")
                self.labels[i, : counts[i]] = y
        for arr in (self.data, self.labels, self.mask):
            arr.setflags(write=False)
        self._x_star = None
        self._pooled = None

    @classmethod
    def quadratic(cls, targets):
        """``targets[i]`` is an (m_i, p) array of per-component minimisers."""
        return cls(QUADRATIC, targets)

    @classmethod
    def logistic(cls, features, labels, lam):
        return cls(LOGISTIC, features, labels, lam)

    @property
    def M(self):
        return int(self.counts.max())

    @property
    def m(self):
        return int(self.counts.min())

    @property
    def total(self):
        return int(self.counts.sum())

    def pooled(self):
        """The same components gathered at a single node (centralised view)."""
        if self.n == 1:
            return self
        if self._pooled is not None:
            return self._pooled
        rows = [self.data[i, : self.counts[i]] for i in range(self.n)]
        data = [np.concatenate(rows)]
        if self.kind == QUADRATIC:
            self._pooled = FiniteSumProblem(QUADRATIC, data)
        else:
            labels = [np.concatenate([self.labels[i, : self.counts[i]] for i in range(self.n)])]
            self._pooled = FiniteSumProblem(LOGISTIC, data, labels, self.lam)
        return self._pooled

    # -- kernels: rows of (data, labels) paired with rows of points X --------

    def _grad_rows(self, feats, labels, X):
        if self.kind == QUADRATIC:
            return X - feats
        z = (feats * X).sum(axis=-1)
        coef = -labels * _sigmoid(-labels * z)
        return coef[..., None] * feats + self.lam * X

    def _value_rows(self, feats, labels, X):
        if self.kind == QUADRATIC:
            return 0.5 * ((X - feats) ** 2).sum(axis=-1)
        z = (feats * X).sum(axis=-1)
        return _softplus(-labels * z) + 0.5 * self.lam * (X * X).sum(axis=-1)

    def _check_index(self, i, j=None):
        if not 0 <= i < self.n:
            raise ValueError(f"node index {i} out of range [0, {self.n})")
        if j is not None and not 0 <= j < self.counts[i]:
            raise ValueError(f"component index {j} out of range [0, {self.counts[i]}) at node {i}")

    # -- single-point oracles ----------------------------------------------

    def component_gradient(self, x, i, j):
        self._check_index(i, j)
        x = np.asarray(x, float).reshape(1, self.dim)
        return self._grad_rows(self.data[i, j][None], self.labels[i, j][None], x)[0]

    def component_value(self, x, i, j):
        self._check_index(i, j)
        x = np.asarray(x, float).reshape(1, self.dim)
        return float(self._value_rows(self.data[i, j][None], self.labels[i, j][None], x)[0])

    def local_full_gradient(self, x, i):
        self._check_index(i)
        X = np.broadcast_to(np.asarray(x, float), (self.n, self.dim))
        return self.local_gradients(X)[i]

    def value(self, x):
        X = np.broadcast_to(np.asarray(x, float), (self.n, self.M, self.dim))
        vals = np.where(self.mask, self._value_rows(self.data, self.labels, X), 0.0)
        return float((vals.sum(axis=1) / self.counts).mean())

    def gradient(self, x):
        X = np.broadcast_to(np.asarray(x, float), (self.n, self.dim))
        return self.local_gradients(X).mean(axis=0)

    def global_value_and_gradient(self, x):
        return self.value(x), self.gradient(x)

    # -- vectorised oracles over nodes (X has one row per node) -------------

    def component_gradients(self, X):
        """(n, M, p) table of every component gradient at its node's point; padding is zero."""
        Xb = np.ascontiguousarray(np.broadcast_to(np.asarray(X, float)[:, None, :], self.data.shape))
        G = self._grad_rows(self.data, self.labels, Xb)
        return np.where(self.mask[..., None], G, 0.0)

    def local_gradients(self, X):
        return self.component_gradients(X).sum(axis=1) / self.counts[:, None]

    def sampled_gradients(self, X, s):
        """Row i is the gradient of component s[i] of node i at X[i]."""
        rows = np.arange(self.n)
        return self._grad_rows(self.data[rows, s], self.labels[rows, s], np.asarray(X, float))

    # -- constants and optimum ---------------------------------------------

    def constants(self):
        if self.kind == QUADRATIC:
            return ProblemConstants(1.0, 1.0)
        sq = np.where(self.mask, (self.data**2).sum(axis=-1), 0.0)
        return ProblemConstants(float(sq.max()) / 4.0 + self.lam, self.lam)

    def optimum(self):
        """Global minimiser x*; closed form for quadratics, full-gradient descent otherwise."""
        if self._x_star is not None:
            return self._x_star.copy()
        if self.kind == QUADRATIC:
            means = np.where(self.mask[..., None], self.data, 0.0).sum(axis=1) / self.counts[:, None]
            x = means.mean(axis=0)
        else:
            step = 1.0 / self.constants().ell
            x = np.zeros(self.dim)
            for _ in range(OPT_MAX_ITER):
                g = self.gradient(x)
                if np.linalg.norm(g) <= OPT_GRAD_TOL:
                    break
                x = x - step * g
            else:
                raise NumericalFailure(
                    f"optimum oracle stopped after {OPT_MAX_ITER} steps with |grad| = {np.linalg.norm(g):.3e}"
                )
        x.setflags(write=False)
        self._x_star = x
        return x.copy()

    def describe(self):
        c = self.constants()
        return {
            "kind": self.kind,
            "n": self.n,
            "p": self.dim,
            "m_i": " ".join(str(int(v)) for v in self.counts),
            "M": self.M,
            "m": self.m,
            "ell": c.ell,
            "mu": c.mu,
            "kappa": c.kappa,
        }


def synthetic_logistic(n, per_node, dim, seed=None, lam=None, flip=0.05):
    """Linearly separable Gaussian data with label noise, split evenly over n nodes.

    Features are rescaled by the largest row norm so every ||xi|| <= 1.
    ``lam`` defaults to 1/(n * per_node).
    """
    if min(n, per_node, dim) < 1:
        raise ValueError("n, per_node and dim must be positive")
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal(dim)
    feats = rng.standard_normal((n * per_node, dim))
    feats /= np.linalg.norm(feats, axis=1).max()
    labels = np.where(feats @ truth >= 0, 1.0, -1.0)
    labels[rng.random(n * per_node) < flip] *= -1.0
    lam = 1.0 / (n * per_node) if lam is None else lam
    blocks = np.split(feats, n)
    ys = np.split(labels, n)
    return FiniteSumProblem.logistic(blocks, ys, lam)


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_csv(path, n, label_column=-1, lam=None):
    """Read a labelled CSV and partition its rows contiguously over n nodes.

    ``label_column`` is a column index or, when the file has a header, a name.
    Labels in {0, 1} are mapped to {-1, +1}; features are rescaled to max
    row norm 1. ``lam`` defaults to 1/N.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(no, r) for no, r in enumerate(csv.reader(fh), 1) if r and any(t.strip() for t in r)]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    header = None
    if not all(_is_number(t) for t in rows[0][1]):
        header = [t.strip() for t in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: header but no data rows")
    width = len(rows[0][1])
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None or label_column not in header:
            raise DataFormatError(f"{path}: no column named {label_column!r}")
        col = header.index(label_column)
    else:
        col = int(label_column)
        if not -width <= col < width:
            raise DataFormatError(f"{path}: label column {col} out of range for {width} columns")
        col %= width
    values = np.empty((len(rows), width))
    for k, (no, r) in enumerate(rows):
        if len(r) != width:
            raise DataFormatError(f"{path}: expected {width} fields, got {len(r)}", no)
        try:
            values[k] = [float(t) for t in r]
        except ValueError:
            raise DataFormatError(f"{path}: non-numeric field", no) from None
    if len(rows) < n:
        raise ValueError(f"{len(rows)} rows cannot be split over {n} nodes")
    y = values[:, col]
    feats = np.delete(values, col, axis=1)
    if np.isin(y, (0.0, 1.0)).all():
        y = 2.0 * y - 1.0
    elif not np.isin(y, (-1.0, 1.0)).all():
        bad = int(np.flatnonzero(~np.isin(y, (-1.0, 1.0)))[0])
        raise DataFormatError(f"{path}: labels must be in {{0,1}} or {{-1,+1}}", rows[bad][0])
    scale = np.linalg.norm(feats, axis=1).max()
    if scale > 0:
        feats = feats / scale
    sizes = _split_even(len(rows), n)
    cuts = np.cumsum(sizes)[:-1]
    lam = 1.0 / len(rows) if lam is None else lam
    return FiniteSumProblem.logistic(np.split(feats, cuts), np.split(y, cuts), lam)

