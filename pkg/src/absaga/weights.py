"""
Row/column stochastic weights and their spectral quantities.

Conventions: entry ``(i, r)`` of a weight matrix is the weight node ``i``
puts on information received from ``r``. ``A`` is row-stochastic (state
mixing), ``B`` is column-stochastic (tracker mixing).

Contraction factors are measured in a Perron-weighted spectral norm,
``||D^{1/2} (M - M_inf) D^{-1/2}||_2`` with ``D = diag(pi)`` for a
row-stochastic matrix and ``D = diag(pi)^{-1}`` for a column-stochastic one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .digraph import degrees
from .errors import NumericalFailure, PreconditionError

ROW = "row-stochastic"
COLUMN = "column-stochastic"
DOUBLY = "doubly-stochastic"

SUM_TOL = 1e-12
POWER_TOL = 1e-14


@dataclass(frozen=True)
class StochasticMatrix:
    entries: np.ndarray
    kind: str

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"weight matrix must be square, got shape {e.shape}")
        if (e < 0).any():
            raise ValueError("weight matrix has negative entries")
        rows_ok = np.allclose(e.sum(axis=1), 1.0, rtol=0, atol=SUM_TOL)
        cols_ok = np.allclose(e.sum(axis=0), 1.0, rtol=0, atol=SUM_TOL)
        need = {ROW: rows_ok, COLUMN: cols_ok, DOUBLY: rows_ok and cols_ok}
        if self.kind not in need:
            raise ValueError(f"unknown stochasticity kind {self.kind!r}")
        if not need[self.kind]:
            raise ValueError(f"matrix is not {self.kind} within {SUM_TOL}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def n(self):
        return self.entries.shape[0]

    @property
    def is_row(self):
        return self.kind in (ROW, DOUBLY)

    @property
    def is_column(self):
        return self.kind in (COLUMN, DOUBLY)


def _require_self_loops(g):
    if not g.self_loops:
        raise PreconditionError("weights need a self-loop at every node (primitivity)")


def row_stochastic_from_indegree(g):
    """a_ir = 1/d_i^in for every in-neighbour r of i (self included)."""
    _require_self_loops(g)
    in_deg, _ = degrees(g)
    adj = g.adjacency()
    return StochasticMatrix(adj / in_deg[:, None], ROW)


def column_stochastic_from_outdegree(g):
    """b_ir = 1/d_r^out for every edge r -> i, so column r sums to one."""
    _require_self_loops(g)
    _, out_deg = degrees(g)
    adj = g.adjacency()
    return StochasticMatrix(adj / out_deg[None, :], COLUMN)


def _power_cap(n):
    return int(100 * n * math.log(max(n, 2))) + 10_000


def _perron(T, residual_of):
    n = T.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(_power_cap(n)):
        nxt = T @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= POWER_TOL:
            pi = nxt
            break
        pi = nxt
    else:
        raise NumericalFailure("Perron power iteration did not converge; matrix is likely not primitive")
    if (pi <= 0).any():
        raise NumericalFailure("Perron vector has non-positive entries; matrix is not irreducible")
    res = residual_of(pi)
    if res > 1e-12:
        raise NumericalFailure(f"Perron residual {res:.3e} exceeds 1e-12")
    return pi


def perron_left(A):
    """Left Perron vector of a row-stochastic matrix, normalised to sum 1."""
    a = A.entries if isinstance(A, StochasticMatrix) else np.asarray(A, float)
    return _perron(a.T, lambda pi: np.max(np.abs(pi @ a - pi)))


def perron_right(B):
    """Right Perron vector of a column-stochastic matrix, normalised to sum 1."""
    b = B.entries if isinstance(B, StochasticMatrix) else np.asarray(B, float)
    return _perron(b, lambda pi: np.max(np.abs(b @ pi - pi)))


def limit_matrix(M, pi):
    """Rank-one limit of M^k: 1 pi^T for row-stochastic, pi 1^T for column-stochastic."""
    ones = np.ones(len(pi))
    return np.outer(ones, pi) if M.is_row else np.outer(pi, ones)


def _weighted(M, pi, X):
    d = np.sqrt(pi) if M.is_row else 1.0 / np.sqrt(pi)
    return d[:, None] * X / d[None, :]


def weighted_norm(M, pi, X):
    """Spectral norm of X in the Perron-weighted geometry of M."""
    return float(np.linalg.norm(_weighted(M, pi, X), 2))


def contraction_factor(M, pi):
    """sigma = |||M - M_inf||| in the Perron-weighted spectral norm; must be < 1."""
    diff = M.entries - limit_matrix(M, pi)
    sigma = weighted_norm(M, pi, diff)
    if sigma >= 1.0:
        raise NumericalFailure(f"weighted contraction factor {sigma:.6f} >= 1")
    # (M - M_inf)^k = M^k - M_inf must decay; a norm below 1 already bounds it by sigma^k
    k = limit_horizon(sigma)
    tail = np.abs(np.linalg.matrix_power(M.entries, k) - limit_matrix(M, pi)).max()
    if tail > 1e-6:
        raise NumericalFailure(f"M^{k} is {tail:.3e} away from its limit")
    return sigma


def directivity(pi_r, pi_c, n=None):
    """psi = sqrt(h_r h_c) / (n pi_r^T pi_c); equals 1 for doubly stochastic weights."""
    pi_r = np.asarray(pi_r, float)
    pi_c = np.asarray(pi_c, float)
    n = len(pi_r) if n is None else n
    h_r = pi_r.max() / pi_r.min()
    h_c = pi_c.max() / pi_c.min()
    return math.sqrt(h_r * h_c) / (n * float(pi_r @ pi_c))


def matrix_power(M, k):
    if k < 1:
        raise ValueError(f"power must be >= 1, got {k}")
    return StochasticMatrix(np.linalg.matrix_power(M.entries, k), M.kind)


def limit_horizon(sigma, eps=1e-9):
    """Smallest K with sigma^K <= eps."""
    if sigma <= 0.0:
        return 1
    return max(1, math.ceil(math.log(eps) / math.log(sigma)))


@dataclass(frozen=True)
class WeightSystem:
    A: StochasticMatrix
    B: StochasticMatrix
    pi_r: np.ndarray = field(init=False)
    pi_c: np.ndarray = field(init=False)
    A_inf: np.ndarray = field(init=False)
    B_inf: np.ndarray = field(init=False)
    sigma_A: float = field(init=False)
    sigma_B: float = field(init=False)

    def __post_init__(self):
        if not self.A.is_row or not self.B.is_column:
            raise ValueError("A must be row-stochastic and B column-stochastic")
        if self.A.n != self.B.n:
            raise ValueError("A and B dimensions differ")
        pi_r = perron_left(self.A)
        pi_c = perron_right(self.B)
        set_ = object.__setattr__
        set_(self, "pi_r", pi_r)
        set_(self, "pi_c", pi_c)
        set_(self, "A_inf", limit_matrix(self.A, pi_r))
        set_(self, "B_inf", limit_matrix(self.B, pi_c))
        set_(self, "sigma_A", contraction_factor(self.A, pi_r))
        set_(self, "sigma_B", contraction_factor(self.B, pi_c))

    @classmethod
    def from_graph(cls, g):
        return cls(row_stochastic_from_indegree(g), column_stochastic_from_outdegree(g))

    @property
    def n(self):
        return self.A.n

    @property
    def h_r(self):
        return float(self.pi_r.max() / self.pi_r.min())

    @property
    def h_c(self):
        return float(self.pi_c.max() / self.pi_c.min())

    @property
    def pi_dot(self):
        return float(self.pi_r @ self.pi_c)

    @property
    def psi(self):
        return directivity(self.pi_r, self.pi_c, self.n)

    def mixing(self, c, d):
        """Dense A^c and B^d used by one iteration with c and d gossip rounds."""
        return matrix_power(self.A, c).entries, matrix_power(self.B, d).entries

    def summary(self):
        return {
            "n": self.n,
            "h_r": self.h_r,
            "h_c": self.h_c,
            "sigma_A": self.sigma_A,
            "sigma_B": self.sigma_B,
            "pi_r_dot_pi_c": self.pi_dot,
            "psi": self.psi,
        }
