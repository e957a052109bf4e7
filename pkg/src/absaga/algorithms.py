"""
Iteration engines: AB-SAGA, the S-AB and AB gradient-tracking baselines, and
centralised SAGA.

All distributed methods share the compact update

    x <- A^c (x - alpha w)
    w <- B^d (w + g_new - g)

and differ only in the local estimate ``g_new``: the SAGA estimate
(AB-SAGA), a single sampled component gradient (S-AB) or the full local
gradient (AB). States are updated in place; ``metrics`` is evaluated on
demand because it touches the whole dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

ABSAGA = "absaga"
SAB = "sab"
AB = "ab"
SAGA = "saga"
METHODS = (ABSAGA, SAB, AB, SAGA)

TABLE_REFRESH = 10_000
SAMPLE_BLOCK = 1024

TRACE_COLUMNS = (
    "iteration",
    "epoch",
    "optimality_gap",
    "consensus_error",
    "tracking_error",
    "aux_gap",
    "grads_computed",
    "comm_rounds",
)


class IndexSampler:
    """Uniform component indices, one independent stream per node.

    Node ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))``, i.e. the
    i-th child that ``SeedSequence(seed).spawn`` would produce. Draws are
    buffered in blocks; the sequence seen by a node depends only on
    ``(seed, i, m_i)``.
    """

    def __init__(self, seed, counts, block=SAMPLE_BLOCK):
        self.counts = np.asarray(counts, dtype=int)
        self.block = block
        self._gens = [
            np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,))) for i in range(len(self.counts))
        ]
        self._buf = None
        self._pos = block

    def draw(self):
        if self._pos == self.block:
            self._buf = np.stack([g.integers(0, m, size=self.block) for g, m in zip(self._gens, self.counts)])
            self._pos = 0
        s = self._buf[:, self._pos]
        self._pos += 1
        return s


@dataclass
class IterationMetrics:
    iteration: int
    epoch: float
    optimality_gap: float
    consensus_error: float
    tracking_error: float
    aux_gap: float
    grads_computed: int
    comm_rounds: int

    def row(self):
        return [getattr(self, c) for c in TRACE_COLUMNS]


@dataclass
class NetworkState:
    """Stacked node states; row i of every (n, p) array belongs to node i.

    ``table`` holds the stored component gradients and ``v`` the points they
    were taken at; both are (n, M, p) and only exist for SAGA-type methods.
    """

    method: str
    alpha: float
    c: int
    d: int
    x: np.ndarray
    w: np.ndarray
    g: np.ndarray
    Ac: np.ndarray | None
    Bd: np.ndarray | None
    pi_r: np.ndarray
    pi_c: np.ndarray
    counts: np.ndarray
    sampler: IndexSampler | None
    table: np.ndarray | None = None
    table_avg: np.ndarray | None = None
    v: np.ndarray | None = None
    k: int = 0
    grads: int = 0
    since_refresh: int = 0

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def epoch(self):
        if self.method == AB:
            return float(self.k)
        return self.k * self.n / float(self.counts.sum())

    @property
    def comm_rounds(self):
        # a lone node has no links to use
        return 0 if self.n == 1 else (self.c + self.d) * self.k


def _initial_points(prob, x0):
    if x0 is None:
        x0 = np.zeros(prob.dim)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape == (prob.dim,):
        return np.tile(x0, (prob.n, 1))
    if x0.shape == (prob.n, prob.dim):
        return x0.copy()
    raise ValueError(f"x0 must have shape ({prob.dim},) or ({prob.n}, {prob.dim}), got {x0.shape}")


def init_state(prob, weights, x0=None, alpha=0.1, c=1, d=1, seed=0, method=ABSAGA):
    """Build the starting state for one of the distributed methods."""
    if method not in (ABSAGA, SAB, AB):
        raise ValueError(f"unknown distributed method {method!r}")
    if not alpha > 0:
        raise ValueError(f"step size must be positive, got {alpha}")
    if c < 1 or d < 1:
        raise ValueError(f"communication rounds must be >= 1, got c={c}, d={d}")
    if weights.n != prob.n:
        raise ValueError(f"weights are for {weights.n} nodes but the problem has {prob.n}")
    X = _initial_points(prob, x0)
    Ac, Bd = weights.mixing(c, d)
    state = NetworkState(
        method=method,
        alpha=float(alpha),
        c=int(c),
        d=int(d),
        x=X,
        w=None,
        g=None,
        Ac=Ac,
        Bd=Bd,
        pi_r=weights.pi_r,
        pi_c=weights.pi_c,
        counts=prob.counts.copy(),
        sampler=None if method == AB else IndexSampler(seed, prob.counts),
    )
    _fill_gradients(state, prob)
    return state


def _fill_gradients(state, prob):
    if state.method in (ABSAGA, SAGA):
        state.table = prob.component_gradients(state.x)
        state.table_avg = state.table.sum(axis=1) / state.counts[:, None]
        state.v = np.repeat(state.x[:, None, :], state.table.shape[1], axis=1)
        state.g = state.table_avg.copy()
    else:
        state.g = prob.local_gradients(state.x)
    state.w = state.g.copy()


def absaga_init(prob, weights, x0=None, alpha=0.1, c=1, d=1, seed=0):
    """AB-SAGA start: tables at x0 and w = g = local full gradients."""
    return init_state(prob, weights, x0, alpha, c, d, seed, ABSAGA)


def saga_init(prob, x0=None, alpha=0.1, seed=0):
    """Centralised SAGA over all components pooled at one node."""
    if not alpha > 0:
        raise ValueError(f"step size must be positive, got {alpha}")
    pooled = prob.pooled()
    x0 = None if x0 is None else np.asarray(x0, float).reshape(-1, prob.dim)[0]
    one = np.ones(1)
    state = NetworkState(
        method=SAGA,
        alpha=float(alpha),
        c=0,
        d=0,
        x=_initial_points(pooled, x0),
        w=None,
        g=None,
        Ac=None,
        Bd=None,
        pi_r=one,
        pi_c=one,
        counts=pooled.counts.copy(),
        sampler=IndexSampler(seed, pooled.counts),
    )
    _fill_gradients(state, pooled)
    return state


def saga_estimates(state, prob, X, s):
    """SAGA estimates at points X for component choices s, without touching the table.

    Returns (estimate, fresh component gradients, replaced table entries).
    """
    fresh = prob.sampled_gradients(X, s)
    old = state.table[np.arange(state.n), s]
    # fresh + (avg - old) rather than (fresh - old) + avg: exact when m_i = 1
    return fresh + (state.table_avg - old), fresh, old


def _saga_estimate(state, prob, X):
    """Sample one component per node, form the SAGA estimate and refresh the table."""
    s = state.sampler.draw()
    rows = np.arange(state.n)
    est, fresh, old = saga_estimates(state, prob, X, s)
    avg = state.table_avg + (fresh - old) / state.counts[:, None]
    single = state.counts == 1
    avg[single] = fresh[single]
    state.table[rows, s] = fresh
    state.v[rows, s] = X
    state.since_refresh += 1
    if state.since_refresh >= TABLE_REFRESH:
        avg = state.table.sum(axis=1) / state.counts[:, None]
        state.since_refresh = 0
    state.table_avg = avg
    return est


def _finish(state, X, g_new, grads):
    if state.Bd is None:
        w = g_new
    else:
        w = state.Bd @ ((state.w - state.g) + g_new)
    state.k += 1
    if not (np.isfinite(X).all() and np.isfinite(w).all()):
        raise DivergenceError(state.k)
    state.x, state.w, state.g = X, w, g_new
    state.grads += grads
    return state


def absaga_step(state, prob):
    X = state.Ac @ (state.x - state.alpha * state.w)
    return _finish(state, X, _saga_estimate(state, prob, X), state.n)


def sab_step(state, prob):
    X = state.Ac @ (state.x - state.alpha * state.w)
    return _finish(state, X, prob.sampled_gradients(X, state.sampler.draw()), state.n)


def ab_step(state, prob):
    X = state.Ac @ (state.x - state.alpha * state.w)
    return _finish(state, X, prob.local_gradients(X), prob.total)


def saga_centralized_step(state, prob):
    """x <- x - alpha * (SAGA estimate at x).

    The estimate for the current point is formed eagerly at the end of the
    previous step (the first one is the full gradient), so a step moves and
    then samples at the new point, in lockstep with AB-SAGA on one node.
    """
    pooled = prob.pooled()
    X = state.x - state.alpha * state.g
    return _finish(state, X, _saga_estimate(state, pooled, X), 1)


STEPPERS = {ABSAGA: absaga_step, SAB: sab_step, AB: ab_step, SAGA: saga_centralized_step}


def step(state, prob):
    return STEPPERS[state.method](state, prob)


def _sq(a):
    return float(np.sum(a * a))


def metrics(state, prob, x_star=None):
    """Optimality gap F(xbar) - F(x*) (clipped at 0) and the network error terms."""
    target = prob.pooled() if state.method == SAGA else prob
    x_star = target.optimum() if x_star is None else np.asarray(x_star, float)
    xbar = state.x.mean(axis=0)
    gap = max(target.value(xbar) - target.value(x_star), 0.0)
    consensus = _sq(state.x - np.outer(np.ones(state.n), state.pi_r @ state.x))
    tracking = _sq(state.w - np.outer(state.pi_c, state.w.sum(axis=0)))
    if state.v is None:
        aux = _sq(state.x - x_star)
    else:
        dev = np.where(target.mask[..., None], state.v - x_star, 0.0)
        aux = float(((dev * dev).sum(axis=(1, 2)) / state.counts).sum())
    return IterationMetrics(
        iteration=state.k,
        epoch=state.epoch,
        optimality_gap=gap,
        consensus_error=consensus,
        tracking_error=tracking,
        aux_gap=aux,
        grads_computed=state.grads,
        comm_rounds=state.comm_rounds,
    )


def error_state(state, prob, x_star, ell):
    """The four error quantities bounded by the LTI system, Euclidean norms.

    [consensus, n ||pi_r^T x - x*||^2, aux_gap, tracking / ell^2]
    """
    m = metrics(state, prob, x_star)
    xhat = state.pi_r @ state.x
    return np.array([m.consensus_error, state.n * _sq(xhat - x_star), m.aux_gap, m.tracking_error / ell**2])


def tracking_residual(state):
    """||sum_i w_i - sum_i g_i|| / (1 + ||g||); zero in exact arithmetic."""
    diff = state.w.sum(axis=0) - state.g.sum(axis=0)
    return float(np.linalg.norm(diff) / (1.0 + np.linalg.norm(state.g)))


def run(state, prob, iterations, record_every=None, x_star=None, sink=None):
    """Advance ``iterations`` steps, recording at k = 0, every ``record_every`` steps and at the end.

    ``sink`` receives each IterationMetrics as it is produced. A non-finite
    state or metric raises DivergenceError carrying the finite trace so far.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    record_every = record_every or iterations
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    target = prob.pooled() if state.method == SAGA else prob
    x_star = target.optimum() if x_star is None else x_star
    stepper = STEPPERS[state.method]
    trace = []

    def record():
        m = metrics(state, prob, x_star)
        if not np.isfinite(m.row()).all():
            # iterates still finite but the objective has overflowed
            raise DivergenceError(state.k, trace)
        trace.append(m)
        if sink is not None:
            sink(m)

    with np.errstate(over="ignore", invalid="ignore"):
        if state.k == 0:
            record()
        for it in range(1, iterations + 1):
            try:
                stepper(state, prob)
            except DivergenceError as exc:
                raise DivergenceError(exc.iteration, trace) from None
            if it % record_every == 0 or it == iterations:
                record()
    return trace
