"""
Experiment configuration and orchestration.

Config files are flat ``section.key = value`` lines. The first non-comment
line must be ``schema = 1``; ``#`` starts a comment. Example::

    schema = 1
    graph.type = exponential
    graph.n = 16
    problem.kind = logistic
    problem.dim = 10
    problem.per_node = 100
    problem.seed = 1
    algorithm.name = absaga
    algorithm.alpha = auto
    run.epochs = 400
    output.trace = trace.csv

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import algorithms as alg
from . import digraph, theory
from .errors import ABSagaError, CertificateNotApplicable, ConfigError, StageError
from .problems import LOGISTIC, QUADRATIC, FiniteSumProblem, load_csv, synthetic_logistic
from .weights import WeightSystem

SCHEMA_VERSION = 1
GRAPH_TYPES = ("exponential", "geometric", "ring", "complete")
AUTO = "auto"


@dataclass
class GraphConfig:
    type: str | None = None
    n: int | None = None
    seed: int = 0
    radius: float | None = None
    reverse_drop: float = 0.0
    file: Path | None = None


@dataclass
class ProblemConfig:
    kind: str = LOGISTIC
    dim: int | None = None
    per_node: int | None = None
    csv: Path | None = None
    label_column: str = "-1"
    lam: float | None = None
    seed: int = 0


@dataclass
class AlgorithmConfig:
    name: str = alg.ABSAGA
    alpha: float | str = AUTO
    c: int | str = 1
    d: int | str = 1


@dataclass
class RunConfig:
    iterations: int | None = None
    epochs: float | None = None
    record_every: int | None = None
    seed: int = 0


@dataclass
class OutputConfig:
    trace: Path | None = None
    certificate: Path | None = None


@dataclass
class ExperimentConfig:
    graph: GraphConfig = field(default_factory=GraphConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    self_loops: bool = True
    source: Path | None = None


def _int(key, raw, minimum=None):
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if minimum is not None and v < minimum:
        raise ConfigError(key, f"must be >= {minimum}, got {v}")
    return v


def _float(key, raw):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if not math.isfinite(v):
        raise ConfigError(key, f"must be finite, got {raw!r}")
    return v


def _positive(key, raw):
    v = _float(key, raw)
    if v <= 0:
        raise ConfigError(key, f"must be positive, got {v}")
    return v


def _choice(key, raw, options):
    if raw not in options:
        raise ConfigError(key, f"must be one of {', '.join(options)}, got {raw!r}")
    return raw


def _int_or_auto(key, raw):
    return AUTO if raw == AUTO else _int(key, raw, minimum=1)


def _bool(key, raw):
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(key, f"expected true/false, got {raw!r}")


# key -> (section attribute, field, converter)
_KEYS = {
    "graph.type": ("graph", "type", lambda k, v: _choice(k, v, GRAPH_TYPES)),
    "graph.n": ("graph", "n", lambda k, v: _int(k, v, 1)),
    "graph.seed": ("graph", "seed", _int),
    "graph.radius": ("graph", "radius", _positive),
    "graph.reverse_drop": ("graph", "reverse_drop", _float),
    "graph.file": ("graph", "file", lambda k, v: Path(v)),
    "weights.self_loops": (None, "self_loops", _bool),
    "problem.kind": ("problem", "kind", lambda k, v: _choice(k, v, (LOGISTIC, QUADRATIC))),
    "problem.dim": ("problem", "dim", lambda k, v: _int(k, v, 1)),
    "problem.per_node": ("problem", "per_node", lambda k, v: _int(k, v, 1)),
    "problem.csv": ("problem", "csv", lambda k, v: Path(v)),
    "problem.label_column": ("problem", "label_column", lambda k, v: v),
    "problem.lambda": ("problem", "lam", _positive),
    "problem.seed": ("problem", "seed", _int),
    "algorithm.name": ("algorithm", "name", lambda k, v: _choice(k, v, alg.METHODS)),
    "algorithm.alpha": ("algorithm", "alpha", lambda k, v: AUTO if v == AUTO else _positive(k, v)),
    "algorithm.c": ("algorithm", "c", _int_or_auto),
    "algorithm.d": ("algorithm", "d", _int_or_auto),
    "run.iterations": ("run", "iterations", lambda k, v: _int(k, v, 1)),
    "run.epochs": ("run", "epochs", _positive),
    "run.record_every": ("run", "record_every", lambda k, v: _int(k, v, 1)),
    "run.seed": ("run", "seed", _int),
    "output.trace": ("output", "trace", lambda k, v: Path(v)),
    "output.certificate": ("output", "certificate", lambda k, v: Path(v)),
}


def parse_config_text(text, base=None, require=("graph", "problem", "algorithm", "run")):
    """Parse config text; ``require`` lists the sections that must be usable."""
    cfg = ExperimentConfig()
    seen_schema = False
    seen = set()
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}", f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not seen_schema:
            if key != "schema":
                raise ConfigError("schema", "first line must be 'schema = 1'")
            if value != str(SCHEMA_VERSION):
                raise ConfigError("schema", f"unsupported schema version {value!r}")
            seen_schema = True
            continue
        if key not in _KEYS:
            raise ConfigError(key, "unknown key")
        if key in seen:
            raise ConfigError(key, "given more than once")
        seen.add(key)
        section, attr, conv = _KEYS[key]
        target = cfg if section is None else getattr(cfg, section)
        setattr(target, attr, conv(key, value))
    if not seen_schema:
        raise ConfigError("schema", "missing 'schema = 1' line")
    if base is not None:
        for sec, attr in (("graph", "file"), ("problem", "csv"), ("output", "trace"), ("output", "certificate")):
            p = getattr(getattr(cfg, sec), attr)
            if p is not None and not p.is_absolute():
                setattr(getattr(cfg, sec), attr, Path(base) / p)
    _validate(cfg, require)
    return cfg


def parse_config(path, require=("graph", "problem", "algorithm", "run")):
    path = Path(path)
    cfg = parse_config_text(path.read_text(), base=path.parent, require=require)
    cfg.source = path
    return cfg


def _validate(cfg, require):
    if not cfg.self_loops:
        raise ConfigError("weights.self_loops", "must be true; weights need primitive matrices")
    g = cfg.graph
    if "graph" in require:
        if (g.file is None) == (g.type is None):
            raise ConfigError("graph.type", "give exactly one of graph.type or graph.file")
        if g.type is not None and g.n is None:
            raise ConfigError("graph.n", "required with graph.type")
        if g.type == "geometric" and g.radius is None:
            raise ConfigError("graph.radius", "required for geometric graphs")
        if g.radius is not None and g.radius > math.sqrt(2):
            raise ConfigError("graph.radius", "must be at most sqrt(2)")
        if g.type == "exponential" and g.n is not None and g.n < 2:
            raise ConfigError("graph.n", "exponential graphs need n >= 2")
    if not 0 <= g.reverse_drop < 1:
        raise ConfigError("graph.reverse_drop", "must lie in [0, 1)")
    p = cfg.problem
    if "problem" in require:
        if p.csv is not None:
            if p.kind != LOGISTIC:
                raise ConfigError("problem.kind", "csv data is only supported for logistic problems")
        else:
            if p.dim is None:
                raise ConfigError("problem.dim", "required for synthetic problems")
            if p.per_node is None:
                raise ConfigError("problem.per_node", "required for synthetic problems")
    if "run" in require:
        r = cfg.run
        if (r.iterations is None) == (r.epochs is None):
            raise ConfigError("run.iterations", "give exactly one of run.iterations or run.epochs")
    if cfg.algorithm.name == alg.SAGA and (cfg.algorithm.c == AUTO or cfg.algorithm.d == AUTO):
        raise ConfigError("algorithm.c", "centralised SAGA does not communicate")


# -- pipeline stages ---------------------------------------------------------


def build_graph(gc):
    if gc.file is not None:
        return digraph.read_edge_list(gc.file)
    if gc.type == "exponential":
        return digraph.exponential_graph(gc.n)
    if gc.type == "geometric":
        return digraph.geometric_digraph(gc.n, gc.radius, gc.reverse_drop, gc.seed)
    if gc.type == "ring":
        return digraph.ring_graph(gc.n)
    return digraph.complete_graph(gc.n)


def synthetic_quadratic(n, per_node, dim, seed=None):
    """Gaussian targets with a per-node offset so local minimisers disagree."""
    rng = np.random.default_rng(seed)
    shift = rng.standard_normal((n, 1, dim))
    return FiniteSumProblem.quadratic(list(rng.standard_normal((n, per_node, dim)) + shift))


def build_problem(pc, n):
    if pc.csv is not None:
        return load_csv(pc.csv, n, pc.label_column, pc.lam)
    if pc.kind == QUADRATIC:
        return synthetic_quadratic(n, pc.per_node, pc.dim, pc.seed)
    return synthetic_logistic(n, pc.per_node, pc.dim, pc.seed, pc.lam)


def theory_inputs(weights, prob, alpha=0.0, c=1, d=1):
    return theory.ConvergenceInputs.from_system(weights, prob.constants(), prob.m, prob.M, alpha, c, d)


def _single_node_weights():
    return WeightSystem.from_graph(digraph.complete_graph(1))


def resolve_run_parameters(ac, weights, prob):
    """Resolve 'auto' rounds (c_bar, d_bar) and 'auto' step size (alpha_bar)."""
    if ac.name == alg.SAGA:
        inp = theory_inputs(_single_node_weights(), prob.pooled())
        alpha = theory.max_stepsize(inp).alpha_bar if ac.alpha == AUTO else ac.alpha
        return alpha, 1, 1
    inp = theory_inputs(weights, prob)
    rounds = theory.min_comm_rounds(inp)
    c = rounds.c if ac.c == AUTO else ac.c
    d = rounds.d if ac.d == AUTO else ac.d
    alpha = theory.max_stepsize(inp).alpha_bar if ac.alpha == AUTO else ac.alpha
    return alpha, c, d


def _iterations_per_epoch(method, prob):
    if method == alg.AB:
        return 1
    if method == alg.SAGA:
        return prob.total
    return max(1, round(prob.total / prob.n))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


class TraceWriter:
    """CSV trace with a fixed header; every row is flushed as soon as it is written."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(alg.TRACE_COLUMNS)
        self._fh.flush()

    def __call__(self, m):
        self._w.writerow([_fmt(v) for v in m.row()])
        self._fh.flush()

    def close(self):
        self._fh.close()


def read_trace(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: float(v) for k, v in r.items()} for r in rows]


@dataclass
class RunSummary:
    method: str
    alpha: float
    c: int
    d: int
    iterations: int
    final_gap: float
    epochs: float
    grads_computed: int
    comm_rounds: int
    wall_time: float
    certificate: str | None = None
    trace_path: Path | None = None
    trace: list = field(default_factory=list, repr=False)

    def as_dict(self):
        return {
            "method": self.method,
            "alpha": self.alpha,
            "c": self.c,
            "d": self.d,
            "iterations": self.iterations,
            "final_gap": self.final_gap,
            "epochs": self.epochs,
            "grads_computed": self.grads_computed,
            "comm_rounds": self.comm_rounds,
            "wall_time": self.wall_time,
            "certificate": self.certificate or "not-requested",
            "trace": str(self.trace_path) if self.trace_path else "",
        }


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except (ABSagaError, ValueError, OSError) as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def format_lines(d):
    """``key=value`` lines; numbers at full precision."""
    out = []
    for k, v in d.items():
        if isinstance(v, (bool, str)) or v is None:
            out.append(f"{k}={v}")
        else:
            out.append(f"{k}={_fmt(v)}")
    return "\n".join(out)


def write_certificate(path, weights, prob, alpha, c, d):
    inp = theory_inputs(weights, prob, alpha, c, d)
    try:
        cert = theory.delta_certificate(inp)
        body = cert.as_dict()
        verdict = "pass" if cert.certified else "fail"
    except CertificateNotApplicable as exc:
        body = {"reason": str(exc)}
        verdict = "not-applicable"
    body["certificate"] = verdict
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(format_lines(body) + "\n")
    return verdict


def run_experiment(cfg):
    """graph -> weights -> problem -> algorithm -> trace (+ certificate)."""
    _validate(cfg, ("graph", "problem", "algorithm", "run"))
    g = _stage("graph", build_graph, cfg.graph)
    weights = _stage("weights", WeightSystem.from_graph, g)
    prob = _stage("problem", build_problem, cfg.problem, g.n)
    ac = cfg.algorithm
    alpha, c, d = _stage("theory", resolve_run_parameters, ac, weights, prob)
    per_epoch = _iterations_per_epoch(ac.name, prob)
    iterations = cfg.run.iterations or max(1, round(cfg.run.epochs * per_epoch))
    record_every = cfg.run.record_every or per_epoch

    def start():
        if ac.name == alg.SAGA:
            return alg.saga_init(prob, None, alpha, cfg.run.seed)
        return alg.init_state(prob, weights, None, alpha, c, d, cfg.run.seed, ac.name)

    state = _stage("algorithm", start)
    writer = _stage("output", TraceWriter, cfg.output.trace) if cfg.output.trace else None
    t0 = time.perf_counter()
    try:
        trace = _stage("run", alg.run, state, prob, iterations, record_every, None, writer)
    finally:
        if writer is not None:
            writer.close()
    wall = time.perf_counter() - t0
    verdict = None
    if cfg.output.certificate is not None:
        verdict = _stage("certificate", write_certificate, cfg.output.certificate, weights, prob, alpha, c, d)
    last = trace[-1]
    return RunSummary(
        method=ac.name,
        alpha=alpha,
        c=c,
        d=d,
        iterations=last.iteration,
        final_gap=last.optimality_gap,
        epochs=last.epoch,
        grads_computed=last.grads_computed,
        comm_rounds=last.comm_rounds,
        wall_time=wall,
        certificate=verdict,
        trace_path=cfg.output.trace,
        trace=trace,
    )


def compare(configs, out_dir):
    """Run several methods on one graph/problem and merge their gaps on a shared epoch grid.

    Writes ``<method>.csv`` per run and ``merged.csv`` with one gap column per
    method, keeping only epochs present in every trace.
    """
    configs = [parse_config(c) if not isinstance(c, ExperimentConfig) else c for c in configs]
    if not configs:
        raise ValueError("compare needs at least one config")
    ref = configs[0]
    for cfg in configs[1:]:
        if (cfg.graph.seed, cfg.problem.seed) != (ref.graph.seed, ref.problem.seed):
            raise ValueError("configs must share graph and problem seeds")
        if (cfg.graph, cfg.problem) != (ref.graph, ref.problem):
            raise ValueError("configs must describe the same graph and problem")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names, summaries = [], []
    for cfg in configs:
        name = cfg.algorithm.name
        k = 2
        while name in names:
            name = f"{cfg.algorithm.name}_{k}"
            k += 1
        names.append(name)
        run_cfg = replace(cfg, output=OutputConfig(trace=out_dir / f"{name}.csv", certificate=cfg.output.certificate))
        summaries.append(run_experiment(run_cfg))
    series = [{round(m.epoch, 9): m.optimality_gap for m in s.trace} for s in summaries]
    grid = sorted(set.intersection(*(set(s) for s in series)))
    merged = out_dir / "merged.csv"
    with merged.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch"] + names)
        for e in grid:
            w.writerow([_fmt(e)] + [_fmt(s[e]) for s in series])
    return dict(zip(names, summaries)), merged
