"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure or
divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

from . import digraph, theory
from .errors import ABSagaError, CertificateNotApplicable
from .experiment import (
    GraphConfig,
    build_graph,
    build_problem,
    compare,
    format_lines,
    parse_config,
    run_experiment,
    theory_inputs,
)
from .weights import WeightSystem

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _csv_row(d):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(d.keys())
    w.writerow(d.values())
    return buf.getvalue().rstrip("\n")


def _emit(d, as_csv):
    print(format_lines(d))
    if as_csv:
        print(_csv_row(d))


def cmd_graph_gen(args):
    gc = GraphConfig(type=args.type, n=args.n, seed=args.seed, radius=args.radius, reverse_drop=args.reverse_drop)
    if gc.type == "geometric" and gc.radius is None:
        raise ValueError("--radius is required for geometric graphs")
    g = build_graph(gc)
    digraph.write_edge_list(g, args.out)
    print(f"n={g.n}\nedges={g.num_edges}\nstrongly_connected={digraph.is_strongly_connected(g)}")
    return EXIT_OK


def cmd_graph_check(args):
    g = digraph.read_edge_list(args.file)
    in_deg, out_deg = digraph.degrees(g)
    ok = digraph.is_strongly_connected(g)
    print(
        format_lines(
            {
                "n": g.n,
                "edges": g.num_edges,
                "self_loops": g.self_loops,
                "strongly_connected": ok,
                "in_degree": " ".join(map(str, in_deg)),
                "out_degree": " ".join(map(str, out_deg)),
            }
        )
    )
    return EXIT_OK if ok and g.self_loops else EXIT_CONFIG


def cmd_problem_info(args):
    cfg = parse_config(args.config, require=("graph", "problem"))
    n = cfg.graph.n if cfg.graph.file is None else digraph.read_edge_list(cfg.graph.file).n
    prob = build_problem(cfg.problem, n)
    print(format_lines(prob.describe()))
    return EXIT_OK


def cmd_theory_weights(args):
    w = WeightSystem.from_graph(digraph.read_edge_list(args.file))
    _emit(w.summary(), args.csv)
    return EXIT_OK


def cmd_theory_certify(args):
    g = digraph.read_edge_list(args.graph)
    cfg = parse_config(args.problem_config, require=("problem",))
    weights = WeightSystem.from_graph(g)
    prob = build_problem(cfg.problem, g.n)
    base = theory_inputs(weights, prob)
    rounds = theory.min_comm_rounds(base)
    step = theory.max_stepsize(base)
    inp = base.replace(
        alpha=step.alpha_bar if args.alpha is None else args.alpha,
        c=rounds.c if args.c is None else args.c,
        d=rounds.d if args.d is None else args.d,
    )
    try:
        cert = theory.delta_certificate(inp)
    except CertificateNotApplicable as exc:
        out = {f"g{i + 1}": v for i, v in enumerate(theory.g_constants(inp))}
        G = theory.build_G(inp)
        out.update({f"G{i + 1}{j + 1}": float(G[i, j]) for i in range(4) for j in range(4)})
        out.update(
            rho=theory.spectral_radius(G).rho,
            gamma=1.0 - inp.alpha * theory.g_constants(inp)[4] / 2,
            alpha=inp.alpha,
            alpha_bar=step.alpha_bar,
            c=inp.c,
            d=inp.d,
            c_bar=rounds.c_bar,
            d_bar=rounds.d_bar,
            psi=inp.psi,
            gamma_order=theory.gradient_complexity(inp).order,
            reason=str(exc),
            certificate="not-applicable",
        )
        _emit(out, args.csv)
        return EXIT_OK
    out = cert.as_dict()
    out["certificate"] = "pass" if cert.certified else "fail"
    _emit(out, args.csv)
    return EXIT_OK


def cmd_run(args):
    summary = run_experiment(parse_config(args.config))
    print(format_lines(summary.as_dict()))
    return EXIT_OK


def cmd_compare(args):
    paths = [p for p in args.configs.split(",") if p]
    summaries, merged = compare(paths, args.out)
    for name, s in summaries.items():
        print(f"{name}.final_gap={s.final_gap:.17g}")
    print(f"merged={merged}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="absaga", description="AB-SAGA simulator and convergence certificate")
    sub = p.add_subparsers(dest="command", required=True)

    graph = sub.add_parser("graph", help="generate or check communication graphs")
    gsub = graph.add_subparsers(dest="action", required=True)
    gen = gsub.add_parser("gen")
    gen.add_argument("--type", required=True, choices=("exponential", "geometric", "ring", "complete"))
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--radius", type=float)
    gen.add_argument("--reverse-drop", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_graph_gen)
    chk = gsub.add_parser("check")
    chk.add_argument("file")
    chk.set_defaults(func=cmd_graph_check)

    prob = sub.add_parser("problem", help="inspect a problem configuration")
    psub = prob.add_subparsers(dest="action", required=True)
    info = psub.add_parser("info")
    info.add_argument("--config", required=True)
    info.set_defaults(func=cmd_problem_info)

    th = sub.add_parser("theory", help="spectral quantities and convergence certificate")
    tsub = th.add_subparsers(dest="action", required=True)
    tw = tsub.add_parser("weights")
    tw.add_argument("file")
    tw.add_argument("--csv", action="store_true", help="also print a CSV header and row")
    tw.set_defaults(func=cmd_theory_weights)
    tc = tsub.add_parser("certify")
    tc.add_argument("--graph", required=True)
    tc.add_argument("--problem-config", required=True)
    tc.add_argument("--alpha", type=float)
    tc.add_argument("--c", type=int)
    tc.add_argument("--d", type=int)
    tc.add_argument("--csv", action="store_true")
    tc.set_defaults(func=cmd_theory_certify)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True)
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="run several methods and merge their traces")
    cmp_.add_argument("--configs", required=True, help="comma-separated config files")
    cmp_.add_argument("--out", required=True)
    cmp_.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ABSagaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ArithmeticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
