import csv

import pytest

from absaga import theory
from absaga.cli import main
from absaga.digraph import exponential_graph, write_edge_list
from absaga.errors import ConfigError
from absaga.experiment import (
    build_graph,
    build_problem,
    compare,
    parse_config,
    parse_config_text,
    read_trace,
    run_experiment,
    theory_inputs,
)
from absaga.weights import WeightSystem

BASE = """schema = 1
graph.type = exponential
graph.n = 4
problem.kind = logistic
problem.dim = 3
problem.per_node = 6
problem.seed = 2
algorithm.name = {method}
algorithm.alpha = {alpha}
run.epochs = {epochs}
run.seed = 5
output.trace = {trace}
"""


def _cfg(tmp_path, name="cfg.txt", method="absaga", alpha="0.5", epochs="20", trace="trace.csv", extra=""):
    path = tmp_path / name
    path.write_text(BASE.format(method=method, alpha=alpha, epochs=epochs, trace=trace) + extra)
    return path


def test_minimal_config_defaults():
    cfg = parse_config_text(
        "schema = 1\ngraph.type = exponential\ngraph.n = 16\nproblem.dim = 10\n"
        "problem.per_node = 100\nalgorithm.name = absaga\nalgorithm.alpha = auto\nrun.epochs = 400\n"
    )
    assert cfg.algorithm.alpha == "auto" and (cfg.algorithm.c, cfg.algorithm.d) == (1, 1)
    assert cfg.self_loops and cfg.run.record_every is None and cfg.problem.kind == "logistic"


@pytest.mark.parametrize(
    "text,key",
    [
        ("algorithm.alpha = -1\n", "algorithm.alpha"),
        ("run.iterations = 10\n", "run.iterations"),
        ("algorithm.step = 1\n", "algorithm.step"),
        ("graph.file = g.txt\n", "graph.type"),
        ("weights.self_loops = false\n", "weights.self_loops"),
        ("graph.n = many\n", "graph.n"),
    ],
)
def test_config_errors_name_key(text, key):
    body = "schema = 1\ngraph.type = ring\nproblem.dim = 2\nproblem.per_node = 2\nrun.epochs = 1\n"
    if not text.startswith("graph.n"):
        body += "graph.n = 3\n"
    with pytest.raises(ConfigError) as info:
        parse_config_text(body + text)
    assert info.value.key == key


def test_config_schema_and_duplicates():
    with pytest.raises(ConfigError):
        parse_config_text("graph.n = 3\n")
    with pytest.raises(ConfigError):
        parse_config_text("schema = 2\n")
    with pytest.raises(ConfigError) as info:
        parse_config_text("schema = 1\ngraph.n = 3\ngraph.n = 4\n", require=())
    assert info.value.key == "graph.n"


def test_relative_paths_resolve(tmp_path):
    cfg = parse_config(_cfg(tmp_path))
    assert cfg.output.trace == tmp_path / "trace.csv"


def test_trace_format(tmp_path):
    summary = run_experiment(parse_config(_cfg(tmp_path)))
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "iteration,epoch,optimality_gap,consensus_error,tracking_error,aux_gap,grads_computed,comm_rounds"
    rows = read_trace(tmp_path / "trace.csv")
    last = rows[-1]
    assert last["iteration"] == summary.iterations and last["grads_computed"] == summary.grads_computed
    assert last["comm_rounds"] == summary.comm_rounds and last["epoch"] == pytest.approx(summary.epochs)
    assert last["optimality_gap"] == summary.final_gap
    assert summary.epochs == pytest.approx(20.0)
    # one record per epoch plus the start
    assert len(rows) == 21


def test_determinism_byte_identical(tmp_path):
    a = _cfg(tmp_path, "a.txt", trace="a.csv")
    b = _cfg(tmp_path, "b.txt", trace="b.csv")
    run_experiment(parse_config(a))
    run_experiment(parse_config(b))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_single_node_saga_matches_absaga(tmp_path):
    text = """schema = 1
graph.type = complete
graph.n = 1
problem.kind = quadratic
problem.dim = 3
problem.per_node = 9
problem.seed = 4
algorithm.name = {m}
algorithm.alpha = 0.3
run.iterations = 500
run.record_every = 7
run.seed = 8
output.trace = {m}.csv
"""
    for m in ("saga", "absaga"):
        (tmp_path / f"{m}.txt").write_text(text.format(m=m))
        run_experiment(parse_config(tmp_path / f"{m}.txt"))
    assert (tmp_path / "saga.csv").read_bytes() == (tmp_path / "absaga.csv").read_bytes()


def test_epoch_accounting(tmp_path):
    for method, per_node in (("absaga", 6 * 5), ("sab", 6 * 5), ("ab", 6 * 5)):
        s = run_experiment(parse_config(_cfg(tmp_path, method=method, epochs="5", trace=f"{method}.csv")))
        assert s.epochs == pytest.approx(5.0)
        assert s.grads_computed == 4 * per_node


def test_auto_alpha_matches_theory(tmp_path):
    cfg = parse_config(_cfg(tmp_path, alpha="auto", epochs="1", extra="algorithm.c = auto\nalgorithm.d = auto\n"))
    s = run_experiment(cfg)
    w = WeightSystem.from_graph(build_graph(cfg.graph))
    prob = build_problem(cfg.problem, 4)
    inp = theory_inputs(w, prob)
    assert s.alpha == theory.max_stepsize(inp).alpha_bar
    r = theory.min_comm_rounds(inp)
    assert (s.c, s.d) == (r.c, r.d)


def test_compare_merges_three_methods(tmp_path):
    paths = [_cfg(tmp_path, f"{m}.txt", method=m, epochs="10") for m in ("absaga", "sab", "ab")]
    summaries, merged = compare(paths, tmp_path / "out")
    with merged.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "absaga", "sab", "ab"]
    assert [float(r[0]) for r in rows[1:]] == [float(e) for e in range(11)]
    summaries2, merged2 = compare(paths[2:], tmp_path / "again")
    a = [r[3] for r in rows[1:]]
    with merged2.open() as fh:
        b = [r[1] for r in list(csv.reader(fh))[1:]]
    assert a == b


def test_compare_orders_absaga_below_ab(tmp_path):
    extra = "run.record_every = 100\n"
    text = BASE.replace("problem.per_node = 6", "problem.per_node = 100")
    paths = []
    for m in ("absaga", "ab"):
        p = tmp_path / f"{m}.txt"
        p.write_text(text.format(method=m, alpha="0.5", epochs="30", trace="x.csv") + extra)
        paths.append(p)
    summaries, _ = compare(paths, tmp_path / "o")
    assert summaries["absaga"].final_gap < summaries["ab"].final_gap


def test_compare_rejects_different_seeds(tmp_path):
    a = _cfg(tmp_path, "a.txt")
    b = tmp_path / "b.txt"
    b.write_text(a.read_text().replace("problem.seed = 2", "problem.seed = 3"))
    with pytest.raises(ValueError):
        compare([a, b], tmp_path / "out")


def test_cli_run_and_exit_codes(tmp_path, capsys):
    assert main(["run", "--config", str(_cfg(tmp_path))]) == 0
    out = capsys.readouterr().out
    assert "final_gap=" in out and "method=absaga" in out
    bad = _cfg(tmp_path, "bad.txt", alpha="-1")
    assert main(["run", "--config", str(bad)]) == 2
    assert "algorithm.alpha" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.txt")]) == 4
    boom = _cfg(tmp_path, "boom.txt", alpha="1e6", epochs="200")
    assert main(["run", "--config", str(boom)]) == 3


def test_cli_graph_commands(tmp_path, capsys):
    out = tmp_path / "g.txt"
    assert main(["graph", "gen", "--type", "geometric", "--n", "30", "--radius", "0.4", "--reverse-drop", "0.2",
                 "--seed", "7", "--out", str(out)]) == 0
    assert main(["graph", "check", str(out)]) == 0
    assert "strongly_connected=True" in capsys.readouterr().out
    broken = tmp_path / "broken.txt"
    broken.write_text("3\n0 0\n1 1\n2 2\n0 1\n")
    assert main(["graph", "check", str(broken)]) == 2
    junk = tmp_path / "junk.txt"
    junk.write_text("3\n0 z\n")
    assert main(["graph", "check", str(junk)]) == 4


def test_cli_theory_commands(tmp_path, capsys):
    g = tmp_path / "exp.txt"
    write_edge_list(exponential_graph(16), g)
    assert main(["theory", "weights", str(g), "--csv"]) == 0
    out = capsys.readouterr().out
    assert "psi=1" in out and "sigma_A=" in out and out.strip().splitlines()[-2].startswith("n,h_r")
    pc = tmp_path / "p.txt"
    pc.write_text("schema = 1\nproblem.dim = 5\nproblem.per_node = 20\nproblem.seed = 1\nproblem.lambda = 0.05\n")
    assert main(["theory", "certify", "--graph", str(g), "--problem-config", str(pc)]) == 0
    out = capsys.readouterr().out
    assert "certificate=pass" in out and "G_delta_le_gamma_delta=pass" in out
    assert main(["theory", "certify", "--graph", str(g), "--problem-config", str(pc), "--c", "1", "--d", "1"]) == 0
    assert "certificate=not-applicable" in capsys.readouterr().out


def test_cli_problem_info(tmp_path, capsys):
    assert main(["problem", "info", "--config", str(_cfg(tmp_path))]) == 0
    out = capsys.readouterr().out
    assert "n=4" in out and "p=3" in out and "m_i=6 6 6 6" in out and "kappa=" in out


def test_cli_certificate_output(tmp_path, capsys):
    cfg = _cfg(tmp_path, epochs="1", extra="output.certificate = cert.txt\n")
    assert main(["run", "--config", str(cfg)]) == 0
    text = (tmp_path / "cert.txt").read_text()
    assert text.strip().splitlines()[-1].startswith("certificate=")
