import json

import numpy as np
import pytest

from fusedlasso import FusedProblem, PenaltyGraph, loss_value, solve_exact
from fusedlasso.cli import (
    parse_and_dispatch,
    path_result_from_json,
    read_graph,
    read_matrix,
    read_response,
    write_graph,
    write_matrix,
    write_vector,
)


@pytest.fixture
def instance_files(tmp_path):
    rng = np.random.default_rng(0)
    n, p = 8, 4
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    graph = PenaltyGraph.chain(p, edge_weight=1.25)
    paths = {
        "design": str(tmp_path / "X.csv"),
        "response": str(tmp_path / "y.csv"),
        "graph": str(tmp_path / "g.edges"),
    }
    write_matrix(paths["design"], X)
    write_vector(paths["response"], y)
    write_graph(paths["graph"], graph)
    return paths, X, y, graph, tmp_path


class TestFileFormats:
    def test_matrix_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((5, 3)) * np.pi
        path = str(tmp_path / "m.csv")
        write_matrix(path, X)
        back = read_matrix(path)
        assert np.array_equal(back, X)

    def test_vector_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        y = rng.standard_normal(7) / 3.0
        path = str(tmp_path / "v.csv")
        write_vector(path, y)
        assert np.array_equal(read_response(path, "squared"), y)

    def test_cox_response_roundtrip(self, tmp_path):
        y = np.array([[1.5, 1.0], [2.25, 0.0]])
        path = str(tmp_path / "c.csv")
        write_vector(path, y)
        assert np.array_equal(read_response(path, "cox"), y)

    def test_graph_roundtrip(self, tmp_path):
        g = PenaltyGraph.from_triples(4, [(0, 2, 0.75), (1, 3, 2.5)])
        path = str(tmp_path / "g.edges")
        write_graph(path, g)
        back = read_graph(path, 4)
        assert np.array_equal(back.edges, g.edges)
        assert np.array_equal(back.edge_weights, g.edge_weights)

    def test_graph_parse_error_names_line(self, tmp_path):
        path = tmp_path / "bad.edges"
        path.write_text("1 2 0.5\n1 nonsense\n")
        from fusedlasso import DataError

        with pytest.raises(DataError, match="bad.edges:2"):
            read_graph(str(path), 3)

    def test_node_weight_file(self, tmp_path):
        gpath = tmp_path / "g.edges"
        gpath.write_text("1 2 1.0\n")
        wpath = tmp_path / "w.txt"
        wpath.write_text("1 3.0\n")
        g = read_graph(str(gpath), 2, str(wpath))
        assert g.node_weights.tolist() == [3.0, 1.0]


class TestSolveCommand:
    def test_solve_roundtrip(self, instance_files):
        paths, X, y, graph, tmp = instance_files
        out = str(tmp / "sol.json")
        status = parse_and_dispatch(
            [
                "solve",
                "--loss", "squared",
                "--solver", "exact",
                "--design", paths["design"],
                "--response", paths["response"],
                "--graph", paths["graph"],
                "--lambda1", "0.5",
                "--lambda2", "0.3",
                "--out", out,
            ]
        )
        assert status == 0
        doc = json.loads(open(out).read())
        assert doc["kind"] == "solution" and doc["schema_version"] == 1
        pr = FusedProblem(X=X, y=y, graph=graph, lambda1=0.5, lambda2=0.3)
        ref = solve_exact(pr)
        assert doc["objective"] == pytest.approx(ref.objective, rel=1e-9)
        assert doc["certificate_residual"] <= 1e-6
        beta = np.zeros(4)
        for k, v in doc["beta"].items():
            beta[int(k) - 1] = v
        assert loss_value(pr, beta) == pytest.approx(ref.objective, rel=1e-9)

    def test_missing_response_is_usage_error(self, instance_files, capsys):
        paths, *_ , tmp = instance_files
        status = parse_and_dispatch(
            ["solve", "--design", paths["design"], "--graph", paths["graph"],
             "--lambda1", "0.1", "--lambda2", "0.1", "--out", str(tmp / "s.json")]
        )
        assert status == 1
        assert "response" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, tmp_path):
        assert parse_and_dispatch(["solve", "--wibble", "1"]) == 1

    def test_malformed_file_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "X.csv"
        bad.write_text("1.0,banana\n")
        ypath = tmp_path / "y.csv"
        ypath.write_text("1.0\n")
        status = parse_and_dispatch(
            ["solve", "--design", str(bad), "--response", str(ypath), "--graph", str(bad),
             "--lambda1", "0", "--lambda2", "0", "--out", str(tmp_path / "o.json")]
        )
        assert status == 2
        assert "data error" in capsys.readouterr().err

    def test_dimension_mismatch_is_data_error(self, instance_files, tmp_path):
        paths, *_ = instance_files
        short = tmp_path / "short.csv"
        short.write_text("1.0\n2.0\n")
        status = parse_and_dispatch(
            ["solve", "--design", paths["design"], "--response", str(short), "--graph", paths["graph"],
             "--lambda1", "0", "--lambda2", "0", "--out", str(tmp_path / "o.json")]
        )
        assert status == 2

    def test_glm_solve(self, tmp_path):
        rng = np.random.default_rng(3)
        n, p = 12, 3
        X = rng.standard_normal((n, p))
        y = (rng.uniform(size=n) < 0.5).astype(float)
        write_matrix(str(tmp_path / "X.csv"), X)
        write_vector(str(tmp_path / "y.csv"), y)
        write_graph(str(tmp_path / "g.edges"), PenaltyGraph.chain(p))
        out = str(tmp_path / "sol.json")
        status = parse_and_dispatch(
            ["solve", "--loss", "logistic", "--design", str(tmp_path / "X.csv"),
             "--response", str(tmp_path / "y.csv"), "--graph", str(tmp_path / "g.edges"),
             "--lambda1", "0.05", "--lambda2", "0.05", "--out", out]
        )
        assert status == 0
        doc = json.loads(open(out).read())
        assert doc["certificate_residual"] <= 1e-3


class TestSimulateAndPath:
    def test_simulate_writes_all_files(self, tmp_path):
        prefix = str(tmp_path / "sim_")
        status = parse_and_dispatch(
            ["simulate", "--sim", "1d", "--n", "6", "--p", "20", "--seed", "3", "--out", prefix]
        )
        assert status == 0
        X = read_matrix(prefix + "X.csv")
        y = read_response(prefix + "y.csv", "squared")
        g = read_graph(prefix + "graph.edges", 20)
        meta = json.loads(open(prefix + "meta.json").read())
        assert X.shape == (6, 20) and y.shape == (6,) and g.m == 19
        assert meta["seed"] == 3

    def test_simulate_matches_generator(self, tmp_path):
        from fusedlasso import SimConfig, gen_1d

        prefix = str(tmp_path / "s_")
        parse_and_dispatch(["simulate", "--sim", "1d", "--n", "4", "--p", "15", "--seed", "9", "--out", prefix])
        inst = gen_1d(SimConfig(n=4, p=15, seed=9))
        assert np.array_equal(read_matrix(prefix + "X.csv"), inst.X)
        assert np.array_equal(read_response(prefix + "y.csv", "squared"), inst.y)

    def test_path_on_sim(self, tmp_path):
        out = str(tmp_path / "path.json")
        status = parse_and_dispatch(
            ["path", "--sim", "1d", "--n", "6", "--p", "10", "--seed", "1", "--solver", "huber", "--out", out]
        )
        assert status == 0
        doc = json.loads(open(out).read())
        assert doc["kind"] == "path"
        assert len(doc["lambda2_values"]) == 20 and len(doc["lambda1_values"]) == 50
        assert len(doc["cells"]) == 1000
        rebuilt = path_result_from_json(doc)
        assert rebuilt.grid.shape == (20, 50)

    def test_verify_solution_roundtrip(self, instance_files):
        paths, X, y, graph, tmp = instance_files
        sol_path = str(tmp / "sol.json")
        parse_and_dispatch(
            ["solve", "--design", paths["design"], "--response", paths["response"], "--graph", paths["graph"],
             "--lambda1", "0.4", "--lambda2", "0.2", "--out", sol_path]
        )
        out = str(tmp / "check.json")
        status = parse_and_dispatch(
            ["verify", "--solution", sol_path, "--design", paths["design"],
             "--response", paths["response"], "--graph", paths["graph"], "--out", out]
        )
        assert status == 0
        doc = json.loads(open(out).read())
        assert doc["optimal"] is True
        assert doc["max_residual"] <= 1e-6

    def test_verify_accuracy_compare(self, tmp_path):
        a = str(tmp_path / "a.json")
        b = str(tmp_path / "b.json")
        for solver, out in (("exact", a), ("naive", b)):
            parse_and_dispatch(
                ["path", "--sim", "1d", "--n", "5", "--p", "8", "--seed", "2", "--solver", solver, "--out", out]
            )
        out = str(tmp_path / "acc.json")
        status = parse_and_dispatch(["verify", "--reference", a, "--candidate", b, "--out", out])
        assert status == 0
        doc = json.loads(open(out).read())
        assert doc["kind"] == "accuracy"
        assert doc["worst"]["linf"] >= doc["worst"]["rmse"] >= doc["worst"]["l1_mean"] >= 0


class TestBench:
    def test_bench_two_solvers_has_accuracy(self, tmp_path, capsys):
        out = str(tmp_path / "bench.json")
        status = parse_and_dispatch(
            ["bench", "--sim", "1d", "--n", "5", "--p", "8", "--seed", "1",
             "--solvers", "exact,naive", "--out", out]
        )
        assert status == 0
        doc = json.loads(open(out).read())
        row = doc["rows"][0]
        assert set(row["timings_seconds"]) == {"exact", "naive"}
        assert set(row["accuracy_vs_exact"]) == {"naive"}
        assert set(row["accuracy_vs_exact"]["naive"]) == {"l1_mean", "rmse", "linf"}

    def test_single_solver_bench_has_no_accuracy(self, tmp_path):
        out = str(tmp_path / "bench.json")
        status = parse_and_dispatch(
            ["bench", "--sim", "1d", "--n", "5", "--p", "8", "--seed", "1", "--solvers", "naive", "--out", out]
        )
        assert status == 0
        row = json.loads(open(out).read())["rows"][0]
        assert "accuracy_vs_exact" not in row

    def test_repeated_bench_same_accuracy(self, tmp_path):
        outs = []
        for name in ("b1.json", "b2.json"):
            out = str(tmp_path / name)
            parse_and_dispatch(
                ["bench", "--sim", "1d", "--n", "5", "--p", "8", "--seed", "4",
                 "--solvers", "exact,huber", "--out", out]
            )
            outs.append(json.loads(open(out).read())["rows"][0])
        assert outs[0]["accuracy_vs_exact"] == outs[1]["accuracy_vs_exact"]

    def test_unknown_solver_usage_error(self, tmp_path):
        status = parse_and_dispatch(
            ["bench", "--sim", "1d", "--n", "5", "--p", "8", "--solvers", "exact,warp", "--out", str(tmp_path / "b.json")]
        )
        assert status == 1

    def test_threads_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FUSED_SOLVE_THREADS", "2")
        out = str(tmp_path / "p.json")
        status = parse_and_dispatch(
            ["path", "--sim", "1d", "--n", "5", "--p", "8", "--seed", "1", "--solver", "naive", "--out", out]
        )
        assert status == 0
