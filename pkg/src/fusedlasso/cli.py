"""Command-line interface, file formats and the benchmark harness.

Subcommands: ``solve`` one instance, ``path`` a full penalty grid,
``simulate`` a synthetic instance to files, ``verify`` a solution or compare
two paths, ``bench`` several solvers on one instance with timings and
accuracy. Exit codes: 0 success, 1 usage error, 2 data error. All structured
outputs are JSON documents carrying a ``schema_version`` field; the formats
are documented byte-by-byte in ``docs/formats.md``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .coordinate import CdConfig, naive_cd
from .fusion import certificate_from_flows, solve_exact
from .glm import fit_glm
from .huber import solve_huber
from .model import (
    COX,
    LOGISTIC,
    SQUARED,
    DataError,
    FusedLassoError,
    FusedProblem,
    PenaltyGraph,
    loss_value,
    smooth_fit_gradient,
)
from .path import PathCell, PathGrid, PathResult, lambda1_max, lambda2_max, run_path
from .simgen import SimConfig, gen_1d, gen_2d
from .verify import accuracy_report, check_optimality, glm_kkt_certificate

SCHEMA_VERSION = 1
_SOLVERS = ("exact", "naive", "huber")
_LOSSES = (SQUARED, LOGISTIC, COX)


class UsageError(Exception):
    """Bad flags or flag combinations; exits with status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1 here
        raise UsageError(message)


# ---------------------------------------------------------------------------
# file formats


def read_matrix(path: str) -> np.ndarray:
    """Headerless CSV of decimal floats, one observation per row."""
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except OSError:
        raise DataError(f"cannot read design file {path!r}")
    except ValueError as exc:
        raise DataError(f"malformed design file {path!r}: {exc}")
    return data


def read_response(path: str, loss: str) -> np.ndarray:
    """One value per line; for the cox loss two comma-separated columns (time, status)."""
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except OSError:
        raise DataError(f"cannot read response file {path!r}")
    except ValueError as exc:
        raise DataError(f"malformed response file {path!r}: {exc}")
    if loss == COX:
        if data.shape[1] != 2:
            raise DataError(f"cox response file {path!r} needs two columns (time, status)")
        return data
    if data.shape[1] != 1:
        raise DataError(f"response file {path!r} must have one column, found {data.shape[1]}")
    return data[:, 0]


def read_graph(path: str, p: int, node_weight_path: str | None = None) -> PenaltyGraph:
    """Edge list, one ``k l w`` triple per line, 1-based node indices.

    Node weights default to 1 and may be overridden by a ``k w`` file.
    """
    triples = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise DataError(f"{path}:{lineno}: expected 'k l w', got {line!r}")
                try:
                    k, l, w = int(parts[0]), int(parts[1]), float(parts[2])
                except ValueError:
                    raise DataError(f"{path}:{lineno}: cannot parse 'k l w' from {line!r}")
                if not (1 <= k <= p and 1 <= l <= p):
                    raise DataError(f"{path}:{lineno}: node index out of range 1..{p}")
                triples.append((k - 1, l - 1, w))
    except OSError:
        raise DataError(f"cannot read graph file {path!r}")
    node_weights = np.ones(p)
    if node_weight_path is not None:
        try:
            with open(node_weight_path) as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    parts = line.split()
                    if len(parts) != 2:
                        raise DataError(f"{node_weight_path}:{lineno}: expected 'k w', got {line!r}")
                    try:
                        k, w = int(parts[0]), float(parts[1])
                    except ValueError:
                        raise DataError(f"{node_weight_path}:{lineno}: cannot parse 'k w' from {line!r}")
                    if not 1 <= k <= p:
                        raise DataError(f"{node_weight_path}:{lineno}: node index out of range 1..{p}")
                    node_weights[k - 1] = w
        except OSError:
            raise DataError(f"cannot read node weight file {node_weight_path!r}")
    return PenaltyGraph.from_triples(p, triples, node_weights)


def write_matrix(path: str, X: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in np.atleast_2d(X):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_vector(path: str, y: np.ndarray) -> None:
    y = np.asarray(y)
    with open(path, "w") as fh:
        if y.ndim == 2:
            for row in y:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        else:
            for v in y:
                fh.write(repr(float(v)) + "\n")


def write_graph(path: str, graph: PenaltyGraph) -> None:
    with open(path, "w") as fh:
        for e in range(graph.m):
            k, l = graph.edges[e]
            fh.write(f"{int(k) + 1} {int(l) + 1} {repr(float(graph.edge_weights[e]))}\n")


def _sparse_beta(beta: np.ndarray) -> dict[str, float]:
    return {str(int(i) + 1): float(beta[i]) for i in np.flatnonzero(beta)}


def _dense_beta(sparse: dict, p: int) -> np.ndarray:
    beta = np.zeros(p)
    for key, value in sparse.items():
        idx = int(key)
        if not 1 <= idx <= p:
            raise DataError(f"beta index {idx} out of range 1..{p}")
        beta[idx - 1] = float(value)
    return beta


def write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def path_result_to_json(result: PathResult, n: int, p: int) -> dict:
    cells = []
    for (i2, i1), cell in sorted(result.cells.items()):
        cells.append(
            {
                "i2": i2,
                "i1": i1,
                "lambda2": float(result.grid.lambda2_values[i2]),
                "lambda1": float(result.grid.lambda1_values[i1]),
                "beta": _sparse_beta(cell.beta) if cell.beta is not None else None,
                "objective": cell.objective,
                "certificate_residual": cell.certificate_residual,
                "seconds": cell.seconds,
                "nonzeros": cell.nonzeros,
                "converged": cell.converged,
                "skipped": cell.skipped,
                "error": cell.error,
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "path",
        "solver": result.solver,
        "n": n,
        "p": p,
        "lambda1_values": [float(v) for v in result.grid.lambda1_values],
        "lambda2_values": [float(v) for v in result.grid.lambda2_values],
        "cells": cells,
    }


def path_result_from_json(payload: dict) -> PathResult:
    if payload.get("kind") != "path":
        raise DataError("not a path document")
    grid = PathGrid(
        lambda1_values=np.asarray(payload["lambda1_values"], dtype=float),
        lambda2_values=np.asarray(payload["lambda2_values"], dtype=float),
    )
    p = int(payload["p"])
    cells = {}
    for cell in payload["cells"]:
        beta = _dense_beta(cell["beta"], p) if cell["beta"] is not None else None
        cells[(int(cell["i2"]), int(cell["i1"]))] = PathCell(
            beta=beta,
            objective=cell["objective"],
            certificate_residual=cell["certificate_residual"],
            seconds=cell["seconds"],
            nonzeros=cell["nonzeros"],
            converged=cell["converged"],
            skipped=cell["skipped"],
            error=cell.get("error"),
        )
    return PathResult(grid=grid, cells=cells, solver=payload.get("solver", "unknown"))


# ---------------------------------------------------------------------------
# problem assembly


def _load_problem(args, lambda1: float, lambda2: float) -> FusedProblem:
    if args.design is None or args.response is None:
        raise UsageError("--design and --response are required (or use --sim)")
    X = read_matrix(args.design)
    y = read_response(args.response, args.loss)
    if args.graph is None:
        raise UsageError("--graph is required when loading files")
    graph = read_graph(args.graph, X.shape[1], getattr(args, "node_weights", None))
    return FusedProblem(X=X, y=y, graph=graph, lambda1=lambda1, lambda2=lambda2, loss=args.loss)


def _sim_instance(args):
    config = SimConfig(n=args.n, p=args.p, sigma=args.sigma, seed=args.seed)
    if args.sim == "1d":
        return gen_1d(config)
    return gen_2d(config)


def _sim_problem(args, lambda1: float = 0.0, lambda2: float = 0.0) -> FusedProblem:
    inst = _sim_instance(args)
    return FusedProblem(X=inst.X, y=inst.y, graph=inst.graph, lambda1=lambda1, lambda2=lambda2, loss=SQUARED)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("FUSED_SOLVE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"FUSED_SOLVE_THREADS is not an integer: {env!r}")
    return 1


# ---------------------------------------------------------------------------
# commands


def _cmd_solve(args) -> int:
    problem = _load_problem(args, args.lambda1, args.lambda2)
    cd = CdConfig(tol=args.tol)
    if problem.loss == SQUARED:
        if args.solver == "exact":
            sol = solve_exact(problem, config=cd)
            residual = sol.certificate.max_residual if sol.certificate else None
        elif args.solver == "naive":
            sol = naive_cd(problem, config=cd)
            residual = certificate_from_flows(problem, sol.beta).max_residual
        else:
            sol = solve_huber(problem, cd_config=cd)
            residual = sol.certificate.max_residual if sol.certificate else None
    else:
        sol = fit_glm(problem, solver=args.solver, cd_config=cd)
        grad = smooth_fit_gradient(problem, sol.beta)
        residual = certificate_from_flows(problem, sol.beta, smooth_grad=grad).max_residual
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "solution",
        "solver": args.solver,
        "loss": args.loss,
        "lambda1": args.lambda1,
        "lambda2": args.lambda2,
        "n": problem.n,
        "p": problem.p,
        "beta": _sparse_beta(sol.beta),
        "objective": sol.objective,
        "certificate_residual": residual,
        "converged": sol.converged,
        "iterations": sol.iterations,
    }
    write_json(args.out, payload)
    print(f"objective {sol.objective:.10g}  nonzeros {sol.nonzeros}  residual {residual}  -> {args.out}")
    return 0


def _path_problem(args) -> tuple[FusedProblem, int, int]:
    if args.sim is not None:
        problem = _sim_problem(args)
    else:
        if args.loss != SQUARED:
            raise UsageError("path and bench support the squared loss only")
        problem = _load_problem(args, 0.0, 0.0)
    return problem, problem.n, problem.p


def _cmd_path(args) -> int:
    problem, n, p = _path_problem(args)
    grid = PathGrid.build(lambda1_max(problem), lambda2_max(problem))
    result = run_path(
        problem,
        solver=args.solver,
        grid=grid,
        certificates=args.certificates,
        threads=_threads(args),
    )
    write_json(args.out, path_result_to_json(result, n, p))
    print(
        f"path {grid.shape[0]}x{grid.shape[1]} cells, solved {result.n_solved()}, "
        f"{result.total_seconds():.2f}s -> {args.out}"
    )
    return 0


def _cmd_simulate(args) -> int:
    inst = _sim_instance(args)
    prefix = args.out
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_matrix(prefix + "X.csv", inst.X)
    write_vector(prefix + "y.csv", inst.y)
    write_graph(prefix + "graph.edges", inst.graph)
    write_vector(prefix + "beta_true.csv", inst.beta_true)
    write_json(prefix + "meta.json", {"schema_version": SCHEMA_VERSION, "kind": "sim-meta", **inst.metadata})
    print(f"wrote {prefix}{{X.csv,y.csv,graph.edges,beta_true.csv,meta.json}}")
    return 0


def _cmd_verify(args) -> int:
    if args.reference is not None or args.candidate is not None:
        if args.reference is None or args.candidate is None:
            raise UsageError("path comparison needs both --reference and --candidate")
        with open(args.reference) as fh:
            reference = path_result_from_json(json.load(fh))
        with open(args.candidate) as fh:
            candidate = path_result_from_json(json.load(fh))
        report = accuracy_report(reference, candidate)
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": "accuracy",
            "n_cells": report.n_cells,
            "worst": {"l1_mean": report.l1_mean, "rmse": report.rmse, "linf": report.linf},
        }
        write_json(args.out, payload)
        print(f"worst-over-grid: l1/p {report.l1_mean:.6g}  rmse {report.rmse:.6g}  linf {report.linf:.6g}")
        return 0
    if args.solution is None:
        raise UsageError("verify needs --solution (or --reference/--candidate)")
    with open(args.solution) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "solution":
        raise DataError(f"{args.solution!r} is not a solution document")
    lambda1 = float(doc["lambda1"])
    lambda2 = float(doc["lambda2"])
    args.loss = doc.get("loss", SQUARED)
    problem = _load_problem(args, lambda1, lambda2)
    beta = _dense_beta(doc["beta"], problem.p)
    objective = loss_value(problem, beta)
    if problem.loss == SQUARED:
        result = check_optimality(problem, beta, tol=args.tol)
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": "verification",
            "objective": objective,
            "optimal": result.optimal,
            "max_residual": result.certificate.max_residual if result.certificate else None,
            "violations": [
                {"kind": v.kind, "set_index": v.set_index, "nodes": list(v.nodes), "detail": v.detail}
                for v in result.violations
            ],
        }
        verdict = "optimal" if result.optimal else f"refuted ({len(result.violations)} violations)"
    else:
        cert = glm_kkt_certificate(problem, beta)
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": "verification",
            "objective": objective,
            "optimal": None,
            "max_residual": cert.max_residual,
            "violations": [],
        }
        verdict = f"KKT residual {cert.max_residual:.3g}"
    write_json(args.out, payload)
    print(f"objective {objective:.10g}  {verdict} -> {args.out}")
    return 0


def _cmd_bench(args) -> int:
    if args.sim is None:
        raise UsageError("bench requires --sim (1d or 2d)")
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    for s in solvers:
        if s not in _SOLVERS:
            raise UsageError(f"unknown solver {s!r} in --solvers")
    if not solvers:
        raise UsageError("--solvers must name at least one solver")
    problem, n, p = _path_problem(args)
    grid = PathGrid.build(lambda1_max(problem), lambda2_max(problem))
    threads = _threads(args)
    # warm-up run on the sparsest cell, excluded from all timings
    warm = problem.with_lambdas(float(grid.lambda1_values[-1]), float(grid.lambda2_values[0]))
    results: dict[str, PathResult] = {}
    timings: dict[str, float] = {}
    for solver in solvers:
        if solver == "exact":
            solve_exact(warm, want_certificate=False)
        elif solver == "naive":
            naive_cd(warm)
        else:
            solve_huber(warm, want_certificate=False)
        start = time.monotonic()
        results[solver] = run_path(problem, solver=solver, grid=grid, certificates=False, threads=threads)
        timings[solver] = time.monotonic() - start
    accuracy = {}
    if "exact" in results and len(solvers) > 1:
        for solver in solvers:
            if solver == "exact":
                continue
            report = accuracy_report(results["exact"], results[solver])
            accuracy[solver] = {"l1_mean": report.l1_mean, "rmse": report.rmse, "linf": report.linf}
    row = {
        "n": n,
        "p": p,
        "sim": args.sim,
        "seed": args.seed,
        "grid": list(grid.shape),
        "timings_seconds": timings,
    }
    if accuracy:
        row["accuracy_vs_exact"] = accuracy
    write_json(args.out, {"schema_version": SCHEMA_VERSION, "kind": "bench", "rows": [row]})
    header = f"{'n':>6} {'p':>6} " + " ".join(f"{s + ' (s)':>12}" for s in solvers)
    line = f"{n:>6} {p:>6} " + " ".join(f"{timings[s]:>12.3f}" for s in solvers)
    print(header)
    print(line)
    for solver, metrics in accuracy.items():
        print(
            f"accuracy {solver:>6} vs exact: l1/p {metrics['l1_mean']:.3g}  "
            f"rmse {metrics['rmse']:.3g}  linf {metrics['linf']:.3g}"
        )
    print(f"-> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_problem_flags(sub, with_sim: bool):
    sub.add_argument("--design", help="headerless CSV design matrix, one row per observation")
    sub.add_argument("--response", help="response file: one value per line (cox: 'time,status')")
    sub.add_argument("--graph", help="edge list file: 'k l w' per line, 1-based")
    sub.add_argument("--node-weights", dest="node_weights", help="optional node weight file: 'k w' per line")
    if with_sim:
        sub.add_argument("--sim", choices=("1d", "2d"), help="generate the instance instead of reading files")
        sub.add_argument("--n", type=int, default=50, help="observations for --sim")
        sub.add_argument("--p", type=int, default=100, help="coefficients (side length for 2d) for --sim")
        sub.add_argument("--sigma", type=float, default=10.0, help="response noise level for --sim")
    sub.add_argument("--seed", type=int, default=0, help="simulation seed")


def build_parser() -> _Parser:
    parser = _Parser(prog="fusedlasso", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="solve one instance at fixed penalties")
    _add_problem_flags(solve, with_sim=False)
    solve.add_argument("--loss", choices=_LOSSES, default=SQUARED)
    solve.add_argument("--solver", choices=_SOLVERS, default="exact")
    solve.add_argument("--lambda1", type=float, required=True)
    solve.add_argument("--lambda2", type=float, required=True)
    solve.add_argument("--tol", type=float, default=1e-8)
    solve.add_argument("--out", required=True)
    solve.set_defaults(func=_cmd_solve)

    path_cmd = commands.add_parser("path", help="full penalty grid with warm starts")
    _add_problem_flags(path_cmd, with_sim=True)
    path_cmd.add_argument("--loss", choices=(SQUARED,), default=SQUARED)
    path_cmd.add_argument("--solver", choices=_SOLVERS, default="exact")
    path_cmd.add_argument("--certificates", action="store_true", help="attach a certificate residual per cell")
    path_cmd.add_argument("--threads", type=int, default=None, help="parallel lambda2 rows (env FUSED_SOLVE_THREADS)")
    path_cmd.add_argument("--out", required=True)
    path_cmd.set_defaults(func=_cmd_path)

    sim = commands.add_parser("simulate", help="write a synthetic instance to files")
    sim.add_argument("--sim", choices=("1d", "2d"), required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--sigma", type=float, default=10.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output path prefix")
    sim.set_defaults(func=_cmd_simulate)

    ver = commands.add_parser("verify", help="check a solution or compare two paths")
    _add_problem_flags(ver, with_sim=False)
    ver.add_argument("--solution", help="solution JSON to verify against --design/--response/--graph")
    ver.add_argument("--reference", help="reference path JSON")
    ver.add_argument("--candidate", help="candidate path JSON")
    ver.add_argument("--tol", type=float, default=1e-8)
    ver.add_argument("--out", required=True)
    ver.set_defaults(func=_cmd_verify)

    bench = commands.add_parser("bench", help="time several solvers over a full grid")
    _add_problem_flags(bench, with_sim=True)
    bench.add_argument("--loss", choices=(SQUARED,), default=SQUARED)
    bench.add_argument("--solvers", default="exact,naive,huber", help="comma-separated subset of exact,naive,huber")
    bench.add_argument("--threads", type=int, default=None)
    bench.add_argument("--out", required=True)
    bench.set_defaults(func=_cmd_bench)
    return parser


def parse_and_dispatch(argv) -> int:
    """Parse ``argv`` and run the selected command; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FusedLassoError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
