"""Command-line entry point.

Exit codes: 0 success, 1 usage/parse error, 2 infeasible budget, 3 solver
failure, 4 certification failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, _io
from .allocate import AllocationProblem, AllocationResult, solve
from .costs import CostModel
from .dynamics import (GSEIVParams, SpreadingParams, extinction_times, fit_decay_rate,
                       gseiv_is_stable, meanfield_simulate, stability_margin,
                       stochastic_simulate, write_event_log_csv, write_trajectory_csv)
from .exceptions import (InfeasibleBudgetError, NetProtectError, SolverError)
from .graph import pagerank, read_edge_list, weighted_degrees, write_edge_list
from .heuristics import CENTRALITIES, centrality_table, workstation_experiment, worst_case_graph

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_CERT = 0, 1, 2, 3, 4

COMMANDS = ("solve", "simulate", "gillespie", "heuristics", "compare", "gen-worstcase",
            "gseiv-check")

DEFAULTS = {
    "parameterization": "edge",
    "prevention_cost": "reciprocal-vaccine",
    "correction_cost": "reciprocal-antidote",
    "tol": 1e-7,
    "cert_tol": 1e-6,
    "seed": 0,
    "out": ".",
}


class UsageError(Exception):
    pass


def _parse_sweep(text):
    try:
        lo, hi, steps = text.split(":")
        return float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:steps, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netprotect",
                                description="Protection-resource allocation on weighted digraphs")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--graph", type=Path)
        s.add_argument("--budget", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=Path)
        s.add_argument("--tol", type=float)
        s.add_argument("--sweep", type=_parse_sweep)
        s.add_argument("--strategy", action="append", choices=CENTRALITIES)
        if name == "gen-worstcase":
            s.add_argument("--n", type=int)
            s.add_argument("--m", type=int)
            s.add_argument("--reverse", action="store_true", default=None)
        if name in ("simulate", "gillespie"):
            s.add_argument("--t-end", dest="t_end", type=float)
            s.add_argument("--step", type=float)
            s.add_argument("--result", type=Path)
        if name == "gillespie":
            s.add_argument("--runs", type=int)
        if name in ("heuristics", "compare"):
            s.add_argument("--alpha", type=float)
    return p


def load_config(args) -> dict:
    cfg = dict(DEFAULTS)
    base = Path(".")
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(loaded, dict):
            raise UsageError("config must be a JSON object")
        base = args.config.parent
        for key in ("graph", "result"):
            if isinstance(loaded.get(key), str):
                loaded[key] = str(base / loaded[key])
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        if key == "strategy":
            cfg["strategies"] = value
        elif isinstance(value, Path):
            cfg[key] = str(value)
        else:
            cfg[key] = value
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps({k: v for k, v in cfg.items() if k != "out"}, sort_keys=True,
                      default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _sidecar(cfg, command, path, extra=None):
    meta = {"command": command, "config_hash": config_hash(cfg), "seed": cfg.get("seed"),
            "version": __version__}
    meta.update(extra or {})
    _io.write_json(meta, str(path) + ".meta.json")


def _graph(cfg):
    if "graph" not in cfg:
        raise UsageError("no graph given (use --graph or the 'graph' config key)")
    try:
        return read_edge_list(cfg["graph"])
    except OSError as exc:
        raise UsageError(f"cannot read graph {cfg['graph']}: {exc}")


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise UsageError(f"missing config field(s): {', '.join(missing)}")


def problem_from_config(cfg) -> AllocationProblem:
    _require(cfg, "beta_lo", "beta_hi", "budget")
    g = _graph(cfg)
    delta_lo = cfg.get("delta_lo", cfg.get("delta"))
    delta_hi = cfg.get("delta_hi", cfg.get("delta"))
    if delta_lo is None or delta_hi is None:
        raise UsageError("missing recovery bounds (delta_lo/delta_hi or delta)")
    return AllocationProblem(
        g, cfg["beta_lo"], cfg["beta_hi"], delta_lo, delta_hi, cfg["budget"],
        cap=cfg.get("cap"),
        costs=CostModel(cfg["prevention_cost"], cfg["correction_cost"]),
        parameterization=cfg["parameterization"],
    )


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(cfg) -> int:
    problem = problem_from_config(cfg)
    out = _out_dir(cfg)
    result = solve(problem, tol=cfg["tol"], cert_tol=cfg["cert_tol"])
    _io.write_json(result.to_dict(), out / "result.json")
    _sidecar(cfg, "solve", out / "result.json")
    _io.write_json(result.certification.to_dict(), out / "certification.json")
    g = problem.graph
    n = g.node_count
    prev_node = np.zeros(n)
    if problem.node_level:
        prev_node += result.prevention_spend
    else:
        np.add.at(prev_node, g.targets, result.prevention_spend)
    in_deg, _ = weighted_degrees(g)
    pr = pagerank(g, float(cfg.get("alpha", 0.85)), "reverse")
    _io.write_csv(out / "allocation_scatter.csv",
                  ["node", "correction_spend", "prevention_spend", "in_degree", "pagerank"],
                  ([i, result.correction_spend[i], prev_node[i], in_deg[i], pr[i]]
                   for i in range(n)))
    print(f"epsilon* = {result.epsilon_star!r}  spend = {result.total_spend!r}  "
          f"certified = {result.certification.passed}")
    if not result.certification.passed:
        for v in result.certification.violations:
            print(f"certification: {v}", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def _spreading_params(cfg):
    g = _graph(cfg)
    if "result" in cfg:
        res = AllocationResult.from_dict(_io.read_json(cfg["result"]))
        return g, SpreadingParams.from_graph(g, res.beta_star, res.delta_star,
                                             node_level=res.parameterization == "node")
    _require(cfg, "beta", "delta")
    return g, SpreadingParams.from_graph(g, cfg["beta"], cfg["delta"],
                                         node_level=cfg["parameterization"] == "node")


def cmd_simulate(cfg) -> int:
    g, params = _spreading_params(cfg)
    out = _out_dir(cfg)
    p0 = np.asarray(cfg.get("p0", np.ones(g.node_count)), dtype=float)
    margin = stability_margin(params)
    t_end = float(cfg.get("t_end", 20.0 / margin if margin > 0 else 100.0))
    traj = meanfield_simulate(params, p0, t_end, cfg.get("step"),
                              record_every=int(cfg.get("record_every", 1)))
    write_trajectory_csv(traj, out / "trajectory.csv",
                         {"config_hash": config_hash(cfg), "seed": cfg.get("seed"),
                          "version": __version__})
    summary = {"stability_margin": margin, "t_end": t_end, "final_norm":
               float(np.linalg.norm(traj.final))}
    try:
        summary["fitted_decay_rate"], summary["fitted_K"] = fit_decay_rate(traj)
    except NetProtectError:
        summary["fitted_decay_rate"] = None
    _io.write_json(summary, out / "simulate_summary.json")
    print(f"stability margin = {margin!r}  fitted decay = {summary['fitted_decay_rate']!r}")
    return EXIT_OK


def cmd_gillespie(cfg) -> int:
    g, params = _spreading_params(cfg)
    out = _out_dir(cfg)
    x0 = np.asarray(cfg.get("x0", np.ones(g.node_count, dtype=int)), dtype=np.int8)
    t_end = float(cfg.get("t_end", 100.0))
    seed = int(cfg["seed"])
    traj = stochastic_simulate(params, x0, t_end, seed)
    write_event_log_csv(traj, out / "events.csv",
                        {"config_hash": config_hash(cfg), "version": __version__})
    if cfg.get("runs"):
        times = extinction_times(params, x0, t_end, int(cfg["runs"]), seed)
        _io.write_json({"runs": int(cfg["runs"]), "t_end": t_end, "seed": seed,
                        "extinct_fraction": float(np.isfinite(times).mean()),
                        "extinction_times": [float(t) if np.isfinite(t) else None
                                             for t in times]}, out / "extinction.json")
    print(f"{len(traj.events)} events, extinction time {traj.meta['extinction_time']!r}")
    return EXIT_OK


def cmd_heuristics(cfg) -> int:
    g = _graph(cfg)
    out = _out_dir(cfg)
    names = tuple(cfg.get("strategies", CENTRALITIES))
    table = centrality_table(g, float(cfg.get("alpha", 0.85)), names)
    _io.write_csv(out / "centralities.csv", ["node", *names],
                  ([i, *(table[k][i] for k in names)] for i in range(g.node_count)))
    _sidecar(cfg, "heuristics", out / "centralities.csv")
    return EXIT_OK


def cmd_compare(cfg) -> int:
    out = _out_dir(cfg)
    g = _graph(cfg) if "graph" in cfg else worst_case_graph(cfg.get("n", 3), cfg.get("m", 6))
    settings = dict(beta_lo=float(cfg.get("beta_lo", 0.01)),
                    beta_hi=float(cfg.get("beta_hi", 0.5)),
                    delta=float(cfg.get("delta", 0.3)),
                    alpha=float(cfg.get("alpha", 0.1)))
    strategies = tuple(cfg.get("strategies", ("out-degree", "total-degree",
                                              "pagerank-forward", "pagerank-symmetrized")))
    budget = float(cfg.get("budget", 3.0))
    report = workstation_experiment(budget=budget, strategies=strategies, graph=g,
                                    tol=cfg["tol"], **settings)
    report.write_csv(out / "comparison.csv")
    report.write_centrality_csv(out / "centralities.csv")
    _sidecar(cfg, "compare", out / "comparison.csv")
    if cfg.get("sweep"):
        lo, hi, steps = cfg["sweep"]
        rows = []
        for c in np.linspace(lo, hi, int(steps)):
            rep = workstation_experiment(budget=float(c), strategies=strategies, graph=g,
                                         tol=cfg["tol"], **settings)
            rows.append([float(c), rep.optimum.epsilon,
                         *(o.epsilon for o in rep.outcomes)])
        _io.write_csv(out / "budget_sweep.csv",
                      ["budget", "epsilon_star", *(f"epsilon_{s}" for s in strategies)], rows)
    for o in report.rows():
        print(f"{o.name:22s} epsilon = {o.epsilon: .6f}  Q = {o.efficiency:.6f}")
    return EXIT_OK


def cmd_gen_worstcase(cfg) -> int:
    out = _out_dir(cfg)
    n, m = int(cfg.get("n", 3)), int(cfg.get("m", 6))
    reverse = bool(cfg.get("reverse", False))
    g = worst_case_graph(n, m, reverse=reverse)
    path = out / f"worstcase_n{n}_m{m}{'_reversed' if reverse else ''}.csv"
    write_edge_list(g, path)
    _sidecar(cfg, "gen-worstcase", path, {"n": n, "m": m, "reverse": reverse})
    print(f"wrote {path} ({g.node_count} nodes, {g.edge_count} edges)")
    return EXIT_OK


def cmd_gseiv_check(cfg) -> int:
    g = _graph(cfg)
    out = _out_dir(cfg)
    _require(cfg, "gseiv")
    gcfg = cfg["gseiv"]
    try:
        params = GSEIVParams(g, gcfg["beta_E"], gcfg["beta_I"], gcfg["delta"],
                             gcfg["epsilon_latency"], gcfg.get("theta", 0.0), gcfg["gamma"])
    except KeyError as exc:
        raise UsageError(f"gseiv config is missing {exc}")
    stable, abscissa = gseiv_is_stable(params)
    verdict = {"stable": bool(stable), "verdict": "stable" if stable else "unstable",
               "spectral_abscissa": abscissa}
    _io.write_json(verdict, out / "gseiv.json")
    _sidecar(cfg, "gseiv-check", out / "gseiv.json")
    print(verdict["verdict"])
    return EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "gillespie": cmd_gillespie,
    "heuristics": cmd_heuristics,
    "compare": cmd_compare,
    "gen-worstcase": cmd_gen_worstcase,
    "gseiv-check": cmd_gseiv_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args)
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleBudgetError as exc:
        print(f"{args.command}: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"{args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (NetProtectError, ValueError, KeyError, TypeError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
