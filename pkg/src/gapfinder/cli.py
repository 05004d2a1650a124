"""Command-line front end.

    gapfinder analyze     --config cfg.json [overrides] --output report.json
    gapfinder baseline    --config cfg.json --method hill_climb --budget 60 --output report.json
    gapfinder simulate    --problem te --heuristic dp --topology detour --input demands.json
    gapfinder construct   ffdsum --m 1 --p 0 | sp-pifo --packets 7 --r-max 8
    gapfinder export-mps  --config cfg.json --output model.mps

Exit codes: 0 success, 2 infeasible, invalid input or failed validation,
3 budget exhausted without an incumbent.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from .model import ModelError
from .report import GapReport, write_time_series
from .solver import SolveParams, export_mps

EXIT_OK, EXIT_FAIL, EXIT_BUDGET = 0, 2, 3

TE_HEURISTICS = ("dp", "modified_dp", "pop", "dp_pop_parallel")
PROBLEM_HEURISTICS = {"te": TE_HEURISTICS, "vbp": ("ffd",), "sched": ("sp_pifo", "aifo")}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

def load_config(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_path(cfg: Dict[str, Any], dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not an object")
    node[keys[-1]] = value


FLAG_PATHS = {
    "problem": "problem", "heuristic": "heuristic", "reference": "reference",
    "objective_mode": "objective_mode", "seed": "seed", "backend": "solver.backend",
    "time_limit": "solver.time_limit", "topology": "topology", "partitions": "partition.k",
    "cluster_method": "partition.method", "cluster_seed": "partition.seed",
}


def apply_overrides(cfg: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    cfg = json.loads(json.dumps(cfg))
    for flag, path in FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is not None:
            _set_path(cfg, path, value)
    if getattr(args, "pair_parallel", False):
        _set_path(cfg, "partition.pair_parallel", True)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        _set_path(cfg, key.strip(), _parse_value(text))
    return cfg


def solve_params(cfg: Dict[str, Any]) -> SolveParams:
    opts = dict(cfg.get("solver", {}))
    opts.setdefault("seed", int(cfg.get("seed", 0)))
    try:
        return SolveParams(**opts)
    except TypeError as exc:
        raise ConfigError(f"bad solver options: {exc}") from None


def load_topology(spec, k: int = 4):
    from .te.topology import Topology, detour_topology, random_topology
    if spec is None or spec == "detour":
        return detour_topology(k)
    if isinstance(spec, str):
        return Topology.load(spec, k)
    if isinstance(spec, dict) and "random" in spec:
        r = spec["random"]
        return random_topology(int(r["n"]), int(r.get("seed", 0)), r.get("extra_edges"),
                               tuple(r.get("capacities", (50.0, 100.0))), k)
    if isinstance(spec, dict):
        return Topology.from_dict(spec, k)
    raise ConfigError(f"cannot read topology {spec!r}")


def _pair_list(rows):
    return None if rows is None else [(str(a), str(b)) for a, b in rows]


def _te_analysis(cfg: Dict[str, Any]):
    from .te.analysis import Goalpost, TEAnalysis
    from .te.encode import ClientSplit, DPConfig, POPConfig, RealisticSpec
    topo = load_topology(cfg.get("topology"), int(cfg.get("paths_k", 4)))
    copies = int(cfg.get("disjoint_copies", 1))
    if copies > 1:
        topo = topo.disjoint_union(copies)
    dp = dict(cfg.get("dp", {}))
    if "dp_threshold" in cfg:
        dp["threshold"] = cfg["dp_threshold"]
    pop = dict(cfg.get("pop", {}))
    pop.setdefault("seed", int(cfg.get("seed", 0)))
    if isinstance(pop.get("client_split"), dict):
        pop["client_split"] = ClientSplit(**pop["client_split"])
    goalpost = None
    if cfg.get("goalpost"):
        g = cfg["goalpost"]
        goalpost = Goalpost({(str(s), str(t)): float(v) for s, t, v in g["anchors"]}, float(g["distance"]),
                            g.get("norm", "l1"))
    realistic = RealisticSpec(**cfg["realistic"]) if cfg.get("realistic") else None
    fixed = {(str(s), str(t)): float(v) for s, t, v in cfg.get("fixed", [])}
    return TEAnalysis(topo, cfg.get("heuristic", "dp"), cfg.get("reference", "opt"), cfg.get("d_max"),
                      DPConfig(**dp), POPConfig(**pop), cfg.get("rewrite"), cfg.get("quantiles"),
                      cfg.get("dual_bound"), cfg.get("slack_bound"), cfg.get("objective_mode", "max_gap"),
                      realistic, goalpost, _pair_list(cfg.get("pairs")), fixed)


def _vbp_analysis(cfg: Dict[str, Any]):
    from .vbp import VbpAnalysis
    if cfg.get("heuristic", "ffd") != "ffd" or cfg.get("reference", "opt") != "opt":
        raise ConfigError("vbp compares ffd against opt")
    keys = ("balls", "dims", "weight_fn", "capacity", "bins", "opt_bins", "granularity", "strict_order",
            "objective_mode", "min_size")
    return VbpAnalysis(**{k: cfg[k] for k in keys if k in cfg})


def _sched_analysis(cfg: Dict[str, Any]):
    from .sched import AifoConfig, SchedAnalysis, SpPifoConfig
    ref = cfg.get("reference", "pifo")
    ref = "pifo" if ref == "opt" else ref
    return SchedAnalysis(int(cfg.get("packets", 7)), int(cfg.get("r_max", 8)), cfg.get("heuristic", "sp_pifo"),
                         ref, cfg.get("metric", "weighted_delay"), SpPifoConfig(**cfg.get("sp_pifo", {})),
                         AifoConfig(**cfg.get("aifo", {})), cfg.get("objective_mode", "max_gap"),
                         cfg.get("history"), bool(cfg.get("free_history", False)))


def build_analysis(cfg: Dict[str, Any]):
    problem = cfg.get("problem", "te")
    if problem not in PROBLEM_HEURISTICS:
        raise ConfigError(f"unknown problem {problem!r}")
    heuristic = cfg.get("heuristic", PROBLEM_HEURISTICS[problem][0])
    if heuristic not in PROBLEM_HEURISTICS[problem]:
        raise ConfigError(f"heuristic {heuristic!r} does not apply to {problem}")
    if problem == "te":
        return _te_analysis(cfg)
    if problem == "vbp":
        return _vbp_analysis(cfg)
    return _sched_analysis(cfg)


# ---------------------------------------------------------------------------
# outputs

def _write_json(data, path: Optional[str]) -> None:
    text = json.dumps(data, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _side_paths(args):
    out = getattr(args, "output", None)
    stem = Path(out).with_suffix("") if out else None
    csv_path = args.csv or (f"{stem}_timeseries.csv" if stem else None)
    png_path = None if args.no_plot else (args.plot or (f"{stem}_gap.png" if stem else None))
    return csv_path, png_path


def emit_report(report: GapReport, cfg: Dict[str, Any], args) -> int:
    report.config = dict(report.config, resolved=cfg)
    _write_json(report.to_dict(), args.output)
    csv_path, png_path = _side_paths(args)
    if csv_path:
        write_time_series(csv_path, report.time_series)
    if png_path and report.time_series:
        from .plotting import plot_gap_vs_time
        plot_gap_vs_time({report.method: report.time_series}, png_path,
                         f"{report.problem}: {report.reference_name} vs {report.heuristic_name}")
    return exit_code(report)


def exit_code(report: GapReport) -> int:
    status = str(report.status)
    if not math.isfinite(report.gap):
        return EXIT_BUDGET if status == "BudgetExhausted" else EXIT_FAIL
    if status == "Infeasible":
        return EXIT_FAIL
    return EXIT_OK if report.validated else EXIT_FAIL


# ---------------------------------------------------------------------------
# commands

def cmd_analyze(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    analysis = build_analysis(cfg)
    params = solve_params(cfg)
    part = cfg.get("partition") or {}
    if part.get("k") and cfg.get("problem", "te") == "te":
        from .partition import analyze_partitioned
        report = analyze_partitioned(analysis, int(part["k"]), part.get("method", "greedy_modularity"),
                                     int(part.get("seed", cfg.get("seed", 0))), params,
                                     bool(part.get("pair_parallel", False)), int(part.get("workers", 1)))
    else:
        report = analysis.solve(params)
    return emit_report(report, cfg, args)


def cmd_baseline(args) -> int:
    from .search import SearchConfig, problem_for, run_search
    cfg = apply_overrides(load_config(args.config), args)
    analysis = build_analysis(cfg)
    opts = dict(cfg.get("search", {}))
    if args.method:
        opts["method"] = args.method
    if args.budget is not None:
        opts["budget_seconds"] = args.budget
    opts.setdefault("seed", int(cfg.get("seed", 0)))
    cfg["search"] = opts
    report = run_search(problem_for(analysis), SearchConfig(**opts))
    return emit_report(report, cfg, args)


def _read_input(path: str):
    with open(path) as fh:
        return json.load(fh)


def cmd_simulate(args) -> int:
    problem = args.problem
    if problem == "te":
        from .te.analysis import TEAnalysis, load_demands
        topo = load_topology(args.topology)
        demands = load_demands(args.input)
        name = args.heuristic
        if name not in TE_HEURISTICS + ("opt",):
            raise ConfigError(f"unknown TE algorithm {name!r}")
        pairs = [p for p in demands if p in set(topo.pairs)]
        missing = [p for p in demands if p not in set(topo.pairs)]
        if missing:
            raise ConfigError(f"demand pairs without a path: {missing}")
        analysis = TEAnalysis(topo, "dp" if name == "opt" else name, "opt", pairs=pairs)
        if args.dp_threshold is not None:
            analysis.dp.threshold = args.dp_threshold
        value = analysis.simulate(name, demands)
        out = {"problem": "te", "heuristic": name, "value": value,
               "demands": [{"src": s, "dst": t, "value": v} for (s, t), v in demands.items()]}
    elif problem == "vbp":
        from .vbp import VbpInstance, vbp_result
        data = _read_input(args.input)
        inst = VbpInstance.from_dict(data.get("instance", data))
        res = vbp_result(inst)
        value = res["ffd_bins"] if args.heuristic == "ffd" else res["opt_bins"]
        out = dict(res, problem="vbp", heuristic=args.heuristic, value=value)
    elif problem == "sched":
        from .sched import AifoConfig, PacketTrace, SpPifoConfig, modified_sp_pifo_simulate, simulate
        data = _read_input(args.input)
        trace = PacketTrace.from_dict(data.get("trace", data))
        sp = SpPifoConfig(args.queues, args.queue_capacity)
        if args.heuristic == "modified_sp_pifo":
            res = modified_sp_pifo_simulate(trace, args.groups, sp)
        else:
            res = simulate("pifo" if args.heuristic == "opt" else args.heuristic, trace, sp,
                           AifoConfig(args.aifo_capacity, args.window, args.burst))
        out = dict(res.to_dict(), problem="sched", heuristic=args.heuristic)
    else:
        raise ConfigError(f"unknown problem {problem!r}")
    _write_json(out, args.output)
    return EXIT_OK


def cmd_construct(args) -> int:
    if args.theorem == "ffdsum":
        from .vbp import ffd_simulate, opt_bins, theorem2_construct
        inst = theorem2_construct(args.m, args.p)
        _, ffd = ffd_simulate(inst)
        out = {"instance": inst.to_dict(), "predicted": {"ffd_bins": 4 * args.m + 6 * args.p,
                                                         "opt_bins": 2 * args.m + 3 * args.p},
               "simulated": {"ffd_bins": ffd, "opt_bins": opt_bins(inst)}}
    else:
        from .sched import pifo_simulate, sp_pifo_simulate, sp_pifo_theorem_trace, SpPifoConfig
        trace, gap, p, p_star = sp_pifo_theorem_trace(args.packets, args.r_max)
        sp = sp_pifo_simulate(trace, SpPifoConfig(args.queues))
        pifo = pifo_simulate(trace)
        out = {"trace": trace.to_dict(), "p": p, "p_star": p_star, "predicted_gap": gap,
               "simulated_gap": sp.weighted_delay - pifo.weighted_delay}
    _write_json(out, args.output)
    return EXIT_OK


def cmd_export_mps(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    analysis = build_analysis(cfg)
    composed = analysis.compose()
    model = composed[0] if isinstance(composed, tuple) else composed
    model.freeze()
    export_mps(model, args.output)
    print(json.dumps({"output": args.output, "variables": len(model.vars),
                      "constraints": len(model.constraints)}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser, outputs: bool = True) -> None:
    p.add_argument("--config", help="JSON analysis config")
    p.add_argument("--problem", choices=sorted(PROBLEM_HEURISTICS))
    p.add_argument("--heuristic")
    p.add_argument("--reference")
    p.add_argument("--objective-mode", dest="objective_mode", choices=["max_gap", "min_gap"])
    p.add_argument("--topology", help="detour or a topology JSON file")
    p.add_argument("--backend", choices=["builtin", "highs", "bridge"])
    p.add_argument("--time-limit", dest="time_limit", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config entry (dotted key, JSON value)")
    if outputs:
        p.add_argument("--output", help="report path (default: stdout)")
        p.add_argument("--csv", help="time-series CSV path")
        p.add_argument("--plot", help="gap-vs-time PNG path")
        p.add_argument("--no-plot", action="store_true")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gapfinder", description="Find inputs where heuristics fall short.")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="compose and solve the gap-maximization problem")
    _common(a)
    a.add_argument("--partitions", type=int)
    a.add_argument("--cluster-method", dest="cluster_method", choices=["greedy_modularity", "label_propagation"])
    a.add_argument("--cluster-seed", dest="cluster_seed", type=int)
    a.add_argument("--pair-parallel", dest="pair_parallel", action="store_true")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("baseline", help="black-box search for large gaps")
    _common(b)
    b.add_argument("--method", choices=["random", "hill_climb", "simulated_annealing"])
    b.add_argument("--budget", type=float, help="seconds")
    b.set_defaults(func=cmd_baseline)

    s = sub.add_parser("simulate", help="run one algorithm on one input")
    s.add_argument("--problem", required=True, choices=sorted(PROBLEM_HEURISTICS))
    s.add_argument("--heuristic", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--topology")
    s.add_argument("--dp-threshold", dest="dp_threshold", type=float)
    s.add_argument("--queues", type=int, default=4)
    s.add_argument("--queue-capacity", dest="queue_capacity", type=int)
    s.add_argument("--groups", type=int, default=2)
    s.add_argument("--aifo-capacity", dest="aifo_capacity", type=int, default=12)
    s.add_argument("--window", type=int, default=4)
    s.add_argument("--burst", type=float, default=1.0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("construct", help="build a worst-case instance from a known construction")
    c.add_argument("theorem", choices=["ffdsum", "sp-pifo"])
    c.add_argument("--m", type=int, default=1)
    c.add_argument("--p", type=int, default=0)
    c.add_argument("--packets", type=int, default=7)
    c.add_argument("--r-max", dest="r_max", type=int, default=8)
    c.add_argument("--queues", type=int, default=4)
    c.add_argument("--output")
    c.set_defaults(func=cmd_construct)

    e = sub.add_parser("export-mps", help="write the composed model in MPS format")
    _common(e, outputs=False)
    e.add_argument("--output", required=True)
    e.set_defaults(func=cmd_export_mps)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
