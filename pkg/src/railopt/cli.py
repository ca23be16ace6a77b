"""Command-line front end.

Subcommands cover the whole workflow: network validation and export,
scenario generation, single-model solves (with optional route/precedence
fixings), two-stage pipeline runs, the brute-force oracle, and the
benchmark harness.  Every run prints its resolved configuration so results
are reproducible from the log alone.

Exit codes: 0 success, 1 usage/input error, 2 infeasible or limit reached.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import (decomposition, evaluation, formulation, milp,
               network as network_mod, pipeline, scenario as scenario_mod)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2


class _CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise _CliError(f"cannot read {path}: {e}") from e


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as e:
        raise _CliError(f"cannot write {path}: {e}") from e


def _load_scenario(path):
    sc = scenario_mod.parse_scenario(_read(path))
    print(f"scenario: {path} network={sc.network.name} trains={len(sc.trains)} "
          f"constants=(formation={sc.constants.formation_s}s "
          f"release={sc.constants.release_s}s overlap={sc.constants.overlap_s}s)")
    return sc


def _solver_cfg(args):
    cfg = milp.SolverConfig(time_limit=args.time_limit, seed=args.seed
                            if hasattr(args, "seed") and args.seed is not None
                            else 0)
    print(f"solver: time_limit={cfg.time_limit}s feas_tol={cfg.feas_tol} "
          f"rel_gap={cfg.rel_gap} seed={cfg.seed}")
    return cfg


def _cmd_net(args):
    if args.net_cmd == "validate":
        net = network_mod.parse_network(_read(args.file))
        network_mod.validate_network(net)
        print(f"network {net.name!r}: {len(net.track_circuits)} track circuits, "
              f"{len(net.routes)} routes, {len(net.stations)} stations — valid")
        return EXIT_OK
    net = network_mod.builtin_network(args.name)
    text = network_mod.serialize_network(net)
    if args.output:
        _write(args.output, text)
        print(f"wrote built-in network {args.name} to {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_scenario_gen(args):
    net = network_mod.load_network(args.network)
    cfg = scenario_mod.GeneratorConfig(n_trains=args.trains)
    print(f"generator: network={net.name} trains={args.trains} seed={args.seed}")
    sc = scenario_mod.generate_scenario(net, cfg, args.seed)
    text = scenario_mod.serialize_scenario(sc)
    if args.output:
        _write(args.output, text)
        print(f"wrote scenario to {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


def _parse_fix_prec(text):
    raw = json.loads(text)
    if isinstance(raw, list):
        return {(a, b, tc): int(v) for a, b, tc, v in raw}
    return {tuple(k.split(",")): int(v) for k, v in raw.items()}


def _cmd_solve(args):
    sc = _load_scenario(args.scenario)
    cfg = _solver_cfg(args)
    print(f"model: {args.model}")
    if args.model in ("reference", "extended"):
        m, vm = (formulation.build_reference_model(sc) if args.model == "reference"
                 else formulation.build_extended_model(sc))
    elif args.model == "suboptimal":
        m, sv = decomposition.build_suboptimal_model(sc)
    else:
        m, sv = decomposition.build_global_model(sc)
    if args.fix_routes:
        routes = json.loads(args.fix_routes)
        print(f"fixing routes: {routes}")
        if args.model in ("reference", "extended"):
            formulation.fix_routes(m, vm, routes)
        else:
            raise _CliError("--fix-routes applies to reference/extended models")
    if args.fix_prec:
        prec = _parse_fix_prec(args.fix_prec)
        print(f"fixing {len(prec)} precedences")
        if args.model in ("reference", "extended"):
            formulation.fix_precedences(m, vm, prec)
        else:
            raise _CliError("--fix-prec applies to reference/extended models")
    sol = milp.solve(m, cfg)
    print(f"status: {sol.status} objective: {sol.objective:.6f} "
          f"nodes: {sol.stats.node_count} time: {sol.stats.wall_time:.2f}s")
    if sol.status not in ("Optimal", "Feasible") or not sol.assignment:
        return EXIT_INFEASIBLE
    if args.model in ("reference", "extended"):
        plan = formulation.extract_plan(sc, vm, sol)
        payload = pipeline._plan_to_obj(plan)
    else:
        stage1 = decomposition.extract_stage_one(sc, sv, sol)
        payload = json.loads(stage1.to_json())
    if args.output:
        _write(args.output, json.dumps(payload, indent=2) + "\n")
        print(f"wrote solution to {args.output}")
    return EXIT_OK


_TRANSFER_ALIASES = {"routes": "routes", "routes+prec": "routes+precedences",
                     "routes+precedences": "routes+precedences",
                     "warm": "warm_start", "warm_start": "warm_start"}


def _cmd_pipeline(args):
    sc = _load_scenario(args.scenario)
    cfg = _solver_cfg(args)
    transfer = _TRANSFER_ALIASES[args.transfer]
    pc = pipeline.PipelineConfig(args.stage1, transfer,
                                 stage1_solver=cfg, stage2_solver=cfg)
    print(f"pipeline: stage1={pc.stage1_model} transfer={pc.transfer}")
    res = pipeline.run_two_stage(sc, pc)
    for s in res.stages:
        print(f"  {s.name}: {s.status} objective={s.objective:.6f} "
              f"runtime={s.runtime_s:.2f}s")
    print(f"final objective: {res.plan.objective:.6f} "
          f"fallback={res.fallback_used} response_time={res.response_time_s:.2f}s")
    if args.output:
        _write(args.output, res.to_json())
        print(f"wrote result to {args.output}")
    return EXIT_OK


def _cmd_oracle(args):
    sc = _load_scenario(args.scenario)
    print(f"oracle: overlaps={args.overlaps}")
    try:
        plan = decomposition.brute_force_oracle(sc, with_overlaps=args.overlaps)
    except decomposition.OracleSizeError as e:
        raise _CliError(str(e)) from e
    except decomposition.InfeasibleOrderingError:
        print("oracle: no feasible plan")
        return EXIT_INFEASIBLE
    print(f"objective: {plan.objective:.6f} routes: {plan.routes}")
    return EXIT_OK


def _cmd_bench(args):
    networks = [s for s in args.networks.split(",") if s]
    trains = [int(s) for s in args.trains.split(",") if s]
    if not networks or not trains:
        raise _CliError("bench needs at least one network and one train count")
    print(f"bench: networks={networks} trains={trains} "
          f"scenarios={args.scenarios} seed_base={args.seed_base} "
          f"time_limit={args.time_limit}s workers={args.workers}")
    report = evaluation.run_benchmark(networks, trains, args.scenarios,
                                      args.seed_base, args.time_limit,
                                      args.workers)
    _write(args.out, evaluation.emit_report(report, "csv"))
    print(f"wrote {len(report.rows)} rows to {args.out}")
    for key, mp in sorted(report.metrics().items()):
        net, k, model, stage, transfer = key
        col = f"{model}/stage{stage}" + (f"/{transfer}" if transfer else "")
        print(f"  {net} {k}t {col}: P_obj={mp.p_obj:.1f} "
              f"P_run={mp.p_run:.1f} N={mp.n}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="railopt",
                                description="rail-traffic optimization toolkit")
    sub = p.add_subparsers(dest="cmd", required=True)

    p_net = sub.add_parser("net", help="network utilities")
    net_sub = p_net.add_subparsers(dest="net_cmd", required=True)
    v = net_sub.add_parser("validate", help="validate a network file")
    v.add_argument("file")
    b = net_sub.add_parser("builtin", help="export a built-in network")
    b.add_argument("name", choices=["A", "B", "fig3"])
    b.add_argument("-o", "--output")

    p_sc = sub.add_parser("scenario", help="scenario utilities")
    sc_sub = p_sc.add_subparsers(dest="sc_cmd", required=True)
    g = sc_sub.add_parser("gen", help="generate a certified-feasible scenario")
    g.add_argument("--network", required=True,
                   help="built-in name (A, B, fig3) or a network file")
    g.add_argument("--trains", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("-o", "--output")

    s = sub.add_parser("solve", help="solve one model on a scenario")
    s.add_argument("--model", required=True,
                   choices=["reference", "extended", "suboptimal", "global"])
    s.add_argument("--scenario", required=True)
    s.add_argument("--fix-routes", help='JSON object {"train": "route"}')
    s.add_argument("--fix-prec",
                   help='JSON list of [a, b, tc, 0|1] precedence fixings')
    s.add_argument("--time-limit", type=float, default=300.0)
    s.add_argument("-o", "--output")

    pl = sub.add_parser("pipeline", help="two-stage pipeline run")
    pl.add_argument("--scenario", required=True)
    pl.add_argument("--stage1", required=True, choices=["suboptimal", "global"])
    pl.add_argument("--transfer", required=True,
                    choices=sorted(_TRANSFER_ALIASES))
    pl.add_argument("--time-limit", type=float, default=300.0)
    pl.add_argument("-o", "--output")

    o = sub.add_parser("oracle", help="brute-force oracle solve")
    o.add_argument("--scenario", required=True)
    o.add_argument("--overlaps", action="store_true")

    bc = sub.add_parser("bench", help="benchmark protocol")
    bc.add_argument("--networks", required=True, help="comma-separated, e.g. A,B")
    bc.add_argument("--trains", required=True, help="comma-separated counts")
    bc.add_argument("--scenarios", type=int, required=True)
    bc.add_argument("--seed-base", type=int, default=0)
    bc.add_argument("--time-limit", type=float, default=120.0)
    bc.add_argument("--workers", type=int, default=1)
    bc.add_argument("--out", required=True)
    return p


_DISPATCH = {"net": _cmd_net, "solve": _cmd_solve, "pipeline": _cmd_pipeline,
             "oracle": _cmd_oracle, "bench": _cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        if args.cmd == "scenario":
            return _cmd_scenario_gen(args)
        return _DISPATCH[args.cmd](args)
    except _CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (network_mod.NetworkError, scenario_mod.ScenarioError,
            pipeline.PipelineError, evaluation.EvaluationError,
            milp.ModelError, json.JSONDecodeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except scenario_mod.GeneratorError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
