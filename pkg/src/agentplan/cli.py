"""Command-line front end.

One executable, subcommand per pipeline stage. Data goes to stdout,
diagnostics to stderr. Exit codes: 0 success, 1 domain error (infeasible
problem, bad fixture, ...), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import AgentPlanError
from . import dsl
from .graph import SlaSpec, TaskGraph, validate_graph
from .hardware import HardwareCatalog, builtin_catalog, hourly_cost, marginal_costs
from .optimizer import SolveOptions
from .perf import (
    ParallelismConfig,
    WorkloadShape,
    builtin_models,
    decode_time_ms,
    kv_cache_bytes,
    load_models,
    max_batch,
    peak_egress_gbps,
    prefill_time_ms,
)
from .planner import PlacementPlan, plan_graph, sweep_pairs
from .sim import compare_to_analytic, simulate_plan

CATALOG_ENV = "AGENTPLAN_CATALOG"


def _load_catalog(path) -> HardwareCatalog:
    path = path or os.environ.get(CATALOG_ENV)
    return HardwareCatalog.load(path) if path else builtin_catalog()


def _load_model_table(path) -> dict:
    return load_models(path) if path else builtin_models()


def _load_graph(path) -> TaskGraph:
    with open(path) as f:
        text = f.read()
    if str(path).endswith(".json"):
        return TaskGraph.from_json_str(text)
    return dsl.lower(dsl.parse(text))


def _sla_from_args(args) -> SlaSpec:
    lam = math.inf if args.lambda_per_ms is None else args.lambda_per_ms
    if args.sla == "throughput":
        return SlaSpec(mode="throughput", min_throughput=args.min_throughput,
                       lambda_per_ms=lam, scope=args.sla_scope)
    return SlaSpec(mode="latency", ttft_ms=args.ttft_ms, tbt_ms=args.tbt_ms,
                   e2e_ms=args.e2e_ms, lambda_per_ms=lam, scope=args.sla_scope)


def _emit(out, text: str):
    out.write(text)
    if not text.endswith("\n"):
        out.write("\n")


def _csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --- subcommands ----------------------------------------------------------------


def _cmd_validate(args, out, err) -> int:
    g = _load_graph(args.input)
    diags = validate_graph(g)
    if diags:
        for d in diags:
            err.write(f"{d.code}: {d.message}\n")
        return 1
    _emit(out, "ok")
    return 0


def _cmd_lower(args, out, err) -> int:
    g = _load_graph(args.input)
    passes = [p for p in (args.passes or "").split(",") if p]
    for name in passes:
        if name == "split_llm":
            g, report = dsl.split_llm(g, _load_model_table(args.models))
        elif name == "split_tool":
            g, report = dsl.split_tool(g)
        else:
            err.write(f"unknown pass {name!r}\n")
            return 2
        err.write(f"{report.pass_name}: +{report.nodes_added}/-{report.nodes_removed} nodes\n")
    if args.format == "json":
        _emit(out, g.to_json_str())
    else:
        out.write(dsl.print_graph(g))
    return 0


def _cmd_analyze_hw(args, out, err) -> int:
    catalog = _load_catalog(args.catalog)
    rows = marginal_costs(catalog, basis=args.basis)
    hourly = {name: hourly_cost(dc, catalog.cost_params)
              for name, dc in catalog.classes.items()}
    if args.format == "json":
        _emit(out, json.dumps({
            "basis": args.basis,
            "hourly_cost_usd": hourly,
            "marginal_costs": [r.to_json() for r in rows],
        }, indent=2, sort_keys=True))
    else:
        header = ["name", "usd_per_hr", "usd_per_gbps", "usd_per_tflop_fp16",
                  "usd_per_tflop_fp8", "usd_per_gb"]
        data = [[r.name, f"{hourly[r.name]:.4f}", f"{r.usd_per_gbps:.4f}",
                 f"{r.usd_per_tflop_fp16:.4f}",
                 "" if r.usd_per_tflop_fp8 is None else f"{r.usd_per_tflop_fp8:.4f}",
                 f"{r.usd_per_gb:.4f}"] for r in rows]
        out.write(_csv_text(header, data) if args.format == "csv"
                  else "\n".join("\t".join(map(str, row)) for row in [header] + data) + "\n")
    return 0


def _cmd_estimate(args, out, err) -> int:
    models = _load_model_table(args.models)
    if args.model not in models:
        err.write(f"unknown model {args.model!r}\n")
        return 1
    m = models[args.model]
    catalog = _load_catalog(args.catalog)
    if args.device not in catalog:
        err.write(f"unknown device {args.device!r}\n")
        return 1
    device = catalog[args.device]
    shape = WorkloadShape(args.isl, args.osl, args.bs)
    par = ParallelismConfig(tp_degree=args.tp, pp_degree=args.pp)
    pre = prefill_time_ms(m, shape, device, par, mfu=args.mfu)
    dec = decode_time_ms(m, shape, device, par, mfu=args.mfu,
                         mem_stream_eff=args.mem_eff)
    kv = kv_cache_bytes(m, args.isl, args.bs)
    result = {
        "model": m.name,
        "device": device.name,
        "shape": {"isl": args.isl, "osl": args.osl, "batch": args.bs},
        "parallelism": {"tp": args.tp, "pp": args.pp},
        "prefill": pre.to_json(),
        "decode": dec.to_json(),
        "kv_cache_bytes": kv,
        "max_batch": max_batch(m, shape, device, par),
        "peak_egress_gbps": peak_egress_gbps(kv, pre.ttft_ms, par.devices),
    }
    if args.format == "json":
        _emit(out, json.dumps(result, indent=2, sort_keys=True))
    else:
        _emit(out, f"ttft {pre.ttft_ms:.3f} ms ({pre.bound}-bound), "
                   f"tbt {dec.tbt_ms:.3f} ms ({dec.bound}-bound), "
                   f"{dec.tokens_per_sec:.1f} tok/s, kv {kv} B")
    return 0


def _cmd_plan(args, out, err) -> int:
    g = _load_graph(args.input)
    catalog = _load_catalog(args.catalog)
    models = _load_model_table(args.models)
    profile = None
    if args.profile:
        with open(args.profile) as f:
            profile = json.load(f)
    sla = _sla_from_args(args)
    opts = SolveOptions(max_nodes=args.max_nodes)
    plan = plan_graph(g, catalog, models, sla, profile=profile,
                      mfu=args.mfu, mem_stream_eff=args.mem_eff, opts=opts)
    text = plan.to_json_str()
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        err.write(f"plan written to {args.out}\n")
    else:
        out.write(text)
    return 0


def _cmd_tco_sweep(args, out, err) -> int:
    models = _load_model_table(args.models)
    if args.model not in models:
        err.write(f"unknown model {args.model!r}\n")
        return 1
    catalog = _load_catalog(args.catalog)
    shape = WorkloadShape(args.isl, args.osl)
    sla = _sla_from_args(args)
    pairs = args.pairs.split(",") if args.pairs else None
    rows = sweep_pairs(models[args.model], shape, catalog, sla, args.baseline,
                       pairs=pairs, mfu=args.mfu, mem_stream_eff=args.mem_eff)
    if args.format == "json":
        _emit(out, json.dumps([r.to_json() for r in rows], indent=2, sort_keys=True))
    else:
        header = ["label", "model", "isl", "osl", "tokens_per_sec_per_dollar",
                  "cost_per_token_usd", "tco_ratio_vs_baseline", "feasible",
                  "binding_constraint"]
        data = [[r.label, r.model, r.isl, r.osl,
                 f"{r.tokens_per_sec_per_dollar:.6g}",
                 f"{r.cost_per_token_usd:.6g}",
                 "" if r.tco_ratio_vs_baseline is None
                 else f"{r.tco_ratio_vs_baseline:.6g}",
                 int(r.feasible), r.binding_constraint] for r in rows]
        out.write(_csv_text(header, data))
    return 0


def _cmd_simulate(args, out, err) -> int:
    with open(args.plan) as f:
        plan = PlacementPlan.from_json(json.load(f))
    report = simulate_plan(plan, args.arrivals, args.duration, seed=args.seed)
    result = report.to_json()
    if args.compare:
        result["comparison"] = compare_to_analytic(report, plan)
    _emit(out, json.dumps(result, indent=2, sort_keys=True))
    return 0


# --- parser ---------------------------------------------------------------------


def _add_sla_flags(sp):
    sp.add_argument("--sla", choices=["latency", "throughput"], default="latency")
    sp.add_argument("--ttft-ms", type=float, default=None)
    sp.add_argument("--tbt-ms", type=float, default=None)
    sp.add_argument("--e2e-ms", type=float, default=None)
    sp.add_argument("--min-throughput", type=float, default=None)
    sp.add_argument("--lambda", dest="lambda_per_ms", type=float, default=None,
                    help="slack penalty $/ms; omit for a hard SLA")
    sp.add_argument("--sla-scope", choices=["per_task", "end_to_end"],
                    default="end_to_end")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentplan",
        description="Plan, cost, and simulate agent task graphs on heterogeneous hardware.")
    parser.add_argument("--config", default=None,
                        help="TOML file of default flag values (explicit flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="check a graph file")
    sp.add_argument("input")
    sp.set_defaults(func=_cmd_validate)

    sp = sub.add_parser("lower", help="parse, run passes, print canonical form")
    sp.add_argument("input")
    sp.add_argument("--passes", default="", help="comma list: split_llm,split_tool")
    sp.add_argument("--models", default=None)
    sp.add_argument("--format", choices=["text", "json"], default="text")
    sp.set_defaults(func=_cmd_lower)

    sp = sub.add_parser("analyze-hw", help="hourly and marginal hardware costs")
    sp.add_argument("--catalog", default=None)
    sp.add_argument("--basis", choices=["capex", "opex"], default="capex")
    sp.add_argument("--format", choices=["json", "csv", "text"], default="text")
    sp.set_defaults(func=_cmd_analyze_hw)

    sp = sub.add_parser("estimate", help="analytic prefill/decode estimates")
    sp.add_argument("--model", required=True)
    sp.add_argument("--models", default=None)
    sp.add_argument("--device", required=True)
    sp.add_argument("--catalog", default=None)
    sp.add_argument("--isl", type=int, required=True)
    sp.add_argument("--osl", type=int, required=True)
    sp.add_argument("--bs", type=int, default=1)
    sp.add_argument("--tp", type=int, default=1)
    sp.add_argument("--pp", type=int, default=1)
    sp.add_argument("--mfu", type=float, default=0.5)
    sp.add_argument("--mem-eff", type=float, default=0.9)
    sp.add_argument("--format", choices=["json", "text"], default="json")
    sp.set_defaults(func=_cmd_estimate)

    sp = sub.add_parser("plan", help="assign graph tasks to device classes")
    sp.add_argument("input")
    sp.add_argument("--catalog", default=None)
    sp.add_argument("--models", default=None)
    sp.add_argument("--profile", default=None,
                    help="JSON of measured per-task latency/cost overrides")
    sp.add_argument("--mfu", type=float, default=0.5)
    sp.add_argument("--mem-eff", type=float, default=0.9)
    sp.add_argument("--max-nodes", type=int, default=1_000_000)
    sp.add_argument("--out", default=None)
    _add_sla_flags(sp)
    sp.set_defaults(func=_cmd_plan)

    sp = sub.add_parser("tco-sweep", help="rank prefill::decode device pairs")
    sp.add_argument("--model", required=True)
    sp.add_argument("--models", default=None)
    sp.add_argument("--catalog", default=None)
    sp.add_argument("--isl", type=int, required=True)
    sp.add_argument("--osl", type=int, required=True)
    sp.add_argument("--baseline", default="H100::H100")
    sp.add_argument("--pairs", default=None,
                    help="comma list of labels, e.g. H100::Gaudi3,B200::B200")
    sp.add_argument("--mfu", type=float, default=0.5)
    sp.add_argument("--mem-eff", type=float, default=0.9)
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    _add_sla_flags(sp)
    sp.set_defaults(func=_cmd_tco_sweep)

    sp = sub.add_parser("simulate", help="replay a plan against an arrival stream")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--arrivals", default="interval:1000",
                    help="'interval:MS' or 'poisson:REQS_PER_SEC'")
    sp.add_argument("--duration", type=float, default=60000.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--compare", action="store_true",
                    help="append deviation vs the plan's analytic predictions")
    sp.add_argument("--format", choices=["json"], default="json")
    sp.set_defaults(func=_cmd_simulate)
    return parser


def _merge_config(parser, args, argv):
    """Fill unset flags from the TOML config; anything passed explicitly on
    the command line keeps priority."""
    if not args.config:
        return args
    with open(args.config, "rb") as f:
        conf = tomllib.load(f)
    flat = dict(conf)
    section = conf.get(args.command)
    if isinstance(section, dict):
        flat.update(section)
    explicit = {tok.split("=", 1)[0].lstrip("-").replace("-", "_")
                for tok in argv if tok.startswith("--")}
    for key, value in flat.items():
        dest = key.replace("-", "_")
        if isinstance(value, dict) or not hasattr(args, dest) or dest in explicit:
            continue
        setattr(args, dest, value)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(parser, args, argv)
        return args.func(args, sys.stdout, sys.stderr)
    except (AgentPlanError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
