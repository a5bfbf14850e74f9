"""Planner, cost models, and a validation simulator for placing agent task
graphs on heterogeneous hardware under latency/throughput SLAs."""

from .errors import AgentPlanError
from .graph import (
    GraphEdge,
    ResourceVector,
    SlaSpec,
    TaskGraph,
    TaskKind,
    TaskNode,
    critical_path_ms,
    flatten_hierarchy,
    topological_order,
    unroll_cycles,
    validate_graph,
)
from .dsl import (
    fuse_colocated,
    lower,
    parse,
    print_graph,
    split_llm,
    split_tool,
)
from .hardware import (
    CostModelParams,
    DeviceClass,
    HardwareCatalog,
    builtin_catalog,
    hourly_cost,
    marginal_costs,
)
from .perf import (
    ModelSpec,
    ParallelismConfig,
    PerfEstimate,
    WorkloadShape,
    builtin_models,
    decode_time_ms,
    kv_cache_bytes,
    kv_per_token_bytes,
    max_batch,
    peak_egress_gbps,
    peak_ingress_gbps,
    prefill_time_ms,
)
from .optimizer import (
    Assignment,
    AssignmentProblem,
    SolveOptions,
    build_lp,
    compute_tij,
    enumerate_oracle,
    evaluate_assignment,
    solve_discrete,
    solve_fractional,
    solve_lp,
)
from .planner import (
    PlacementPlan,
    TcoRow,
    build_problem,
    normalize_vs_baseline,
    plan_graph,
    sweep_pairs,
)
from .sim import SimReport, compare_to_analytic, simulate_plan

__version__ = "0.1.0"
