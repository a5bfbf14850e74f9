import json
import math
import pathlib

import pytest

from agentplan import AssignmentProblem, HardwareCatalog, SlaSpec

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

INF = math.inf

_CLASSES = ("HP", "CO")
_THETA = {
    "prefill": {"HP": {"prefill/exec": 80.0, "prefill/unit": 1.0},
                "CO": {"prefill/exec": 130.0, "prefill/unit": 1.0}},
    "decode": {"HP": {"decode/exec": 25.0, "decode/unit": 1.0},
               "CO": {"decode/exec": 30.0, "decode/unit": 1.0}},
}
_PERF = {j: {"prefill/exec": 1.0, "decode/exec": 1.0,
             "prefill/unit": INF, "decode/unit": INF} for j in _CLASSES}
_RESOURCES = ["prefill/exec", "prefill/unit", "decode/exec", "decode/unit"]


def two_stage_problem(lam=INF, t_sla=120.0):
    """Prefill/decode on HP vs CO with a pairwise KV-transfer term; costs
    profiled as per-option totals (prefill CO carries $0.06)."""
    return AssignmentProblem(
        tasks=["prefill", "decode"], classes=list(_CLASSES),
        resources=list(_RESOURCES),
        theta=json.loads(json.dumps(_THETA)),
        perf={j: dict(r) for j, r in _PERF.items()},
        unit_cost={"HP": {"prefill/unit": 0.08, "decode/unit": 0.03},
                   "CO": {"prefill/unit": 0.06, "decode/unit": 0.01}},
        sla=SlaSpec(mode="latency", e2e_ms=t_sla, lambda_per_ms=lam),
        mode="discrete",
        edges=[("prefill", "decode")],
        edge_comm={("prefill", "decode"): {
            "HP": {"HP": (0.0, 0.0), "CO": (10.0, 0.005)},
            "CO": {"HP": (0.0, 0.0), "CO": (0.0, 0.0)},
        }},
    )


def two_stage_lp(scope="end_to_end"):
    """Fractional variant: per-token table rates plus a constant 10 ms
    pipeline term on (decode, CO) priced through gamma."""
    return AssignmentProblem(
        tasks=["prefill", "decode"], classes=list(_CLASSES),
        resources=list(_RESOURCES),
        theta=json.loads(json.dumps(_THETA)),
        perf={j: dict(r) for j, r in _PERF.items()},
        unit_cost={"HP": {"prefill/unit": 0.08, "decode/unit": 0.03},
                   "CO": {"prefill/unit": 0.05, "decode/unit": 0.01}},
        pipeline_cost={"decode": {"CO": 10.0}},
        gamma=0.0005,
        sla=SlaSpec(mode="latency", e2e_ms=120.0, scope=scope),
        mode="fractional",
    )


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def worked_example_graph_path():
    return FIXTURES / "worked_example.agraph"


@pytest.fixture
def worked_example_profile():
    with open(FIXTURES / "worked_example_profile.json") as f:
        return json.load(f)


@pytest.fixture
def worked_example_catalog():
    return HardwareCatalog.load(FIXTURES / "worked_example_catalog.json")
