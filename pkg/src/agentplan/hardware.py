"""Device-class catalog, operating-cost derivation, and marginal-cost analytics.

Units: GB = 1e9 bytes, memory bandwidth in GB/s, network bandwidth in Gb/s,
money in USD, operating cost in $/hr.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import MissingTdp


@dataclass(frozen=True)
class CostModelParams:
    amortization_years: float = 4.0
    annual_interest_rate: float = 0.08
    energy_usd_per_kwh: float = 0.40
    hours_per_month: float = 730.0  # 8760 / 12
    utilization_fraction: float = 1.0

    def to_json(self) -> dict:
        return {
            "amortization_years": self.amortization_years,
            "annual_interest_rate": self.annual_interest_rate,
            "energy_usd_per_kwh": self.energy_usd_per_kwh,
            "hours_per_month": self.hours_per_month,
            "utilization_fraction": self.utilization_fraction,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CostModelParams":
        return cls(**d)


@dataclass(frozen=True)
class DeviceClass:
    name: str
    vendor: str
    capex_usd: float
    mem_capacity_gb: float
    mem_bandwidth_gbps_bytes: float
    tflops_fp16: float
    tflops_fp8: Optional[float] = None
    tdp_watts: Optional[float] = None
    scaleup_bw_gbps_bits: float = 400.0
    scaleout_bw_gbps_bits: float = 400.0
    op_cost_usd_per_hr: Optional[float] = None
    max_per_chassis: int = 8
    assumed: tuple = ()  # field names that are assumptions, not published specs

    def __post_init__(self):
        if self.capex_usd <= 0:
            raise ValueError(f"{self.name}: capex_usd must be > 0")
        for f in ("mem_capacity_gb", "mem_bandwidth_gbps_bytes", "tflops_fp16",
                  "scaleup_bw_gbps_bits", "scaleout_bw_gbps_bits"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{self.name}: {f} must be > 0")
        if self.max_per_chassis < 1:
            raise ValueError(f"{self.name}: max_per_chassis must be >= 1")

    def to_json(self) -> dict:
        d = {
            "name": self.name,
            "vendor": self.vendor,
            "capex_usd": self.capex_usd,
            "mem_capacity_gb": self.mem_capacity_gb,
            "mem_bandwidth_gbps_bytes": self.mem_bandwidth_gbps_bytes,
            "tflops_fp16": self.tflops_fp16,
            "scaleup_bw_gbps_bits": self.scaleup_bw_gbps_bits,
            "scaleout_bw_gbps_bits": self.scaleout_bw_gbps_bits,
            "max_per_chassis": self.max_per_chassis,
        }
        for f in ("tflops_fp8", "tdp_watts", "op_cost_usd_per_hr"):
            if getattr(self, f) is not None:
                d[f] = getattr(self, f)
        if self.assumed:
            d["assumed"] = list(self.assumed)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "DeviceClass":
        d = dict(d)
        d["assumed"] = tuple(d.get("assumed", ()))
        return cls(**d)


@dataclass
class HardwareCatalog:
    classes: dict = field(default_factory=dict)  # name -> DeviceClass
    cost_params: CostModelParams = field(default_factory=CostModelParams)

    def __post_init__(self):
        for name, dc in self.classes.items():
            if name != dc.name:
                raise ValueError(f"catalog key {name!r} != class name {dc.name!r}")

    def __getitem__(self, name: str) -> DeviceClass:
        return self.classes[name]

    def __contains__(self, name: str) -> bool:
        return name in self.classes

    def names(self) -> list:
        return list(self.classes)

    def to_json(self) -> dict:
        return {
            "cost_params": self.cost_params.to_json(),
            "classes": [dc.to_json() for dc in self.classes.values()],
        }

    @classmethod
    def from_json(cls, d: dict) -> "HardwareCatalog":
        classes = {c["name"]: DeviceClass.from_json(c) for c in d.get("classes", [])}
        params = CostModelParams.from_json(d.get("cost_params", {}))
        return cls(classes, params)

    @classmethod
    def load(cls, path) -> "HardwareCatalog":
        with open(path) as f:
            return cls.from_json(json.load(f))


def builtin_catalog() -> HardwareCatalog:
    """The published six-device table. Operating-cost figures are carried
    verbatim; FP8 throughput, TDP, interconnect widths, and chassis sizes
    are not published and shipped as flagged assumptions (FP8 = 2x FP16 on
    devices with FP8 support)."""
    from importlib import resources

    data = resources.files("agentplan.data").joinpath("catalog.json").read_text()
    return HardwareCatalog.from_json(json.loads(data))


def annuity_payment(principal: float, monthly_rate: float, n_months: int) -> float:
    """Level monthly payment P*r*(1+r)^n / ((1+r)^n - 1); straight-line at r=0."""
    if monthly_rate == 0.0:
        return principal / n_months
    grow = (1.0 + monthly_rate) ** n_months
    return principal * monthly_rate * grow / (grow - 1.0)


def hourly_cost(d: DeviceClass, p: Optional[CostModelParams] = None) -> float:
    """$/hr for one device. A published op_cost_usd_per_hr wins outright;
    otherwise amortized capex plus energy at max rated TDP."""
    if d.op_cost_usd_per_hr is not None:
        return d.op_cost_usd_per_hr
    p = p or CostModelParams()
    if d.tdp_watts is None:
        raise MissingTdp(f"{d.name}: no op_cost override and tdp_watts absent")
    n_months = round(p.amortization_years * 12)
    monthly = annuity_payment(d.capex_usd, p.annual_interest_rate / 12.0, n_months)
    energy = d.tdp_watts / 1000.0 * p.energy_usd_per_kwh
    return monthly / p.hours_per_month + energy


@dataclass(frozen=True)
class MarginalCostRow:
    name: str
    usd_per_gbps: float
    usd_per_tflop_fp16: float
    usd_per_tflop_fp8: Optional[float]
    usd_per_gb: float

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "usd_per_gbps": self.usd_per_gbps,
            "usd_per_tflop_fp16": self.usd_per_tflop_fp16,
            "usd_per_tflop_fp8": self.usd_per_tflop_fp8,
            "usd_per_gb": self.usd_per_gb,
        }


def marginal_costs(catalog: HardwareCatalog, basis: str = "capex") -> list:
    """Cost per unit of each resource, per class. basis 'capex' divides the
    purchase price, 'opex' divides the hourly operating cost."""
    if basis not in ("capex", "opex"):
        raise ValueError(f"unknown basis {basis!r}")
    rows = []
    for d in catalog.classes.values():
        cost = d.capex_usd if basis == "capex" else hourly_cost(d, catalog.cost_params)
        rows.append(
            MarginalCostRow(
                name=d.name,
                usd_per_gbps=cost / d.mem_bandwidth_gbps_bytes,
                usd_per_tflop_fp16=cost / d.tflops_fp16,
                usd_per_tflop_fp8=(cost / d.tflops_fp8) if d.tflops_fp8 else None,
                usd_per_gb=cost / d.mem_capacity_gb,
            )
        )
    return rows
