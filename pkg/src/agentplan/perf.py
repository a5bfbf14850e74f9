"""Analytic roofline latency/throughput models for prefill and decode.

FLOP counts are dense (2 * params * tokens). Time is the larger of the
compute and memory-streaming terms plus all-reduce sync overhead and, for
pipeline stages, per-boundary activation transfer. Everything is pure and
deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .errors import ModelTooLarge
from .hardware import DeviceClass

GB = 1e9


@dataclass(frozen=True)
class ModelSpec:
    name: str
    params_billion: float
    n_layers: int
    d_model: int
    n_heads: int
    n_kv_heads: int
    bytes_per_element: int  # 2 for FP16, 1 for FP8
    precision: str = "fp16"

    def __post_init__(self):
        if self.n_kv_heads > self.n_heads:
            raise ValueError(f"{self.name}: n_kv_heads > n_heads")
        if self.d_model % self.n_heads:
            raise ValueError(f"{self.name}: n_heads must divide d_model")
        if self.bytes_per_element not in (1, 2):
            raise ValueError(f"{self.name}: bytes_per_element must be 1 or 2")

    @property
    def params(self) -> float:
        return self.params_billion * 1e9

    @property
    def weight_bytes(self) -> float:
        return self.params * self.bytes_per_element

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "params_billion": self.params_billion,
            "n_layers": self.n_layers,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_kv_heads": self.n_kv_heads,
            "bytes_per_element": self.bytes_per_element,
            "precision": self.precision,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass(frozen=True)
class WorkloadShape:
    isl_tokens: int
    osl_tokens: int
    batch_size: int = 1

    def __post_init__(self):
        if self.isl_tokens < 0 or self.osl_tokens < 0:
            raise ValueError("sequence lengths must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class ParallelismConfig:
    tp_degree: int = 1
    pp_degree: int = 1
    replicas: int = 1

    def __post_init__(self):
        if min(self.tp_degree, self.pp_degree, self.replicas) < 1:
            raise ValueError("parallelism degrees must be >= 1")

    @property
    def devices(self) -> int:
        return self.tp_degree * self.pp_degree


@dataclass(frozen=True)
class PerfEstimate:
    ttft_ms: float
    tbt_ms: float
    tokens_per_sec: float
    flops_used: float
    bytes_moved: float
    bound: str  # compute | memory | network
    comm_overhead_ms: float = 0.0
    pipeline_transfer_ms: float = 0.0

    def to_json(self) -> dict:
        return {
            "ttft_ms": self.ttft_ms,
            "tbt_ms": self.tbt_ms,
            "tokens_per_sec": self.tokens_per_sec,
            "flops_used": self.flops_used,
            "bytes_moved": self.bytes_moved,
            "bound": self.bound,
            "comm_overhead_ms": self.comm_overhead_ms,
            "pipeline_transfer_ms": self.pipeline_transfer_ms,
        }


def load_models(path) -> dict:
    with open(path) as f:
        entries = json.load(f)
    return {e["name"]: ModelSpec.from_json(e) for e in entries}


def builtin_models() -> dict:
    """LLaMA 3 8B/70B in FP16 and FP8; architecture constants from the
    public model cards."""
    from importlib import resources

    data = resources.files("agentplan.data").joinpath("models.json").read_text()
    return {e["name"]: ModelSpec.from_json(e) for e in json.loads(data)}


def kv_per_token_bytes(m: ModelSpec) -> int:
    # d_model/n_heads is the head dimension; exact integer by invariant
    return 2 * m.n_layers * (m.d_model // m.n_heads) * m.n_kv_heads * m.bytes_per_element


def kv_cache_bytes(m: ModelSpec, isl: int, bs: int) -> int:
    """Peak KV-cache footprint: 2 * layers * d_model * (kv/heads) * ISL * BS * BPE,
    exact integer arithmetic."""
    if isl < 0:
        raise ValueError("isl must be >= 0")
    if bs < 1:
        raise ValueError("bs must be >= 1")
    return kv_per_token_bytes(m) * isl * bs


def peak_egress_gbps(kv_bytes: float, ttft_ms: float, n_prefill_gpu: int) -> float:
    """Per-GPU egress bandwidth (Gb/s) for non-blocking KV hand-off out of
    the prefill pool."""
    if ttft_ms <= 0:
        raise ValueError("ttft_ms must be > 0")
    if n_prefill_gpu < 1:
        raise ValueError("n_prefill_gpu must be >= 1")
    return 8.0 * kv_bytes / (ttft_ms / 1e3 * n_prefill_gpu) / 1e9


def peak_ingress_gbps(kv_bytes: float, tbt_ms: float, n_decode_gpu: int) -> float:
    """Per-GPU ingress bandwidth (Gb/s) into the decode pool."""
    if tbt_ms <= 0:
        raise ValueError("tbt_ms must be > 0")
    if n_decode_gpu < 1:
        raise ValueError("n_decode_gpu must be >= 1")
    return 8.0 * kv_bytes / (tbt_ms / 1e3 * n_decode_gpu) / 1e9


def _tflops_eff(m: ModelSpec, device: DeviceClass) -> float:
    if m.precision == "fp8" and device.tflops_fp8:
        return device.tflops_fp8
    return device.tflops_fp16


def _check_fit(m: ModelSpec, device: DeviceClass, par: ParallelismConfig) -> float:
    shard = m.weight_bytes / par.devices
    if shard > device.mem_capacity_gb * GB:
        raise ModelTooLarge(
            f"{m.name} needs {shard / GB:.1f} GB/device on {device.name} "
            f"({device.mem_capacity_gb} GB) at tp={par.tp_degree} pp={par.pp_degree}")
    return shard


def _interconnect_gbps(device: DeviceClass, par: ParallelismConfig) -> float:
    if par.devices <= device.max_per_chassis:
        return device.scaleup_bw_gbps_bits
    return device.scaleout_bw_gbps_bits


def comm_overhead_ms(m: ModelSpec, shape: WorkloadShape, par: ParallelismConfig,
                     link_gbps: float, seq_tokens: Optional[int] = None) -> float:
    """Ring all-reduce sync overhead per forward pass; zero at tp=1."""
    tp = par.tp_degree
    if tp == 1:
        return 0.0
    seq = shape.isl_tokens if seq_tokens is None else seq_tokens
    payload = (2.0 * (tp - 1) / tp * m.n_layers * m.d_model
               * shape.batch_size * seq * m.bytes_per_element)
    return 8.0 * payload / (link_gbps * 1e9) * 1e3


def _pipeline_transfer_ms(m: ModelSpec, device: DeviceClass, par: ParallelismConfig,
                          seq: int, bs: int) -> float:
    if par.pp_degree == 1:
        return 0.0
    act_bytes = m.d_model * seq * bs * m.bytes_per_element
    link = _interconnect_gbps(device, par)
    return (par.pp_degree - 1) * 8.0 * act_bytes / (link * 1e9) * 1e3


def prefill_time_ms(m: ModelSpec, shape: WorkloadShape, device: DeviceClass,
                    par: ParallelismConfig = ParallelismConfig(),
                    mfu: float = 1.0, static_latency_ms: float = 0.0) -> PerfEstimate:
    """Time to first token for processing the full input sequence."""
    if not 0.0 < mfu <= 1.0:
        raise ValueError("mfu must be in (0, 1]")
    _check_fit(m, device, par)
    isl, bs = shape.isl_tokens, shape.batch_size
    flops = 2.0 * m.params * isl * bs
    kv = kv_cache_bytes(m, isl, bs)
    bytes_moved = m.weight_bytes / par.tp_degree + kv
    compute_ms = flops / (_tflops_eff(m, device) * 1e12 * mfu * par.tp_degree) * 1e3
    mem_ms = bytes_moved / (device.mem_bandwidth_gbps_bytes * GB) * 1e3
    delta = comm_overhead_ms(m, shape, par, _interconnect_gbps(device, par), seq_tokens=isl)
    d = _pipeline_transfer_ms(m, device, par, seq=isl, bs=bs)
    ttft = max(compute_ms, mem_ms) + delta + d + static_latency_ms
    return PerfEstimate(
        ttft_ms=ttft,
        tbt_ms=0.0,
        tokens_per_sec=(isl * bs * 1e3 / ttft) if ttft > 0 else 0.0,
        flops_used=flops,
        bytes_moved=bytes_moved,
        bound="compute" if compute_ms >= mem_ms else "memory",
        comm_overhead_ms=delta,
        pipeline_transfer_ms=d,
    )


def decode_time_ms(m: ModelSpec, shape: WorkloadShape, device: DeviceClass,
                   par: ParallelismConfig = ParallelismConfig(),
                   mfu: float = 1.0, mem_stream_eff: float = 1.0) -> PerfEstimate:
    """Per-step token latency; KV bytes use the mean decode context ISL+OSL/2."""
    if not 0.0 < mfu <= 1.0:
        raise ValueError("mfu must be in (0, 1]")
    if not 0.0 < mem_stream_eff <= 1.0:
        raise ValueError("mem_stream_eff must be in (0, 1]")
    _check_fit(m, device, par)
    bs = shape.batch_size
    mean_ctx = shape.isl_tokens + shape.osl_tokens / 2.0
    kv_ctx = kv_per_token_bytes(m) * mean_ctx * bs
    flops = 2.0 * m.params * bs
    bytes_moved = m.weight_bytes / par.tp_degree + kv_ctx
    compute_ms = flops / (_tflops_eff(m, device) * 1e12 * mfu * par.tp_degree) * 1e3
    mem_ms = bytes_moved / (device.mem_bandwidth_gbps_bytes * GB * mem_stream_eff) * 1e3
    delta = comm_overhead_ms(m, shape, par, _interconnect_gbps(device, par), seq_tokens=1)
    d = _pipeline_transfer_ms(m, device, par, seq=1, bs=bs)
    tbt = max(compute_ms, mem_ms) + delta + d
    return PerfEstimate(
        ttft_ms=0.0,
        tbt_ms=tbt,
        tokens_per_sec=(bs * 1e3 / tbt) if tbt > 0 else 0.0,
        flops_used=flops,
        bytes_moved=bytes_moved,
        bound="compute" if compute_ms >= mem_ms else "memory",
        comm_overhead_ms=delta,
        pipeline_transfer_ms=d,
    )


def max_batch(m: ModelSpec, shape: WorkloadShape, device: DeviceClass,
              par: ParallelismConfig = ParallelismConfig()) -> int:
    """Largest batch whose full-context KV cache fits beside the weight shard."""
    residual = device.mem_capacity_gb * GB - m.weight_bytes / par.devices
    if residual <= 0:
        return 0
    per_request = kv_cache_bytes(m, shape.isl_tokens + shape.osl_tokens, 1)
    if per_request == 0:
        return 1 << 20  # no KV pressure; effectively unbounded
    return int(residual // per_request)
