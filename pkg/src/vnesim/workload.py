"""Workload generation and the labeled historical trace.

Generates random substrate networks and request streams, replays completed
simulation episodes into labeled trace records, persists the trace as CSV,
and splits it for training. Generation is a pure function of (config, seed).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .errors import ConfigError, GenerationError, VnesimError
from .seeding import component_rng
from .substrate import KIND_ORDER, SubstrateNetwork, SubstrateNode
from .virtual import (
    DelayClass,
    VirtualLink,
    VirtualMachine,
    VmType,
    VnRequest,
)

TRACE_COLUMNS = (
    "vn_id",
    "vm_id",
    "cpu_demand",
    "mem_demand",
    "vm_class",
    "priority",
    "start",
    "end",
    "actual_cpu",
    "actual_mem",
    "vn_label",
    "vm_type",
)

LABEL_ACCEPTED = "accepted"
LABEL_REJECTED = "rejected"


@dataclass
class WorkloadConfig:
    """Knobs for substrate, stream, and trace generation.

    Memory defaults follow the small-scale setup; the larger memory variant
    (substrate 20000-50000 MB, VM 8000-10000 MB) stays reachable through the
    same fields.
    """

    seed: int = 0
    sn_count: int = 100
    link_prob: float = 0.6
    sn_cpu_range: tuple[int, int] = (16, 32)
    sn_mem_range: tuple[int, int] = (2000, 5000)
    sn_bw_range: tuple[int, int] = (1000, 10000)
    sn_clock_range: tuple[int, int] = (1000, 4000)
    # Share of CpuRich / GpuRich / MemRich nodes.
    sn_kind_mix: tuple[float, float, float] = (0.35, 0.17, 0.48)
    vn_count: int = 15000
    vms_per_vn: tuple[int, int] = (2, 10)
    vlink_prob: float = 0.6
    vm_cpu_range: tuple[int, int] = (1, 4)
    vm_mem_range: tuple[int, int] = (500, 4096)
    vlink_bw_range: tuple[int, int] = (100, 500)
    arrival_mean_per_100: float = 5.0  # requests per hundred time units
    lifetime_mean: float = 500.0
    vm_usage_range: tuple[float, float] = (0.30, 0.99)
    # Requests whose end time falls beyond the simulation horizon. 0.05 would
    # let immortal requests swallow the whole default substrate within the
    # first few hundred arrivals, so the default keeps a live system while
    # still letting occupancy pressure build over the run.
    unexpired_frac: float = 0.008
    # Usage fraction model: small demands run hot, large ones cold
    # (over-provisioning effect). The mean usage (as a position inside
    # vm_usage_range) slides from the first value down to the second across
    # the demand range, with truncated Gaussian noise of usage_noise around
    # it. Memory runs a little hotter than cpu across the board.
    usage_mean_range_cpu: tuple[float, float] = (0.82, 0.27)
    usage_mean_range_mem: tuple[float, float] = (0.85, 0.30)
    usage_noise: float = 0.10
    # Latent GPU affinity: a class-dependent base, rising with the demand
    # position (large allocations that offload compute run cold on cpu and
    # memory but hot on the accelerator), plus truncated Gaussian noise.
    gpu_affinity_base_by_class: tuple[float, float, float] = (0.55, 0.30, 0.08)
    gpu_affinity_demand_gain: float = 0.35
    gpu_affinity_noise: float = 0.06
    # Lifetime scale per delay class; mean of the three stays 1.0.
    lifetime_factor_by_class: tuple[float, float, float] = (0.6, 1.0, 1.4)
    # Dominant-resource weights calibrated so type shares land in the
    # observed bands (cpu 30-40%, mem 40-48%, gpu 15-19%).
    label_weights: tuple[float, float, float] = (1.00, 1.00, 0.90)
    max_connect_retries: int = 50

    def validate(self) -> None:
        for name in (
            "sn_cpu_range",
            "sn_mem_range",
            "sn_bw_range",
            "sn_clock_range",
            "vms_per_vn",
            "vm_cpu_range",
            "vm_mem_range",
            "vlink_bw_range",
            "vm_usage_range",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: empty range ({lo}, {hi})")
        for name in ("link_prob", "vlink_prob", "unexpired_frac"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name}: probability {p} outside [0, 1]")
        if self.arrival_mean_per_100 <= 0 or self.lifetime_mean <= 0:
            raise ConfigError("arrival and lifetime means must be positive")
        if self.sn_count < 1 or self.vn_count < 0:
            raise ConfigError("sn_count must be >= 1 and vn_count >= 0")
        if abs(sum(self.sn_kind_mix) - 1.0) > 1e-9 or min(self.sn_kind_mix) < 0:
            raise ConfigError("sn_kind_mix must be a distribution over 3 kinds")
        lo, hi = self.vm_usage_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError("vm_usage_range must lie inside (0, 1]")

    @property
    def mean_interarrival(self) -> float:
        return 100.0 / self.arrival_mean_per_100

    @property
    def horizon(self) -> float:
        """Nominal stream duration, used as a fixed time scale for features."""
        return max(self.vn_count, 1) * self.mean_interarrival


def generate_substrate(cfg: WorkloadConfig) -> SubstrateNetwork:
    """Random connected substrate per the configured ranges.

    Each unordered node pair is linked independently with ``link_prob``;
    disconnected draws are retried a bounded number of times.
    """
    cfg.validate()
    rng = component_rng(cfg.seed, "substrate")
    m = cfg.sn_count
    for _ in range(cfg.max_connect_retries):
        nodes = []
        kind_codes = rng.choice(len(KIND_ORDER), size=m, p=list(cfg.sn_kind_mix))
        for i in range(m):
            nodes.append(
                SubstrateNode(
                    id=i,
                    cpu_capacity=int(rng.integers(cfg.sn_cpu_range[0], cfg.sn_cpu_range[1] + 1)),
                    mem_capacity=int(rng.integers(cfg.sn_mem_range[0], cfg.sn_mem_range[1] + 1)),
                    clock_avail=int(
                        rng.integers(cfg.sn_clock_range[0], cfg.sn_clock_range[1] + 1)
                    ),
                    kind=KIND_ORDER[int(kind_codes[i])],
                )
            )
        net = SubstrateNetwork(nodes)
        for i in range(m):
            for j in range(i + 1, m):
                if rng.random() < cfg.link_prob:
                    net.add_link(
                        i, j, int(rng.integers(cfg.sn_bw_range[0], cfg.sn_bw_range[1] + 1))
                    )
        if net.is_connected():
            return net
    raise GenerationError(
        f"no connected substrate in {cfg.max_connect_retries} attempts "
        f"(link_prob={cfg.link_prob})"
    )


@dataclass
class GeneratedVn:
    """A request plus the latent outcomes the simulator will observe.

    ``lifetime`` is None for requests that outlive the simulation horizon.
    ``usages`` holds one (cpu_frac, mem_frac, gpu_affinity) triple per VM in
    ``vn.vms`` order; usage fractions are of the demanded amount.
    """

    vn: VnRequest
    lifetime: Optional[float]
    usages: list[tuple[float, float, float]]

    @property
    def end(self) -> Optional[float]:
        return None if self.lifetime is None else self.vn.start + self.lifetime


def _draw_usage(
    rng: np.random.Generator,
    cfg: WorkloadConfig,
    demand: int,
    lo: int,
    hi: int,
    mean_range: tuple[float, float],
) -> float:
    """Usage fraction for one resource of one VM.

    The mean position inside vm_usage_range falls linearly with the demand's
    position inside its range; clipped Gaussian noise keeps every draw inside
    the configured usage envelope.
    """
    m_hot, m_cold = mean_range
    pos = 0.5 if hi == lo else (demand - lo) / (hi - lo)
    mean = m_hot + (m_cold - m_hot) * pos
    z = min(1.0, max(0.0, mean + cfg.usage_noise * float(rng.standard_normal())))
    u_lo, u_hi = cfg.vm_usage_range
    return u_lo + (u_hi - u_lo) * z


def _draw_gpu_affinity(
    rng: np.random.Generator, cfg: WorkloadConfig, vm: VirtualMachine
) -> float:
    base = cfg.gpu_affinity_base_by_class[int(vm.vm_class) - 1]
    c_lo, c_hi = cfg.vm_cpu_range
    m_lo, m_hi = cfg.vm_mem_range
    c_pos = 0.5 if c_hi == c_lo else (vm.cpu_demand - c_lo) / (c_hi - c_lo)
    m_pos = 0.5 if m_hi == m_lo else (vm.mem_demand - m_lo) / (m_hi - m_lo)
    mean = base + cfg.gpu_affinity_demand_gain * 0.5 * (c_pos + m_pos)
    return min(1.0, max(0.0, mean + cfg.gpu_affinity_noise * float(rng.standard_normal())))


def generate_vn_stream(cfg: WorkloadConfig) -> list[GeneratedVn]:
    """Time-ordered request stream with latent lifetimes and usage draws.

    Arrival gaps are exponential with the configured mean; lifetimes are
    exponential, scaled per delay class so the overall mean is preserved.
    """
    cfg.validate()
    rng = component_rng(cfg.seed, "stream")
    stream: list[GeneratedVn] = []
    t = 0.0
    for vn_id in range(cfg.vn_count):
        t += float(rng.exponential(cfg.mean_interarrival))
        n_vms = int(rng.integers(cfg.vms_per_vn[0], cfg.vms_per_vn[1] + 1))
        vms = []
        for vm_id in range(n_vms):
            vms.append(
                VirtualMachine(
                    id=vm_id,
                    cpu_demand=int(rng.integers(cfg.vm_cpu_range[0], cfg.vm_cpu_range[1] + 1)),
                    mem_demand=int(rng.integers(cfg.vm_mem_range[0], cfg.vm_mem_range[1] + 1)),
                    vm_class=DelayClass(int(rng.integers(1, 4))),
                    start=t,
                )
            )
        vlinks = []
        for a in range(n_vms):
            for b in range(a + 1, n_vms):
                if rng.random() < cfg.vlink_prob:
                    vlinks.append(
                        VirtualLink(
                            a,
                            b,
                            int(rng.integers(cfg.vlink_bw_range[0], cfg.vlink_bw_range[1] + 1)),
                        )
                    )
        vn = VnRequest(id=vn_id, vms=vms, vlinks=vlinks, start=t)
        base_lifetime = float(rng.exponential(cfg.lifetime_mean))
        unexpired = bool(rng.random() < cfg.unexpired_frac)
        lifetime = None
        if not unexpired:
            lifetime = base_lifetime * cfg.lifetime_factor_by_class[int(vn.vn_class) - 1]
        usages = []
        for vm in vms:
            u_cpu = _draw_usage(
                rng, cfg, vm.cpu_demand, *cfg.vm_cpu_range, cfg.usage_mean_range_cpu
            )
            u_mem = _draw_usage(
                rng, cfg, vm.mem_demand, *cfg.vm_mem_range, cfg.usage_mean_range_mem
            )
            gpu = _draw_gpu_affinity(rng, cfg, vm)
            usages.append((u_cpu, u_mem, gpu))
        stream.append(GeneratedVn(vn=vn, lifetime=lifetime, usages=usages))
    return stream


def vm_type_label(cfg: WorkloadConfig, usage: tuple[float, float, float]) -> VmType:
    """Dominant-resource rule: normalise the triple and take the argmax.

    Ties break CpuIntensive > MemIntensive > GpuIntensive so labeling is
    deterministic.
    """
    lo, hi = cfg.vm_usage_range
    span = max(hi - lo, 1e-12)
    w_cpu, w_mem, w_gpu = cfg.label_weights
    z_cpu = (usage[0] - lo) / span * w_cpu
    z_mem = (usage[1] - lo) / span * w_mem
    z_gpu = usage[2] * w_gpu
    if z_cpu >= z_mem and z_cpu >= z_gpu:
        return VmType.CPU_INTENSIVE
    if z_mem >= z_gpu:
        return VmType.MEM_INTENSIVE
    return VmType.GPU_INTENSIVE


@dataclass
class VmOutcome:
    """Observed results for one VM of a completed request."""

    end: float
    actual_cpu: float
    actual_mem: float
    vm_type: VmType


@dataclass
class TraceRecord:
    """One historical request with its admission label and, when the request
    ran to completion, per-VM observed outcomes."""

    vn: VnRequest
    label: str  # accepted | rejected
    end: Optional[float] = None
    outcomes: Optional[list[VmOutcome]] = None

    @property
    def accepted(self) -> bool:
        return self.label == LABEL_ACCEPTED

    @property
    def completed(self) -> bool:
        return self.outcomes is not None


def label_trace(episodes: list[tuple[GeneratedVn, bool]], cfg: WorkloadConfig) -> list[TraceRecord]:
    """Turn simulated episodes into labeled trace records.

    The admission label records whether the reference embedder placed the
    request without violating a constraint. Per-VM outcomes (end time, actual
    usage, dominant-resource type) exist only for accepted requests that
    completed inside the horizon.
    """
    records = []
    for gvn, accepted in episodes:
        if not isinstance(accepted, bool):
            raise VnesimError(f"vn {gvn.vn.id}: episode outcome missing")
        if not accepted:
            records.append(TraceRecord(vn=gvn.vn, label=LABEL_REJECTED))
            continue
        if gvn.lifetime is None:
            records.append(TraceRecord(vn=gvn.vn, label=LABEL_ACCEPTED))
            continue
        end = gvn.vn.start + gvn.lifetime
        outcomes = []
        for vm, usage in zip(gvn.vn.vms, gvn.usages):
            outcomes.append(
                VmOutcome(
                    end=end,
                    actual_cpu=usage[0] * vm.cpu_demand,
                    actual_mem=usage[1] * vm.mem_demand,
                    vm_type=vm_type_label(cfg, usage),
                )
            )
        records.append(TraceRecord(vn=gvn.vn, label=LABEL_ACCEPTED, end=end, outcomes=outcomes))
    return records


def rescale_stream(stream: list[GeneratedVn], scale: float) -> list[GeneratedVn]:
    """Compress a stream's arrival times by ``scale`` (lifetimes untouched).

    Splitting a Poisson stream thins its arrivals; replaying one side at the
    kept fraction restores the rate the whole stream was drawn with, so the
    replayed system traverses the same load trajectory as the original run.
    """
    if scale <= 0:
        raise ConfigError(f"stream time scale must be positive, got {scale}")
    out = []
    for gvn in stream:
        start = gvn.vn.start * scale
        vms = [
            VirtualMachine(
                id=vm.id,
                cpu_demand=vm.cpu_demand,
                mem_demand=vm.mem_demand,
                vm_class=vm.vm_class,
                start=start,
            )
            for vm in gvn.vn.vms
        ]
        vn = VnRequest(id=gvn.vn.id, vms=vms, vlinks=list(gvn.vn.vlinks), start=start)
        out.append(GeneratedVn(vn=vn, lifetime=gvn.lifetime, usages=list(gvn.usages)))
    return out


def split_train_test(items: list, ratio: float = 0.66, seed: int = 0) -> tuple[list, list]:
    """Seeded disjoint partition; sizes match the ratio within one item.

    Both halves preserve the original order so streams stay time-ordered.
    """
    if not items:
        raise VnesimError("cannot split an empty trace")
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"split ratio {ratio} outside [0, 1]")
    n = len(items)
    n_train = int(round(n * ratio))
    perm = component_rng(seed, "split").permutation(n)
    train_idx = sorted(perm[:n_train].tolist())
    test_idx = sorted(perm[n_train:].tolist())
    return [items[i] for i in train_idx], [items[i] for i in test_idx]


def two_sample_t(a, b) -> tuple[float, float]:
    """Welch two-sample t-test between metric samples of independent runs."""
    result = stats.ttest_ind(np.asarray(a, dtype=float), np.asarray(b, dtype=float), equal_var=False)
    return float(result.statistic), float(result.pvalue)


# -- trace CSV -------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def trace_to_csv(records: list[TraceRecord]) -> str:
    """One row per VM; outcome columns are empty when unobserved."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for rec in records:
        for i, vm in enumerate(rec.vn.vms):
            out = rec.outcomes[i] if rec.outcomes else None
            writer.writerow(
                [
                    rec.vn.id,
                    vm.id,
                    vm.cpu_demand,
                    vm.mem_demand,
                    int(vm.vm_class),
                    vm.priority,
                    _fmt(vm.start),
                    _fmt(out.end if out else None),
                    _fmt(out.actual_cpu if out else None),
                    _fmt(out.actual_mem if out else None),
                    rec.label,
                    out.vm_type.value if out else "",
                ]
            )
    return buf.getvalue()


def trace_rows_from_csv(text: str) -> list[dict]:
    """Parse trace CSV into per-VM dict rows (no request reassembly)."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
        raise VnesimError("trace CSV has an unexpected header")
    rows = []
    for raw in reader:
        rows.append(
            {
                "vn_id": int(raw["vn_id"]),
                "vm_id": int(raw["vm_id"]),
                "cpu_demand": int(raw["cpu_demand"]),
                "mem_demand": int(raw["mem_demand"]),
                "vm_class": int(raw["vm_class"]),
                "priority": int(raw["priority"]),
                "start": float(raw["start"]),
                "end": float(raw["end"]) if raw["end"] else None,
                "actual_cpu": float(raw["actual_cpu"]) if raw["actual_cpu"] else None,
                "actual_mem": float(raw["actual_mem"]) if raw["actual_mem"] else None,
                "vn_label": raw["vn_label"],
                "vm_type": VmType(raw["vm_type"]) if raw["vm_type"] else None,
            }
        )
    return rows


# -- stream persistence ------------------------------------------------------
#
# The request lines reuse the vn/vm/vlink wire format; extra "lifetime" and
# "usage" lines carry the latent outcomes needed to replay a stream.

def stream_to_text(stream: list[GeneratedVn]) -> str:
    from .virtual import vn_to_text

    parts = []
    for gvn in stream:
        parts.append(vn_to_text(gvn.vn))
        parts.append(f"lifetime {'-' if gvn.lifetime is None else repr(gvn.lifetime)}\n")
        for vm, usage in zip(gvn.vn.vms, gvn.usages):
            parts.append(f"usage {vm.id} {usage[0]!r} {usage[1]!r} {usage[2]!r}\n")
    return "".join(parts)


def stream_from_text(text: str) -> list[GeneratedVn]:
    from .virtual import vn_from_text

    stream: list[GeneratedVn] = []
    block: list[str] = []
    lifetime: Optional[float] = None
    usages: dict[int, tuple[float, float, float]] = {}

    def flush():
        if not block:
            return
        vn = vn_from_text("\n".join(block))
        ordered = [usages[vm.id] for vm in vn.vms]
        stream.append(GeneratedVn(vn=vn, lifetime=lifetime, usages=ordered))

    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        head = line.split()[0]
        if head == "vn":
            flush()
            block = [line]
            lifetime = None
            usages = {}
        elif head in ("vm", "vlink"):
            block.append(line)
        elif head == "lifetime":
            token = line.split()[1]
            lifetime = None if token == "-" else float(token)
        elif head == "usage":
            parts = line.split()
            usages[int(parts[1])] = (float(parts[2]), float(parts[3]), float(parts[4]))
        else:
            raise VnesimError(f"unexpected line in stream text: {line}")
    flush()
    return stream
