"""Placement objective, constraint checks, and run-level statistics.

The objective has two parts: a server-utilisation term summed over assigned
(node, VM, resource) triples, and a network term rewarding short (ideally
zero-length) physical routes between communicating VMs. Both are evaluated
against the pre-embedding availability snapshot.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import VnesimError
from .substrate import SubstrateNetwork
from .virtual import Embedding, VnRequest, validate_embedding

SCHEMA_VERSION = 1

# Co-located communicating VMs need no physical links at all, which must
# score strictly better than the best single-hop route.
COLOCATION_BONUS = 2.0


@dataclass(frozen=True)
class ObjectiveWeights:
    """Resource preference constants; they must sum to one."""

    cpu: float = 0.4
    mem: float = 0.4
    net: float = 0.2

    def __post_init__(self):
        if min(self.cpu, self.mem, self.net) < 0:
            raise VnesimError("objective weights must be non-negative")
        if abs(self.cpu + self.mem + self.net - 1.0) > 1e-9:
            raise VnesimError("objective weights must sum to 1")


def objective_terms(
    weights: ObjectiveWeights,
    net_before: SubstrateNetwork,
    vn: VnRequest,
    emb: Embedding,
) -> tuple[float, float]:
    """(server term, network term) of the placement objective.

    Server term per assigned VM and resource: w_x * (used + demand) / capacity,
    averaged over the node count. Network term per communicating VM pair:
    w_net / hops of the bandwidth-feasible shortest route between their nodes,
    or the co-location bonus when they share a node.
    """
    if validate_embedding(vn, emb, net_before):
        raise VnesimError(f"vn {vn.id}: embedding invalid, objective undefined")
    m = net_before.node_count
    node_term = 0.0
    for vm in vn.vms:
        node = emb.assignment[vm.id]
        cpu_cap = int(net_before.cpu_capacity[node])
        mem_cap = int(net_before.mem_capacity[node])
        used_cpu = cpu_cap - int(net_before.cpu_avail[node])
        used_mem = mem_cap - int(net_before.mem_avail[node])
        node_term += weights.cpu * (used_cpu + vm.cpu_demand) / cpu_cap / m
        node_term += weights.mem * (used_mem + vm.mem_demand) / mem_cap / m
    link_term = 0.0
    for vl in vn.vlinks:
        src, dst = emb.assignment[vl.a], emb.assignment[vl.b]
        if src == dst:
            link_term += COLOCATION_BONUS * weights.net
            continue
        path = net_before.shortest_feasible_path(src, dst, vl.bw_demand)
        if path is None:  # pragma: no cover - validation rules this out
            raise VnesimError(f"vn {vn.id}: no feasible route for vlink ({vl.a},{vl.b})")
        link_term += weights.net / len(path)
    return node_term, link_term


def objective_value(
    weights: ObjectiveWeights,
    net_before: SubstrateNetwork,
    vn: VnRequest,
    emb: Embedding,
) -> float:
    node_term, link_term = objective_terms(weights, net_before, vn, emb)
    return node_term + link_term


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    witness: str = ""


@dataclass
class ConstraintReport:
    checks: list[ConstraintCheck]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if not c.passed]


def check_constraints(
    vn: VnRequest,
    emb: Embedding,
    net_before: SubstrateNetwork,
    weights: ObjectiveWeights | None = None,
) -> ConstraintReport:
    """Evaluate each placement constraint independently with witnesses."""
    checks: list[ConstraintCheck] = []
    violations = validate_embedding(vn, emb, net_before)

    assign = [v for v in violations if v.constraint == "assign-once"]
    checks.append(
        ConstraintCheck(
            "assign-once",
            not assign,
            "; ".join(f"{v.entity}: {v.detail}" for v in assign),
        )
    )

    infeasible = []
    for vm in vn.vms:
        fits = (net_before.cpu_avail >= vm.cpu_demand) & (net_before.mem_avail >= vm.mem_demand)
        if not bool(fits.any()):
            infeasible.append(f"vm {vm.id}")
    checks.append(
        ConstraintCheck(
            "feasible-node-exists", not infeasible, "no node fits: " + ", ".join(infeasible)
            if infeasible
            else "",
        )
    )

    capacity = [v for v in violations if v.constraint in ("node-capacity", "link-path", "link-bandwidth")]
    checks.append(
        ConstraintCheck(
            "demand-within-availability",
            not capacity,
            "; ".join(f"{v.entity}: {v.detail}" for v in capacity),
        )
    )

    if weights is not None:
        total = weights.cpu + weights.mem + weights.net
        checks.append(
            ConstraintCheck(
                "weights-sum-to-one",
                abs(total - 1.0) <= 1e-9 and min(weights.cpu, weights.mem, weights.net) >= 0,
                f"sum={total!r}",
            )
        )
    return ConstraintReport(checks)


# -- run statistics -------------------------------------------------------------

@dataclass
class LogPoint:
    """System state right after one simulation event was applied."""

    t: float
    cpu_alloc: int
    mem_alloc: int
    cpu_used: float
    mem_used: float
    active: int
    accepted: int
    rejected: int


def node_utilization(net: SubstrateNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Per-node (cpu, mem) allocated fraction of capacity right now."""
    cpu = (net.cpu_capacity - net.cpu_avail) / np.maximum(net.cpu_capacity, 1)
    mem = (net.mem_capacity - net.mem_avail) / np.maximum(net.mem_capacity, 1)
    return cpu, mem


def time_weighted_stats(times: list[float], values: list[float]) -> tuple[float, float]:
    """Mean and standard deviation of a piecewise-constant series.

    ``values[i]`` holds on [times[i], times[i+1]); the final point carries no
    weight. Event-boundary sampling makes this exact for allocation series.
    """
    if not values:
        return 0.0, 0.0
    if len(values) == 1:
        return float(values[0]), 0.0
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)[:-1]
    widths = np.diff(t)
    total = float(widths.sum())
    if total <= 0.0:
        return float(values[-1]), 0.0
    mean = float((v * widths).sum() / total)
    var = float((widths * (v - mean) ** 2).sum() / total)
    return mean, float(np.sqrt(max(var, 0.0)))


@dataclass
class SeriesSummary:
    mean: float
    std: float


@dataclass
class UtilizationSeries:
    """Occupancy (allocated/capacity) and efficiency (used/allocated) series."""

    times: list[float]
    cpu_occupancy: list[float]
    mem_occupancy: list[float]
    cpu_efficiency: list[float]
    mem_efficiency: list[float]

    def summary(self) -> dict[str, SeriesSummary]:
        out = {}
        for name in ("cpu_occupancy", "mem_occupancy", "cpu_efficiency", "mem_efficiency"):
            mean, std = time_weighted_stats(self.times, getattr(self, name))
            out[name] = SeriesSummary(mean=mean, std=std)
        return out


def utilization_series(log: list[LogPoint], net: SubstrateNetwork) -> UtilizationSeries:
    """Aggregate utilisation over time from the event-stamped run log.

    Efficiency points where nothing is allocated repeat the previous value
    (1.0 initially) so the series stays piecewise constant.
    """
    cpu_cap = int(net.cpu_capacity.sum())
    mem_cap = int(net.mem_capacity.sum())
    times: list[float] = []
    cpu_occ: list[float] = []
    mem_occ: list[float] = []
    cpu_eff: list[float] = []
    mem_eff: list[float] = []
    last_cpu_eff = 1.0
    last_mem_eff = 1.0
    for point in log:
        times.append(point.t)
        cpu_occ.append(point.cpu_alloc / cpu_cap if cpu_cap else 0.0)
        mem_occ.append(point.mem_alloc / mem_cap if mem_cap else 0.0)
        if point.cpu_alloc > 0:
            last_cpu_eff = point.cpu_used / point.cpu_alloc
        if point.mem_alloc > 0:
            last_mem_eff = point.mem_used / point.mem_alloc
        cpu_eff.append(last_cpu_eff)
        mem_eff.append(last_mem_eff)
    return UtilizationSeries(times, cpu_occ, mem_occ, cpu_eff, mem_eff)


@dataclass
class RunMetrics:
    """Headline statistics of one simulated run."""

    total_requests: int
    accepted: int
    rejected: int
    acceptance_rate: float
    duration: float
    throughput: float  # requests processed per time unit
    cpu_occupancy_mean: float
    cpu_occupancy_std: float
    mem_occupancy_mean: float
    mem_occupancy_std: float
    cpu_efficiency_mean: float
    cpu_efficiency_std: float
    mem_efficiency_mean: float
    mem_efficiency_std: float
    allocation_fraction_cpu: float
    allocation_fraction_mem: float
    allocation_fraction: float
    admission_accuracy: Optional[float] = None
    vm_type_share_error: Optional[float] = None
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {}
        for name, value in self.__dict__.items():
            out[name] = value
        return out


def acceptance_and_allocation_stats(
    log: list[LogPoint],
    net: SubstrateNetwork,
    demand_cpu: int,
    demand_mem: int,
    alloc_cpu: int,
    alloc_mem: int,
    admission_accuracy: Optional[float] = None,
    vm_type_share_error: Optional[float] = None,
) -> RunMetrics:
    """Fold a run log plus allocation tallies into RunMetrics.

    The allocation fraction compares what was handed to accepted requests
    with what they demanded; it stays below one whenever allocations are
    scaled to predicted usage.
    """
    if not log:
        raise VnesimError("empty run log")
    accepted = log[-1].accepted
    rejected = log[-1].rejected
    total = accepted + rejected
    duration = log[-1].t - log[0].t
    series = utilization_series(log, net)
    summary = series.summary()
    frac_cpu = alloc_cpu / demand_cpu if demand_cpu else 1.0
    frac_mem = alloc_mem / demand_mem if demand_mem else 1.0
    return RunMetrics(
        total_requests=total,
        accepted=accepted,
        rejected=rejected,
        acceptance_rate=accepted / total if total else 0.0,
        duration=duration,
        throughput=total / duration if duration > 0 else 0.0,
        cpu_occupancy_mean=summary["cpu_occupancy"].mean,
        cpu_occupancy_std=summary["cpu_occupancy"].std,
        mem_occupancy_mean=summary["mem_occupancy"].mean,
        mem_occupancy_std=summary["mem_occupancy"].std,
        cpu_efficiency_mean=summary["cpu_efficiency"].mean,
        cpu_efficiency_std=summary["cpu_efficiency"].std,
        mem_efficiency_mean=summary["mem_efficiency"].mean,
        mem_efficiency_std=summary["mem_efficiency"].std,
        allocation_fraction_cpu=frac_cpu,
        allocation_fraction_mem=frac_mem,
        allocation_fraction=0.5 * (frac_cpu + frac_mem),
        admission_accuracy=admission_accuracy,
        vm_type_share_error=vm_type_share_error,
    )


# -- emission --------------------------------------------------------------------

METRICS_CSV_COLUMNS = (
    "schema_version",
    "bucket_start",
    "cpu_occupancy",
    "mem_occupancy",
    "cpu_efficiency",
    "mem_efficiency",
    "active",
    "accepted",
    "rejected",
)


def metrics_csv(log: list[LogPoint], net: SubstrateNetwork, bucket: float = 500.0) -> str:
    """Time-bucketed utilisation rows; occupancy/efficiency are time-weighted
    within each bucket."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_CSV_COLUMNS)
    if not log:
        return buf.getvalue()
    series = utilization_series(log, net)
    t0 = series.times[0]
    t_end = series.times[-1]
    edges = [t0]
    while edges[-1] < t_end:
        edges.append(edges[-1] + bucket)
    times = np.asarray(series.times)
    point_index = 0
    for k in range(len(edges) - 1):
        lo, hi = edges[k], edges[k + 1]
        idx = np.flatnonzero((times >= lo) & (times < hi))
        if len(idx) == 0:
            continue
        sub_t = [times[i] for i in idx] + [min(hi, t_end)]
        row = [SCHEMA_VERSION, repr(float(lo))]
        for name in ("cpu_occupancy", "mem_occupancy", "cpu_efficiency", "mem_efficiency"):
            vals = [getattr(series, name)[i] for i in idx] + [getattr(series, name)[idx[-1]]]
            mean, _ = time_weighted_stats(sub_t, vals)
            row.append(repr(float(mean)))
        last = log[int(idx[-1])]
        row.extend([last.active, last.accepted, last.rejected])
        writer.writerow(row)
        point_index += len(idx)
    return buf.getvalue()


def metrics_json(metrics: RunMetrics, extra: Optional[dict] = None) -> str:
    payload = metrics.to_dict()
    if extra:
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
