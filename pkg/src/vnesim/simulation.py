"""Discrete-event simulation and the end-to-end multi-stage pipeline.

Phases: (1) generate a substrate and stream, label a historical trace with
the reference embedder; (2) train the supervised models on the training
split; (3) train the placement agent on training-stream episodes; (4) replay
the held-out stream through the frozen pipeline and collect metrics.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .admission import SvmModel, svm_predict, svm_train
from .classifier import MlcModel, mlc_calibrate_priors, mlc_classify, mlc_fit
from .config import ExperimentConfig
from .embedder import (
    EpisodeResult,
    QTable,
    SarsaAgent,
    embed_vn_baseline,
)
from .errors import PipelineError, VnesimError
from .features import DERIVED_TARGETS, vm_core_scaling, vm_core_vector, vn_feature_vector
from .metrics import (
    LogPoint,
    RunMetrics,
    acceptance_and_allocation_stats,
    metrics_csv,
    metrics_json,
)
from .regression import RbrModel, median_heuristic_gamma, rbr_fit, rbr_predict_batch
from .seeding import component_rng
from .substrate import SubstrateNetwork, substrate_to_text
from .virtual import VmType, validate_embedding
from .workload import (
    GeneratedVn,
    TraceRecord,
    WorkloadConfig,
    generate_substrate,
    generate_vn_stream,
    label_trace,
    rescale_stream,
    split_train_test,
    stream_to_text,
    trace_to_csv,
    vm_type_label,
)

ARRIVAL = 1
DEPARTURE = 0  # departures drain before same-instant arrivals


@dataclass
class PlacementDecision:
    """What the pipeline decided for one arriving request."""

    embedding: Optional[object]
    admission_pred: Optional[bool] = None
    predicted_types: Optional[dict[int, VmType]] = None
    predicted_usage: Optional[list[tuple[float, float]]] = None
    rewards: Optional[list[float]] = None


Placer = Callable[[SubstrateNetwork, GeneratedVn], PlacementDecision]
AllocPlanner = Callable[
    [SubstrateNetwork, GeneratedVn, PlacementDecision], list[tuple[int, int]]
]


@dataclass
class VnResult:
    vn_id: int
    accepted: bool
    decision: PlacementDecision
    demand_cpu: int = 0
    demand_mem: int = 0
    alloc_cpu: int = 0
    alloc_mem: int = 0


@dataclass
class StreamResult:
    """Everything observed while replaying one stream."""

    results: list[VnResult]
    log: list[LogPoint]
    assertion_count: int = 0
    demand_cpu: int = 0
    demand_mem: int = 0
    alloc_cpu: int = 0
    alloc_mem: int = 0


@dataclass
class _Active:
    gvn: GeneratedVn
    embedding: object
    vm_alloc: list[tuple[int, int]]
    used_cpu: float
    used_mem: float
    reserved_bw: int


def full_demand_plan(
    net: SubstrateNetwork, gvn: GeneratedVn, decision: PlacementDecision
) -> list[tuple[int, int]]:
    return [(vm.cpu_demand, vm.mem_demand) for vm in gvn.vn.vms]


def scaled_allocation_plan(safety: float, floor: float, load_coupling: float = 0.30) -> AllocPlanner:
    """Allocate toward predicted usage instead of the full demand.

    Per VM and resource: max(floor * demand, safety * predicted usage),
    rounded to the nearest whole unit (resource units are indivisible; always
    rounding up would forbid any saving on small integer demands), never
    above the demand and never zero.

    The memory floor stiffens with memory occupancy (floor + load_coupling *
    occupancy): memory is the contended resource here, and when it is crowded
    an under-allocated request is the costly mistake, so allocations are
    driven back toward the demand. This is also what moves the cumulative
    allocated-to-demanded fraction upward as requests accumulate. CPU is the
    slack resource, so its floor stays fixed. Requests that reach the
    embedder without usage predictions fall back to full demand.
    """

    def amount(demand: int, predicted: float, eff_floor: float) -> int:
        target = max(eff_floor * demand, safety * predicted * demand)
        return min(demand, max(1, int(target + 0.5)))

    def plan(
        net: SubstrateNetwork, gvn: GeneratedVn, decision: PlacementDecision
    ) -> list[tuple[int, int]]:
        if decision.predicted_usage is None:
            return full_demand_plan(net, gvn, decision)
        mem_cap = int(net.mem_capacity.sum())
        occupancy = 1.0 - int(net.mem_avail.sum()) / mem_cap if mem_cap else 0.0
        mem_floor = min(1.0, floor + load_coupling * occupancy)
        out = []
        for vm, (u_cpu, u_mem) in zip(gvn.vn.vms, decision.predicted_usage):
            out.append(
                (
                    amount(vm.cpu_demand, u_cpu, floor),
                    amount(vm.mem_demand, u_mem, mem_floor),
                )
            )
        return out

    return plan


def run_stream(
    net: SubstrateNetwork,
    stream: list[GeneratedVn],
    placer: Placer,
    alloc_plan: AllocPlanner = full_demand_plan,
    audit: bool = False,
) -> StreamResult:
    """Replay arrivals and departures through a placer, in event order.

    Ties process departures first, then lower request ids. Accepted requests
    hold their (possibly usage-scaled) allocation until departure; requests
    without an end time hold it to the end of the run. With ``audit`` on,
    every accepted embedding is validated against the pre-placement snapshot
    and resource conservation is checked after every event.
    """
    by_id = {gvn.vn.id: gvn for gvn in stream}
    heap: list[tuple[float, int, int]] = [
        (gvn.vn.start, ARRIVAL, gvn.vn.id) for gvn in stream
    ]
    heapq.heapify(heap)
    active: dict[int, _Active] = {}
    result = StreamResult(results=[], log=[])
    cpu_alloc = mem_alloc = 0
    used_cpu = used_mem = 0.0
    bw_reserved = 0
    accepted = rejected = 0

    def conservation_check(t: float) -> None:
        nonlocal result
        alloc_seen_cpu = int(net.cpu_capacity.sum() - net.cpu_avail.sum())
        alloc_seen_mem = int(net.mem_capacity.sum() - net.mem_avail.sum())
        bw_seen = sum(net.bw_capacity) - sum(net.bw_avail)
        if alloc_seen_cpu != cpu_alloc or alloc_seen_mem != mem_alloc or bw_seen != bw_reserved:
            raise VnesimError(f"conservation broken at t={t}")
        result.assertion_count += 3

    while heap:
        t, kind, vn_id = heapq.heappop(heap)
        if kind == DEPARTURE:
            rec = active.pop(vn_id)
            for vm, (cpu, mem) in zip(rec.gvn.vn.vms, rec.vm_alloc):
                net.release(rec.embedding.assignment[vm.id], cpu, mem)
            for vl in rec.gvn.vn.vlinks:
                net.release_path(rec.embedding.link_paths[(vl.a, vl.b)], vl.bw_demand)
            cpu_alloc -= sum(c for c, _ in rec.vm_alloc)
            mem_alloc -= sum(m for _, m in rec.vm_alloc)
            used_cpu -= rec.used_cpu
            used_mem -= rec.used_mem
            bw_reserved -= rec.reserved_bw
        else:
            gvn = by_id[vn_id]
            snapshot = net.clone() if audit else None
            decision = placer(net, gvn)
            if decision.embedding is None:
                rejected += 1
                result.results.append(VnResult(vn_id, False, decision))
            else:
                emb = decision.embedding
                if audit:
                    violations = validate_embedding(gvn.vn, emb, snapshot)
                    if violations:
                        raise VnesimError(f"vn {vn_id}: invalid embedding committed")
                    result.assertion_count += 1
                plan = alloc_plan(net, gvn, decision)
                rec_used_cpu = rec_used_mem = 0.0
                for vm, usage, (cpu, mem) in zip(gvn.vn.vms, gvn.usages, plan):
                    node = emb.assignment[vm.id]
                    # the embedder reserved full demand; trim to the plan
                    net.release(node, vm.cpu_demand - cpu, vm.mem_demand - mem)
                    rec_used_cpu += min(usage[0] * vm.cpu_demand, cpu)
                    rec_used_mem += min(usage[1] * vm.mem_demand, mem)
                reserved = sum(
                    len(emb.link_paths[(vl.a, vl.b)]) * vl.bw_demand for vl in gvn.vn.vlinks
                )
                active[vn_id] = _Active(gvn, emb, plan, rec_used_cpu, rec_used_mem, reserved)
                cpu_alloc += sum(c for c, _ in plan)
                mem_alloc += sum(m for _, m in plan)
                used_cpu += rec_used_cpu
                used_mem += rec_used_mem
                bw_reserved += reserved
                result.demand_cpu += gvn.vn.agg_cpu
                result.demand_mem += gvn.vn.agg_mem
                result.alloc_cpu += sum(c for c, _ in plan)
                result.alloc_mem += sum(m for _, m in plan)
                accepted += 1
                result.results.append(
                    VnResult(
                        vn_id,
                        True,
                        decision,
                        demand_cpu=gvn.vn.agg_cpu,
                        demand_mem=gvn.vn.agg_mem,
                        alloc_cpu=sum(c for c, _ in plan),
                        alloc_mem=sum(m for _, m in plan),
                    )
                )
                if gvn.lifetime is not None:
                    heapq.heappush(heap, (t + gvn.lifetime, DEPARTURE, vn_id))
        if audit:
            conservation_check(t)
        result.log.append(
            LogPoint(
                t=t,
                cpu_alloc=cpu_alloc,
                mem_alloc=mem_alloc,
                cpu_used=used_cpu,
                mem_used=used_mem,
                active=len(active),
                accepted=accepted,
                rejected=rejected,
            )
        )
    return result


# -- placers -----------------------------------------------------------------

def greedy_placer(net: SubstrateNetwork, gvn: GeneratedVn) -> PlacementDecision:
    return PlacementDecision(embedding=embed_vn_baseline("greedy_best_fit", net, gvn.vn))


def baseline_placer(strategy: str, rng: Optional[np.random.Generator] = None) -> Placer:
    def place(net: SubstrateNetwork, gvn: GeneratedVn) -> PlacementDecision:
        return PlacementDecision(
            embedding=embed_vn_baseline(strategy, net, gvn.vn, rng=rng)
        )

    return place


@dataclass
class PipelineModels:
    """Trained artifacts of the three learning stages."""

    svm: Optional[SvmModel] = None
    rbrs: dict[str, RbrModel] = field(default_factory=dict)
    mlc: Optional[MlcModel] = None
    qtable: Optional[QTable] = None


class StagedPlacer:
    """Admission, per-VM typing, then node selection, as one placer.

    Stages degrade gracefully: without an admission model every request goes
    to the embedder; without the classifier the generator's ground-truth
    types stand in.
    """

    def __init__(
        self,
        cfg: ExperimentConfig,
        models: PipelineModels,
        agent: Optional[SarsaAgent],
        train_agent: bool = False,
        baseline_rng: Optional[np.random.Generator] = None,
    ):
        self.cfg = cfg
        self.models = models
        self.agent = agent
        self.train_agent = train_agent
        self.baseline_rng = baseline_rng
        self.scaling = vm_core_scaling(
            cfg.workload.vm_cpu_range[1], cfg.workload.vm_mem_range[1], cfg.workload.horizon
        )
        self.episode_rewards: list[float] = []

    def _types_and_usage(
        self, gvn: GeneratedVn
    ) -> tuple[dict[int, VmType], list[tuple[float, float]]]:
        cores = np.array([vm_core_vector(vm) for vm in gvn.vn.vms]) / self.scaling
        rbrs = self.models.rbrs
        if self.cfg.classifier.enabled and self.models.mlc is not None and rbrs:
            lifetimes = rbr_predict_batch(rbrs["lifetime"], cores)
            u_cpu = rbr_predict_batch(rbrs["cpu_usage"], cores)
            u_mem = rbr_predict_batch(rbrs["mem_usage"], cores)
            rows = np.column_stack([cores, lifetimes, u_cpu, u_mem])
            types = {}
            for vm, row in zip(gvn.vn.vms, rows):
                types[vm.id] = mlc_classify(self.models.mlc, row)[0]
            usage = list(zip(u_cpu.tolist(), u_mem.tolist()))
            return types, usage
        types = {
            vm.id: vm_type_label(self.cfg.workload, usage)
            for vm, usage in zip(gvn.vn.vms, gvn.usages)
        }
        usage = [(u[0], u[1]) for u in gvn.usages]
        return types, usage

    def __call__(self, net: SubstrateNetwork, gvn: GeneratedVn) -> PlacementDecision:
        admission_pred = None
        if self.cfg.admission.enabled and self.models.svm is not None:
            ok, _ = svm_predict(self.models.svm, vn_feature_vector(gvn.vn))
            admission_pred = ok
            if not ok:
                return PlacementDecision(embedding=None, admission_pred=False)
        types, usage = self._types_and_usage(gvn)
        if self.cfg.pipeline.embedder == "sarsa":
            episode: EpisodeResult = self.agent.embed(
                net, gvn.vn, types, train=self.train_agent
            )
            if self.train_agent:
                self.agent.end_episode()
                if episode.mean_reward is not None:
                    self.episode_rewards.append(episode.mean_reward)
            return PlacementDecision(
                embedding=episode.embedding,
                admission_pred=admission_pred,
                predicted_types=types,
                predicted_usage=usage if self.cfg.pipeline.scaled_allocation else None,
                rewards=episode.rewards,
            )
        emb = embed_vn_baseline(
            self.cfg.pipeline.embedder, net, gvn.vn, rng=self.baseline_rng
        )
        return PlacementDecision(
            embedding=emb,
            admission_pred=admission_pred,
            predicted_types=types,
            predicted_usage=usage if self.cfg.pipeline.scaled_allocation else None,
        )


# -- supervised training -------------------------------------------------------

def _dedup_mean(rows: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average targets over identical feature rows (interpolation needs one
    target per distinct point)."""
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    sums = np.zeros(len(uniq))
    counts = np.zeros(len(uniq))
    np.add.at(sums, inverse, targets)
    np.add.at(counts, inverse, 1.0)
    return uniq, sums / counts


def train_admission(records_train: list[TraceRecord], cfg: ExperimentConfig) -> SvmModel:
    """Fit the admission classifier on the training split of the trace."""
    vn_rows = np.array([vn_feature_vector(r.vn) for r in records_train])
    vn_labels = np.array([1.0 if r.accepted else -1.0 for r in records_train])
    return svm_train(
        vn_rows,
        vn_labels,
        lam=cfg.admission.lam,
        epochs=cfg.admission.epochs,
        seed=cfg.seed,
    )


def train_vm_models(
    records_train: list[TraceRecord], cfg: ExperimentConfig, models: PipelineModels
) -> None:
    """Fit the derived-feature regressors and the VM type classifier on the
    completed requests of the training split."""
    scaling = vm_core_scaling(
        cfg.workload.vm_cpu_range[1], cfg.workload.vm_mem_range[1], cfg.workload.horizon
    )
    cores = []
    lifetimes = []
    u_cpu = []
    u_mem = []
    types = []
    for rec in records_train:
        if not rec.completed:
            continue
        for vm, out in zip(rec.vn.vms, rec.outcomes):
            cores.append(vm_core_vector(vm) / scaling)
            lifetimes.append(out.end - vm.start)
            u_cpu.append(out.actual_cpu / vm.cpu_demand)
            u_mem.append(out.actual_mem / vm.mem_demand)
            types.append(out.vm_type)
    if not cores:
        raise PipelineError("train-rbr", "no completed requests in the training split")
    cores = np.array(cores)
    rbr_rng = component_rng(cfg.seed, "rbr")
    rbr_seed = int(rbr_rng.integers(2**32))
    target_data = {
        "lifetime": (np.array(lifetimes), (1e-6, None)),
        "cpu_usage": (np.array(u_cpu), (1e-6, 1.0)),
        "mem_usage": (np.array(u_mem), (1e-6, 1.0)),
    }
    gamma_cfg = cfg.regression.gamma
    for target in DERIVED_TARGETS:
        y, clamp = target_data[target]
        x_u, y_u = _dedup_mean(cores, y)
        if gamma_cfg > 0:
            gamma = gamma_cfg
        else:
            # the heuristic needs a representative subsample, not the head of
            # the canonically sorted rows (those cluster in feature space)
            sample_rng = component_rng(cfg.seed, "rbr")
            take = min(len(x_u), 1000)
            idx = np.sort(sample_rng.choice(len(x_u), size=take, replace=False))
            gamma = median_heuristic_gamma(x_u[idx])
        models.rbrs[target] = rbr_fit(
            x_u,
            y_u,
            gamma,
            target_id=target,
            clamp=clamp,
            max_centers=cfg.regression.max_centers,
            seed=rbr_seed,
        )

    # the classifier is trained on the same regression-derived aggregate
    # vectors it will see at prediction time (observed outcomes only supply
    # the labels and the regression targets)
    agg_rows = np.column_stack(
        [
            cores,
            rbr_predict_batch(models.rbrs["lifetime"], cores),
            rbr_predict_batch(models.rbrs["cpu_usage"], cores),
            rbr_predict_batch(models.rbrs["mem_usage"], cores),
        ]
    )
    models.mlc = mlc_fit(agg_rows, types, equal_priors=cfg.classifier.priors == "equal")
    if cfg.classifier.priors == "calibrated":
        mlc_calibrate_priors(models.mlc, agg_rows, types)


def train_supervised(
    records_train: list[TraceRecord], cfg: ExperimentConfig
) -> PipelineModels:
    """Fit all three supervised models on the training split of the trace."""
    models = PipelineModels()
    models.svm = train_admission(records_train, cfg)
    train_vm_models(records_train, cfg, models)
    return models


def train_sarsa(
    net: SubstrateNetwork,
    train_stream: list[GeneratedVn],
    models: PipelineModels,
    cfg: ExperimentConfig,
    audit: bool = False,
) -> tuple[QTable, list[float], int]:
    """Run training episodes over the training stream (cycling through extra
    passes on a fresh substrate when more episodes are requested than the
    stream holds). Returns the table and per-episode mean rewards."""
    qtable = QTable(
        alpha=cfg.sarsa.alpha,
        gamma=cfg.sarsa.gamma,
        epsilon=cfg.sarsa.epsilon_start,
        epsilon_decay=cfg.sarsa.epsilon_decay,
        epsilon_min=cfg.sarsa.epsilon_min,
    )
    agent = SarsaAgent(
        qtable,
        rng=component_rng(cfg.seed, "sarsa"),
        levels=cfg.sarsa.quant_levels,
        position_cap=cfg.sarsa.position_cap,
        type_mismatch_penalty=cfg.sarsa.type_mismatch_penalty,
    )
    target = cfg.sarsa.episodes if cfg.sarsa.episodes > 0 else len(train_stream)
    rewards: list[float] = []
    done = 0
    assertions = 0
    while done < target and train_stream:
        placer = StagedPlacer(cfg, models, agent, train_agent=True)
        chunk = train_stream[: target - done] if target - done < len(train_stream) else train_stream
        res = run_stream(net.clone(), chunk, placer, full_demand_plan, audit=audit)
        assertions += res.assertion_count
        rewards.extend(placer.episode_rewards)
        done += len(chunk)
    return qtable, rewards, assertions


# -- the whole pipeline ----------------------------------------------------------

@dataclass
class PipelineResult:
    cfg: ExperimentConfig
    substrate: SubstrateNetwork
    records: list[TraceRecord]
    train_records: list[TraceRecord]
    test_records: list[TraceRecord]
    models: PipelineModels
    eval_result: StreamResult
    metrics: RunMetrics
    timings: dict[str, float]
    sarsa_rewards: list[float]
    admission_accuracy: float
    vm_type_share_error: Optional[float]
    audit_assertions: int = 0


def admission_accuracy_on(records: list[TraceRecord], svm: SvmModel) -> float:
    hits = 0
    for rec in records:
        ok, _ = svm_predict(svm, vn_feature_vector(rec.vn))
        hits += int(ok == rec.accepted)
    return hits / len(records) if records else 0.0


def vm_type_shares(types: list[VmType]) -> dict[VmType, float]:
    n = max(len(types), 1)
    return {t: sum(1 for x in types if x == t) / n for t in VmType}


def share_error(true_types: list[VmType], pred_types: list[VmType]) -> float:
    """Largest per-class absolute share gap, in percentage points."""
    true_shares = vm_type_shares(true_types)
    pred_shares = vm_type_shares(pred_types)
    return 100.0 * max(abs(true_shares[t] - pred_shares[t]) for t in VmType)


def predict_vm_types(
    records: list[TraceRecord], models: PipelineModels, cfg: ExperimentConfig
) -> tuple[list[VmType], list[VmType]]:
    """(true, predicted) type lists over completed VMs of the given records,
    predicting through the regression stage exactly as the live pipeline does."""
    scaling = vm_core_scaling(
        cfg.workload.vm_cpu_range[1], cfg.workload.vm_mem_range[1], cfg.workload.horizon
    )
    cores = []
    truth = []
    for rec in records:
        if not rec.completed:
            continue
        for vm, out in zip(rec.vn.vms, rec.outcomes):
            cores.append(vm_core_vector(vm) / scaling)
            truth.append(out.vm_type)
    if not cores:
        return [], []
    cores = np.array(cores)
    lifetimes = rbr_predict_batch(models.rbrs["lifetime"], cores)
    u_cpu = rbr_predict_batch(models.rbrs["cpu_usage"], cores)
    u_mem = rbr_predict_batch(models.rbrs["mem_usage"], cores)
    rows = np.column_stack([cores, lifetimes, u_cpu, u_mem])
    from .classifier import mlc_classify_batch

    return truth, mlc_classify_batch(models.mlc, rows)


def run_pipeline(cfg: ExperimentConfig, out_dir: Optional[str | Path] = None) -> PipelineResult:
    """Execute all four phases and, when an output directory is given, write
    the artifact files (substrate, stream, trace, models, metrics)."""
    cfg.validate()
    timings: dict[str, float] = {}

    def timed(stage: str, fn):
        start = time.perf_counter()
        try:
            value = fn()
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(stage, str(exc)) from exc
        timings[stage] = time.perf_counter() - start
        return value

    substrate = timed("generate", lambda: generate_substrate(cfg.workload))
    stream = timed("generate-stream", lambda: generate_vn_stream(cfg.workload))

    audit_counts = {"n": 0}

    def reference():
        ref = run_stream(
            substrate.clone(), stream, greedy_placer, full_demand_plan,
            audit=cfg.simulation.audit,
        )
        audit_counts["n"] += ref.assertion_count
        outcome = {r.vn_id: r.accepted for r in ref.results}
        return label_trace([(gvn, outcome[gvn.vn.id]) for gvn in stream], cfg.workload)

    records = timed("reference", reference)
    train_records, test_records = split_train_test(
        records, cfg.simulation.split_ratio, cfg.seed
    )
    if not train_records or not test_records:
        raise PipelineError("split", "both splits must be non-empty")
    models = timed("train-supervised", lambda: train_supervised(train_records, cfg))

    stream_by_id = {gvn.vn.id: gvn for gvn in stream}
    train_stream = rescale_stream(
        [stream_by_id[r.vn.id] for r in train_records], cfg.simulation.split_ratio
    )
    test_stream = rescale_stream(
        [stream_by_id[r.vn.id] for r in test_records], 1.0 - cfg.simulation.split_ratio
    )

    sarsa_rewards: list[float] = []
    if cfg.pipeline.embedder == "sarsa":
        qtable, sarsa_rewards, sarsa_assertions = timed(
            "train-sarsa",
            lambda: train_sarsa(substrate, train_stream, models, cfg, audit=cfg.simulation.audit),
        )
        audit_counts["n"] += sarsa_assertions
        models.qtable = qtable

    def evaluate():
        agent = None
        if models.qtable is not None:
            frozen = QTable(
                alpha=models.qtable.alpha,
                gamma=models.qtable.gamma,
                epsilon=0.0,
                epsilon_decay=1.0,
                epsilon_min=0.0,
                values=dict(models.qtable.values),
            )
            agent = SarsaAgent(
                frozen,
                rng=component_rng(cfg.seed, "evaluate"),
                levels=cfg.sarsa.quant_levels,
                position_cap=cfg.sarsa.position_cap,
                type_mismatch_penalty=cfg.sarsa.type_mismatch_penalty,
            )
        placer = StagedPlacer(
            cfg,
            models,
            agent,
            train_agent=False,
            baseline_rng=component_rng(cfg.seed, "evaluate"),
        )
        plan = (
            scaled_allocation_plan(
                cfg.pipeline.alloc_safety,
                cfg.pipeline.alloc_floor,
                cfg.pipeline.alloc_load_coupling,
            )
            if cfg.pipeline.scaled_allocation
            else full_demand_plan
        )
        return run_stream(
            substrate.clone(), test_stream, placer, plan, audit=cfg.simulation.audit
        )

    eval_result = timed("evaluate", evaluate)

    def metrics_stage():
        accuracy = admission_accuracy_on(test_records, models.svm)
        truth, preds = predict_vm_types(test_records, models, cfg)
        err = share_error(truth, preds) if truth else None
        return acceptance_and_allocation_stats(
            eval_result.log,
            substrate,
            eval_result.demand_cpu,
            eval_result.demand_mem,
            eval_result.alloc_cpu,
            eval_result.alloc_mem,
            admission_accuracy=accuracy,
            vm_type_share_error=err,
        )

    metrics = timed("metrics", metrics_stage)

    result = PipelineResult(
        cfg=cfg,
        substrate=substrate,
        records=records,
        train_records=train_records,
        test_records=test_records,
        models=models,
        eval_result=eval_result,
        metrics=metrics,
        timings=timings,
        sarsa_rewards=sarsa_rewards,
        admission_accuracy=metrics.admission_accuracy,
        vm_type_share_error=metrics.vm_type_share_error,
        audit_assertions=audit_counts["n"] + eval_result.assertion_count,
    )
    if out_dir is not None:
        write_artifacts(result, Path(out_dir))
    return result


def write_artifacts(result: PipelineResult, out_dir: Path) -> None:
    from .admission import svm_save
    from .classifier import mlc_save
    from .config import config_to_ini
    from .embedder import qtable_save
    from .regression import rbr_save

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "substrate.txt").write_text(substrate_to_text(result.substrate))
    (out_dir / "trace.csv").write_text(trace_to_csv(result.records))
    (out_dir / "config.ini").write_text(config_to_ini(result.cfg))
    if result.models.svm is not None:
        svm_save(result.models.svm, out_dir / "svm.txt")
    for target, model in result.models.rbrs.items():
        rbr_save(model, out_dir / f"rbr_{target}.txt")
    if result.models.mlc is not None:
        mlc_save(result.models.mlc, out_dir / "mlc.txt")
    if result.models.qtable is not None:
        qtable_save(result.models.qtable, out_dir / "qtable.txt")
    write_metrics_files(result, out_dir)


def write_metrics_files(result: PipelineResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(
        metrics_csv(result.eval_result.log, result.substrate, result.cfg.simulation.metrics_bucket)
    )
    (out_dir / "summary.json").write_text(metrics_json(result.metrics))


def write_stream_file(stream: list[GeneratedVn], path: Path) -> None:
    path.write_text(stream_to_text(stream))
