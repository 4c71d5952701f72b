"""Acceptance suite: one test per exit criterion.

Each test prints a single verdict line (run with ``pytest -s`` to stream
them). Tolerances are pinned here and nowhere else.
"""

import time

import numpy as np
import pytest

from conftest import (
    EVEN_PLACEMENT,
    FOLLOW_UP_DEMAND,
    TWO_SERVER_DEMANDS,
    UNEVEN_PLACEMENT,
    single_vm_request,
    two_server_network,
)
from vnesim.config import ExperimentConfig
from vnesim.embedder import embed_vn_baseline, embed_vn_random_scored
from vnesim.metrics import (
    ObjectiveWeights,
    metrics_csv,
    metrics_json,
    node_utilization,
    time_weighted_stats,
    utilization_series,
)
from vnesim.oracle import oracle_comparison
from vnesim.regression import median_heuristic_gamma, rbr_fit, rbr_predict_batch
from vnesim.seeding import component_rng
from vnesim.simulation import (
    PipelineModels,
    PlacementDecision,
    baseline_placer,
    full_demand_plan,
    predict_vm_types,
    run_pipeline,
    run_stream,
    share_error,
    train_sarsa,
    train_vm_models,
)
from vnesim.workload import (
    generate_substrate,
    generate_vn_stream,
    rescale_stream,
    split_train_test,
    vm_type_label,
)

_pipeline_cache: dict[int, object] = {}


def verdict(number: int, name: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {number:02d} {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def pipeline_for_seed(seed: int, default_pipeline):
    if seed == 0:
        return default_pipeline
    if seed not in _pipeline_cache:
        _pipeline_cache[seed] = run_pipeline(ExperimentConfig(seed=seed))
    return _pipeline_cache[seed]


def completed_corpus(records, vm_target):
    out, count = [], 0
    for rec in records:
        if not rec.completed:
            continue
        out.append(rec)
        count += len(rec.vn.vms)
        if count >= vm_target:
            break
    return out


def cumulative_fraction(results):
    accepted = [r for r in results if r.accepted]
    frac_cpu = sum(r.alloc_cpu for r in accepted) / sum(r.demand_cpu for r in accepted)
    frac_mem = sum(r.alloc_mem for r in accepted) / sum(r.demand_mem for r in accepted)
    return 0.5 * (frac_cpu + frac_mem)


def test_criterion_1_admission_accuracy(default_pipeline):
    result = default_pipeline
    accuracy = result.admission_accuracy
    stage_seconds = sum(
        result.timings[k]
        for k in ("generate", "generate-stream", "reference", "train-supervised", "metrics")
    )
    ok = accuracy >= 0.79 and stage_seconds <= 120.0
    verdict(
        1,
        "admission accuracy on held-out split",
        ok,
        f"accuracy={accuracy:.4f} (threshold 0.79), stages={stage_seconds:.1f}s (budget 120s)",
    )


def test_criterion_2_vm_type_share_error(default_pipeline):
    start = time.perf_counter()
    cfg = default_pipeline.cfg
    errors = {}
    for target in (1000, 15000):
        corpus = completed_corpus(default_pipeline.records, target)
        train, test = split_train_test(corpus, cfg.simulation.split_ratio, cfg.seed)
        models = PipelineModels()
        train_vm_models(train, cfg, models)
        truth, preds = predict_vm_types(test, models, cfg)
        errors[target] = share_error(truth, preds)
    elapsed = time.perf_counter() - start
    ok = (
        errors[1000] <= 8.0
        and errors[15000] <= 4.0
        and errors[15000] <= errors[1000]
        and elapsed <= 60.0
    )
    verdict(
        2,
        "vm type share error shrinks with corpus size",
        ok,
        f"error@1000={errors[1000]:.2f}pp (<=8), error@15000={errors[15000]:.2f}pp (<=4), "
        f"runtime={elapsed:.1f}s (budget 60s)",
    )


def test_criterion_3_rbr_interpolation():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    points = rng.normal(size=(200, 5))
    targets = rng.normal(size=200)
    gamma = median_heuristic_gamma(points)
    model = rbr_fit(points, targets, gamma=gamma)
    fitted = rbr_predict_batch(model, model.centers)
    order = np.lexsort((targets,) + tuple(points[:, d] for d in reversed(range(5))))
    residual = float(np.max(np.abs(fitted - targets[order])))
    tiny_gamma = rbr_fit(points, targets, gamma=1e-9)
    elapsed = time.perf_counter() - start
    ok = (
        residual <= 1e-6
        and not model.ridge_used
        and tiny_gamma.ridge_used
        and bool(np.all(np.isfinite(tiny_gamma.weights)))
        and elapsed <= 10.0
    )
    verdict(
        3,
        "exact interpolation and ridge fallback",
        ok,
        f"max residual={residual:.2e} (<=1e-6), ridge engaged at gamma=1e-9: {tiny_gamma.ridge_used}, "
        f"runtime={elapsed:.1f}s (budget 10s)",
    )


def test_criterion_4_sarsa_reward_bounds_and_learning():
    start = time.perf_counter()
    gaps = []
    bounds_ok = True
    for seed in (0, 1, 2):
        cfg = ExperimentConfig(seed=seed)
        cfg.workload.sn_mem_range = (20000, 50000)  # roomy variant: episodes embed
        cfg.workload.vn_count = 5000
        cfg.workload.unexpired_frac = 0.0
        cfg.admission.enabled = False
        cfg.classifier.enabled = False
        net = generate_substrate(cfg.workload)
        stream = generate_vn_stream(cfg.workload)
        _, rewards, _ = train_sarsa(net, stream, PipelineModels(), cfg)
        bounds_ok = bounds_ok and all(-1.0 <= r <= 1.0 for r in rewards)
        trailing = float(np.mean(rewards[-500:]))
        rng = component_rng(seed, "baseline")
        baseline_rewards = []

        def random_placer(work, gvn):
            types = {
                vm.id: vm_type_label(cfg.workload, usage)
                for vm, usage in zip(gvn.vn.vms, gvn.usages)
            }
            episode = embed_vn_random_scored(work, gvn.vn, types, rng)
            if episode.mean_reward is not None:
                baseline_rewards.append(episode.mean_reward)
            return PlacementDecision(embedding=episode.embedding)

        run_stream(net.clone(), stream, random_placer, full_demand_plan)
        gaps.append(trailing - float(np.mean(baseline_rewards)))
    elapsed = time.perf_counter() - start
    ok = bounds_ok and all(g >= 0.1 for g in gaps) and elapsed <= 180.0
    verdict(
        4,
        "per-vm rewards bounded and learning beats random",
        ok,
        f"gaps={[f'{g:+.3f}' for g in gaps]} (each >= +0.1), bounds ok: {bounds_ok}, "
        f"runtime={elapsed:.1f}s (budget 180s)",
    )


def test_criterion_5_oracle_dominance():
    start = time.perf_counter()
    rows = oracle_comparison(instances=50, seed=0, weights=ObjectiveWeights())
    agent = float(np.mean([r[0] for r in rows]))
    greedy = float(np.mean([r[1] for r in rows]))
    elapsed = time.perf_counter() - start
    ok = agent >= 0.90 and greedy >= 0.80 and elapsed <= 60.0
    verdict(
        5,
        "trained agent and greedy vs exhaustive optimum",
        ok,
        f"agent/opt={agent:.4f} (>=0.90), greedy/opt={greedy:.4f} (>=0.80), "
        f"runtime={elapsed:.1f}s (budget 60s)",
    )


def test_criterion_6_two_server_motivating_example(two_server_example):
    start = time.perf_counter()
    net, requests, follow_up = two_server_example

    uneven = net.clone()
    for i, (cpu, mem) in enumerate(TWO_SERVER_DEMANDS):
        uneven.allocate(UNEVEN_PLACEMENT[i], cpu, mem)
    cpu_util, mem_util = node_utilization(uneven)
    utilizations_ok = (
        abs(100 * cpu_util[0] - 71.4) <= 0.1
        and abs(100 * cpu_util[1] - 41.6) <= 0.1
        and abs(100 * mem_util[0] - 22.0) <= 0.1
        and abs(100 * mem_util[1] - 98.6) <= 0.1
    )
    rejected_when_uneven = embed_vn_baseline("greedy_best_fit", uneven, follow_up) is None

    even = net.clone()
    for i, (cpu, mem) in enumerate(TWO_SERVER_DEMANDS):
        even.allocate(EVEN_PLACEMENT[i], cpu, mem)
    accepted_when_even = embed_vn_baseline("greedy_best_fit", even, follow_up) is not None

    elapsed = time.perf_counter() - start
    ok = utilizations_ok and rejected_when_uneven and accepted_when_even and elapsed <= 1.0
    verdict(
        6,
        "uneven placement strands the follow-up request",
        ok,
        f"utilizations within 0.1pp: {utilizations_ok}, uneven rejects: {rejected_when_uneven}, "
        f"even accepts: {accepted_when_even}, runtime={elapsed:.2f}s (budget 1s)",
    )


def test_criterion_7_constraint_soundness_under_audit():
    start = time.perf_counter()
    cfg = ExperimentConfig(seed=0)
    cfg.workload.vn_count = 3000  # default shape, sized to fit the budget
    cfg.simulation.audit = True
    result = run_pipeline(cfg)  # audit raises on any violation or imbalance
    elapsed = time.perf_counter() - start
    ok = result.audit_assertions >= 10_000 and elapsed <= 120.0
    verdict(
        7,
        "every committed embedding valid, conservation at every event",
        ok,
        f"audited assertions={result.audit_assertions} (>=10000), runtime={elapsed:.1f}s (budget 120s)",
    )


def test_criterion_8_utilization_comparison(default_pipeline):
    mean_wins = 0
    std_wins = 0
    details = []
    for seed in (0, 1, 2):
        result = pipeline_for_seed(seed, default_pipeline)
        cfg = result.cfg
        stream = generate_vn_stream(cfg.workload)
        test_ids = {rec.vn.id for rec in result.test_records}
        test_stream = rescale_stream(
            [gvn for gvn in stream if gvn.vn.id in test_ids], 1.0 - cfg.simulation.split_ratio
        )
        series = utilization_series(result.eval_result.log, result.substrate)
        pipeline_eff, _ = time_weighted_stats(series.times, series.cpu_efficiency)
        _, pipeline_occ_std = time_weighted_stats(series.times, series.cpu_occupancy)
        baseline = {}
        for name in ("greedy_best_fit", "random"):
            rng = component_rng(seed, "baseline")
            res = run_stream(
                result.substrate.clone(), test_stream, baseline_placer(name, rng), full_demand_plan
            )
            s2 = utilization_series(res.log, result.substrate)
            eff_mean, _ = time_weighted_stats(s2.times, s2.cpu_efficiency)
            _, occ_std = time_weighted_stats(s2.times, s2.cpu_occupancy)
            baseline[name] = (eff_mean, occ_std)
        mean_ok = pipeline_eff >= baseline["greedy_best_fit"][0]
        std_ok = pipeline_occ_std <= baseline["random"][1]
        mean_wins += mean_ok
        std_wins += std_ok
        details.append(
            f"seed{seed}: eff {pipeline_eff:.3f} vs greedy {baseline['greedy_best_fit'][0]:.3f}, "
            f"occ-std {pipeline_occ_std:.4f} vs random {baseline['random'][1]:.4f}"
        )
    ok = mean_wins >= 2 and std_wins >= 2
    verdict(
        8,
        "pipeline cpu utilization beats greedy, steadier than random",
        ok,
        f"mean wins {mean_wins}/3, std wins {std_wins}/3 (each needs >=2); " + "; ".join(details),
    )


def test_criterion_9_allocation_fraction_trend(default_pipeline):
    results = default_pipeline.eval_result.results
    assert len(results) >= 5000
    frac_500 = cumulative_fraction(results[:500])
    frac_5000 = cumulative_fraction(results[:5000])
    ok = frac_500 < 1.0 and frac_5000 < 1.0 and frac_500 <= frac_5000
    verdict(
        9,
        "usage-scaled allocation fraction below one and non-decreasing",
        ok,
        f"prefix-500={frac_500:.4f}, prefix-5000={frac_5000:.4f} (both < 1, non-decreasing)",
    )


def test_criterion_10_byte_identical_reruns():
    start = time.perf_counter()
    cfg_a = ExperimentConfig(seed=17)
    cfg_a.workload.vn_count = 1500
    cfg_b = ExperimentConfig(seed=17)
    cfg_b.workload.vn_count = 1500
    a = run_pipeline(cfg_a)
    b = run_pipeline(cfg_b)
    csv_a = metrics_csv(a.eval_result.log, a.substrate, a.cfg.simulation.metrics_bucket)
    csv_b = metrics_csv(b.eval_result.log, b.substrate, b.cfg.simulation.metrics_bucket)
    json_a = metrics_json(a.metrics)
    json_b = metrics_json(b.metrics)
    elapsed = time.perf_counter() - start
    ok = csv_a == csv_b and json_a == json_b and elapsed <= 600.0
    verdict(
        10,
        "identical config and seed reproduce metrics byte for byte",
        ok,
        f"csv identical: {csv_a == csv_b}, json identical: {json_a == json_b}, "
        f"runtime={elapsed:.1f}s (budget 600s)",
    )
