"""Command-line experiment driver.

Subcommands:
  generate   substrate + request stream + labeled trace
  train      any subset of the learners from generated artifacts
  evaluate   frozen pipeline on the held-out stream, emits metrics
  oracle     learned agent and greedy baseline vs exhaustive optimum
  report     render figures from a run's metric files

Exit codes: 0 on success, 2 for usage or config problems, 1 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from .config import EMBEDDER_CHOICES, ExperimentConfig, config_to_ini, load_config
from .errors import ConfigError, VnesimError
from .seeding import component_rng

STAGES = ("svm", "rbr", "mlc", "sarsa")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vnesim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file (defaults are used when omitted)")
        p.add_argument("--seed", type=int, help="override the experiment seed")
        p.add_argument("--out", default="out", help="artifact directory")

    p = sub.add_parser("generate", help="write substrate, stream, and labeled trace")
    common(p)
    p.add_argument("--vn-count", type=int, help="override the request count")

    p = sub.add_parser("train", help="train models from generated artifacts")
    common(p)
    p.add_argument("stages", nargs="*", metavar="stage", help=f"subset of {STAGES} (default: all)")

    p = sub.add_parser("evaluate", help="run the frozen pipeline on the held-out stream")
    common(p)
    p.add_argument("--no-admission", action="store_true", help="send every request onward")
    p.add_argument("--no-classifier", action="store_true", help="use ground-truth types")
    p.add_argument("--embedder", choices=EMBEDDER_CHOICES, help="override node selection")

    p = sub.add_parser("oracle", help="compare agent and greedy against brute force")
    common(p)
    p.add_argument("--instances", type=int, default=50, help="number of tiny instances")

    p = sub.add_parser("report", help="render figures from metric files")
    p.add_argument("--out", default="out", help="directory holding metrics.csv/summary.json")
    return parser


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = int(args.seed)
        cfg.workload.seed = cfg.seed
    cfg.validate()
    return cfg


def _cmd_generate(args) -> int:
    from .simulation import full_demand_plan, greedy_placer, run_stream, write_stream_file
    from .substrate import substrate_to_text
    from .workload import generate_substrate, generate_vn_stream, label_trace, trace_to_csv

    cfg = _load_cfg(args)
    if args.vn_count is not None:
        cfg.workload.vn_count = args.vn_count
        cfg.workload.validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    substrate = generate_substrate(cfg.workload)
    stream = generate_vn_stream(cfg.workload)
    ref = run_stream(substrate.clone(), stream, greedy_placer, full_demand_plan)
    outcome = {r.vn_id: r.accepted for r in ref.results}
    records = label_trace([(gvn, outcome[gvn.vn.id]) for gvn in stream], cfg.workload)
    (out / "substrate.txt").write_text(substrate_to_text(substrate))
    write_stream_file(stream, out / "stream.txt")
    (out / "trace.csv").write_text(trace_to_csv(records))
    (out / "config.ini").write_text(config_to_ini(cfg))
    print(f"generate: wrote substrate.txt, stream.txt, trace.csv under {out}")
    return 0


def _load_generated(cfg: ExperimentConfig, out: Path):
    from .substrate import substrate_from_text
    from .workload import label_trace, split_train_test, stream_from_text

    for name in ("substrate.txt", "stream.txt", "trace.csv"):
        if not (out / name).exists():
            raise ConfigError(f"missing {name} under {out}; run generate first")
    substrate = substrate_from_text((out / "substrate.txt").read_text())
    stream = stream_from_text((out / "stream.txt").read_text())
    labels = _trace_labels(out / "trace.csv")
    records = label_trace(
        [(gvn, labels[gvn.vn.id]) for gvn in stream], cfg.workload
    )
    train_records, test_records = split_train_test(
        records, cfg.simulation.split_ratio, cfg.seed
    )
    return substrate, stream, records, train_records, test_records


def _trace_labels(path: Path) -> dict[int, bool]:
    labels: dict[int, bool] = {}
    with path.open() as fh:
        for row in csv.DictReader(fh):
            labels[int(row["vn_id"])] = row["vn_label"] == "accepted"
    return labels


def _cmd_train(args) -> int:
    from .admission import svm_save
    from .classifier import mlc_save
    from .embedder import qtable_save
    from .regression import rbr_save
    from .simulation import train_sarsa, train_supervised

    cfg = _load_cfg(args)
    stages = list(args.stages) or list(STAGES)
    for stage in stages:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; choose from {STAGES}")
    out = Path(args.out)
    substrate, stream, records, train_records, _ = _load_generated(cfg, out)
    models = train_supervised(train_records, cfg)
    if "svm" in stages:
        svm_save(models.svm, out / "svm.txt")
    if "rbr" in stages:
        for target, model in models.rbrs.items():
            rbr_save(model, out / f"rbr_{target}.txt")
    if "mlc" in stages:
        mlc_save(models.mlc, out / "mlc.txt")
    if "sarsa" in stages:
        from .workload import rescale_stream

        ids = {r.vn.id for r in train_records}
        train_stream = rescale_stream(
            [gvn for gvn in stream if gvn.vn.id in ids], cfg.simulation.split_ratio
        )
        qtable, rewards, _ = train_sarsa(substrate, train_stream, models, cfg)
        qtable_save(qtable, out / "qtable.txt")
        from .report import write_rewards_csv

        write_rewards_csv(rewards, out / "rewards.csv")
    print(f"train: trained {' '.join(stages)} under {out}")
    return 0


def _cmd_evaluate(args) -> int:
    from .admission import svm_load
    from .classifier import mlc_load
    from .embedder import QTable, SarsaAgent, qtable_load
    from .metrics import acceptance_and_allocation_stats, metrics_csv, metrics_json
    from .regression import rbr_load
    from .simulation import (
        PipelineModels,
        StagedPlacer,
        admission_accuracy_on,
        full_demand_plan,
        predict_vm_types,
        run_stream,
        scaled_allocation_plan,
        share_error,
    )
    from .features import DERIVED_TARGETS

    cfg = _load_cfg(args)
    if args.no_admission:
        cfg.admission.enabled = False
    if args.no_classifier:
        cfg.classifier.enabled = False
    if args.embedder:
        cfg.pipeline.embedder = args.embedder
    out = Path(args.out)
    substrate, stream, records, train_records, test_records = _load_generated(cfg, out)

    models = PipelineModels()
    clamps = {"lifetime": (1e-6, None), "cpu_usage": (1e-6, 1.0), "mem_usage": (1e-6, 1.0)}
    if cfg.admission.enabled:
        path = out / "svm.txt"
        if not path.exists():
            raise ConfigError(f"missing model file {path}; run train first")
        models.svm = svm_load(path)
    if cfg.classifier.enabled:
        for target in DERIVED_TARGETS:
            path = out / f"rbr_{target}.txt"
            if not path.exists():
                raise ConfigError(f"missing model file {path}; run train first")
            models.rbrs[target] = rbr_load(path, clamp=clamps[target])
        path = out / "mlc.txt"
        if not path.exists():
            raise ConfigError(f"missing model file {path}; run train first")
        models.mlc = mlc_load(path)
    agent = None
    if cfg.pipeline.embedder == "sarsa":
        path = out / "qtable.txt"
        if not path.exists():
            raise ConfigError(f"missing model file {path}; run train first")
        loaded = qtable_load(path)
        frozen = QTable(
            alpha=loaded.alpha,
            gamma=loaded.gamma,
            epsilon=0.0,
            epsilon_decay=1.0,
            epsilon_min=0.0,
            values=loaded.values,
        )
        agent = SarsaAgent(
            frozen,
            rng=component_rng(cfg.seed, "evaluate"),
            levels=cfg.sarsa.quant_levels,
            position_cap=cfg.sarsa.position_cap,
            type_mismatch_penalty=cfg.sarsa.type_mismatch_penalty,
        )

    from .workload import rescale_stream

    ids = {r.vn.id for r in test_records}
    test_stream = rescale_stream(
        [gvn for gvn in stream if gvn.vn.id in ids], 1.0 - cfg.simulation.split_ratio
    )
    placer = StagedPlacer(
        cfg, models, agent, train_agent=False, baseline_rng=component_rng(cfg.seed, "evaluate")
    )
    plan = (
        scaled_allocation_plan(
            cfg.pipeline.alloc_safety,
            cfg.pipeline.alloc_floor,
            cfg.pipeline.alloc_load_coupling,
        )
        if cfg.pipeline.scaled_allocation and cfg.classifier.enabled
        else full_demand_plan
    )
    result = run_stream(
        substrate.clone(), test_stream, placer, plan, audit=cfg.simulation.audit
    )
    accuracy = admission_accuracy_on(test_records, models.svm) if models.svm else None
    err = None
    if models.mlc is not None:
        truth, preds = predict_vm_types(test_records, models, cfg)
        err = share_error(truth, preds) if truth else None
    metrics = acceptance_and_allocation_stats(
        result.log,
        substrate,
        result.demand_cpu,
        result.demand_mem,
        result.alloc_cpu,
        result.alloc_mem,
        admission_accuracy=accuracy,
        vm_type_share_error=err,
    )
    (out / "metrics.csv").write_text(metrics_csv(result.log, substrate, cfg.simulation.metrics_bucket))
    (out / "summary.json").write_text(metrics_json(metrics))
    print(
        f"evaluate: acceptance {metrics.acceptance_rate:.3f}, "
        f"admission accuracy {metrics.admission_accuracy if metrics.admission_accuracy is not None else 'n/a'}, "
        f"wrote metrics.csv and summary.json under {out}"
    )
    return 0


def _cmd_oracle(args) -> int:
    from .metrics import ObjectiveWeights
    from .oracle import oracle_comparison

    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = oracle_comparison(
        instances=args.instances, seed=cfg.seed, weights=ObjectiveWeights()
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["instance", "agent_ratio", "greedy_ratio"])
    for i, (agent_ratio, greedy_ratio) in enumerate(rows):
        writer.writerow([i, repr(agent_ratio), repr(greedy_ratio)])
    (out / "oracle.csv").write_text(buf.getvalue())
    mean_agent = float(np.mean([r[0] for r in rows]))
    mean_greedy = float(np.mean([r[1] for r in rows]))
    print(
        f"oracle: mean agent ratio {mean_agent:.3f}, mean greedy ratio {mean_greedy:.3f}, "
        f"wrote oracle.csv under {out}"
    )
    return 0


def _cmd_report(args) -> int:
    from .report import render_report

    written = render_report(args.out)
    print("report: wrote " + " ".join(p.name for p in written))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "oracle": _cmd_oracle,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VnesimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
