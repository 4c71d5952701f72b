"""Experiment configuration: one dataclass per concern, a single global seed,
and a sectioned key-value config file with every default documented."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .metrics import ObjectiveWeights
from .workload import WorkloadConfig

EMBEDDER_CHOICES = ("sarsa", "random", "first_fit", "greedy_best_fit")


@dataclass
class AdmissionConfig:
    enabled: bool = True
    lam: float = 0.01
    epochs: int = 800


@dataclass
class RegressionConfig:
    gamma: float = 0.0  # 0 means: use the median heuristic
    max_centers: int = 500


PRIOR_MODES = ("calibrated", "empirical", "equal")


@dataclass
class ClassifierConfig:
    enabled: bool = True
    priors: str = "calibrated"


@dataclass
class SarsaConfig:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon_start: float = 0.3
    epsilon_decay: float = 0.999
    epsilon_min: float = 0.01
    quant_levels: int = 4
    position_cap: int = 4
    type_mismatch_penalty: bool = False
    episodes: int = 0  # 0 means: one episode per training-stream request


@dataclass
class PipelineConfig:
    embedder: str = "sarsa"
    scaled_allocation: bool = True
    alloc_safety: float = 1.1
    alloc_floor: float = 0.8
    alloc_load_coupling: float = 0.30


@dataclass
class SimulationConfig:
    split_ratio: float = 0.66
    metrics_bucket: float = 500.0
    time_units_per_hour: float = 100.0
    audit: bool = False


@dataclass
class ExperimentConfig:
    """Everything one reproducible experiment needs."""

    seed: int = 0
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    admission: AdmissionConfig = field(default_factory=AdmissionConfig)
    regression: RegressionConfig = field(default_factory=RegressionConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    sarsa: SarsaConfig = field(default_factory=SarsaConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def __post_init__(self):
        self.workload.seed = self.seed

    def validate(self) -> None:
        self.workload.validate()
        if self.pipeline.embedder not in EMBEDDER_CHOICES:
            raise ConfigError(f"embedder must be one of {EMBEDDER_CHOICES}")
        if self.classifier.priors not in PRIOR_MODES:
            raise ConfigError(f"classifier priors must be one of {PRIOR_MODES}")
        if not 0.0 < self.simulation.split_ratio <= 1.0:
            raise ConfigError("split_ratio must lie in (0, 1]")
        if self.admission.lam <= 0 or self.admission.epochs < 1:
            raise ConfigError("admission lam must be > 0 and epochs >= 1")
        if not 0.0 <= self.pipeline.alloc_floor <= 1.0 or self.pipeline.alloc_safety < 1.0:
            raise ConfigError("alloc_floor in [0,1] and alloc_safety >= 1 required")




def _format_value(value) -> str:
    if isinstance(value, tuple):
        return " ".join(str(v) for v in value)
    return str(value)


def _parse_like(template, raw: str, key: str):
    try:
        if isinstance(template, bool):
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
        if isinstance(template, tuple):
            parts = raw.split()
            if len(parts) != len(template):
                raise ValueError(f"expected {len(template)} values, got {len(parts)}")
            return tuple(type(t)(p) for t, p in zip(template, parts))
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from exc


def _apply_section(obj, parser: configparser.ConfigParser, section: str) -> None:
    if not parser.has_section(section):
        return
    known = {f.name: getattr(obj, f.name) for f in fields(obj)}
    for key, raw in parser.items(section):
        if key not in known:
            raise ConfigError(f"unknown key [{section}] {key}")
        setattr(obj, key, _parse_like(known[key], raw, f"[{section}] {key}"))


def config_from_ini(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = ExperimentConfig()
    if parser.has_section("experiment"):
        for key, raw in parser.items("experiment"):
            if key != "seed":
                raise ConfigError(f"unknown key [experiment] {key}")
            cfg.seed = int(raw)
    _apply_section(cfg.workload, parser, "workload")
    cfg.workload.seed = cfg.seed
    if parser.has_section("objective"):
        vals = {"cpu": cfg.weights.cpu, "mem": cfg.weights.mem, "net": cfg.weights.net}
        for key, raw in parser.items("objective"):
            if key not in vals:
                raise ConfigError(f"unknown key [objective] {key}")
            vals[key] = float(raw)
        cfg.weights = ObjectiveWeights(**vals)
    _apply_section(cfg.admission, parser, "admission")
    _apply_section(cfg.regression, parser, "regression")
    _apply_section(cfg.classifier, parser, "classifier")
    _apply_section(cfg.sarsa, parser, "sarsa")
    _apply_section(cfg.pipeline, parser, "pipeline")
    _apply_section(cfg.simulation, parser, "simulation")
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return config_from_ini(path.read_text())


_SECTION_DOCS = {
    "experiment": "Global seed; every component derives its own stream from it.",
    "workload": "Substrate, request-stream, and trace generation knobs.",
    "objective": "Resource preference weights; cpu + mem + net must equal 1.",
    "admission": "Request admission classifier (hinge loss, subgradient descent).",
    "regression": "Radial-basis regressors for the derived per-VM features.",
    "classifier": "Maximum-likelihood VM type classifier.",
    "sarsa": "On-policy learning agent for node selection.",
    "pipeline": "Stage toggles and the usage-scaled allocation policy.",
    "simulation": "Event loop, metrics bucketing, and audit switches.",
}


def config_to_ini(cfg: ExperimentConfig) -> str:
    """Render the config with one commented line per key (the file doubles
    as the reference for every default)."""
    out = io.StringIO()

    def section(name: str, pairs: list[tuple[str, object]]):
        out.write(f"# {_SECTION_DOCS[name]}\n[{name}]\n")
        for key, value in pairs:
            out.write(f"{key} = {_format_value(value)}\n")
        out.write("\n")

    section("experiment", [("seed", cfg.seed)])
    wl_pairs = [
        (f.name, getattr(cfg.workload, f.name))
        for f in fields(cfg.workload)
        if f.name != "seed"
    ]
    section("workload", wl_pairs)
    section(
        "objective",
        [("cpu", cfg.weights.cpu), ("mem", cfg.weights.mem), ("net", cfg.weights.net)],
    )
    for name, obj in (
        ("admission", cfg.admission),
        ("regression", cfg.regression),
        ("classifier", cfg.classifier),
        ("sarsa", cfg.sarsa),
        ("pipeline", cfg.pipeline),
        ("simulation", cfg.simulation),
    ):
        section(name, [(f.name, getattr(obj, f.name)) for f in fields(obj)])
    return out.getvalue()
