"""Deterministic data-center simulator with a learned multi-stage placement
pipeline: request admission, per-VM usage prediction and typing, and
on-policy node selection, plus baselines, an exhaustive oracle, and metrics.
"""

from .admission import SvmModel, extract_vn_features, svm_predict, svm_train
from .classifier import MlcModel, mlc_classify, mlc_fit, mlc_log_likelihood
from .config import ExperimentConfig, config_from_ini, config_to_ini, load_config
from .embedder import (
    QTable,
    RewardBreakdown,
    SarsaAgent,
    brute_force_embed,
    compute_reward,
    embed_vn_baseline,
    encode_state,
    sarsa_update,
)
from .errors import (
    AccountingError,
    AllocationError,
    ConfigError,
    FitError,
    GenerationError,
    PipelineError,
    TrainingError,
    VnesimError,
)
from .metrics import (
    ObjectiveWeights,
    RunMetrics,
    check_constraints,
    objective_value,
    utilization_series,
)
from .regression import RbrModel, derive_features, median_heuristic_gamma, rbr_fit, rbr_predict
from .simulation import PipelineResult, run_pipeline, run_stream
from .substrate import (
    NodeKind,
    SubstrateLink,
    SubstrateNetwork,
    SubstrateNode,
    substrate_from_text,
    substrate_to_text,
)
from .virtual import (
    DelayClass,
    Embedding,
    VirtualLink,
    VirtualMachine,
    VmType,
    VnRequest,
    derive_vn_class,
    validate_embedding,
    vm_bandwidth_demand,
)
from .workload import (
    GeneratedVn,
    TraceRecord,
    WorkloadConfig,
    generate_substrate,
    generate_vn_stream,
    label_trace,
    split_train_test,
)

__version__ = "0.1.0"
