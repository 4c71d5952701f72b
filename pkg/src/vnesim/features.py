"""Feature vectors shared by the learning stages.

Request-level features feed the admission classifier; per-VM core features
feed the usage regressors, whose predictions are appended to form the
aggregate vector consumed by the VM type classifier. Only information known
at arrival time goes into a feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .virtual import DelayClass, VirtualMachine, VnRequest

VN_FEATURE_NAMES = (
    "agg_cpu",
    "agg_mem",
    "vm_count",
    "link_demand",
    "priority",
    "start",
    "class_high",
    "class_moderate",
    "class_low",
)

VM_CORE_FEATURE_NAMES = ("cpu_demand", "mem_demand", "delay_class", "priority", "start")

DERIVED_TARGETS = ("lifetime", "cpu_usage", "mem_usage")


def vn_feature_vector(vn: VnRequest) -> np.ndarray:
    """Raw request-level features, in VN_FEATURE_NAMES order."""
    one_hot = [0.0, 0.0, 0.0]
    one_hot[int(vn.vn_class) - 1] = 1.0
    return np.array(
        [
            float(vn.agg_cpu),
            float(vn.agg_mem),
            float(len(vn.vms)),
            float(vn.total_link_demand),
            float(vn.priority),
            float(vn.start),
            *one_hot,
        ]
    )


def vm_core_vector(vm: VirtualMachine) -> np.ndarray:
    """Raw per-VM core features, in VM_CORE_FEATURE_NAMES order."""
    return np.array(
        [
            float(vm.cpu_demand),
            float(vm.mem_demand),
            float(int(vm.vm_class)),
            float(vm.priority),
            float(vm.start),
        ]
    )


def vm_core_scaling(cpu_hi: int, mem_hi: int, time_scale: float) -> np.ndarray:
    """Fixed divisors bringing core features to comparable magnitude.

    Derived from configuration ranges, not from data, so scaled centers in a
    stored regression model stay meaningful without extra state. The arrival
    time is deliberately down-weighted (4x the nominal span): usage outcome
    signal lives in the demand and class features, and letting wall-clock
    distance dominate the kernel makes predictions hostage to neighborhood
    noise at the edges of the observed window.
    """
    return np.array(
        [
            max(float(cpu_hi), 1.0),
            max(float(mem_hi), 1.0),
            float(max(DelayClass)),
            float(max(DelayClass)),
            4.0 * max(float(time_scale), 1.0),
        ]
    )


@dataclass
class Scaler:
    """Per-feature z-score standardisation fitted on a training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "Scaler":
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std = np.where(std > 0.0, std, 1.0)  # constant features stay centred
        return cls(mean=mean, std=std)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=float) - self.mean) / self.std
