"""Exception types shared across the package."""


class VnesimError(Exception):
    """Base class for all package errors."""


class AllocationError(VnesimError):
    """Requested resources exceed what a node or link has available."""


class AccountingError(VnesimError):
    """A release would push availability above capacity (bookkeeping bug)."""


class GenerationError(VnesimError):
    """Workload generation could not satisfy its structural constraints."""


class TrainingError(VnesimError):
    """A learner received data it cannot be trained on."""


class FitError(VnesimError):
    """A model fit failed on degenerate or inconsistent training data."""


class ConfigError(VnesimError):
    """Invalid configuration value or config file."""


class PipelineError(VnesimError):
    """A pipeline stage failed; carries the failing stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage={stage}: {message}")
        self.stage = stage
