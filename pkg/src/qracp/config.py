"""Central numeric tolerances and run-time limits."""

from dataclasses import dataclass, field, replace


@dataclass(frozen=True)
class Tolerances:
    exact: float = 1e-12
    validate: float = 1e-10
    kraus_reject: float = 1e-8
    intern: float = 1e-9
    min_trace: float = 1e-12


@dataclass(frozen=True)
class Limits:
    max_nodes: int = 5000
    max_depth: int = 64

    def __post_init__(self):
        if self.max_nodes <= 0 or self.max_depth <= 0:
            raise ValueError("limits must be positive")


REVERSAL_MODES = ("snapshot", "inverse")
OUTPUT_FORMATS = ("text", "json", "dot")


@dataclass(frozen=True)
class RunConfig:
    tolerances: Tolerances = field(default_factory=Tolerances)
    limits: Limits = field(default_factory=Limits)
    seed: int = 0
    output_format: str = "text"
    reversal: str = "snapshot"

    def __post_init__(self):
        if self.reversal not in REVERSAL_MODES:
            raise ValueError(f"unknown reversal mode {self.reversal!r}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ValueError(f"unknown output format {self.output_format!r}")

    def with_(self, **changes):
        return replace(self, **changes)


DEFAULT_TOLERANCES = Tolerances()
DEFAULT = RunConfig()
