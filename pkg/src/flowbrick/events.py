"""Alert events shared by all window detectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class AlertEvent:
    """Outcome of one detector step on one window.

    bins holds the flagged bin indices (empty when nothing fired) and
    values the per-bin statistic that crossed the threshold.  severity is
    the flagged-bin count.  diagnostics carries detector-specific state
    (smoothed tail parameters, quantiles, degree baselines) for logging.
    """

    window: int
    detector: str
    array: str
    bins: tuple[int, ...] = ()
    values: tuple[float, ...] = ()
    threshold: float = float("inf")
    severity: int = 0
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.bins) != len(self.values):
            raise ValueError("bins and values must pair up")
        if self.severity < 0:
            raise ValueError("severity must be >= 0")

    @property
    def fired(self) -> bool:
        return self.severity > 0

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "window": self.window,
            "detector": self.detector,
            "array": self.array,
            "bins": list(self.bins),
            "values": list(self.values),
            "threshold": self.threshold,
            "severity": self.severity,
            "diagnostics": dict(self.diagnostics),
        }
