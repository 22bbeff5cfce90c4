"""Per-case outcome shared by the engine driver, ranker and report store."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .metrics import MetricsRecord
from .sweep import CaseAssignment

STATUSES = ("ok", "engine_error", "timeout", "parse_error", "metric_error")


@dataclass(frozen=True)
class CaseResult:
    case: CaseAssignment
    status: str
    metrics: Optional[MetricsRecord] = None
    diagnostics: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == "ok") != (self.metrics is not None):
            raise ValueError("metrics must be present exactly when status is 'ok'")

    @property
    def index(self) -> int:
        return self.case.index

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def value(self, key: str) -> float:
        if self.metrics is None:
            raise ValueError(f"case {self.index} has no metrics (status {self.status})")
        return getattr(self.metrics, key)
