"""Constraint filtering, single-metric ranking and Pareto fronts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .results import CaseResult

CRITERIA = ("p_avg", "pdp", "t_dmax")
METRIC_KEYS = ("p_avg", "t_d_lh", "t_d_hl", "t_dmax", "pdp", "v_out_low", "v_out_high")


@dataclass(frozen=True)
class RecordFilter:
    require_ok: bool = True
    require_full_swing: bool = True
    bounds: Mapping[str, tuple[Optional[float], Optional[float]]] = field(default_factory=dict)

    def __call__(self, r: CaseResult) -> bool:
        if self.require_ok and not r.ok:
            return False
        if r.metrics is None:
            return not (self.require_full_swing or self.bounds)
        if self.require_full_swing and not r.metrics.full_swing:
            return False
        for key, (lo, hi) in self.bounds.items():
            v = getattr(r.metrics, key)
            if (lo is not None and v < lo) or (hi is not None and v > hi):
                return False
        return True

    def describe(self) -> str:
        parts = []
        if self.require_ok:
            parts.append("status=ok")
        if self.require_full_swing:
            parts.append("full_swing")
        for key, (lo, hi) in self.bounds.items():
            if lo is not None:
                parts.append(f"{key}>={lo:g}")
            if hi is not None:
                parts.append(f"{key}<={hi:g}")
        return " and ".join(parts) or "none"


@dataclass(frozen=True)
class RankedReport:
    criterion: str
    filter: str
    rows: tuple[CaseResult, ...]
    k: int


def filter_records(records: Iterable[CaseResult], predicate: RecordFilter = RecordFilter()) -> list[CaseResult]:
    return [r for r in records if predicate(r)]


def _order_key(r: CaseResult, criterion: str):
    return (r.value(criterion), r.case.variant, tuple(r.case.axis_values.values()), r.index)


def rank(records: Iterable[CaseResult], criterion: str, k: int, filter_desc: str = "none") -> RankedReport:
    """Top *k* records, ascending in *criterion*.

    Ties are broken by variant id, then by the axis values in declaration
    order, so the result does not depend on input order.
    """
    if criterion not in METRIC_KEYS:
        raise ValueError(f"unknown criterion {criterion!r}")
    if k < 0:
        raise ValueError("k must be >= 0")
    records = list(records)
    for r in records:
        if not math.isfinite(r.value(criterion)):
            raise ValueError(f"case {r.index}: {criterion} is not finite; filter such records first")
    rows = sorted(records, key=lambda r: _order_key(r, criterion))[:k]
    return RankedReport(criterion, filter_desc, tuple(rows), k)


def pareto_front(
    records: Iterable[CaseResult], keys: Sequence[str], maximize: Sequence[str] = ()
) -> list[CaseResult]:
    """Non-dominated subset, all *keys* minimised except those in *maximize*.

    Sorted by the first key with the same tie-break as :func:`rank`.
    """
    if not keys:
        raise ValueError("need at least one key")
    records = list(records)
    if not records:
        return []
    sign = np.array([-1.0 if k in maximize else 1.0 for k in keys])
    pts = np.array([[r.value(k) for k in keys] for r in records], dtype=float) * sign
    # A dominating point always sorts lexicographically earlier, so one pass
    # against the front found so far suffices.
    order = np.lexsort(pts.T[::-1])
    front: list[int] = []
    kept = np.empty((0, len(keys)))
    for i in order:
        p = pts[i]
        if kept.size:
            dominated = np.all(kept <= p, axis=1) & np.any(kept < p, axis=1)
            if dominated.any():
                continue
        front.append(int(i))
        kept = np.vstack([kept, p])
    out = [records[i] for i in front]
    first = keys[0]
    s = -1.0 if first in maximize else 1.0
    out.sort(key=lambda r: (s * r.value(first),) + _order_key(r, first)[1:])
    return out
