"""Design-space definition and deterministic enumeration.

A sweep is the cartesian product of its parameter axes times its
configuration variants.  Every case has a stable integer index obtained by
mixed-radix encoding: the first declared axis is the fastest-varying digit
and the variant is the outermost digit.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence, Union

from .errors import SpecError

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

# A binding is either a number (volts, meters, ...) or the name of a supply rail.
Binding = Union[float, str]


@dataclass(frozen=True)
class ParameterAxis:
    name: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not _IDENT.match(self.name):
            raise SpecError(f"axis name {self.name!r} is not an identifier")
        if not self.values:
            raise SpecError(f"axis {self.name!r} has no values")
        if any(not math.isfinite(v) or v <= 0 for v in self.values):
            raise SpecError(f"axis {self.name!r} values must be finite and positive")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise SpecError(f"axis {self.name!r} values must be strictly increasing")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ConfigVariant:
    id: str
    bindings: Mapping[str, Binding] = field(default_factory=dict)

    def __post_init__(self):
        if not _IDENT.match(self.id):
            raise SpecError(f"variant id {self.id!r} is not an identifier")
        object.__setattr__(self, "bindings", dict(self.bindings))
        for key in self.bindings:
            if not _IDENT.match(key):
                raise SpecError(f"variant {self.id!r}: binding {key!r} is not an identifier")


DEFAULT_VARIANT = ConfigVariant("default")


@dataclass(frozen=True)
class CaseAssignment:
    index: int
    axis_values: Mapping[str, float]
    variant: str

    def sort_key(self) -> tuple:
        """Tie-break key: variant id, then axis values in declaration order."""
        return (self.variant, tuple(self.axis_values.values()))


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple[ParameterAxis, ...]
    fixed: Mapping[str, Binding] = field(default_factory=dict)
    variants: tuple[ConfigVariant, ...] = (DEFAULT_VARIANT,)
    name: str = "sweep"

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "fixed", dict(self.fixed))
        object.__setattr__(self, "variants", tuple(self.variants) or (DEFAULT_VARIANT,))
        names = [a.name for a in self.axes]
        if not names:
            raise SpecError("sweep has no axes")
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SpecError(f"duplicate axis name(s): {', '.join(sorted(dup))}")
        ids = [v.id for v in self.variants]
        dup = {i for i in ids if ids.count(i) > 1}
        if dup:
            raise SpecError(f"duplicate variant id(s): {', '.join(sorted(dup))}")
        for key in self.fixed:
            if key in names:
                raise SpecError(f"fixed parameter {key!r} is also a sweep axis")
        for v in self.variants:
            clash = set(v.bindings) & (set(names) | set(self.fixed))
            if clash:
                raise SpecError(
                    f"variant {v.id!r} binds {', '.join(sorted(clash))}, "
                    "which is already an axis or fixed parameter"
                )

    @property
    def axis_names(self) -> list[str]:
        return [a.name for a in self.axes]

    def variant(self, variant_id: str) -> ConfigVariant:
        for v in self.variants:
            if v.id == variant_id:
                return v
        raise SpecError(f"unknown variant {variant_id!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "axes": [{"name": a.name, "values_m": list(a.values)} for a in self.axes],
            "fixed": dict(self.fixed),
            "variants": [{"id": v.id, "bindings": dict(v.bindings)} for v in self.variants],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SweepSpec":
        try:
            axes = [ParameterAxis(a["name"], a["values_m"]) for a in doc["axes"]]
            variants = [
                ConfigVariant(v["id"], v.get("bindings", {})) for v in doc.get("variants") or []
            ]
        except (KeyError, TypeError) as exc:
            raise SpecError(f"malformed sweep config: missing or invalid field {exc}") from None
        fixed = doc.get("fixed", {}) or {}
        if not isinstance(fixed, Mapping):
            raise SpecError("malformed sweep config: 'fixed' must be an object")
        return cls(axes, fixed, variants or (DEFAULT_VARIANT,), doc.get("name", "sweep"))


def load_sweep_config(path: str | Path) -> SweepSpec:
    """Read a JSON sweep config.  Keys starting with ``_`` are comments."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        return SweepSpec.from_dict(doc)
    except SpecError as exc:
        raise SpecError(f"{path}: {exc}") from None


def case_count(spec: SweepSpec) -> int:
    return math.prod(len(a) for a in spec.axes) * len(spec.variants)


def case_by_index(spec: SweepSpec, i: int) -> CaseAssignment:
    n = case_count(spec)
    if not 0 <= i < n:
        raise IndexError(f"case index {i} out of range [0, {n})")
    rest = i
    values = {}
    for axis in spec.axes:
        rest, digit = divmod(rest, len(axis))
        values[axis.name] = axis.values[digit]
    return CaseAssignment(i, values, spec.variants[rest].id)


def index_of(spec: SweepSpec, axis_values: Mapping[str, float], variant: str) -> int:
    """Inverse of :func:`case_by_index`."""
    ids = [v.id for v in spec.variants]
    index = ids.index(variant)
    for axis in reversed(spec.axes):
        index = index * len(axis) + axis.values.index(axis_values[axis.name])
    return index


def enumerate_cases(spec: SweepSpec) -> Iterator[CaseAssignment]:
    for i in range(case_count(spec)):
        yield case_by_index(spec, i)


def shard_range(count: int, n_shards: int, shard_id: int) -> range:
    """Contiguous slice of ``range(count)`` owned by one shard.

    The first ``count % n_shards`` shards get one extra case.
    """
    if n_shards < 1:
        raise ValueError("n_shards must be >= 1")
    if not 0 <= shard_id < n_shards:
        raise ValueError(f"shard_id {shard_id} not in [0, {n_shards})")
    base, extra = divmod(count, n_shards)
    start = shard_id * base + min(shard_id, extra)
    return range(start, start + base + (shard_id < extra))


def shard(spec: SweepSpec, n_shards: int, shard_id: int) -> Iterator[CaseAssignment]:
    for i in shard_range(case_count(spec), n_shards, shard_id):
        yield case_by_index(spec, i)


def select_indices(spec: SweepSpec, indices: Sequence[int]) -> Iterator[CaseAssignment]:
    for i in indices:
        yield case_by_index(spec, i)
