"""Netlist rendering from ``{PLACEHOLDER}`` templates.

Rendered netlists have a fixed layout::

    * name: <template>                 (template title line)
    * sweepspice parameters            (every bound token, machine readable)
    * ...
    * end parameters
    .include "<model card>"            (optional)
    <template body, substituted>
    <stimulus cards>
    .end

The stimulus cards use the node names ``in``, ``out``, ``vddh`` and ``vddl``
and the source names ``VIN``, ``VDDH`` and ``VDDL``; templates must wire
their devices to those nodes.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import StimulusError, TemplateError
from .sweep import CaseAssignment, SweepSpec

_TOKEN = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
PARAM_BLOCK_BEGIN = "* sweepspice parameters"
PARAM_BLOCK_END = "* end parameters"
PROBE_KEYS = ("vin", "vout", "ivddh", "ivddl")
DEFAULT_PROBES = {"vin": "v(in)", "vout": "v(out)", "ivddh": "i(vddh)", "ivddl": "i(vddl)"}


class UnusedBindingWarning(UserWarning):
    pass


def format_number(x: float) -> str:
    """Shortest round-tripping lowercase scientific notation, no SPICE suffixes."""
    return np.format_float_scientific(float(x), unique=True, trim="-", exp_digits=2)


@dataclass(frozen=True)
class Stimulus:
    v_in_low: float = 0.0
    v_in_high: float = 0.6
    v_ddH: float = 0.8
    v_ddL: float = 0.6
    t_rise: float = 10e-9
    t_fall: float = 10e-9
    frequency: float = 10e6
    c_load: float = 5e-15
    delay: float = 0.0

    def __post_init__(self):
        for name in ("t_rise", "t_fall", "frequency", "c_load", "v_ddH", "v_ddL"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise StimulusError(f"{name} must be positive, got {value!r}")
        if self.delay < 0:
            raise StimulusError("delay must be non-negative")
        if self.v_ddL > self.v_ddH:
            raise StimulusError("v_ddL must not exceed v_ddH")
        if self.v_in_high <= self.v_in_low:
            raise StimulusError("v_in_high must exceed v_in_low")
        if self.t_rise + self.t_fall >= self.period:
            raise StimulusError("t_rise + t_fall must be shorter than the period")
        if self.pulse_width <= 0 or self.pulse_width + self.t_rise + self.t_fall > self.period:
            raise StimulusError("edges do not fit a 50% duty pulse at this frequency")

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def pulse_width(self) -> float:
        # Width of the flat top; high for exactly half a period at half amplitude.
        return self.period / 2 - self.t_rise

    def rise_start(self, k: int) -> float:
        return self.delay + k * self.period

    def fall_start(self, k: int) -> float:
        return self.delay + k * self.period + self.period / 2

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class SimDirectives:
    n_periods: int = 3
    t_step: Optional[float] = None
    model_include: Optional[str] = None

    def step(self, stimulus: Stimulus) -> float:
        return self.t_step if self.t_step else 1.0 / (1000 * stimulus.frequency)


@dataclass(frozen=True)
class NetlistTemplate:
    name: str
    body: str
    required_placeholders: frozenset = None
    probe_signals: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_PROBES))
    inverting: bool = False

    def __post_init__(self):
        found = placeholders(self.body)
        required = found if self.required_placeholders is None else frozenset(self.required_placeholders)
        if required != found:
            raise TemplateError(
                f"template {self.name!r}: declared placeholders {sorted(required)} "
                f"differ from body tokens {sorted(found)}"
            )
        object.__setattr__(self, "required_placeholders", required)
        missing = [k for k in PROBE_KEYS if k not in self.probe_signals]
        if missing:
            raise TemplateError(f"template {self.name!r}: missing probe(s) {', '.join(missing)}")

    @classmethod
    def from_text(cls, text: str) -> "NetlistTemplate":
        lines = text.splitlines()
        if not lines or not lines[0].lower().startswith("* name:"):
            raise TemplateError("template must start with '* name: <id>'")
        name = lines[0].split(":", 1)[1].strip()
        probes = dict(DEFAULT_PROBES)
        inverting = False
        for line in lines:
            low = line.strip().lower()
            if low.startswith("* probes:"):
                for item in line.split(":", 1)[1].split():
                    key, sep, trace = item.partition("=")
                    if not sep or key.lower() not in PROBE_KEYS:
                        raise TemplateError(f"template {name!r}: bad probe binding {item!r}")
                    probes[key.lower()] = trace
            elif low.startswith("* inverting:"):
                inverting = low.split(":", 1)[1].strip() in ("1", "true", "yes")
        return cls(name, text, None, probes, inverting)

    @classmethod
    def from_file(cls, path: str | Path) -> "NetlistTemplate":
        try:
            return cls.from_text(Path(path).read_text())
        except TemplateError as exc:
            raise TemplateError(f"{path}: {exc}") from None


def placeholders(body: str) -> frozenset:
    """Tokens used in *body*; raises on stray or malformed braces."""
    for lineno, line in enumerate(body.splitlines(), 1):
        stripped = _TOKEN.sub("", line)
        if "{" in stripped or "}" in stripped:
            raise TemplateError(f"malformed placeholder on line {lineno}: {line.strip()!r}")
    return frozenset(_TOKEN.findall(body))


def builtin_template_path(name: str) -> Path:
    return Path(str(resources.files("sweepspice") / "data" / "templates" / f"{name}.cir"))


def builtin_templates() -> list[NetlistTemplate]:
    """The shipped NNPT and PNPT reconstructions."""
    return [NetlistTemplate.from_file(builtin_template_path(n)) for n in ("nnpt", "pnpt")]


def stimulus_tokens(stimulus: Stimulus, sim: SimDirectives) -> dict[str, float]:
    return {
        "VDDH": stimulus.v_ddH,
        "VDDL": stimulus.v_ddL,
        "VIN_LOW": stimulus.v_in_low,
        "VIN_HIGH": stimulus.v_in_high,
        "TRISE": stimulus.t_rise,
        "TFALL": stimulus.t_fall,
        "TDELAY": stimulus.delay,
        "PERIOD": stimulus.period,
        "PWIDTH": stimulus.pulse_width,
        "CLOAD": stimulus.c_load,
        "TSTOP": sim.n_periods * stimulus.period,
        "TSTEP": sim.step(stimulus),
    }


def resolve_binding(value, stimulus: Stimulus) -> float:
    if isinstance(value, str):
        rails = {"vddh": stimulus.v_ddH, "vddl": stimulus.v_ddL, "gnd": 0.0, "0": 0.0}
        try:
            return rails[value.strip().lower()]
        except KeyError:
            raise TemplateError(f"unknown rail reference {value!r}") from None
    return float(value)


def case_bindings(case: CaseAssignment, spec: SweepSpec, stimulus: Stimulus) -> dict[str, float]:
    """Axis values, fixed parameters and variant bindings for one case."""
    values = dict(case.axis_values)
    for key, value in spec.fixed.items():
        values[key] = resolve_binding(value, stimulus)
    for key, value in spec.variant(case.variant).bindings.items():
        values[key] = resolve_binding(value, stimulus)
    return values


def check_coverage(template: NetlistTemplate, supplied: set, strict: bool = False) -> None:
    """Raise if a required token is unbound; warn (or raise if strict) on unused bindings."""
    everything = set(supplied) | set(stimulus_tokens(Stimulus(), SimDirectives()))
    missing = template.required_placeholders - everything
    if missing:
        raise TemplateError(f"missing placeholder value(s): {', '.join(sorted(missing))}")
    unused = set(supplied) - template.required_placeholders
    if unused:
        msg = f"supplied value(s) not used by template {template.name!r}: {', '.join(sorted(unused))}"
        if strict:
            raise TemplateError(msg)
        warnings.warn(msg, UnusedBindingWarning, stacklevel=3)


def make_stimulus_cards(stimulus: Stimulus, n_periods: int, t_step: Optional[float] = None) -> str:
    if n_periods < 2:
        raise ValueError("n_periods must be >= 2")
    f = format_number
    step = t_step if t_step else 1.0 / (1000 * stimulus.frequency)
    pulse = " ".join(
        f(x)
        for x in (
            stimulus.v_in_low,
            stimulus.v_in_high,
            stimulus.delay,
            stimulus.t_rise,
            stimulus.t_fall,
            stimulus.pulse_width,
            stimulus.period,
        )
    )
    return "\n".join(
        [
            "* stimulus",
            f"VDDH vddh 0 DC {f(stimulus.v_ddH)}",
            f"VDDL vddl 0 DC {f(stimulus.v_ddL)}",
            f"VIN in 0 PULSE({pulse})",
            f"CL out 0 {f(stimulus.c_load)}",
            f".tran {f(step)} {f(n_periods * stimulus.period)} 0 {f(step)}",
        ]
    )


def render_netlist(
    template: NetlistTemplate,
    case: CaseAssignment,
    spec: SweepSpec,
    stimulus: Stimulus,
    sim: SimDirectives = SimDirectives(),
    strict: bool = False,
) -> str:
    """Substitute one case into *template*.

    Axis values, fixed parameters of *spec* and the case's variant bindings
    must cover every template token not derived from the stimulus.
    """
    bound = case_bindings(case, spec, stimulus)
    check_coverage(template, set(bound), strict)
    tokens = stimulus_tokens(stimulus, sim)
    tokens.update(bound)

    def sub(match: re.Match) -> str:
        return format_number(tokens[match.group(1)])

    lines = template.body.splitlines()
    body = [_TOKEN.sub(sub, line) for line in lines[1:]]
    while body and not body[-1].strip():
        body.pop()
    if body and body[-1].strip().lower() == ".end":
        body.pop()

    out = [lines[0], PARAM_BLOCK_BEGIN, f"* case_index={case.index}", f"* variant={case.variant}"]
    out += [f"* {k}={format_number(v)}" for k, v in tokens.items()]
    out.append(PARAM_BLOCK_END)
    if sim.model_include:
        out.append(f'.include "{sim.model_include}"')
    out += body
    out.append(make_stimulus_cards(stimulus, sim.n_periods, sim.step(stimulus)))
    out.append(".end")
    return "\n".join(out) + "\n"


def read_param_block(netlist: str) -> dict[str, str]:
    """Recover the ``name=value`` pairs written by :func:`render_netlist`."""
    params: dict[str, str] = {}
    inside = False
    for line in netlist.splitlines():
        s = line.strip()
        if s == PARAM_BLOCK_BEGIN:
            inside = True
        elif s == PARAM_BLOCK_END:
            if not inside:
                break
            return params
        elif inside:
            key, sep, value = s.lstrip("*").strip().partition("=")
            if not sep or not key:
                raise TemplateError(f"malformed parameter line {line!r}")
            params[key.strip()] = value.strip()
    raise TemplateError("netlist has no complete parameter block")
