"""Simulation engine driver: per-case execution, worker pool and resume journal.

Each case runs in its own scratch directory ``work_dir/case_<index>/``.  The
journal is an append-only text file of ``<case_index> <status>`` lines; a case
is skipped on resume only if its last journaled status is ``ok``.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import subprocess
import sys
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Optional

from . import mock
from .errors import (
    ConfigError,
    EngineError,
    EngineTimeout,
    MetricError,
    RawfileError,
    TemplateError,
    TraceNotFoundError,
)
from .metrics import MeasureConfig, evaluate_case
from .netlist import NetlistTemplate, SimDirectives, Stimulus, case_bindings, check_coverage, render_netlist
from .rawfile import parse_rawfile
from .results import CaseResult
from .sweep import CaseAssignment, SweepSpec, case_by_index, case_count

log = logging.getLogger(__name__)

DEFAULT_ARGS = ("-b", "-r", "{rawfile}", "{netlist}")
ENGINE_ENV_VAR = "SWEEPSPICE_ENGINE"


@dataclass(frozen=True)
class EngineConfig:
    executable: Optional[str] = None
    args_template: tuple[str, ...] = DEFAULT_ARGS
    model_include: Optional[str] = None
    work_dir: Path = Path("sweep_work")
    timeout: float = 60.0
    keep_artifacts: bool = False
    env: Mapping[str, str] = field(default_factory=dict)
    mock: bool = False

    def __post_init__(self):
        object.__setattr__(self, "args_template", tuple(self.args_template))
        object.__setattr__(self, "work_dir", Path(self.work_dir))
        if not self.timeout > 0:
            raise ConfigError("engine timeout must be positive")
        if not self.mock:
            if not self.executable:
                raise ConfigError(f"no engine executable configured (set one or {ENGINE_ENV_VAR})")
            n = sum(a.count("{netlist}") for a in self.args_template)
            if n != 1:
                raise ConfigError(f"args_template must contain {{netlist}} exactly once, found {n}")

    @classmethod
    def mock_engine(cls, work_dir: Path | str = "sweep_work", **kw) -> "EngineConfig":
        return cls(mock=True, work_dir=Path(work_dir), **kw)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "EngineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        known = {
            "executable": "executable",
            "args": "args_template",
            "args_template": "args_template",
            "model_include": "model_include",
            "work_dir": "work_dir",
            "timeout": "timeout",
            "keep_artifacts": "keep_artifacts",
            "env": "env",
        }
        kw = {known[k]: v for k, v in doc.items() if k in known}
        kw["executable"] = kw.get("executable") or os.environ.get(ENGINE_ENV_VAR)
        # relative model/work paths are taken relative to the config file
        for key in ("model_include", "work_dir"):
            if kw.get(key) and not Path(kw[key]).is_absolute():
                kw[key] = str((path.parent / kw[key]).resolve())
        kw.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**kw)
        except ConfigError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    def describe(self) -> str:
        if self.mock:
            return "mock"
        return " ".join([str(self.executable), *self.args_template])


def run_case(engine: EngineConfig, netlist: str, case_index: int) -> bytes:
    """Simulate one netlist and return the rawfile bytes.

    Raises :class:`EngineTimeout` when the engine is killed for exceeding the
    timeout and :class:`EngineError` for spawn failures, nonzero exit or a
    missing rawfile.
    """
    scratch = engine.work_dir / f"case_{case_index}"
    if engine.mock and not engine.keep_artifacts:
        try:
            return mock.mock_engine(netlist)
        except TemplateError as exc:
            raise EngineError(f"mock engine: {exc}") from None
    scratch.mkdir(parents=True, exist_ok=True)
    net_path = scratch / "case.cir"
    raw_path = scratch / "case.raw"
    log_path = scratch / "engine.log"
    try:
        net_path.write_text(netlist)
        if raw_path.exists():
            raw_path.unlink()
        if engine.mock:
            try:
                data = mock.mock_engine(netlist)
            except TemplateError as exc:
                raise EngineError(f"mock engine: {exc}") from None
            raw_path.write_bytes(data)
            return data
        argv = [str(engine.executable)] + [
            a.replace("{netlist}", str(net_path)).replace("{rawfile}", str(raw_path))
            for a in engine.args_template
        ]
        env = dict(os.environ)
        env.update(engine.env)
        with open(log_path, "wb") as logf:
            try:
                proc = subprocess.run(
                    argv,
                    cwd=scratch,
                    stdin=subprocess.DEVNULL,
                    stdout=logf,
                    stderr=subprocess.STDOUT,
                    env=env,
                    timeout=engine.timeout,
                )
            except subprocess.TimeoutExpired:
                raise EngineTimeout(f"engine exceeded {engine.timeout:g} s timeout and was killed") from None
            except OSError as exc:
                raise EngineError(f"cannot run engine {engine.executable!r}: {exc}") from None
        if proc.returncode != 0:
            raise EngineError(f"engine exited with status {proc.returncode}: {_tail(log_path)}")
        if not raw_path.exists():
            raise EngineError(f"engine produced no rawfile at {raw_path}: {_tail(log_path)}")
        return raw_path.read_bytes()
    finally:
        if not engine.keep_artifacts:
            shutil.rmtree(scratch, ignore_errors=True)


def _tail(path: Path, n: int = 800) -> str:
    try:
        text = path.read_bytes()[-n:].decode("utf-8", "replace")
    except OSError:
        return "(no engine log)"
    return " ".join(text.split()) or "(empty engine log)"


class Journal:
    """Append-only ``<case_index> <status>`` log used for resume."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def load(self) -> dict[int, str]:
        status: dict[int, str] = {}
        if not self.path.exists():
            return status
        for line in self.path.read_text().splitlines():
            parts = line.split()
            # a torn final line from a crash is ignored
            if len(parts) == 2 and parts[0].isdigit():
                status[int(parts[0])] = parts[1]
        return status

    def completed(self) -> set[int]:
        return {i for i, s in self.load().items() if s == "ok"}

    def open(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        torn = self.path.exists() and self.path.stat().st_size and not self.path.read_bytes().endswith(b"\n")
        self._fh = open(self.path, "a")
        if torn:
            self._fh.write("\n")
        return self

    def record(self, index: int, status: str) -> None:
        self._fh.write(f"{index} {status}\n")
        self._fh.flush()

    def close(self) -> None:
        fh = getattr(self, "_fh", None)
        if fh:
            fh.close()
            self._fh = None


@dataclass
class CaseRunner:
    """Render -> simulate -> parse -> measure for single cases."""

    spec: SweepSpec
    template: NetlistTemplate
    stimulus: Stimulus
    engine: EngineConfig
    sim: SimDirectives
    measure: MeasureConfig = MeasureConfig()

    def __post_init__(self):
        self.window = self.measure.window(self.stimulus)
        inv = self.measure.inverting
        self.inverting = self.template.inverting if inv is None else inv

    def __call__(self, case: CaseAssignment) -> CaseResult:
        try:
            netlist = render_netlist(self.template, case, self.spec, self.stimulus, self.sim)
            raw = run_case(self.engine, netlist, case.index)
        except EngineTimeout as exc:
            return CaseResult(case, "timeout", diagnostics=str(exc))
        except (EngineError, TemplateError, OSError) as exc:
            return CaseResult(case, "engine_error", diagnostics=str(exc))
        try:
            plot = _transient_plot(parse_rawfile(raw))
            metrics = evaluate_case(
                plot,
                self.template.probe_signals,
                self.stimulus,
                self.window,
                self.inverting,
                self.measure.eps_low,
                self.measure.eps_high,
                case.index,
            )
        except (RawfileError, TraceNotFoundError) as exc:
            return CaseResult(case, "parse_error", diagnostics=str(exc))
        except (MetricError, ValueError) as exc:
            return CaseResult(case, "metric_error", diagnostics=str(exc))
        return CaseResult(case, "ok", metrics)


def _transient_plot(plots):
    for p in plots:
        if p.is_transient:
            return p
    raise RawfileError("rawfile holds no transient plot")


def check_sweep(spec: SweepSpec, template: NetlistTemplate, strict: bool = False) -> None:
    """Fail fast when some variant leaves a template token unbound."""
    stim = Stimulus()
    first = {a.name: a.values[0] for a in spec.axes}
    for v in spec.variants:
        bound = case_bindings(CaseAssignment(0, first, v.id), spec, stim)
        try:
            check_coverage(template, set(bound), strict)
        except TemplateError as exc:
            raise TemplateError(f"variant {v.id!r}: {exc}") from None


def run_sweep(
    spec: SweepSpec,
    template: NetlistTemplate,
    stimulus: Stimulus,
    engine: EngineConfig,
    parallelism: int = 1,
    journal: Optional[str | Path] = None,
    *,
    sim: Optional[SimDirectives] = None,
    measure: MeasureConfig = MeasureConfig(),
    indices: Optional[Iterable[int]] = None,
    sink: Optional[Callable[[CaseResult], None]] = None,
) -> Iterator[CaseResult]:
    """Run every selected case not already journaled ``ok``.

    Results are yielded in completion order.  *sink*, if given, sees every
    result before it is journaled, including cases still in flight when the
    consumer stops iterating early; those are drained rather than abandoned
    so that each case is executed exactly once across resumed runs.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    check_sweep(spec, template)
    n_needed = measure.settle_periods + measure.window_periods
    if sim is None:
        sim = SimDirectives(n_periods=max(3, n_needed), model_include=engine.model_include)
    elif sim.n_periods < n_needed:
        raise ConfigError(f"transient covers {sim.n_periods} periods, measurement needs {n_needed}")
    runner = CaseRunner(spec, template, stimulus, engine, sim, measure)
    todo = range(case_count(spec)) if indices is None else indices
    jr = Journal(journal) if journal else None
    if jr:
        done = jr.completed()
        todo = (i for i in todo if i not in done)
    return _drive(spec, runner, iter(todo), parallelism, jr, sink)


def _drive(spec, runner, todo, parallelism, jr, sink) -> Iterator[CaseResult]:
    def deliver(result: CaseResult) -> CaseResult:
        if sink:
            sink(result)
        if jr:
            jr.record(result.index, result.status)
        return result

    if jr:
        jr.open()
    pool = ThreadPoolExecutor(max_workers=parallelism, thread_name_prefix="sweep")
    pending: set[Future] = set()
    ready: list[Future] = []
    try:
        while True:
            while len(pending) < 2 * parallelism:
                i = next(todo, None)
                if i is None:
                    break
                pending.add(pool.submit(runner, case_by_index(spec, i)))
            if not pending and not ready:
                break
            if not ready:
                finished, pending = wait(pending, return_when=FIRST_COMPLETED)
                ready = sorted(finished, key=lambda f: f.result().index)
            while ready:
                result = deliver(ready.pop(0).result())
                yield result
    finally:
        for fut in pending:
            fut.cancel()
        for fut in ready + [f for f in pending if not f.cancelled()]:
            deliver(fut.result())
        pool.shutdown(wait=True)
        if jr:
            jr.close()


def mock_subprocess_engine(work_dir: Path | str, **kw) -> EngineConfig:
    """External-process flavour of the mock (``python -m sweepspice.mock``)."""
    return EngineConfig(
        executable=sys.executable,
        args_template=("-m", "sweepspice.mock", "{netlist}", "{rawfile}"),
        work_dir=Path(work_dir),
        **kw,
    )
