"""Command-line interface: ``sweepspice validate|sweep|rank|pareto|parse|report``.

Exit codes: 0 success, 1 validation error, 2 runtime/engine error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import signal
import sys
import threading
from pathlib import Path
from typing import Optional, Sequence

from .engine import ENGINE_ENV_VAR, EngineConfig, Journal, check_sweep, run_sweep
from .errors import (
    ConfigError,
    EngineError,
    MetricError,
    RawfileError,
    ResultsFormatError,
    SpecError,
    StimulusError,
    TemplateError,
)
from .metrics import MeasureConfig
from .netlist import NetlistTemplate, SimDirectives, Stimulus, builtin_template_path
from .ranker import CRITERIA, METRIC_KEYS, RankedReport, RecordFilter, filter_records, pareto_front, rank
from .rawfile import parse_rawfile
from .store import (
    format_jsonl_row,
    load_results,
    make_header,
    merge_result_files,
    render_table,
    write_results,
)
from .sweep import SweepSpec, case_count, load_sweep_config, shard_range

log = logging.getLogger("sweepspice")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3

_SUFFIX = {"f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3, "k": 1e3, "meg": 1e6, "g": 1e9, "t": 1e12}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(meg|[fpnumkgt])?\s*$", re.I)


def parse_quantity(text: str) -> float:
    """Decimal number with an optional engineering suffix: ``40n``, ``5f``, ``10meg``."""
    m = _QUANTITY.match(text)
    if not m:
        raise argparse.ArgumentTypeError(f"not a quantity: {text!r}")
    value = float(m.group(1))
    if m.group(2):
        value *= _SUFFIX[m.group(2).lower()]
    return value


def parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def parse_shard(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)/(\d+)", text.strip())
    if not m or int(m.group(2)) < 1 or int(m.group(1)) >= int(m.group(2)):
        raise argparse.ArgumentTypeError(f"shard must be I/N with 0 <= I < N, got {text!r}")
    return int(m.group(1)), int(m.group(2))


# ------------------------------------------------------------ config loading


def load_template(ref: str, base: Optional[Path] = None) -> NetlistTemplate:
    """A template file path, or the name of a shipped template (nnpt, pnpt, toy)."""
    path = Path(ref)
    if base is not None and not path.is_absolute() and not path.exists():
        path = base / ref
    if not path.exists() and re.fullmatch(r"[A-Za-z0-9_]+", ref):
        path = builtin_template_path(ref)
    if not path.exists():
        raise TemplateError(f"template {ref!r} not found")
    return NetlistTemplate.from_file(path)


def load_config(path: str, template_ref: Optional[str]) -> tuple[SweepSpec, NetlistTemplate]:
    spec = load_sweep_config(path)
    if template_ref is None:
        try:
            template_ref = json.loads(Path(path).read_text()).get("template")
        except (AttributeError, ValueError):
            template_ref = None
    if not template_ref:
        raise TemplateError(f"{path}: no template given (use --template or a 'template' key)")
    return spec, load_template(template_ref, Path(path).parent)


def build_stimulus(args) -> Stimulus:
    kw = {}
    for flag, field in (
        ("vddh", "v_ddH"),
        ("vddl", "v_ddL"),
        ("vin_low", "v_in_low"),
        ("vin_high", "v_in_high"),
        ("t_rise", "t_rise"),
        ("t_fall", "t_fall"),
        ("freq", "frequency"),
        ("cload", "c_load"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            kw[field] = value
    return Stimulus(**kw)


def build_measure(args) -> MeasureConfig:
    return MeasureConfig(
        settle_periods=args.settle_periods,
        window_periods=args.window_periods,
        eps_low=args.eps_low,
        eps_high=args.eps_high,
        inverting=args.inverting,
    )


def build_engine(args) -> EngineConfig:
    if args.mock and args.engine:
        raise ConfigError("--mock and --engine are mutually exclusive")
    work = getattr(args, "work_dir", None)
    if args.mock:
        return EngineConfig.mock_engine(work or "sweep_work", timeout=args.timeout or 60.0)
    if args.engine:
        return EngineConfig.from_file(args.engine, work_dir=work, timeout=args.timeout)
    exe = os.environ.get(ENGINE_ENV_VAR)
    if exe:
        return EngineConfig(executable=exe, work_dir=work or "sweep_work", timeout=args.timeout or 60.0)
    raise ConfigError(f"no engine: pass --engine PATH, --mock, or set {ENGINE_ENV_VAR}")


# ----------------------------------------------------------------- commands


def cmd_validate(args) -> int:
    if args.template and len(args.template) != len(args.config):
        raise ConfigError("give one --template per --config, or none")
    stim = build_stimulus(args)
    measure = build_measure(args)
    sim = SimDirectives(n_periods=max(3, measure.settle_periods + measure.window_periods))
    total = 0
    n_points = int(round(sim.n_periods * stim.period / sim.step(stim))) + 1
    raw_bytes = n_points * 5 * 8
    for n, cfg in enumerate(args.config):
        spec, template = load_config(cfg, args.template[n] if args.template else None)
        check_sweep(spec, template, strict=args.strict)
        count = case_count(spec)
        total += count
        print(f"{cfg}: {spec.name}: {len(spec.axes)} axes x {len(spec.variants)} variant(s), "
              f"template {template.name!r}: {count:,} cases")
    if args.engine or args.mock:
        build_engine(args)
    par = max(1, args.parallelism)
    print(f"total: {total:,} cases")
    print(f"scratch estimate: ~{_human(raw_bytes)} per case, ~{_human(raw_bytes * par)} in flight "
          f"at parallelism {par}, ~{_human(raw_bytes * total)} with --keep-artifacts")
    return EXIT_OK


def _human(n: float) -> str:
    for unit in ("B", "KB", "MB", "GB", "TB"):
        if n < 1024 or unit == "TB":
            return f"{n:.1f} {unit}"
        n /= 1024


def cmd_sweep(args) -> int:
    spec, template = load_config(args.config, args.template)
    stim = build_stimulus(args)
    measure = build_measure(args)
    engine = build_engine(args)
    if args.keep_artifacts:
        engine = EngineConfig(**{**engine.__dict__, "keep_artifacts": True})
    check_sweep(spec, template)
    out = Path(args.out)
    journal_path = Path(args.journal) if args.journal else out.with_name(out.name + ".journal")
    partial = out.with_name(out.name + ".partial.jsonl")
    header = make_header(spec, template.body, stim.to_dict(), engine.describe())
    count = case_count(spec)
    selected = shard_range(count, args.shard[1], args.shard[0]) if args.shard else range(count)

    previous = {}
    if args.resume:
        for src in (out, partial):
            if src.exists():
                h, rows = load_results(src)
                if h.get("fingerprint") != header["fingerprint"]:
                    raise ConfigError(f"{src} was produced by a different sweep config or template")
                previous.update({r.index: r for r in rows})
        lost = sorted(Journal(journal_path).completed() - set(previous))
        if lost:
            log.warning("%d journaled case(s) have no stored result and will not be rerun", len(lost))
    else:
        for stale in (journal_path, partial):
            if stale.exists():
                stale.unlink()
    # the partial file is written before the journal, so stored ok rows are authoritative
    todo = [i for i in selected if not (i in previous and previous[i].ok)]

    out.parent.mkdir(parents=True, exist_ok=True)
    fresh = {}
    wanted = set(selected)
    stop = _StopFlag()
    with stop, open(partial, "a") as pf:
        if pf.tell() == 0:
            pf.write(json.dumps(header, sort_keys=True) + "\n")

        def sink(result):
            fresh[result.index] = result
            pf.write(format_jsonl_row(result, spec.axis_names) + "\n")
            pf.flush()

        results = run_sweep(
            spec, template, stim, engine, args.parallelism, journal_path,
            measure=measure, indices=todo, sink=sink,
        )
        try:
            for n, _ in enumerate(results, 1):
                if args.progress and n % args.progress == 0:
                    print(f"progress: {n}/{len(todo)} cases run", file=sys.stderr)
                if stop.raised:
                    break
        finally:
            results.close()
            merged = {**previous, **fresh}
            write_results([r for i, r in merged.items() if i in wanted], out, args.format, header)
    if stop.raised:
        print(f"interrupted after {len(fresh)} case(s); rerun with --resume to continue", file=sys.stderr)
        return EXIT_RUNTIME
    if len(merged.keys() & wanted) == len(wanted):
        partial.unlink()
    stats = {}
    for r in merged.values():
        stats[r.status] = stats.get(r.status, 0) + 1
    summary = ", ".join(f"{k}={v}" for k, v in sorted(stats.items()))
    print(f"{len(fresh)} case(s) simulated, {len(merged)} stored in {out} ({summary})")
    return EXIT_OK


class _StopFlag:
    """Turns SIGINT/SIGTERM into a flag checked between cases."""

    def __init__(self):
        self.raised = False
        self._old = {}

    def _handle(self, signum, frame):
        self.raised = True

    def __enter__(self):
        if threading.current_thread() is threading.main_thread():
            for sig in (signal.SIGINT, signal.SIGTERM):
                self._old[sig] = signal.signal(sig, self._handle)
        return self

    def __exit__(self, *exc):
        for sig, old in self._old.items():
            signal.signal(sig, old)
        return False


def _filter_from_args(args) -> RecordFilter:
    bounds = {}
    for spec_text, side in [(b, 0) for b in args.min or []] + [(b, 1) for b in args.max or []]:
        key, sep, value = spec_text.partition("=")
        if not sep or key not in METRIC_KEYS:
            raise ConfigError(f"bad bound {spec_text!r}; use KEY=VALUE with KEY in {', '.join(METRIC_KEYS)}")
        lo, hi = bounds.get(key, (None, None))
        bounds[key] = (parse_quantity(value), hi) if side == 0 else (lo, parse_quantity(value))
    return RecordFilter(require_ok=True, require_full_swing=args.require_full_swing, bounds=bounds)


def cmd_rank(args) -> int:
    header, records = merge_result_files(args.results)
    flt = _filter_from_args(args)
    report = rank(filter_records(records, flt), args.by, args.k, flt.describe())
    text = render_table(report)
    print(text, end="")
    if args.report:
        _write_report(args.report, report.rows, header, text)
    return EXIT_OK


def cmd_pareto(args) -> int:
    header, records = merge_result_files(args.results)
    keys = [k.strip() for k in args.keys.split(",") if k.strip()]
    for k in keys + list(args.maximize or []):
        if k not in METRIC_KEYS:
            raise ConfigError(f"unknown metric {k!r}")
    flt = _filter_from_args(args)
    front = pareto_front(filter_records(records, flt), keys, args.maximize or ())
    report = RankedReport(f"pareto({', '.join(keys)})", flt.describe(), tuple(front), len(front))
    text = render_table(report)
    print(text, end="")
    if args.report:
        _write_report(args.report, front, header, text)
    return EXIT_OK


def _write_report(path: str, rows, header: dict, text: str) -> None:
    p = Path(path)
    if p.suffix in (".csv", ".jsonl"):
        write_results(rows, p, p.suffix[1:], header)
    else:
        p.write_text(text)


def cmd_report(args) -> int:
    header, records = merge_result_files(args.results)
    stats = {}
    for r in records:
        stats[r.status] = stats.get(r.status, 0) + 1
    flt = _filter_from_args(args)
    kept = filter_records(records, flt)
    lines = [
        f"results: {len(records)} case(s) from {len(args.results)} file(s)",
        f"fingerprint: {header.get('fingerprint', '?')}",
        "status: " + (", ".join(f"{k}={v}" for k, v in sorted(stats.items())) or "none"),
        f"passing filter ({flt.describe()}): {len(kept)}",
        "",
    ]
    print("\n".join(lines))
    for crit in CRITERIA:
        print(render_table(rank(kept, crit, args.k, flt.describe())))
    return EXIT_OK


def cmd_parse(args) -> int:
    plots = parse_rawfile(Path(args.rawfile).read_bytes())
    for n, plot in enumerate(plots):
        print(f"plot {n}: {plot.plotname!r} ({plot.flags}, {plot.n_points} points)")
        for v in plot.variables:
            col = plot.values[:, v.index].real
            lo, hi = (col.min(), col.max()) if len(col) else (float("nan"), float("nan"))
            print(f"  {v.index:3d}  {v.name:<20s} {v.kind:<8s} min={lo:.6g} max={hi:.6g}")
    if args.csv:
        plot = plots[args.plot]
        import csv

        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(plot.names)
            for row in plot.values.real if not plot.is_complex else plot.values:
                w.writerow([f"{x:.17g}" if not plot.is_complex else str(x) for x in row])
    return EXIT_OK


# ------------------------------------------------------------------ parsing


def _add_physics(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("stimulus and measurement")
    q = parse_quantity
    g.add_argument("--vddh", type=q, help="high supply (default 0.8)")
    g.add_argument("--vddl", type=q, help="low supply (default 0.6)")
    g.add_argument("--vin-low", dest="vin_low", type=q)
    g.add_argument("--vin-high", dest="vin_high", type=q)
    g.add_argument("--t-rise", dest="t_rise", type=q, help="input rise time (default 10n)")
    g.add_argument("--t-fall", dest="t_fall", type=q, help="input fall time (default 10n)")
    g.add_argument("--freq", type=q, help="input frequency (default 10meg)")
    g.add_argument("--cload", type=q, help="load capacitance (default 5f)")
    g.add_argument("--settle-periods", dest="settle_periods", type=int, default=1)
    g.add_argument("--window-periods", dest="window_periods", type=int, default=2)
    g.add_argument("--eps-low", dest="eps_low", type=q, default=10e-6)
    g.add_argument("--eps-high", dest="eps_high", type=q, default=1e-3)
    g.add_argument("--inverting", nargs="?", const=True, type=parse_bool, default=None)


def _add_engine(p: argparse.ArgumentParser) -> None:
    p.add_argument("--engine", help="engine config JSON")
    p.add_argument("--mock", action="store_true", help="use the built-in mock engine")
    p.add_argument("--timeout", type=float)
    p.add_argument("--work-dir", dest="work_dir")
    p.add_argument("--parallelism", type=int, default=1)


def _add_filters(p: argparse.ArgumentParser) -> None:
    p.add_argument("--require-full-swing", dest="require_full_swing", nargs="?", const=True,
                   type=parse_bool, default=True)
    p.add_argument("--min", action="append", metavar="KEY=VALUE")
    p.add_argument("--max", action="append", metavar="KEY=VALUE")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sweepspice", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check configs and print case counts")
    p.add_argument("--config", action="append", required=True)
    p.add_argument("--template", action="append")
    p.add_argument("--strict", action="store_true", help="unused bindings are errors")
    _add_engine(p)
    _add_physics(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="simulate every case and store results")
    p.add_argument("--config", required=True)
    p.add_argument("--template")
    _add_engine(p)
    _add_physics(p)
    p.add_argument("--shard", type=parse_shard, metavar="I/N")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--journal")
    p.add_argument("--out", default="results.csv")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--keep-artifacts", dest="keep_artifacts", action="store_true")
    p.add_argument("--progress", type=int, default=0, metavar="N", help="progress line every N cases")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("rank", help="rank stored results by one metric")
    p.add_argument("results", nargs="+")
    p.add_argument("--by", choices=CRITERIA, default="p_avg")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--report")
    _add_filters(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("pareto", help="non-dominated solutions over several metrics")
    p.add_argument("results", nargs="+")
    p.add_argument("--keys", default="p_avg,t_dmax")
    p.add_argument("--maximize", action="append")
    p.add_argument("--report")
    _add_filters(p)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("report", help="status summary plus top-k tables for every criterion")
    p.add_argument("results", nargs="+")
    p.add_argument("-k", type=int, default=10)
    _add_filters(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("parse", help="list the traces of a rawfile")
    p.add_argument("rawfile")
    p.add_argument("--csv")
    p.add_argument("--plot", type=int, default=0)
    p.set_defaults(func=cmd_parse)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if getattr(args, "k", 0) is not None and getattr(args, "k", 0) < 0:
            raise ConfigError("-k must be >= 0")
        if getattr(args, "parallelism", 1) < 1:
            raise ConfigError("--parallelism must be >= 1")
        return args.func(args)
    except (SpecError, TemplateError, StimulusError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ResultsFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (EngineError, MetricError, RawfileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        print("interrupted; partial results flushed", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
