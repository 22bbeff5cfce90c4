import collections
import os
import stat
import sys
import threading

import pytest

from sweepspice import mock
from sweepspice.engine import (
    EngineConfig,
    Journal,
    check_sweep,
    mock_subprocess_engine,
    run_case,
    run_sweep,
)
from sweepspice.errors import ConfigError, EngineError, EngineTimeout, TemplateError
from sweepspice.netlist import NetlistTemplate, Stimulus, render_netlist
from sweepspice.rawfile import parse_rawfile
from sweepspice.results import CaseResult
from sweepspice.store import write_results
from sweepspice.sweep import ParameterAxis, SweepSpec, case_by_index, shard_range


def netlist_for(spec, template, i=0):
    return render_netlist(template, case_by_index(spec, i), spec, Stimulus())


def script(path, body):
    path.write_text("#!/bin/sh\n" + body)
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


@pytest.fixture
def counter(monkeypatch):
    """Counts mock-engine invocations per case index."""
    counts = collections.Counter()
    lock = threading.Lock()
    real = mock.mock_engine

    def counting(netlist):
        idx = int(netlist.split("* case_index=")[1].split()[0])
        with lock:
            counts[idx] += 1
        return real(netlist)

    monkeypatch.setattr(mock, "mock_engine", counting)
    return counts


def test_mock_rawfile_has_four_traces(toy_spec, toy_template, mock_engine):
    plots = parse_rawfile(run_case(mock_engine, netlist_for(toy_spec, toy_template), 0))
    assert len(plots) == 1 and plots[0].is_transient
    assert set(plots[0].names) >= {"v(in)", "v(out)", "i(vddh)", "i(vddl)"}


def test_mock_is_deterministic(toy_spec, toy_template):
    net = netlist_for(toy_spec, toy_template, 123)
    assert mock.mock_engine(net) == mock.mock_engine(net)


def test_mock_rejects_malformed_block():
    with pytest.raises(TemplateError):
        mock.mock_engine("* title\nM1 a b c d n\n.end\n")


def test_nonexistent_executable(tmp_path, toy_spec, toy_template):
    eng = EngineConfig(executable=str(tmp_path / "no-such-spice"), work_dir=tmp_path / "w")
    with pytest.raises(EngineError, match="no-such-spice"):
        run_case(eng, netlist_for(toy_spec, toy_template), 0)


def test_timeout_kills_sleeping_stub(tmp_path, toy_spec, toy_template):
    stub = script(tmp_path / "sleepy", "sleep 5\n")
    eng = EngineConfig(executable=stub, work_dir=tmp_path / "w", timeout=0.001)
    with pytest.raises(EngineTimeout):
        run_case(eng, netlist_for(toy_spec, toy_template), 0)
    res = list(run_sweep(toy_spec, toy_template, Stimulus(), eng, indices=[0]))
    assert [r.status for r in res] == ["timeout"]


def test_nonzero_exit_captures_log(tmp_path, toy_spec, toy_template):
    stub = script(tmp_path / "bad", "echo 'fatal: no model nmos' >&2\nexit 3\n")
    eng = EngineConfig(executable=stub, work_dir=tmp_path / "w")
    with pytest.raises(EngineError, match="status 3.*no model nmos"):
        run_case(eng, netlist_for(toy_spec, toy_template), 0)


def test_missing_rawfile(tmp_path, toy_spec, toy_template):
    eng = EngineConfig(executable=script(tmp_path / "quiet", "exit 0\n"), work_dir=tmp_path / "w")
    with pytest.raises(EngineError, match="no rawfile"):
        run_case(eng, netlist_for(toy_spec, toy_template), 0)


def test_scratch_layout_and_cleanup(tmp_path, toy_spec, toy_template):
    eng = mock_subprocess_engine(tmp_path / "w")
    data = run_case(eng, netlist_for(toy_spec, toy_template, 7), 7)
    assert parse_rawfile(data) and not (tmp_path / "w" / "case_7").exists()
    keep = mock_subprocess_engine(tmp_path / "k", keep_artifacts=True)
    run_case(keep, netlist_for(toy_spec, toy_template, 7), 7)
    assert {p.name for p in (tmp_path / "k" / "case_7").iterdir()} == {"case.cir", "case.raw", "engine.log"}


def test_engine_env_and_cwd(tmp_path, toy_spec, toy_template):
    stub = script(tmp_path / "envy", 'pwd > "$OUT_DIR/cwd"; echo "$MY_FLAG" > "$OUT_DIR/flag"; exit 1\n')
    eng = EngineConfig(executable=stub, work_dir=tmp_path / "w", env={"MY_FLAG": "on", "OUT_DIR": str(tmp_path)})
    with pytest.raises(EngineError):
        run_case(eng, netlist_for(toy_spec, toy_template, 2), 2)
    assert (tmp_path / "flag").read_text().strip() == "on"
    assert (tmp_path / "cwd").read_text().strip().endswith("case_2")


def test_engine_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="exactly once"):
        EngineConfig(executable="x", args_template=("-b",))
    with pytest.raises(ConfigError, match="timeout"):
        EngineConfig(executable="x", timeout=0)
    cfg = tmp_path / "e.json"
    cfg.write_text('{"executable": "ngspice", "model_include": "m.pm", "work_dir": "w", "timeout": 9}')
    eng = EngineConfig.from_file(cfg)
    assert eng.model_include == str(tmp_path / "m.pm") and eng.timeout == 9


def test_env_var_fallback(tmp_path, monkeypatch):
    cfg = tmp_path / "e.json"
    cfg.write_text('{"timeout": 5}')
    monkeypatch.setenv("SWEEPSPICE_ENGINE", "/opt/spice/bin/ngspice")
    assert EngineConfig.from_file(cfg).executable == "/opt/spice/bin/ngspice"


def test_parallelism_zero_rejected(toy_spec, toy_template, mock_engine):
    with pytest.raises(ValueError):
        run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, parallelism=0)


def test_mismatch_detected_before_execution(toy_template, mock_engine, counter):
    spec = SweepSpec((ParameterAxis("L", (1e-7,)), ParameterAxis("WN", (1e-7,))))
    with pytest.raises(TemplateError, match="WP"):
        run_sweep(spec, toy_template, Stimulus(), mock_engine)
    assert not counter


def results_file(tmp_path, name, results):
    path = tmp_path / name
    write_results(results, path, "csv", {"axes": ["L", "WN", "WP"]})
    return path.read_bytes()


@pytest.mark.parametrize("par", [2, 8])
def test_parallelism_invariance(tmp_path, toy_spec, toy_template, mock_engine, par):
    idx = range(100)
    one = list(run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, 1, indices=idx))
    many = list(run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, par, indices=idx))
    assert results_file(tmp_path, "a.csv", one) == results_file(tmp_path, "b.csv", many)


def test_each_case_once(toy_spec, toy_template, mock_engine, counter):
    out = list(run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, 4, indices=range(50)))
    assert sorted(r.index for r in out) == list(range(50))
    assert set(counter.values()) == {1}


@pytest.mark.parametrize("stop_at", [1, 37, 50, 99])
def test_resume_runs_remaining_cases_once(tmp_path, toy_spec, toy_template, mock_engine, counter, stop_at):
    journal = tmp_path / "j.log"
    seen = []
    gen = run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, 4, journal,
                    indices=range(100), sink=seen.append)
    for n, _ in enumerate(gen, 1):
        if n == stop_at:
            break
    gen.close()
    first = dict(counter)
    assert set(Journal(journal).completed()) == set(first)
    rest = list(run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, 4, journal, indices=range(100)))
    assert {r.index for r in rest} == set(range(100)) - set(first)
    assert set(counter) == set(range(100)) and set(counter.values()) == {1}
    assert sorted(r.index for r in seen) == sorted(first)


def test_torn_journal_line(tmp_path):
    j = tmp_path / "j.log"
    j.write_text("0 ok\n1 metric_error\n2 ok\n3 o")
    assert Journal(j).completed() == {0, 2}
    jr = Journal(j).open()
    jr.record(4, "ok")
    jr.close()
    assert Journal(j).completed() == {0, 2, 4}


def test_non_ok_cases_rerun(tmp_path, toy_spec, toy_template, mock_engine, counter):
    j = tmp_path / "j.log"
    j.write_text("0 ok\n1 timeout\n2 ok\n2 engine_error\n")
    list(run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, 1, j, indices=range(4)))
    assert sorted(counter) == [1, 2, 3]


def test_failure_isolation(monkeypatch, toy_spec, toy_template, mock_engine):
    real = mock.mock_engine

    def flaky(netlist):
        if "* case_index=13\n" in netlist:
            raise TemplateError("injected failure")
        if "* case_index=21\n" in netlist:
            return b"garbage"
        return real(netlist)

    monkeypatch.setattr(mock, "mock_engine", flaky)
    out = {r.index: r for r in run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, 3, indices=range(40))}
    assert out[13].status == "engine_error" and "injected failure" in out[13].diagnostics
    assert out[21].status == "parse_error"
    assert all(r.ok for i, r in out.items() if i not in (13, 21))


def test_metric_error_status(toy_spec, toy_template, mock_engine):
    # a 5 GHz pulse leaves the RC output no time to switch
    stim = Stimulus(frequency=5e9, t_rise=1e-11, t_fall=1e-11)
    heavy = SweepSpec(toy_spec.axes[:1] + (ParameterAxis("WN", (4e-8,)), ParameterAxis("WP", (4e-8,))))
    res = list(run_sweep(heavy, toy_template, stim, mock_engine, indices=[len(heavy.axes[0]) - 1]))
    assert res[0].status == "metric_error" and "incomplete switching" in res[0].diagnostics


def test_subprocess_mock_matches_in_process(tmp_path, toy_spec, toy_template, mock_engine):
    sub = mock_subprocess_engine(tmp_path / "w")
    a = list(run_sweep(toy_spec, toy_template, Stimulus(), sub, 2, indices=range(6)))
    b = list(run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, 1, indices=range(6)))
    assert sorted((r.index, r.metrics) for r in a) == sorted((r.index, r.metrics) for r in b)


def test_results_carry_case_metadata(toy_spec, toy_template, mock_engine):
    (r,) = run_sweep(toy_spec, toy_template, Stimulus(), mock_engine, indices=[5])
    assert isinstance(r, CaseResult) and r.case == case_by_index(toy_spec, 5)
    assert r.metrics.case_index == 5
