import numpy as np
import pytest

from sweepspice.netlist import NetlistTemplate, Stimulus, builtin_template_path
from sweepspice.sweep import ParameterAxis, SweepSpec, load_sweep_config
from sweepspice.engine import EngineConfig

from importlib import resources

CONFIGS = resources.files("sweepspice") / "data" / "configs"


def config_path(name: str) -> str:
    return str(CONFIGS / f"{name}.json")


@pytest.fixture
def toy_spec() -> SweepSpec:
    return load_sweep_config(config_path("toy_sweep"))


@pytest.fixture
def toy_template() -> NetlistTemplate:
    return NetlistTemplate.from_file(builtin_template_path("toy"))


@pytest.fixture
def small_spec() -> SweepSpec:
    return SweepSpec(
        axes=(
            ParameterAxis("L", (4e-8, 9e-8)),
            ParameterAxis("WN", (4e-8, 1.6e-7, 4e-7)),
            ParameterAxis("WP", (4e-8, 1.6e-7)),
        ),
        name="small",
    )


@pytest.fixture
def stim() -> Stimulus:
    return Stimulus()


@pytest.fixture
def mock_engine(tmp_path) -> EngineConfig:
    return EngineConfig.mock_engine(tmp_path / "work")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
