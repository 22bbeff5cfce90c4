"""Exception hierarchy shared by all sweepspice modules."""


class SweepSpiceError(Exception):
    """Base class for every error raised by this package."""


class SpecError(SweepSpiceError, ValueError):
    """Invalid sweep definition or sweep config file."""


class TemplateError(SweepSpiceError, ValueError):
    """Template/binding mismatch or malformed placeholder."""


class StimulusError(SweepSpiceError, ValueError):
    """Stimulus parameters violate their timing invariants."""


class RawfileError(SweepSpiceError, ValueError):
    """Malformed, truncated or unsupported rawfile content."""


class TraceNotFoundError(SweepSpiceError, KeyError):
    """Requested trace is absent from a plot (or matches more than once)."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class MetricError(SweepSpiceError, ValueError):
    """Waveforms do not support the requested measurement."""


class EngineError(SweepSpiceError, RuntimeError):
    """The simulation engine failed to produce a rawfile."""


class EngineTimeout(EngineError):
    """The simulation engine exceeded its time budget and was killed."""


class ConfigError(SweepSpiceError, ValueError):
    """Inconsistent engine or run configuration."""


class ResultsFormatError(SweepSpiceError, ValueError):
    """Results file is malformed or has an unsupported version."""
