"""Render the toy template for one case and show the parameter block the mock reads."""

from importlib import resources

from sweepspice.cli import load_config
from sweepspice.netlist import Stimulus, read_param_block, render_netlist
from sweepspice.sweep import case_by_index

cfg = resources.files("sweepspice") / "data" / "configs" / "toy_sweep.json"
spec, template = load_config(cfg, None)
stim = Stimulus(frequency=20e6, c_load=2e-15)

text = render_netlist(template, case_by_index(spec, 42), spec, stim)
print(text)
print(read_param_block(text))
