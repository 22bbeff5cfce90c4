"""Write a two-trace transient plot in both rawfile flavours and read it back."""

import numpy as np

from sweepspice.rawfile import RawPlot, Variable, get_trace, parse_rawfile, write_rawfile

t = np.linspace(0, 20e-9, 201)
vin = np.clip(t / 10e-9, 0, 1) * 0.6
plot = RawPlot(
    "inverter",
    "Transient Analysis",
    [Variable(0, "time", "time"), Variable(1, "v(in)", "voltage"), Variable(2, "v(out)", "voltage")],
    np.column_stack([t, vin, 0.8 - vin * 0.8 / 0.6]),
    "real",
)

for fmt in ("ascii", "binary"):
    blob = write_rawfile(plot, fmt)
    (back,) = parse_rawfile(blob)
    print(f"{fmt:6s} {len(blob):6d} bytes, round trip equal: {back == plot}")
    if fmt == "ascii":
        print(blob[:260].decode())
out = get_trace(back, "V(OUT)")  # names match case-insensitively
print("v(out) at 5 ns:", out.at(5e-9))
