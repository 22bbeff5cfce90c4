"""Count the shipped NNPT/PNPT grids, decode a case, split into shards."""

from importlib import resources

from sweepspice.sweep import case_by_index, case_count, index_of, load_sweep_config, shard_range

configs = resources.files("sweepspice") / "data" / "configs"
total = 0
for name in ("nnpt_sweep", "pnpt_sweep"):
    spec = load_sweep_config(configs / f"{name}.json")
    n = case_count(spec)
    total += n
    print(f"{name}: {n:,} cases over axes {spec.axis_names} x {len(spec.variants)} variant(s)")
print(f"total: {total:,}")

spec = load_sweep_config(configs / "nnpt_sweep.json")
case = case_by_index(spec, 123_456)
print("case 123456 ->", case.variant, {k: f"{v * 1e9:g}n" for k, v in case.axis_values.items()})
assert index_of(spec, case.axis_values, case.variant) == 123_456

# 7 workers; the first count % 7 shards get one extra case
for i in range(7):
    r = shard_range(case_count(spec), 7, i)
    print(f"shard {i}/7: [{r.start}, {r.stop})  {len(r):,} cases")
