"""A small blocklength sweep written to CSV, then reduced to plot data.

Same as: starris-ee sweep --axis l --values 128 512 2048 --methods star-es no-ris \
             --trials 3 --n-users 4 --n-ris 16 --out sweep.csv
         starris-ee plotdata --in sweep.csv --out plot.csv
Run: python3 demos/03_small_sweep.py [outdir]
"""

import os
import sys

from starris_ee import Dimensions, RunParams, SweepSpec, default_scenario, sweep
from starris_ee.harness import emit_csv, emit_plotdata

outdir = sys.argv[1] if len(sys.argv) > 1 else "."
os.makedirs(outdir, exist_ok=True)

scenario = default_scenario(Dimensions(n_users=4, n_ris=16))
spec = SweepSpec("l", (128, 512, 2048), ("star-es", "no-ris"), n_trials=3)
table = sweep(spec, scenario, RunParams())
emit_csv(table, os.path.join(outdir, "sweep.csv"))
aggs = emit_plotdata(table, ("axis", "method"), os.path.join(outdir, "plot.csv"))

print(f"{'l':>6s} {'method':>8s} {'mean EE':>9s} {'stderr':>8s} {'n':>3s}")
for a in aggs:
    print(f"{a.key[0]:6.0f} {a.key[1]:>8s} {a.mean_nats:9.1f} {a.stderr_nats:8.1f} {a.count:3d}")
ratio = {a.key: a.mean_nats for a in aggs}
for l in spec.values:
    print(f"l={l}: STAR-ES / no-RIS = {ratio[(l, 'star-es')] / ratio[(l, 'no-ris')]:.3f}")
