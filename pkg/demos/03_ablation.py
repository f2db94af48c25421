"""Single-seed ablation over all model variants.

Each variant is trained from the same initial seed on the same 100 training
videos and evaluated on 20 held-out videos. The acceptance suite repeats this
for five seeds; one seed takes a few minutes on a single core.

    python3 demos/03_ablation.py [seed]
"""

import logging
import sys

from rsnet.benchmark import ABLATION_VARIANTS, run_seed
from rsnet.metrics import format_table

logging.basicConfig(level=logging.INFO, format="%(message)s")
seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0

runs = run_seed(seed, ABLATION_VARIANTS)
print(format_table([r.report for r in runs]))
for r in runs:
    if r.p0_gap is not None:
        print(f"{r.variant:16s} p0 positive {r.mean_p0_positive:.3f} negative {r.mean_p0_negative:.3f}")
print(f"total {sum(r.seconds for r in runs):.0f}s")
