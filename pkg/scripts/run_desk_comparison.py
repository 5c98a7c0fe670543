"""Desk-scale sampler comparison across seeds.

Writes, per seed, one CSV per sampler variant, a gnuplot script per variant,
a Table-style accuracy grid (comparison.csv) and a convergence summary.

    python scripts/run_desk_comparison.py --out results/desk --seeds 0 1 2
"""

import argparse
import json
import time
import warnings
from dataclasses import asdict
from pathlib import Path

from stepseq.desk import desk_variants
from stepseq.harness import compare, convergence_metrics, write_run


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results/desk")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--strides", type=int, nargs="+", default=[1, 2, 5])
    ap.add_argument("--checkpoints", default="10,50,100")
    ap.add_argument("--tail", type=int, default=20)
    args = ap.parse_args()
    # the 5-frame tail of each 30-frame sequence cannot hold a 20-frame window
    warnings.filterwarnings("ignore", message="skipping trailing batch")

    checkpoints = [int(c) for c in args.checkpoints.split(",")]
    for seed in args.seeds:
        t0 = time.perf_counter()
        out = Path(args.out) / f"seed{seed}"
        comp = compare(desk_variants(seed, args.epochs, args.strides), checkpoints)
        summaries = []
        for r in comp.results:
            write_run(r, out)
            s = convergence_metrics(r.records, tail=min(args.tail, len(r.records)))
            summaries.append({"name": r.config.name, "updates_per_epoch": r.updates_per_epoch, **asdict(s)})
        (out / "comparison.csv").write_text(comp.to_csv())
        (out / "summary.json").write_text(json.dumps(summaries, indent=2) + "\n")
        print(f"seed {seed} ({time.perf_counter() - t0:.0f}s)")
        print(comp.to_csv())
        for s in summaries:
            print(f"  {s['name']:<18} jitter {s['post_convergence_jitter']:.2e}  "
                  f"loss<=tau at epoch {s['epoch_to_loss_threshold']}  best acc {s['best_test_accuracy']:.3f}")


if __name__ == "__main__":
    main()
