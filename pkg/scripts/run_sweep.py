"""Labeled-target supervision sweep on a synthetic corpus.

    python scripts/run_sweep.py --out runs/sweep

Trains the supervised baseline, the fine-tuned pre-training baseline and the
full system with its supervised component at each labeled fraction, then
writes sweep.csv, sweep.svg and sweep.json.
"""

import argparse
import logging
from pathlib import Path

from discoadapt.data import SweepPlan, SynthConfig, fraction_grid
from discoadapt.evaluation import emit_sweep
from discoadapt.experiments import Workspace, desk_config, run_sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--n-source-train", type=int, default=1000)
    ap.add_argument("--n-target-train", type=int, default=500)
    ap.add_argument("--cue-rate", type=float, default=0.15,
                    help="share of target tokens that are target-only class cue words")
    ap.add_argument("--out", type=Path, default=Path("runs/sweep"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    ws = Workspace.synthetic(SynthConfig(seed=args.seed, n_source_train=args.n_source_train, n_source_dev=200,
                                         n_target_train=args.n_target_train, n_target_dev=400,
                                         n_target_test=2000, target_cue_per_class=30,
                                         target_cue_rate=args.cue_rate))
    plan = SweepPlan.from_fractions(fraction_grid(), len(ws.splits["target-train"]), args.repeats, args.seed)
    result = run_sweep(ws, desk_config(args.seed), plan)
    for path in emit_sweep(result, args.out):
        print(path)
    for system, stats in result.summary().items():
        print(f"{system:<24}" + " ".join(f"{m:6.2f}" for m, _ in stats))


if __name__ == "__main__":
    main()
