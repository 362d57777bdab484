"""Run the full lr x L2 grid on a small synthetic set and report whether
the selected cell stands out (selected mean >= grid mean + 1 std).

    python scripts/grid_probe.py --noise 0.05 --tiles 5 60 --heads linear two_linear
"""
import argparse
import time

import numpy as np

from tilmil.grid import GridSpec, run_grid, select_best
from tilmil.splits import patients_of, stratified_kfold
from tilmil.synth import SynthConfig, generate
from tilmil.train import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--bags", type=int, default=50)
    ap.add_argument("--h-dim", type=int, default=16)
    ap.add_argument("--tiles", type=int, nargs=2, default=(5, 60))
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--heads", nargs="+", default=["linear", "two_linear", "two_linear_tanh"])
    args = ap.parse_args()

    bags, _ = generate(SynthConfig(num_bags=args.bags, h_dim=args.h_dim, tiles_per_bag_range=tuple(args.tiles),
                                   label_noise_sd=args.noise, seed=args.seed))
    plan = stratified_kfold(patients_of(bags), 5, args.seed)
    for kind in args.heads:
        start = time.perf_counter()
        report = run_grid(GridSpec(base=TrainConfig(head_kind=kind, subsample=500, seed=args.seed)),
                          plan, bags, jobs=args.jobs)
        means = np.array([c.mean for c in report.cells if c.mean is not None])
        best = report.cell(*select_best(report)).mean
        bar = means.mean() + means.std(ddof=1)
        print(f"{kind}: {time.perf_counter() - start:.0f}s cells={len(means)} mean={means.mean():.2f} "
              f"std={means.std(ddof=1):.2f} selected={best:.2f} bar={bar:.2f} "
              f"{'PASS' if best >= bar else 'FAIL'}", flush=True)
        print(report.to_text(), flush=True)


if __name__ == "__main__":
    main()
