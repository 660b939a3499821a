"""Uniform 6-generator walk ensemble: excursion, tracking, drift and membership.

Writes the three walk CSVs to --out-dir and prints the normalized medians per
checkpoint, including uniform tracking divided by ln n, which is the scale it
actually grows on for this walk.
"""
import argparse
import math
import statistics

from kmorse.walk import UNIFORM6, WalkConfig, run_ensemble, write_outputs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out-dir", default="walk-out")
    args = ap.parse_args()
    cfg = WalkConfig(dict(UNIFORM6), steps=args.steps, trials=args.trials, seed=args.seed)
    res = run_ensemble(cfg, jobs=args.jobs)
    write_outputs(res, args.out_dir)
    print(f"drift {res.drift:.4f} (IQR {res.drift_iqr:.4f})")
    exc, uni = res.medians("excursion"), res.medians("uniform")
    print("n,excursion/ln n,uniform/sqrt(n ln n),uniform/ln n")
    for n in cfg.checkpoints:
        raw = statistics.median(dict(t.uniform)[n] for t in res.trials)
        print(f"{n},{exc[n]:.4f},{uni[n]:.4f},{raw / math.log(n):.4f}")
    for name in cfg.constants:
        ok = sum(p for rows in res.membership.values() for k, _, p in rows if k == name)
        print(f"{name}: {ok}/{cfg.trials} limit rays within c = {cfg.constants[name]}")


if __name__ == "__main__":
    main()
