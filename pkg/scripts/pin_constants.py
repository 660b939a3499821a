"""Pin the limit-ray contraction constants used by the walk membership report.

Runs the uniform 6-generator walk with a seed that the acceptance suite never
uses and reports, per kappa, the largest sup ratio over stable trials rounded up
to two significant figures. Paste the result into PINNED_CONSTANTS.
"""
import argparse
import math

from kmorse.walk import MEMBERSHIP_KAPPAS, UNIFORM6, WalkConfig, boundary_membership_report, run_ensemble


def round_up(x: float, digits: int = 2) -> float:
    if x <= 0:
        return 0.0
    e = math.floor(math.log10(x)) - digits + 1
    return round(math.ceil(x / 10 ** e) * 10 ** e, max(0, -e))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=20240917)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    cfg = WalkConfig(dict(UNIFORM6), steps=args.steps, trials=args.trials, seed=args.seed)
    res = run_ensemble(cfg, jobs=args.jobs)
    inf = {name: math.inf for name, _ in MEMBERSHIP_KAPPAS}
    sups: dict[str, list[float]] = {name: [] for name, _ in MEMBERSHIP_KAPPAS}
    unstable = 0
    for t in res.trials:
        if t.limit["unstable"]:
            unstable += 1
            continue
        for name, sup, _ in boundary_membership_report(t, inf):
            sups[name].append(sup)
    print(f"seed={args.seed} steps={args.steps} trials={args.trials} unstable={unstable}")
    for name, vals in sups.items():
        vals.sort()
        print(f"{name}: max={vals[-1]:.6g} median={vals[len(vals) // 2]:.6g} pinned={round_up(vals[-1])!r}")


if __name__ == "__main__":
    main()
