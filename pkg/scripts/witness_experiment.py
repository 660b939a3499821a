"""Staged witness rays against every built-in kappa.

For each construction kappa and stage count, prints the sup contraction ratio
of the witness ray measured against each built-in kappa. A ray built for a
slow kappa stays bounded for faster ones and blows up for slower ones.
"""
import argparse

from kmorse.boundary import total_horizon
from kmorse.rays import contraction_ratio, witness_ray
from kmorse.sublinear import parse_kappa

NAMES = ("one", "log", "sqrt", "sqrt_t_log_t")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--build", nargs="+", default=["sqrt", "log", "sqrt_t_log_t"])
    ap.add_argument("--stages", type=int, nargs="+", default=[8, 11, 14, 17, 20])
    args = ap.parse_args()
    print("build,stages," + ",".join(f"sup_{n}" for n in NAMES))
    for b in args.build:
        kb = parse_kappa(b)
        for i in args.stages:
            ray = witness_ray(kb, i)
            T = total_horizon(ray) + 1
            sups = [contraction_ratio(ray, parse_kappa(n), T).sup for n in NAMES]
            print(f"{kb.name},{i}," + ",".join(f"{s:.6g}" for s in sups))


if __name__ == "__main__":
    main()
