"""Neighborhood-system implications on branching ray triples.

Heights are given as multiples of r_b for the all-g3 ray, so the same table
exercises both premises being met and being vacuous.
"""
import argparse

from kmorse.boundary import BoundaryPoint, branch_triple, check_triple, neighborhood_radii, triples_csv
from kmorse.rays import g3_ray
from kmorse.sublinear import parse_kappa

TRIPLES = [(1.5, 6, "b"), (0.5, 6, "b"), (3, 9, "c"), (1.5, 6, "a"), (0.25, 0.75, "b"),
           (4, 12, "a"), (2, 3, "c")]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kappa", default="one")
    ap.add_argument("--r", type=float, default=1e7)
    ap.add_argument("--pairs", type=int, default=50)
    ap.add_argument("--csv", help="write triple_id,part,holds rows here")
    args = ap.parse_args()
    kappa = parse_kappa(args.kappa)
    r_b = neighborhood_radii(BoundaryPoint.certify(g3_ray(), kappa), args.r).r_b
    print(f"kappa={kappa.name} r={args.r:g} r_b={r_b:.6g}")
    checks = []
    for n, (h1, h2, out) in enumerate(TRIPLES):
        rays = branch_triple(int(h1 * r_b), int(h2 * r_b), out)
        pts = {k: BoundaryPoint.certify(v, kappa) for k, v in rays.items()}
        for c in check_triple(f"t{n}", pts["a"], pts["b"], pts["c"], args.r, pairs=args.pairs):
            checks.append(c)
            print(f"t{n} h=({h1},{h2})r_b outlier={out} part {c.part}: premise={c.premise} "
                  f"conclusion={c.conclusion} holds={c.holds}  {c.detail}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(triples_csv(checks))


if __name__ == "__main__":
    main()
