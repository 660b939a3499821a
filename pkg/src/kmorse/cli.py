"""Command line entry point: `kmorse <subcommand> ...`.

Exit codes: 0 success or pass, 1 analytic fail, 2 usage error.
Every subcommand writes `<subcommand>.manifest.json` into --out-dir. CSVs never
contain timestamps, so reruns with the same inputs are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import statistics
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .boundary import BoundaryPoint, U_membership, tail_kind, total_horizon
from .rays import contraction_ratio, format_ray, parse_ray, witness_ray
from .space import distance, parse_point
from .sublinear import contraction_from_gauge, parse_kappa, strong_morse_gauge
from .walk import ConfigError, WalkConfig, run_ensemble, write_outputs

PASS, FAIL, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config_digest: str
    seed: int
    version: str
    started: str
    finished: str = ""
    files: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> Path:
        self.finished = _now()
        p = out_dir / f"{self.subcommand}.manifest.json"
        p.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return p


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def args_digest(args: argparse.Namespace, files: tuple[str, ...] = ()) -> str:
    """sha256 over the analytic arguments and the contents of the input files."""
    # paths are replaced by the bytes they hold, so moving inputs keeps the digest
    skip = {"func", "out_dir", "jobs", "gnuplot", "ray", "center", "candidate", "run_dir"}
    payload = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    h = hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode())
    for f in files:
        h.update(Path(f).read_bytes())
    return h.hexdigest()


def _read_ray(path: str):
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise UsageError(f"cannot read ray file {path}: {err.strerror}") from None
    try:
        return parse_ray(text, name=Path(path).stem)
    except ValueError as err:
        raise UsageError(f"{path}: {err}") from None


def _kappa(spec: str):
    try:
        return parse_kappa(spec)
    except (ValueError, OSError) as err:
        raise UsageError(str(err)) from None


def _default_horizon(ray) -> float:
    return total_horizon(ray) + 1 if tail_kind(ray) == "edge" else 1e4


def _write(out: Path, name: str, text: str, files: list[str]) -> Path:
    p = out / name
    p.write_text(text)
    files.append(name)
    return p


def _gnuplot(out: Path, name: str, csv_name: str, xcol: int, ycol: int, title: str,
             files: list[str], logx: bool = False) -> None:
    lines = ["set datafile separator ','", "set key off", f"set title '{title}'"]
    if logx:
        lines.append("set logscale x")
    lines.append(f"plot '{csv_name}' every ::1 using {xcol}:{ycol} with linespoints")
    _write(out, name, "\n".join(lines) + "\n", files)


# ---------------------------------------------------------------- subcommands


def cmd_distance(args, out: Path, files: list[str]) -> int:
    try:
        x, y = parse_point(args.x), parse_point(args.y)
    except ValueError as err:
        raise UsageError(f"bad point: {err}") from None
    print(f"{distance(x, y):#.12g}")
    return PASS


def cmd_project(args, out: Path, files: list[str]) -> int:
    try:
        x = parse_point(args.point)
    except ValueError as err:
        raise UsageError(f"bad point: {err}") from None
    ray = _read_ray(args.ray)
    T = args.horizon if args.horizon is not None else _default_horizon(ray)
    t, d, truncated = ray.project(x, T)
    print(f"t* = {t:#.12g}")
    print(f"d* = {d:#.12g}")
    if truncated:
        print(f"note: minimum sits at the horizon {T:g}")
    return PASS


def cmd_check_ray(args, out: Path, files: list[str]) -> int:
    ray = _read_ray(args.ray)
    kappa = _kappa(args.kappa)
    T = args.horizon if args.horizon is not None else _default_horizon(ray)
    rep = contraction_ratio(ray, kappa, T, args.c)
    name = f"check_{ray.name}_{kappa.name}.csv".replace(":", "_").replace("/", "_")
    _write(out, name, rep.to_csv(), files)
    if args.gnuplot:
        _gnuplot(out, name[:-4] + ".gp", name, 1, 3, f"contraction ratio, {kappa.name}", files, logx=True)
    verdict = "pass" if rep.verdict else "fail"
    print(f"{ray.name} kappa={kappa.name} horizon={T:g} segments={len(rep.rows)} "
          f"sup={rep.sup:.6g} c={args.c:g} -> {verdict}")
    return PASS if rep.verdict else FAIL


def cmd_witness_ray(args, out: Path, files: list[str]) -> int:
    kappa = _kappa(args.kappa)
    try:
        ray = witness_ray(kappa, args.stages)
    except ValueError as err:
        raise UsageError(str(err)) from None
    stem = f"witness_{kappa.name}_{args.stages}".replace(":", "_").replace("/", "_")
    _write(out, stem + ".ray", format_ray(ray), files)
    rows = ["stage,horizontal,vertical,total"]
    rows += [f"{s.i},{s.horizontal},{s.vertical},{s.total}" for s in ray.stages]
    _write(out, stem + "_stages.csv", "\n".join(rows) + "\n", files)
    print(f"{'stage':>5} {'horizontal':>10} {'vertical':>10} {'total':>10}")
    for s in ray.stages:
        print(f"{s.i:>5} {s.horizontal:>10} {s.vertical:>10} {s.total:>10}")
    for spec in args.check or []:
        k = _kappa(spec)
        rep = contraction_ratio(ray, k, total_horizon(ray) + 1)
        print(f"sup ratio against {k.name}: {rep.sup:.6g}")
    return PASS


def cmd_gauge(args, out: Path, files: list[str]) -> int:
    kappa = _kappa(args.kappa)
    try:
        g = strong_morse_gauge(args.c_Z, args.q, args.Q, kappa)
        g32 = strong_morse_gauge(args.c_Z, 32, 0, kappa)
    except ValueError as err:
        raise UsageError(str(err)) from None
    rows = g.rows() + [("mZ_at_32_0", g32.mZ), ("c_b=82000*mZ_at_32_0", contraction_from_gauge(g32.mZ))]
    _write(out, "gauge.csv", "name,value\n" + "".join(f"{k},{v!r}\n" for k, v in rows), files)
    for k, v in rows:
        print(f"{k:<20} {v:.12g}")
    if g.clamped:
        print(f"note: mZ raised to max(q, Q) = {max(g.q, g.Q):g}")
    return PASS


def _certify(path: str, kappa, c):
    ray = _read_ray(path)
    try:
        return BoundaryPoint.certify(ray, kappa, c)
    except ValueError as err:
        raise UsageError(f"{err}; run `kmorse check-ray {path} --kappa {kappa.name} --c <c>` "
                         "to inspect its contraction ratios") from None


def cmd_neighborhood(args, out: Path, files: list[str]) -> int:
    kappa = _kappa(args.kappa)
    if args.r <= 0:
        raise UsageError("radius must be positive")
    center = _certify(args.center, kappa, args.c)
    cand = _certify(args.candidate, kappa, args.c)
    v = U_membership(center, args.r, cand, min_family=args.min_family,
                     pairs=args.pairs, seed=args.seed)
    rows = ["member,q,Q,m,qualified,excess"]
    for m in v.rows:
        ex = "" if m.excess is None else repr(m.excess)
        rows.append(f"{m.name},{m.q!r},{m.Q!r},{m.m!r},{int(m.qualified)},{ex}")
    _write(out, "neighborhood.csv", "\n".join(rows) + "\n", files)
    print(f"{cand.name} in U({center.name}, {args.r:g}) for {kappa.name}: {v}")
    return PASS if v.verdict == "in" else FAIL


def cmd_walk(args, out: Path, files: list[str]) -> int:
    try:
        config = WalkConfig.from_toml(args.config, trials=args.trials, seed=args.seed)
    except ConfigError as err:
        raise UsageError(str(err)) from None
    except OSError as err:
        raise UsageError(f"cannot read {args.config}: {err.strerror}") from None
    except ValueError as err:  # TOML syntax
        raise UsageError(f"{args.config}: {err}") from None
    args.digest = config.digest()
    args.effective_seed = config.seed
    result = run_ensemble(config, jobs=args.jobs)
    for p in write_outputs(result, out):
        files.append(p.name)
    if args.gnuplot:
        _gnuplot(out, "excursion.gp", "excursion.csv", 2, 3, "max excursion", files, logx=True)
        _gnuplot(out, "tracking.gp", "tracking.csv", 2, 4, "uniform tracking", files, logx=True)
    print(_walk_summary(result.excursion_csv(), result.tracking_csv(), result.membership_csv()))
    return PASS


def _walk_summary(exc: str, trk: str, mem: str) -> str:
    def rows(text):
        return list(csv.DictReader(text.splitlines()))

    lines = []
    by_n: dict[int, list[float]] = {}
    for r in rows(exc):
        n = int(r["n"])
        by_n.setdefault(n, []).append(float(r["max_excursion"]) / math.log(n))
    if by_n:
        med = {n: statistics.median(v) for n, v in sorted(by_n.items())}
        lines.append("median max_excursion/ln n: " + ", ".join(f"{n}: {v:.4g}" for n, v in med.items()))
    by_n = {}
    for r in rows(trk):
        n = int(r["n"])
        by_n.setdefault(n, []).append(float(r["uniform"]) / math.sqrt(n * math.log(n)))
    if by_n:
        med = {n: statistics.median(v) for n, v in sorted(by_n.items())}
        lines.append("median uniform/sqrt(n ln n): " + ", ".join(f"{n}: {v:.4g}" for n, v in med.items()))
    counts: dict[str, list[int]] = {}
    for r in rows(mem):
        c = counts.setdefault(r["kappa"], [0, 0])
        c[0] += r["verdict"] == "pass"
        c[1] += 1
    for k, (p, t) in counts.items():
        lines.append(f"limit rays passing {k}: {p}/{t}")
    return "\n".join(lines)


def cmd_report(args, out: Path, files: list[str]) -> int:
    src = Path(args.run_dir)
    manifests = sorted(src.glob("*.manifest.json"))
    manifests = [m for m in manifests if m.name != "report.manifest.json"]
    if not manifests:
        raise UsageError(f"no run manifests in {src}")
    parts = []
    for m in manifests:
        info = json.loads(m.read_text())
        parts.append(f"[{info['subcommand']}] digest {info['config_digest'][:16]} seed {info['seed']} "
                     f"version {info['version']}")
        listed = set(info["files"])
        if {"excursion.csv", "tracking.csv", "membership.csv"} <= listed:
            texts = [(src / n).read_text() for n in ("excursion.csv", "tracking.csv", "membership.csv")]
            parts.append(_walk_summary(*texts))
        for name in sorted(listed):
            if name.startswith("check_") and name.endswith(".csv"):
                ratios = [float(r["ratio"]) for r in csv.DictReader((src / name).read_text().splitlines())]
                parts.append(f"{name}: {len(ratios)} segments, sup ratio {max(ratios, default=0.0):.6g}")
    text = "\n".join(parts) + "\n"
    _write(out, "report.txt", text, files)
    print(text, end="")
    return PASS


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--gnuplot", action="store_true", default=argparse.SUPPRESS,
                        help="also write gnuplot scripts for the CSVs")
    p = argparse.ArgumentParser(prog="kmorse", parents=[common],
                                description="Sublinearly Morse boundary experiments on a tree of flats.")
    p.add_argument("--version", action="version", version=f"kmorse {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("distance", parents=[common], help="exact distance between two points")
    s.add_argument("x")
    s.add_argument("y")
    s.set_defaults(func=cmd_distance)

    s = sub.add_parser("project", parents=[common], help="closest point of a ray to a point")
    s.add_argument("point")
    s.add_argument("ray", help="ray description file")
    s.add_argument("--horizon", type=float)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("check-ray", parents=[common], help="contraction check of a ray")
    s.add_argument("ray", help="ray description file")
    s.add_argument("--kappa", required=True)
    s.add_argument("--c", type=float, required=True, help="contraction constant")
    s.add_argument("--horizon", type=float)
    s.set_defaults(func=cmd_check_ray)

    s = sub.add_parser("witness-ray", parents=[common], help="write the staged witness ray")
    s.add_argument("--kappa", required=True)
    s.add_argument("--stages", type=int, required=True, help="last stage index")
    s.add_argument("--check", action="append", help="kappa to report the sup ratio against")
    s.set_defaults(func=cmd_witness_ray)

    s = sub.add_parser("gauge", parents=[common], help="strong Morse gauge constants")
    s.add_argument("c_Z", type=float)
    s.add_argument("q", type=float)
    s.add_argument("Q", type=float)
    s.add_argument("kappa")
    s.set_defaults(func=cmd_gauge)

    s = sub.add_parser("neighborhood", parents=[common], help="membership in a boundary neighborhood")
    s.add_argument("center", help="ray file of the centre")
    s.add_argument("candidate", help="ray file of the candidate")
    s.add_argument("--r", type=float, required=True)
    s.add_argument("--kappa", required=True)
    s.add_argument("--c", type=float, help="contraction constant (default: measured)")
    s.add_argument("--min-family", type=int, default=1)
    s.add_argument("--pairs", type=int, default=300)
    s.set_defaults(func=cmd_neighborhood)

    s = sub.add_parser("walk", parents=[common], help="random walk ensemble from a TOML config")
    s.add_argument("config")
    s.add_argument("--trials", type=int)
    s.set_defaults(func=cmd_walk)

    s = sub.add_parser("report", parents=[common], help="summarize a run directory")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    explicit_seed = getattr(args, "seed", None)
    for name, default in (("seed", None), ("jobs", 1), ("out_dir", "kmorse-out"), ("gnuplot", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    if args.subcommand != "walk" and args.seed is None:
        args.seed = 0
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(args.subcommand, "", explicit_seed if explicit_seed is not None else 0,
                           __version__, _now())
    files: list[str] = []
    try:
        code = args.func(args, out, files)
    except (UsageError, ValueError) as err:
        # ValueError here means inputs outside what the analysis can represent
        print(f"kmorse {args.subcommand}: error: {err}", file=sys.stderr)
        return USAGE
    inputs = tuple(getattr(args, k) for k in ("ray", "center", "candidate") if getattr(args, k, None))
    manifest.config_digest = getattr(args, "digest", None) or args_digest(args, inputs)
    manifest.seed = getattr(args, "effective_seed", args.seed)
    manifest.files = files
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
