"""Random walks on Z^2 * Z acting on its tree of flats.

Positions live on a lazily grown tree of flat nodes, one node per single g3-edge
block, so a step costs O(word length) regardless of depth.
"""
from __future__ import annotations

import hashlib
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rays import ItineraryRay, contraction_ratio
from .space import FlatAddress, FlatPoint, distance, parse_word
from .sublinear import LOG, SQRT_T_LOG_T, SublinearFn

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

UNIFORM6 = {"g1": 1 / 6, "g1^-1": 1 / 6, "g2": 1 / 6, "g2^-1": 1 / 6, "g3": 1 / 6, "g3^-1": 1 / 6}

# Contraction constants for limit rays, pinned by scripts/pin_constants.py
# (uniform 6-generator walk, 10^4 steps, 50 trials, seed 20240917).
PINNED_CONSTANTS = {"sqrt_t_log_t": 5.9, "log": 5.9}

MEMBERSHIP_KAPPAS = (("sqrt_t_log_t", SQRT_T_LOG_T), ("log", LOG))


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid walk config:\n  " + "\n  ".join(problems))


def _default_checkpoints(steps: int) -> list[int]:
    out = [10 ** e for e in range(2, 20) if 10 ** e <= steps]
    if not out or out[-1] != steps:
        out.append(steps)
    return out


@dataclass
class WalkConfig:
    support: dict[str, float]
    steps: int
    trials: int = 1
    seed: int = 0
    checkpoints: list[int] = field(default_factory=list)
    constants: dict[str, float] = field(default_factory=lambda: dict(PINNED_CONSTANTS))
    require_generating: bool = True

    def __post_init__(self):
        if not self.checkpoints and isinstance(self.steps, int) and self.steps > 0:
            self.checkpoints = _default_checkpoints(self.steps)
        self.validate()
        self.words = [parse_word(w) for w in self.support]
        self.probs = np.array(list(self.support.values()), dtype=float)

    def validate(self) -> None:
        bad = []
        if not isinstance(self.steps, int) or self.steps < 1:
            bad.append(f"steps must be a positive integer, got {self.steps!r}")
        if not isinstance(self.trials, int) or self.trials < 1:
            bad.append(f"trials must be a positive integer, got {self.trials!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            bad.append(f"seed must be a 64-bit non-negative integer, got {self.seed!r}")
        if not self.support:
            bad.append("support is empty")
        letters = set()
        for w, p in self.support.items():
            try:
                word = parse_word(w)
            except ValueError as err:
                bad.append(f"support word {w!r}: {err}")
                continue
            if not word:
                bad.append(f"support word {w!r} is empty")
            if len(word) == 1 and abs(word[0][1]) == 1:
                letters.add(word[0][0])
            if not (isinstance(p, (int, float)) and 0 < p <= 1):
                bad.append(f"probability of {w!r} must lie in (0, 1], got {p!r}")
        total = math.fsum(p for p in self.support.values() if isinstance(p, (int, float)))
        if self.support and abs(total - 1) > 1e-12:
            bad.append(f"probabilities sum to {total!r}, not 1")
        if self.require_generating and not {1, 2, 3} <= letters:
            bad.append("support must contain g1, g2 and g3 (or inverses) as one-letter words")
        if isinstance(self.steps, int):
            for n in self.checkpoints:
                if not isinstance(n, int) or not 1 <= n <= self.steps:
                    bad.append(f"checkpoint {n!r} outside 1..steps")
        for name in self.constants:
            if name not in dict(MEMBERSHIP_KAPPAS):
                bad.append(f"unknown constant {name!r}")
        if bad:
            raise ConfigError(bad)

    @classmethod
    def from_toml(cls, path: str | Path, **overrides) -> "WalkConfig":
        data = tomllib.loads(Path(path).read_text())
        return cls.from_dict(data, **overrides)

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "WalkConfig":
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        unknown = set(data) - {"support", "steps", "trials", "seed", "checkpoints", "constants"}
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in sorted(unknown)])
        if "support" not in data or "steps" not in data:
            raise ConfigError([f"missing key {k!r}" for k in ("support", "steps") if k not in data])
        consts = dict(PINNED_CONSTANTS)
        consts.update(data.get("constants", {}))
        return cls(support=dict(data["support"]), steps=data["steps"], trials=data.get("trials", 1),
                   seed=data.get("seed", 0), checkpoints=list(data.get("checkpoints", [])),
                   constants=consts)

    def digest(self) -> str:
        parts = [f"{w}={p!r}" for w, p in self.support.items()]
        parts += [f"steps={self.steps}", f"trials={self.trials}", f"seed={self.seed}",
                  f"checkpoints={self.checkpoints}", f"constants={sorted(self.constants.items())}"]
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()


# ---------------------------------------------------------------- flat tree


class Node:
    """A flat of the tree: entered by one sign-edge hanging at (i, j) of its parent."""

    __slots__ = ("parent", "i", "j", "sign", "depth", "up", "children", "gates", "diam", "dirty")

    def __init__(self, parent: "Node | None", i: int, j: int, sign: int):
        self.parent = parent
        self.i, self.j, self.sign = i, j, sign
        self.depth = 0 if parent is None else parent.depth + 1
        # distance from this flat's entry vertex to the basepoint
        self.up = 0.0 if parent is None else parent.up + math.hypot(i, j) + 1
        self.children: dict[tuple[int, int, int], Node] = {}
        self.gates: set[tuple[int, int]] = set()
        self.diam = 0.0
        self.dirty = False

    def child(self, i: int, j: int, sign: int) -> "Node":
        key = (i, j, sign)
        node = self.children.get(key)
        if node is None:
            node = self.children[key] = Node(self, i, j, sign)
        return node

    def chain(self) -> list["Node"]:
        out = []
        n: Node | None = self
        while n is not None:
            out.append(n)
            n = n.parent
        return out[::-1]

    def address(self) -> FlatAddress:
        syl: list[tuple[int, int, int]] = []
        for n in self.chain()[1:]:
            if syl and n.i == 0 and n.j == 0 and syl[-1][2] * n.sign > 0:
                a, b, k = syl[-1]
                syl[-1] = (a, b, k + n.sign)
            else:
                syl.append((n.i, n.j, n.sign))
        return FlatAddress(tuple(syl))


Position = tuple[Node, int, int]


def step_letter(pos: Position, gen: int, e: int) -> Position:
    node, x, y = pos
    if gen == 1:
        return node, x + e, y
    if gen == 2:
        return node, x, y + e
    s = 1 if e > 0 else -1
    for _ in range(abs(e)):
        if node.parent is not None and x == 0 and y == 0 and node.sign == -s:
            node, x, y = node.parent, node.i, node.j
        else:
            node, x, y = node.child(x, y, s), 0, 0
    return node, x, y


def lca(a: Node, b: Node) -> Node:
    while a.depth > b.depth:
        a = a.parent
    while b.depth > a.depth:
        b = b.parent
    while a is not b:
        a, b = a.parent, b.parent
    return a


def to_point(pos: Position) -> FlatPoint:
    node, x, y = pos
    return FlatPoint(node.address(), float(x), float(y))


def pos_norm(pos: Position) -> float:
    node, x, y = pos
    return node.up + math.hypot(x, y)


def _add_gate(node: Node, g: tuple[int, int], touched: list) -> None:
    if g not in node.gates:
        node.gates.add(g)
        if not node.dirty:
            node.dirty = True
            touched.append(node)


def record_gates(old: Position | None, new: Position, touched: list) -> None:
    """Add the gates of `new` to every flat where they differ from those of `old`.

    Only flats on the way down from lca(old, new) to new change; each of them
    below the lca also gets its entry vertex, the gate of everything outside it.
    """
    node, x, y = new
    top = lca(old[0], node) if old is not None else None
    _add_gate(node, (x, y), touched)
    n = node
    while n is not top and n.parent is not None:
        _add_gate(n, (0, 0), touched)
        _add_gate(n.parent, (n.i, n.j), touched)
        n = n.parent


def planar_diameter(points: Iterable[tuple[int, int]]) -> float:
    """Exact diameter of a finite planar set via its convex hull."""
    pts = sorted(set(points))
    if len(pts) < 2:
        return 0.0
    if len(pts) > 2:
        def cross(o, a, b):
            return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
        lower, upper = [], []
        for p in pts:
            while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
                lower.pop()
            lower.append(p)
        for p in reversed(pts):
            while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
                upper.pop()
            upper.append(p)
        pts = lower[:-1] + upper[:-1]
    best = 0
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            dx, dy = pts[a][0] - pts[b][0], pts[a][1] - pts[b][1]
            best = max(best, dx * dx + dy * dy)
    return math.sqrt(best)


# ---------------------------------------------------------------- trajectories


@dataclass
class WalkTrajectory:
    trial: int
    positions: list[Position]
    choices: np.ndarray
    words: list[list[tuple[int, int]]]
    root: Node

    def __len__(self) -> int:
        return len(self.positions) - 1

    def word(self, a: int, b: int) -> list[tuple[int, int]]:
        """Letters of g_{a+1} ... g_b."""
        out = []
        for c in self.choices[a:b]:
            out += self.words[int(c)]
        return out


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def run_walk(config: WalkConfig, trial: int, steps: int | None = None) -> WalkTrajectory:
    """Sample path w_0 = 1, w_{k+1} = w_k g_{k+1}, deterministic in (seed, trial)."""
    n = config.steps if steps is None else steps
    rng = trial_rng(config.seed, trial)
    choices = rng.choice(len(config.words), size=n, p=config.probs)
    root = Node(None, 0, 0, 0)
    pos: Position = (root, 0, 0)
    positions = [pos]
    for c in choices:
        for gen, e in config.words[c]:
            pos = step_letter(pos, gen, e)
        positions.append(pos)
    return WalkTrajectory(trial, positions, choices, config.words, root)


def _reset_gates(root: Node) -> None:
    stack = [root]
    while stack:
        n = stack.pop()
        n.gates.clear()
        n.diam, n.dirty = 0.0, False
        stack.extend(n.children.values())


def excursion_series(traj: WalkTrajectory, checkpoints: Sequence[int]) -> list[tuple[int, float, Node]]:
    """(n, max flat excursion up to n, flat attaining it) at each checkpoint."""
    _reset_gates(traj.root)
    todo = sorted(set(checkpoints))
    if todo and todo[-1] > len(traj):
        raise ValueError(f"checkpoint {todo[-1]} beyond walk length {len(traj)}")
    out = []
    touched: list[Node] = []
    best, arg = 0.0, traj.root
    prev = None
    for k, pos in enumerate(traj.positions):
        record_gates(prev, pos, touched)
        prev = pos
        while todo and todo[0] == k:
            for node in touched:
                node.diam = planar_diameter(node.gates)
                node.dirty = False
                if node.diam > best:
                    best, arg = node.diam, node
            touched = []
            out.append((k, best, arg))
            todo.pop(0)
    return out


def flat_excursions(traj: WalkTrajectory, n: int) -> tuple[float, FlatAddress]:
    (_, best, arg), = excursion_series(traj, [n])
    return best, arg.address()


def drift_estimate(norms: Sequence[float], n: int) -> tuple[float, float]:
    """Median of d(o, w_n)/n over trials, with the interquartile range."""
    if len(norms) < 10:
        raise ValueError("drift needs at least 10 trials")
    vals = sorted(v / n for v in norms)
    q = statistics.quantiles(vals, n=4)
    return statistics.median(vals), q[2] - q[0]


# ---------------------------------------------------------------- limit rays


@dataclass
class LimitRayEstimate:
    chain: list[tuple[int, int, int]]  # (i, j, sign) blocks of the stabilized flat
    ray: ItineraryRay
    stable_length: float  # ray parameter of the stabilized flat's entry
    horizon: int  # last step at which the walk was outside the stabilized flat's subtree
    unstable: bool

    @property
    def moves(self) -> list:
        return ray_moves(self.chain)


def ray_moves(chain: Sequence[tuple[int, int, int]]) -> list:
    """Itinerary moves through the given blocks, then an endless g3 run."""
    moves: list = []
    for i, j, s in chain:
        if (i, j) != (0, 0):
            moves.append(("flat", i, j))
        if moves and moves[-1][0] == "edge" and moves[-1][1] == s:
            moves[-1] = ("edge", s, moves[-1][2] + 1)
        else:
            moves.append(("edge", s, 1))
    tail_sign = chain[-1][2] if chain else 1
    if moves and moves[-1][0] == "edge" and moves[-1][1] == tail_sign:
        moves[-1] = ("edge", tail_sign, math.inf)
    else:
        moves.append(("edge", tail_sign, math.inf))
    return moves


def _inside(node: Node, top: Node) -> bool:
    while node.depth > top.depth:
        node = node.parent
    return node is top


def limit_ray(traj: WalkTrajectory, n: int | None = None) -> LimitRayEstimate:
    """Deepest flat containing every position of the trailing half, and the ray through it.

    The ray follows the forced cut vertices down to that flat and then continues
    with an endless g3 run of the last block's sign.
    """
    n = len(traj) if n is None else n
    half = n // 2
    top = traj.positions[n][0]
    for pos in traj.positions[half:n + 1]:
        top = lca(top, pos[0])
    chain = [(c.i, c.j, c.sign) for c in top.chain()[1:]]
    k = half
    while k > 0 and _inside(traj.positions[k][0], top):
        k -= 1
    horizon = k if not _inside(traj.positions[k][0], top) else 0
    ray = ItineraryRay(ray_moves(chain), name=f"limit(trial {traj.trial})")
    return LimitRayEstimate(chain, ray, top.up, horizon, top.parent is None)


# ---------------------------------------------------------------- tracking


def _segment_distance(p: tuple[float, float], a: tuple[float, float], b: tuple[float, float]) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / L2))
    return math.hypot(p[0] - a[0] - t * dx, p[1] - a[1] - t * dy)


def uniform_tracking(traj: WalkTrajectory, n: int) -> float:
    """sup over i <= n of d(w_i, [o, w_n]), through the cut vertex where w_i meets the geodesic."""
    end, ex, ey = traj.positions[n]
    chain = end.chain()
    exits = {}
    for k, node in enumerate(chain):
        exits[node] = (chain[k + 1].i, chain[k + 1].j) if k + 1 < len(chain) else (ex, ey)
    worst = 0.0
    for node, x, y in traj.positions[:n + 1]:
        L, K = node, None
        while L not in exits:
            K, L = L, L.parent
        if K is None:
            g, extra = (x, y), 0.0
        else:
            g, extra = (K.i, K.j), math.hypot(x, y) + node.up - K.up + 1
        worst = max(worst, extra + _segment_distance(g, (0, 0), exits[L]))
    return worst


def endpoint_tracking(traj: WalkTrajectory, n: int, ray: ItineraryRay, drift: float) -> float:
    return distance(to_point(traj.positions[n]), ray.point(drift * n))


# ---------------------------------------------------------------- trial summaries


@dataclass
class TrialSummary:
    trial: int
    excursion: list[tuple[int, float, str]]
    uniform: list[tuple[int, float]]
    endpoints: list[tuple[int, FlatPoint]]
    final_norm: float
    limit: dict

    def limit_ray(self) -> ItineraryRay:
        return ItineraryRay(ray_moves(self.limit["chain"]), name=f"limit(trial {self.trial})")


def summarize_trial(config: WalkConfig, trial: int) -> TrialSummary:
    traj = run_walk(config, trial)
    cps = sorted(set(config.checkpoints))
    exc = [(n, v, str(node.address())) for n, v, node in excursion_series(traj, cps)]
    uni = [(n, uniform_tracking(traj, n)) for n in cps]
    ends = [(n, to_point(traj.positions[n])) for n in cps]
    est = limit_ray(traj)
    lim = {"chain": est.chain, "stable_length": est.stable_length, "horizon": est.horizon,
           "unstable": est.unstable}
    return TrialSummary(trial, exc, uni, ends, pos_norm(traj.positions[-1]), lim)


def boundary_membership_report(summary: TrialSummary, constants: dict[str, float]) -> list[tuple[str, float, bool]]:
    """Sup contraction ratio of the limit ray up to its stable length, per kappa."""
    ray = summary.limit_ray()
    T = summary.limit["stable_length"]
    rows = []
    for name, kappa in MEMBERSHIP_KAPPAS:
        sup = contraction_ratio(ray, kappa, T).sup if T > 0 else 0.0
        ok = (not summary.limit["unstable"]) and sup <= constants[name]
        rows.append((name, sup, ok))
    return rows


@dataclass
class WalkResult:
    config: WalkConfig
    trials: list[TrialSummary]
    drift: float
    drift_iqr: float
    endpoint: dict[tuple[int, int], float | None]
    membership: dict[int, list[tuple[str, float, bool]]]

    def excursion_csv(self) -> str:
        lines = ["trial,n,max_excursion,argmax_flat"]
        for t in self.trials:
            lines += [f"{t.trial},{n},{v!r},{flat}" for n, v, flat in t.excursion]
        return "\n".join(lines) + "\n"

    def tracking_csv(self) -> str:
        lines = ["trial,n,endpoint,uniform"]
        for t in self.trials:
            for n, u in t.uniform:
                e = self.endpoint.get((t.trial, n))
                lines.append(f"{t.trial},{n},{'' if e is None else repr(e)},{u!r}")
        return "\n".join(lines) + "\n"

    def membership_csv(self) -> str:
        lines = ["trial,kappa,sup_ratio,verdict"]
        for t in self.trials:
            for name, sup, ok in self.membership[t.trial]:
                lines.append(f"{t.trial},{name},{sup!r},{'pass' if ok else 'fail'}")
        return "\n".join(lines) + "\n"

    def medians(self, which: str) -> dict[int, float]:
        """Median over trials of excursion/ln n or uniform/sqrt(n ln n) per checkpoint."""
        out: dict[int, list[float]] = {}
        for t in self.trials:
            rows = t.excursion if which == "excursion" else t.uniform
            for row in rows:
                n, v = row[0], row[1]
                scale = math.log(n) if which == "excursion" else math.sqrt(n * math.log(n))
                out.setdefault(n, []).append(v / scale)
        return {n: statistics.median(v) for n, v in sorted(out.items())}


def _summaries(config: WalkConfig, jobs: int) -> list[TrialSummary]:
    ids = list(range(config.trials))
    if jobs <= 1 or config.trials == 1:
        return [summarize_trial(config, t) for t in ids]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(summarize_trial, [config] * len(ids), ids))


def run_ensemble(config: WalkConfig, jobs: int = 1) -> WalkResult:
    trials = _summaries(config, jobs)
    norms = [t.final_norm for t in trials]
    if len(trials) >= 10:
        drift, iqr = drift_estimate(norms, config.steps)
    else:
        drift, iqr = statistics.median(v / config.steps for v in norms), math.nan
    endpoint: dict[tuple[int, int], float | None] = {}
    membership = {}
    for t in trials:
        ray = None if t.limit["unstable"] else t.limit_ray()
        for n, p in t.endpoints:
            endpoint[(t.trial, n)] = None if ray is None else distance(p, ray.point(drift * n))
        membership[t.trial] = boundary_membership_report(t, config.constants)
    return WalkResult(config, trials, drift, iqr, endpoint, membership)


def write_outputs(result: WalkResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for name, text in (("excursion.csv", result.excursion_csv()), ("tracking.csv", result.tracking_csv()),
                       ("membership.csv", result.membership_csv())):
        p = out / name
        p.write_text(text)
        files.append(p)
    return files


def position_hash(pos: Position) -> str:
    return hashlib.sha256(str(to_point(pos)).encode()).hexdigest()
