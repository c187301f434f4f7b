"""Event-driven Filippov simulation and trajectory-based verification.

Inside a regulatory box every coordinate relaxes exponentially toward the
focal point, so threshold crossing times have closed forms and no ODE
stepper is needed.  On switching domains the motion follows the convex
combination of the adjacent box flows whose pinned velocity components
vanish; the mixing weights are constant per switching domain, so sliding
segments are exponential in the free coordinates as well.
"""

from __future__ import annotations

import itertools
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .certify import Certificate, PwqFunction, combine
from .errors import SemanticError, SimulationError
from .model import LambdaInstance, UncertainGrn, instantiate
from .partition import Domain, Partition, adjacent_regulatory, build_partition, sink_domains

MAX_EVENTS = 100_000
CHATTER_WINDOW = 1e-9
CHATTER_LIMIT = 50
_TIE = 1e-12          # relative window for simultaneous wall hits
_DIRECTION_TOL = 1e-12


@dataclass(frozen=True)
class Segment:
    kind: str                    # "flow" | "sliding"
    domain: tuple[int, ...]
    t0: float
    t1: float
    x0: np.ndarray
    x1: np.ndarray
    target: np.ndarray           # componentwise attractor of the segment
    rates: np.ndarray
    pinned: tuple[int, ...] = ()
    weights: np.ndarray | None = None

    def state(self, t: float) -> np.ndarray:
        dt = t - self.t0
        return self.target + (self.x0 - self.target) * np.exp(-self.rates * dt)


@dataclass
class Trajectory:
    segments: list
    t_end: float
    sink_entry_time: float | None = None
    sink_domain: tuple[int, ...] | None = None
    event_count: int = 0
    notes: list = field(default_factory=list)

    def state(self, t: float) -> np.ndarray:
        if not self.segments:
            raise SimulationError("empty trajectory")
        starts = [s.t0 for s in self.segments]
        i = max(0, bisect_right(starts, t) - 1)
        seg = self.segments[i]
        return seg.state(min(max(t, seg.t0), seg.t1))


def sample_simplex(L: int, N: int, seed: int) -> np.ndarray:
    """N points uniform on the standard simplex (normalized exponential draws)."""
    if L < 1 or N < 1:
        raise SemanticError("sampling", "need L >= 1 and N >= 1")
    rng = np.random.default_rng(seed)
    draws = rng.standard_exponential(size=(N, L))
    return draws / draws.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# sliding weights


def _pinning_system(model: UncertainGrn, lam: LambdaInstance,
                    partition: Partition, facet: Domain):
    neighbors = adjacent_regulatory(partition, facet)
    flows = np.column_stack([instantiate(model, lam, nb) for nb in neighbors])
    pinned = facet.pinned
    M = flows[list(pinned), :]
    rhs = np.array([
        model.degradation[i] * model.thresholds[i][facet.pinned_threshold(i)]
        for i in pinned
    ])
    return neighbors, flows, M, rhs


def _solve_weights(M: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    """Minimum-norm point of {alpha >= 0, sum = 1, M alpha = rhs}, or None."""
    q = M.shape[1]
    A = np.vstack([M, np.ones(q)])
    b = np.append(rhs, 1.0)
    # unconstrained minimum-norm solution first; exact when it is nonnegative
    alpha, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.max(np.abs(A @ alpha - b)) <= 1e-10 and np.min(alpha) >= -1e-10:
        return np.maximum(alpha, 0.0)
    feas = linprog(c=np.zeros(q), A_eq=A, b_eq=b, bounds=[(0, None)] * q,
                   method="highs")
    if feas.status != 0:
        return None
    res = minimize(
        lambda a: 0.5 * float(a @ a), feas.x, jac=lambda a: a,
        bounds=[(0, None)] * q,
        constraints={"type": "eq", "fun": lambda a: A @ a - b, "jac": lambda a: A},
        method="SLSQP", options={"ftol": 1e-14, "maxiter": 200},
    )
    alpha = res.x if res.success else feas.x
    if np.max(np.abs(A @ alpha - b)) > 1e-10:
        alpha = feas.x
    if np.max(np.abs(A @ alpha - b)) > 1e-10 or np.min(alpha) < -1e-10:
        return None
    return np.maximum(alpha, 0.0)


def sliding_field(model: UncertainGrn, lam: LambdaInstance, facet: Domain,
                  x: np.ndarray, partition: Partition | None = None):
    """Filippov velocity and mixing weights on an attracting switching domain."""
    if facet.is_regulatory:
        raise SemanticError("domain", "sliding field requires a switching domain")
    partition = partition or build_partition(model)
    neighbors, flows, M, rhs = _pinning_system(model, lam, partition, facet)
    alpha = _solve_weights(M, rhs)
    if alpha is None:
        raise SimulationError(
            f"no valid sliding weights on switching domain {facet.id}"
        )
    x = np.asarray(x, dtype=float)
    velocity = flows @ alpha - model.c * x
    return velocity, alpha


# ---------------------------------------------------------------------------
# simulation core


def _interval_walls(model: UncertainGrn, var: int, interval: int):
    """(lower wall, upper wall) threshold values bounding an interval; None
    where the boundary is the orthant or an unbounded end."""
    th = model.thresholds[var]
    lo = th[interval - 1] if interval >= 1 else None
    hi = th[interval] if interval < len(th) else None
    return lo, hi


def _crossing_time(x0: float, phi: float, c: float, wall: float) -> float | None:
    # x(t) = phi + (x0 - phi) exp(-c t) reaches `wall` iff the wall separates
    # x0 from phi strictly.
    num = x0 - phi
    den = wall - phi
    if den == 0.0 or num == 0.0:
        return None
    ratio = num / den
    if ratio <= 1.0 + 1e-15:
        return None
    return float(np.log(ratio) / c)


def _events_toward(model: UncertainGrn, codes, x, phi, free_vars):
    """Earliest wall hits among ``free_vars``: (t_event, hit set) or (None, ())."""
    times = {}
    for i in free_vars:
        interval = codes[i] // 2
        lo, hi = _interval_walls(model, i, interval)
        wall = None
        if phi[i] > x[i] and hi is not None and phi[i] > hi:
            wall = hi
        elif phi[i] < x[i] and lo is not None and phi[i] < lo:
            wall = lo
        if wall is None:
            continue
        t = _crossing_time(x[i], phi[i], model.degradation[i], wall)
        if t is not None:
            times[i] = t
    if not times:
        return None, ()
    t_min = min(times.values())
    hits = tuple(sorted(i for i, t in times.items()
                        if t <= t_min * (1.0 + _TIE) + 1e-300))
    return t_min, hits


def _wall_code(model: UncertainGrn, var: int, interval: int, side: str) -> int:
    """Odd code of the wall the interval touches on ``side`` ('lo'/'hi')."""
    j = interval - 1 if side == "lo" else interval
    return 2 * j + 1


def _resolve_event(model, lam, partition, codes, wall_vars, x, notes):
    """Decide the continuation at a state sitting on the walls ``wall_vars``.

    Tries regulatory continuations first (flow strictly entering a box in
    every wall variable), then sliding continuations with growing pinned
    sets.  Returns ("flow", codes) or ("sliding", codes, alpha, neighbors,
    flows).
    """
    wall_vars = tuple(sorted(wall_vars))
    options = {}
    for i in wall_vars:
        c = codes[i]
        if c % 2 == 1:
            below, above = c - 1, c + 1
        else:
            # regulatory interval that just hit one of its walls; the pinned
            # code is recovered from the wall the state sits on
            interval = c // 2
            th = model.thresholds[i]
            lo, hi = _interval_walls(model, i, interval)
            if lo is not None and abs(x[i] - lo) <= 1e-9 * max(1.0, lo):
                wall = _wall_code(model, i, interval, "lo")
            elif hi is not None and abs(x[i] - hi) <= 1e-9 * max(1.0, hi):
                wall = _wall_code(model, i, interval, "hi")
            else:
                raise SimulationError(
                    f"variable x{i + 1} reported on a wall but sits at {x[i]!r}")
            below, above = wall - 1, wall + 1
        options[i] = (below, above)

    scale = max(1.0, float(np.max(np.abs(x))))

    # regulatory continuations, lexicographic over side choices
    for sides in sorted(itertools.product(*[options[i] for i in wall_vars])):
        cand = list(codes)
        for i, side_code in zip(wall_vars, sides):
            cand[i] = side_code
        cand_t = tuple(cand)
        dom = partition.domain(cand_t)
        f = instantiate(model, lam, dom)
        ok = True
        for i, side_code in zip(wall_vars, sides):
            v = f[i] - model.degradation[i] * x[i]
            going_up = side_code > options[i][0]
            if abs(v) <= _DIRECTION_TOL * scale or (v > 0) != going_up:
                ok = False
                break
        if ok:
            return ("flow", cand_t)

    # sliding continuations: smallest pinned sets first
    for size in range(1, len(wall_vars) + 1):
        for pinned_set in itertools.combinations(wall_vars, size):
            free_walls = [i for i in wall_vars if i not in pinned_set]
            free_options = [options[i] for i in free_walls]
            for free_sides in sorted(itertools.product(*free_options)) if free_walls else [()]:
                cand = list(codes)
                for i in pinned_set:
                    cand[i] = (options[i][0] + options[i][1]) // 2  # the odd wall code
                for i, side_code in zip(free_walls, free_sides):
                    cand[i] = side_code
                cand_t = tuple(cand)
                facet = partition.domain(cand_t)
                neighbors, flows, M, rhs = _pinning_system(model, lam, partition, facet)
                alpha = _solve_weights(M, rhs)
                if alpha is None:
                    continue
                fhat = flows @ alpha
                consistent = True
                for i, side_code in zip(free_walls, free_sides):
                    v = fhat[i] - model.degradation[i] * x[i]
                    going_up = side_code > options[i][0]
                    if abs(v) <= _DIRECTION_TOL * scale or (v > 0) != going_up:
                        consistent = False
                        break
                if consistent:
                    return ("sliding", cand_t, alpha, neighbors, flows)

    raise SimulationError(
        f"no consistent continuation at x={x.tolist()} on walls "
        f"{[v + 1 for v in wall_vars]} (degenerate event)"
    )


def _initial_codes(model: UncertainGrn, lam: LambdaInstance, x: np.ndarray, notes):
    """Interval codes of the start state; states on a threshold are nudged
    to the side the local flow prefers."""
    codes = []
    pinned = []
    for i in range(model.n):
        th = model.thresholds[i]
        on = None
        for j, theta in enumerate(th):
            if abs(x[i] - theta) <= 1e-12 * max(1.0, theta):
                on = j
                break
        if on is not None:
            pinned.append((i, on))
            codes.append(2 * (on + 1))  # provisional: upper side
        else:
            codes.append(2 * bisect_right(th, x[i]))
    if pinned:
        for i, j in pinned:
            upper = list(codes)
            upper[i] = 2 * (j + 1)
            f_up = instantiate(model, lam, _codes_dom(upper))
            side_up = f_up[i] - model.degradation[i] * x[i] >= 0
            codes[i] = 2 * (j + 1) if side_up else 2 * j
            x[i] = th[j] + (1e-12 if side_up else -1e-12)
            notes.append(
                f"start coordinate x{i + 1} sat on threshold {th[j]!r}; "
                f"nudged {'up' if side_up else 'down'} by 1e-12"
            )
    return tuple(codes)


def _codes_dom(codes):
    return Domain(tuple(codes))


def simulate(model: UncertainGrn, lam: LambdaInstance, x0, t_max: float,
             tol: float = 1e-9, partition: Partition | None = None,
             sinks: frozenset | None = None) -> Trajectory:
    """Exact event-driven trajectory of the blended system from ``x0``."""
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (model.n,):
        raise SemanticError("x0", f"expected {model.n} coordinates")
    if np.any(x < 0):
        raise SemanticError("x0", "start state must be componentwise nonnegative")
    partition = partition or build_partition(model)
    if sinks is None:
        sinks = frozenset(d.codes for d in sink_domains(model, partition))

    traj = Trajectory(segments=[], t_end=t_max)
    codes = _initial_codes(model, lam, x, traj.notes)
    mode = "flow"
    alpha = None
    t = 0.0
    if codes in sinks:
        traj.sink_entry_time = 0.0
        traj.sink_domain = codes
    chatter: list[tuple[tuple, float]] = []

    while t < t_max:
        if traj.event_count > MAX_EVENTS:
            raise SimulationError(f"more than {MAX_EVENTS} events (Zeno guard)")
        dom = partition.domain(codes)
        if mode == "flow":
            f = instantiate(model, lam, dom)
            target = f / model.c
            free = range(model.n)
            pinned: tuple[int, ...] = ()
            weights = None
        else:
            neighbors, flows, M, rhs = _pinning_system(model, lam, partition, dom)
            if alpha is None:
                alpha = _solve_weights(M, rhs)
                if alpha is None:
                    raise SimulationError(
                        f"pinning equations inconsistent on {dom.id}")
            fhat = flows @ alpha
            pinned = dom.pinned
            if np.max(np.abs(fhat[list(pinned)] - rhs)) > 1e-10:
                raise SimulationError(
                    f"pinned velocity components exceed 1e-10 on {dom.id}")
            target = fhat / model.c
            for i in pinned:
                target[i] = model.thresholds[i][dom.pinned_threshold(i)]
                x[i] = target[i]
            free = [i for i in range(model.n) if i not in pinned]
            weights = alpha

        t_ev, hits = _events_toward(model, codes, x, target, free)
        seg_end = t_max if t_ev is None else min(t_max, t + t_ev)
        x_end = target + (x - target) * np.exp(-model.c * (seg_end - t))
        for i in pinned:
            x_end[i] = target[i]
        if t_ev is not None and t + t_ev <= t_max:
            for i in hits:
                interval = codes[i] // 2
                lo, hi = _interval_walls(model, i, interval)
                x_end[i] = hi if target[i] > x[i] else lo
        traj.segments.append(Segment(
            kind=mode if mode == "flow" else "sliding",
            domain=codes, t0=t, t1=seg_end, x0=x.copy(), x1=x_end.copy(),
            target=target.copy(), rates=model.c.copy(),
            pinned=pinned, weights=None if weights is None else weights.copy(),
        ))
        if t_ev is None or t + t_ev > t_max:
            break

        t = t + t_ev
        x = x_end
        traj.event_count += 1

        wall_vars = set(hits) | set(pinned)
        key = (codes, tuple(sorted(wall_vars)))
        chatter.append((key, t))
        recent = [c for c in chatter[-(CHATTER_LIMIT + 1):]
                  if t - c[1] <= CHATTER_WINDOW]
        if len(recent) > CHATTER_LIMIT:
            raise SimulationError(
                f"chattering detected near {dom.id}: more than {CHATTER_LIMIT} "
                f"events within {CHATTER_WINDOW}")

        outcome = _resolve_event(model, lam, partition, codes,
                                 wall_vars, x, traj.notes)
        if outcome[0] == "flow":
            mode, codes, alpha = "flow", outcome[1], None
            if codes in sinks and traj.sink_entry_time is None:
                traj.sink_entry_time = t
                traj.sink_domain = codes
        else:
            mode, codes, alpha = "sliding", outcome[1], outcome[2]

    traj.t_end = min(t_max, traj.segments[-1].t1 if traj.segments else t_max)
    return traj


# ---------------------------------------------------------------------------
# Lyapunov evaluation along trajectories


@dataclass
class EvalSeries:
    times: np.ndarray
    values: np.ndarray
    domains: list
    max_piece_disagreement: float
    truncated_at: float | None     # sink entry, when the function stops there


def _adjacent_codes(codes):
    choices = [(c - 1, c + 1) if c % 2 == 1 else (c,) for c in codes]
    return sorted(itertools.product(*choices))


def eval_lyapunov(V: PwqFunction, traj: Trajectory, dt_sample: float,
                  sink_codes: frozenset = frozenset()) -> EvalSeries:
    """Sample V along a trajectory (all segment endpoints plus a dt grid).

    On sliding segments the adjacent covered pieces are averaged and their
    disagreement recorded; segments inside flagged sink domains end the
    series.
    """
    times, values, domains = [], [], []
    disagreement = 0.0
    truncated = None
    for seg in traj.segments:
        if seg.kind == "flow":
            if seg.domain in sink_codes:
                truncated = seg.t0
                break
            if not V.covers(seg.domain):
                raise SimulationError(
                    f"no quadratic piece covers visited domain {_codes_dom(seg.domain).id}")
            piece_codes = [seg.domain]
        else:
            piece_codes = [c for c in _adjacent_codes(seg.domain) if V.covers(c)]
            if not piece_codes:
                raise SimulationError(
                    f"no quadratic piece adjacent to sliding domain "
                    f"{_codes_dom(seg.domain).id}")
        # segment endpoints are always sampled; a value is recorded at the
        # shared junction time from both sides so jumps cannot hide
        ts = [seg.t0]
        nsteps = int(np.floor((seg.t1 - seg.t0) / dt_sample)) if dt_sample > 0 else 0
        for i in range(1, nsteps + 1):
            tt = seg.t0 + dt_sample * i
            if tt < seg.t1 - 1e-15:
                ts.append(tt)
        ts.append(seg.t1)
        for tt in ts:
            xx = seg.state(tt)
            vals = [V.value(c, xx) for c in piece_codes]
            if len(vals) > 1:
                disagreement = max(disagreement, max(vals) - min(vals))
            times.append(tt)
            values.append(float(np.mean(vals)))
            domains.append(seg.domain)
    return EvalSeries(
        times=np.asarray(times), values=np.asarray(values), domains=domains,
        max_piece_disagreement=disagreement, truncated_at=truncated,
    )


# ---------------------------------------------------------------------------
# batch verification


@dataclass
class VerificationEntry:
    lam: tuple
    x0: tuple
    passed: bool
    max_increase: float            # worst normalized increase between samples
    sink_entry_time: float | None
    sink_domain: tuple | None
    notes: tuple = ()


@dataclass
class VerificationReport:
    entries: list
    tol: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_increase(self) -> float:
        return max((e.max_increase for e in self.entries), default=0.0)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tol,
            "max_normalized_increase": self.max_increase,
            "entries": [
                {
                    "lambda": list(e.lam),
                    "x0": list(e.x0),
                    "passed": e.passed,
                    "max_normalized_increase": e.max_increase,
                    "sink_entry_time": e.sink_entry_time,
                    "sink_domain": list(e.sink_domain) if e.sink_domain else None,
                    "notes": list(e.notes),
                }
                for e in self.entries
            ],
        }


def verify(model: UncertainGrn, cert: Certificate, lam_list, x0_list,
           t_max: float, tol: float = 1e-6, dt_sample: float = 0.01) -> VerificationReport:
    """Monotonicity check of the certificate along simulated trajectories.

    For every (weights, start) job the blended function is evaluated along
    the trajectory up to sink entry; a job passes when no sampled increase
    exceeds ``tol * (1 + |V|)``.
    """
    partition = build_partition(model)
    sinks = frozenset(tuple(c) for c in cert.excluded)
    entries = []
    jobs = sorted(
        (tuple(float(v) for v in lam), tuple(float(v) for v in x0))
        for lam, x0 in itertools.product(lam_list, x0_list)
    )
    for lam_t, x0_t in jobs:
        lam = LambdaInstance(lam_t)
        V = combine(cert, lam) if cert.mode == "extremal" else cert.functions[0]
        traj = simulate(model, lam, np.asarray(x0_t), t_max, partition=partition,
                        sinks=sinks or None)
        series = eval_lyapunov(V, traj, dt_sample, sink_codes=sinks)
        worst = 0.0
        for a, b in zip(series.values[:-1], series.values[1:]):
            inc = (b - a) / (1.0 + abs(a))
            worst = max(worst, inc)
        entries.append(VerificationEntry(
            lam=lam_t, x0=x0_t, passed=worst <= tol, max_increase=worst,
            sink_entry_time=traj.sink_entry_time, sink_domain=traj.sink_domain,
            notes=tuple(traj.notes),
        ))
    return VerificationReport(entries=entries, tol=tol)
