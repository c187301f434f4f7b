"""Threshold-induced box partition and the state transition graph.

Each coordinate of a domain is encoded by a single integer code: even code
``2*t`` selects interval ``t`` between consecutive thresholds (interval 0
starts at 0, the last interval is unbounded unless the model caps it), odd
code ``2*j + 1`` pins the coordinate at threshold ``j``.  A domain is
switching exactly when some coordinate is pinned.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolation, SemanticError
from .model import LambdaInstance, UncertainGrn, instantiate, rate_in_domain

# Relative slack under which a focal-point coordinate is considered to sit
# exactly on a threshold (non-generic parameters).
DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    codes: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.codes)

    @property
    def pinned(self) -> tuple[int, ...]:
        """0-based variable indexes held at a threshold (the switching set)."""
        return tuple(i for i, c in enumerate(self.codes) if c % 2 == 1)

    @property
    def is_switching(self) -> bool:
        return any(c % 2 == 1 for c in self.codes)

    @property
    def is_regulatory(self) -> bool:
        return not self.is_switching

    @property
    def codim(self) -> int:
        return len(self.pinned)

    @property
    def intervals(self) -> tuple[int | None, ...]:
        """Per-variable interval index, None where pinned."""
        return tuple(c // 2 if c % 2 == 0 else None for c in self.codes)

    def pinned_threshold(self, var: int) -> int:
        c = self.codes[var]
        if c % 2 == 0:
            raise SemanticError("domain", f"variable {var + 1} is not pinned")
        return (c - 1) // 2

    @property
    def id(self) -> str:
        return "-".join(str(c) for c in self.codes)

    def describe(self, model: UncertainGrn) -> str:
        parts = []
        for i, c in enumerate(self.codes):
            if c % 2 == 1:
                parts.append(f"x{i + 1}={model.thresholds[i][(c - 1) // 2]:g}")
            else:
                lo, hi = model.interval_bounds(i, c // 2)
                hi_s = "inf" if hi == float("inf") else f"{hi:g}"
                parts.append(f"x{i + 1}:({lo:g},{hi_s})")
        return " ".join(parts)


@dataclass(frozen=True)
class Partition:
    model: UncertainGrn = field(repr=False)
    domains: tuple[Domain, ...]

    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index.update({d.codes: i for i, d in enumerate(self.domains)})

    @property
    def regulatory(self) -> tuple[Domain, ...]:
        return tuple(d for d in self.domains if d.is_regulatory)

    @property
    def switching(self) -> tuple[Domain, ...]:
        return tuple(d for d in self.domains if d.is_switching)

    def domain(self, codes: tuple[int, ...]) -> Domain:
        return self.domains[self._index[tuple(codes)]]

    def __len__(self) -> int:
        return len(self.domains)


def build_partition(model: UncertainGrn) -> Partition:
    """Enumerate all domains of every codimension (lexicographic code order)."""
    ranges = [range(2 * len(model.thresholds[i]) + 1) for i in range(model.n)]
    domains = tuple(Domain(codes) for codes in itertools.product(*ranges))
    return Partition(model=model, domains=domains)


def focal_point(model: UncertainGrn, k: int, domain: Domain) -> np.ndarray:
    """Equilibrium the affine flow of extremal system ``k`` targets inside ``domain``."""
    return rate_in_domain(model, k, domain) / model.c


def lambda_focal_point(model: UncertainGrn, lam: LambdaInstance, domain: Domain) -> np.ndarray:
    return instantiate(model, lam, domain) / model.c


def _contains_focal(model: UncertainGrn, domain: Domain, phi: np.ndarray) -> bool:
    # Open at thresholds; the orthant boundary 0 and an explicit state bound
    # are not thresholds, so the box is closed there.
    for i, c in enumerate(domain.codes):
        lo, hi = model.interval_bounds(i, c // 2)
        if lo == 0.0:
            if phi[i] < 0.0:
                return False
        elif phi[i] <= lo:
            return False
        if hi != float("inf"):
            if model.bounds[i] is not None and hi == model.bounds[i]:
                if phi[i] > hi:
                    return False
            elif phi[i] >= hi:
                return False
    return True


def sink_domains(model: UncertainGrn, partition: Partition | None = None) -> tuple[Domain, ...]:
    """Regulatory domains containing their own focal point, for every extremal system.

    Raises AssumptionViolation when the per-system sink sets differ.
    """
    partition = partition or build_partition(model)
    per_k: list[frozenset] = []
    for k in range(model.L):
        sinks = frozenset(
            d.codes for d in partition.regulatory
            if _contains_focal(model, d, focal_point(model, k, d))
        )
        per_k.append(sinks)
    mismatches = [
        (k, j) for k in range(model.L) for j in range(k + 1, model.L)
        if per_k[k] != per_k[j]
    ]
    if mismatches:
        detail = "; ".join(
            f"systems {k + 1} and {j + 1}: {sorted(per_k[k] ^ per_k[j])}"
            for k, j in mismatches
        )
        raise AssumptionViolation(f"sink sets differ between extremal systems: {detail}")
    return tuple(d for d in partition.regulatory if d.codes in per_k[0])


def adjacent_regulatory(partition: Partition, domain: Domain) -> tuple[Domain, ...]:
    """Regulatory domains adjacent to a switching domain, in lexicographic order."""
    if domain.is_regulatory:
        raise SemanticError("domain", "adjacency query requires a switching domain")
    choices = []
    for c in domain.codes:
        if c % 2 == 1:
            choices.append((c - 1, c + 1))
        else:
            choices.append((c,))
    return tuple(
        partition.domain(codes) for codes in sorted(itertools.product(*choices))
    )


# ---------------------------------------------------------------------------
# state transition graph


@dataclass(frozen=True)
class StgEdge:
    src: tuple[int, ...]
    dst: tuple[int, ...]
    kind: str                      # "crossing" | "sliding-entry"
    sliding_vars: tuple[int, ...]  # 0-based variables attracting from both sides


@dataclass(frozen=True)
class Stg:
    nodes: tuple[tuple[int, ...], ...]
    edges: frozenset
    degenerate: tuple[str, ...]  # flags for focal points sitting exactly on thresholds


def _flow_sign(model: UncertainGrn, k: int, domain: Domain, var: int,
               theta: float, flags: list) -> int:
    """Sign of the flow of system k in `domain` relative to threshold value
    `theta` for `var`: +1 toward larger x, -1 toward smaller, 0 degenerate."""
    phi = focal_point(model, k, domain)[var]
    if abs(phi - theta) <= DEGENERACY_TOL * max(1.0, abs(theta)):
        flags.append(
            f"system {k + 1}: focal coordinate x{var + 1}={phi!r} of domain "
            f"{domain.id} sits on threshold {theta!r}"
        )
        return 0
    return 1 if phi > theta else -1


def build_stg(model: UncertainGrn, k: int, partition: Partition | None = None) -> Stg:
    """Directed transitions between incident domains for extremal system ``k``.

    For each switching domain and each adjacent regulatory box, the flow sign
    of every pinned variable decides whether the box feeds the wall (edge
    box -> wall) or drains it (wall -> box); a wall variable fed from both
    sides marks the entering edges as sliding.
    """
    partition = partition or build_partition(model)
    flags: list[str] = []
    edges = set()
    for ds in partition.switching:
        pinned = ds.pinned
        thetas = {i: model.thresholds[i][ds.pinned_threshold(i)] for i in pinned}
        neighbors = adjacent_regulatory(partition, ds)
        signs: dict[tuple[tuple[int, ...], int], int] = {}
        for nb in neighbors:
            for i in pinned:
                signs[(nb.codes, i)] = _flow_sign(model, k, nb, i, thetas[i], flags)

        def side(nb: Domain, i: int) -> int:
            # +1 when the box sits above the wall of variable i
            return 1 if nb.codes[i] > ds.codes[i] else -1

        for nb in neighbors:
            toward_all = all(
                signs[(nb.codes, i)] == -side(nb, i) and signs[(nb.codes, i)] != 0
                for i in pinned
            )
            away_all = all(
                signs[(nb.codes, i)] == side(nb, i) and signs[(nb.codes, i)] != 0
                for i in pinned
            )
            if toward_all:
                sliding_vars = []
                for i in pinned:
                    flipped = list(nb.codes)
                    flipped[i] = 2 * ds.codes[i] - nb.codes[i]  # mirror across the wall
                    opp = partition.domain(tuple(flipped))
                    if signs[(opp.codes, i)] == -side(opp, i) and signs[(opp.codes, i)] != 0:
                        sliding_vars.append(i)
                kind = "sliding-entry" if sliding_vars else "crossing"
                edges.add(StgEdge(nb.codes, ds.codes, kind, tuple(sliding_vars)))
            if away_all:
                edges.add(StgEdge(ds.codes, nb.codes, "crossing", ()))
    return Stg(
        nodes=tuple(d.codes for d in partition.domains),
        edges=frozenset(edges),
        degenerate=tuple(sorted(set(flags))),
    )


@dataclass(frozen=True)
class StgReport:
    passed: bool
    differing_edges: tuple[str, ...]
    degenerate: tuple[str, ...]
    sink_codes: tuple[tuple[int, ...], ...]

    def raise_if_failed(self):
        if not self.passed:
            raise AssumptionViolation(
                "extremal systems do not share one state transition graph: "
                + "; ".join(self.differing_edges)
            )


def check_shared_stg(model: UncertainGrn, partition: Partition | None = None) -> StgReport:
    """Verify that all extremal systems share thresholds, STG, and sink set.

    Thresholds are shared by construction of the model type; the STG
    (including sliding annotations) and the sink set are compared explicitly.
    """
    partition = partition or build_partition(model)
    stgs = [build_stg(model, k, partition) for k in range(model.L)]
    differing: list[str] = []
    base = stgs[0].edges
    for k in range(1, model.L):
        delta = base ^ stgs[k].edges
        for e in sorted(delta, key=lambda e: (e.src, e.dst, e.kind)):
            owner = 1 if e in base else k + 1
            differing.append(
                f"edge {'-'.join(map(str, e.src))} -> {'-'.join(map(str, e.dst))} "
                f"({e.kind}) present only in system {owner} (vs system "
                f"{k + 1 if owner == 1 else 1})"
            )
    degenerate = tuple(sorted({f for s in stgs for f in s.degenerate}))
    try:
        sinks = sink_domains(model, partition)
        sink_codes = tuple(d.codes for d in sinks)
        sink_ok = True
    except AssumptionViolation as exc:
        differing.append(str(exc))
        sink_codes = ()
        sink_ok = False
    return StgReport(
        passed=not differing and sink_ok,
        differing_edges=tuple(differing),
        degenerate=degenerate,
        sink_codes=sink_codes,
    )
