"""Assembly of the Lyapunov feasibility problems and certificate handling.

Two assembly modes are provided.  ``common`` searches one piecewise
quadratic function that decreases along every extremal system at once;
``extremal`` searches one function per extremal system plus coupling
constraints that make every convex blend of the systems inherit a Lyapunov
function (the blend with the system's own mixing weights).  Both modes share
the geometric preprocessing: partition, sink detection, homogenization
cones, sliding-mode weight polytopes, and continuity pair selection.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import GrnCertError, ResidualTooLarge, SemanticError, SolverError
from .model import LambdaInstance, UncertainGrn, rate_in_domain
from .partition import (
    Domain, Partition, Stg, StgReport, adjacent_regulatory, build_partition,
    build_stg, check_shared_stg,
)
from .polytope import (
    RayMatrix, facet_flow_matrix, homogenization_cone, sliding_polytope, vertices,
)
from . import sdp
from .sdp import SdpProblem, SdpSolution, Term, identity_term, tensor_of

DEFAULT_TOL = 1e-9


# ---------------------------------------------------------------------------
# quadratic-form builders


def pbar(P: np.ndarray, d: np.ndarray, omega: float) -> np.ndarray:
    """Homogenized coefficient matrix of x'Px + 2d'x + omega."""
    n = P.shape[0]
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = P
    M[:n, n] = d
    M[n, :n] = d
    M[n, n] = omega
    return M


def decrease_form(P: np.ndarray, d: np.ndarray, f: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Symmetric matrix whose homogenized quadratic form is d/dt of the piece
    x'Px + 2d'x + omega along the affine flow xdot = f - Cx.

    The top-left block is stored as -(PC + CP): only the symmetric part of
    the coefficient matrix contributes to a quadratic form, and this keeps
    the matrix symmetric for non-scalar degradation.
    """
    n = P.shape[0]
    cross = P @ f - C @ d
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = -(P @ C + C @ P)
    M[:n, n] = cross
    M[n, :n] = cross
    M[n, n] = 2.0 * float(d @ f)
    return M


def sliding_decrease_form(P: np.ndarray, d: np.ndarray, F: np.ndarray,
                          w: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Decrease form along the convexified facet direction F @ w - Cx."""
    return decrease_form(P, d, F @ w, C)


def pair_coupling_form(P_k: np.ndarray, P_j: np.ndarray,
                       d_k: np.ndarray, d_j: np.ndarray,
                       f_k: np.ndarray, f_j: np.ndarray) -> np.ndarray:
    """Coupling block between two extremal pieces.

    Nonpositivity of this form on the domain cone (together with the per
    system decrease blocks) makes every positively weighted blend of the
    pieces decrease along the correspondingly blended system.
    """
    n = P_k.shape[0]
    dP = P_j - P_k
    dd = d_j - d_k
    df = f_j - f_k
    v = -dP @ df
    M = np.zeros((n + 1, n + 1))
    M[:n, n] = v
    M[n, :n] = v
    M[n, n] = -2.0 * float(dd @ df)
    return M


def reciprocal_product_weights(lam: np.ndarray) -> np.ndarray:
    """Blend weights 1 / prod_{j != k} lam_j; defined for interior simplex points."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise SemanticError("lambda", "blend weights need a strictly interior simplex point")
    return np.array([1.0 / np.prod(np.delete(lam, k)) for k in range(lam.size)])


def blend_reconstruction_gap(P_list, d_list, f_list, C, lam) -> float:
    """Max-entry gap of the algebraic identity behind the extremal mode:
    the reciprocal-product-weighted sum of per-system decrease forms plus the
    pairwise coupling forms equals the decrease form of the blended data.

    Returns the gap normalized by the magnitude of the reconstructed matrix.
    """
    lam = np.asarray(lam, dtype=float)
    L = lam.size
    eta = reciprocal_product_weights(lam)
    lhs = sum(eta[k] * decrease_form(P_list[k], d_list[k], f_list[k], C)
              for k in range(L))
    for k in range(L):
        for j in range(k + 1, L):
            xi = eta[k] * lam[j]
            lhs = lhs + xi * pair_coupling_form(
                P_list[k], P_list[j], d_list[k], d_list[j], f_list[k], f_list[j])
    P_mix = sum(eta[k] * P_list[k] for k in range(L))
    d_mix = sum(eta[k] * d_list[k] for k in range(L))
    f_mix = sum(lam[k] * f_list[k] for k in range(L))
    rhs = decrease_form(P_mix, d_mix, f_mix, C)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    return float(np.max(np.abs(lhs - rhs))) / scale


# ---------------------------------------------------------------------------
# configuration and geometry


@dataclass(frozen=True)
class CertifyConfig:
    margin: float = 1e-3              # positivity normalization strength
    drop_sinks: bool = True
    include_positivity: bool = True
    strict_decrease: float = 0.0      # optional extra decrease margin
    residual_tol: float = 1e-7
    margin_accept: float = 1e-8
    eq_tol: float = 1e-7
    geometry_tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.margin < 0:
            raise SemanticError("config.margin", "positivity margin must be >= 0")
        if self.strict_decrease < 0:
            raise SemanticError("config.strict_decrease", "must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SlidingInfo:
    facet: Domain
    neighbors: tuple[Domain, ...]
    flow_matrix: np.ndarray          # n x (L * q), system-major columns
    weight_vertices: np.ndarray      # one vertex of the weight polytope per row
    gamma: RayMatrix


@dataclass(frozen=True)
class ContinuityPair:
    a: Domain
    b: Domain
    facet: Domain
    basis: np.ndarray                # orthonormal basis of the facet cone span


@dataclass(frozen=True)
class CertificationGeometry:
    model: UncertainGrn = field(repr=False)
    partition: Partition = field(repr=False)
    report: StgReport
    stg: Stg = field(repr=False)
    sinks: frozenset
    scope: tuple[Domain, ...]
    gammas: dict = field(repr=False)
    sliding: dict = field(repr=False)
    pairs: tuple[ContinuityPair, ...]


def _cone_span_basis(gamma: np.ndarray, tol: float) -> np.ndarray:
    u, s, _ = np.linalg.svd(gamma, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    return u[:, :rank]


def build_geometry(model: UncertainGrn, config: CertifyConfig) -> CertificationGeometry:
    """Shared preprocessing; raises AssumptionViolation when the extremal
    systems do not share the transition structure."""
    partition = build_partition(model)
    report = check_shared_stg(model, partition)
    report.raise_if_failed()
    sinks = frozenset(report.sink_codes)
    scope = tuple(
        d for d in partition.regulatory
        if not (config.drop_sinks and d.codes in sinks)
    )
    tol = config.geometry_tol
    gammas = {d.codes: homogenization_cone(d, model, tol) for d in scope}

    sliding: dict = {}
    for ds in partition.switching:
        poly = sliding_polytope(model, ds, partition)
        verts = vertices(poly, tol)
        if verts.shape[0] == 0:
            continue
        neighbors = adjacent_regulatory(partition, ds)
        sliding[ds.codes] = SlidingInfo(
            facet=ds,
            neighbors=neighbors,
            flow_matrix=facet_flow_matrix(model, neighbors),
            weight_vertices=verts,
            gamma=homogenization_cone(ds, model, tol),
        )

    stg = build_stg(model, 0, partition)
    incident = {e.src for e in stg.edges if any(c % 2 for c in e.src)}
    incident |= {e.dst for e in stg.edges if any(c % 2 for c in e.dst)}
    scope_codes = {d.codes for d in scope}
    pairs = []
    for ds in partition.switching:
        if ds.codim != 1:
            continue
        if ds.codes not in incident and ds.codes not in sliding:
            continue
        a, b = adjacent_regulatory(partition, ds)
        if a.codes not in scope_codes or b.codes not in scope_codes:
            continue
        gamma = (sliding[ds.codes].gamma if ds.codes in sliding
                 else homogenization_cone(ds, model, tol))
        pairs.append(ContinuityPair(
            a=a, b=b, facet=ds, basis=_cone_span_basis(gamma.gamma, tol)))

    return CertificationGeometry(
        model=model, partition=partition, report=report, stg=stg, sinks=sinks,
        scope=scope, gammas=gammas, sliding=sliding, pairs=tuple(pairs),
    )


def continuity_pairs(geometry: CertificationGeometry) -> tuple[ContinuityPair, ...]:
    """Facet pairs on which the pieces must agree: a facet qualifies when the
    transition graph touches it or its sliding weight polytope is nonempty."""
    return geometry.pairs


# ---------------------------------------------------------------------------
# problem assembly


def _tag(codes: tuple[int, ...]) -> str:
    return "-".join(str(c) for c in codes)


def _vname(role: str, codes: tuple[int, ...], k: int | None) -> str:
    base = f"{role}[{_tag(codes)}]"
    return base if k is None else f"{base}[k{k + 1}]"


def _piece_terms(prob: SdpProblem, codes, k, mapper_P, mapper_d, out: int,
                 mapper_w=None) -> list[Term]:
    n = prob.meta["n"]
    terms = [
        Term(var=_vname("P", codes, k), tensor=tensor_of(mapper_P, "symmetric", n, out)),
        Term(var=_vname("d", codes, k), tensor=tensor_of(mapper_d, "vector", n, out)),
    ]
    if mapper_w is not None:
        terms.append(Term(var=_vname("w", codes, k),
                          tensor=tensor_of(mapper_w, "scalar", 1, out)))
    return terms


def _assemble(model: UncertainGrn, config: CertifyConfig, mode: str) -> SdpProblem:
    geo = build_geometry(model, config)
    n, L, C = model.n, model.L, model.C
    ks: list[int | None] = list(range(L)) if mode == "extremal" else [None]

    prob = SdpProblem()
    prob.meta = {
        "mode": mode,
        "n": n,
        "L": L,
        "scope": [list(d.codes) for d in geo.scope],
        "excluded": [list(c) for c in sorted(geo.sinks)] if config.drop_sinks else [],
        "nothing_to_certify": not geo.scope,
        "config": config.to_dict(),
    }

    for dom in geo.scope:
        for k in ks:
            prob.declare(_vname("P", dom.codes, k), "symmetric", n)
            prob.declare(_vname("d", dom.codes, k), "vector", n)
            prob.declare(_vname("w", dom.codes, k), "scalar", 1)

    zero_P = np.zeros((n, n))
    zero_d = np.zeros(n)

    # per-domain blocks: flow decrease, positivity, pairwise coupling
    for dom in geo.scope:
        G = geo.gammas[dom.codes].gamma
        m = G.shape[1]
        rates = [rate_in_domain(model, k, dom) for k in range(L)]

        for k in ks:
            systems = range(L) if k is None else [k]
            for sys_k in systems:
                f = rates[sys_k]
                name = f"dec[{_tag(dom.codes)}]" + ("" if k is None else f"[k{k + 1}]") \
                    + (f"[sys{sys_k + 1}]" if k is None and L > 1 else "")
                slack = prob.declare(f"M.{name}", "symmetric", m, nonneg=True)
                terms = _piece_terms(
                    prob, dom.codes, k,
                    lambda P, f=f: G.T @ decrease_form(P, zero_d, f, C) @ G,
                    lambda d, f=f: G.T @ decrease_form(zero_P, d, f, C) @ G,
                    m,
                )
                terms.append(identity_term(slack, m))
                const = config.strict_decrease * (G.T @ np.eye(n + 1) @ G) \
                    if config.strict_decrease > 0 else None
                prob.add_block(name, sdp.SENSE_NEG, m, terms, const)

        if config.include_positivity:
            lift = np.zeros((n + 1, n + 1))
            lift[:n, :n] = np.eye(n)
            for k in ks:
                name = f"pos[{_tag(dom.codes)}]" + ("" if k is None else f"[k{k + 1}]")
                slack = prob.declare(f"N.{name}", "symmetric", m, nonneg=True)
                terms = _piece_terms(
                    prob, dom.codes, k,
                    lambda P: G.T @ pbar(P, zero_d, 0.0) @ G,
                    lambda d: G.T @ pbar(zero_P, d, 0.0) @ G,
                    m,
                    lambda w: G.T @ pbar(zero_P, zero_d, w) @ G,
                )
                terms.append(identity_term(slack, m, scale=-1.0))
                const = -config.margin * (G.T @ lift @ G)
                prob.add_block(name, sdp.SENSE_POS, m, terms, const)

        if mode == "extremal":
            for k, j in itertools.combinations(range(L), 2):
                name = f"cross[{_tag(dom.codes)}][k{k + 1},k{j + 1}]"
                slack = prob.declare(f"M.{name}", "symmetric", m, nonneg=True)
                f_k, f_j = rates[k], rates[j]
                terms = [
                    Term(var=_vname("P", dom.codes, k), tensor=tensor_of(
                        lambda P: G.T @ pair_coupling_form(P, zero_P, zero_d, zero_d, f_k, f_j) @ G,
                        "symmetric", n, m)),
                    Term(var=_vname("P", dom.codes, j), tensor=tensor_of(
                        lambda P: G.T @ pair_coupling_form(zero_P, P, zero_d, zero_d, f_k, f_j) @ G,
                        "symmetric", n, m)),
                    Term(var=_vname("d", dom.codes, k), tensor=tensor_of(
                        lambda d: G.T @ pair_coupling_form(zero_P, zero_P, d, zero_d, f_k, f_j) @ G,
                        "vector", n, m)),
                    Term(var=_vname("d", dom.codes, j), tensor=tensor_of(
                        lambda d: G.T @ pair_coupling_form(zero_P, zero_P, zero_d, d, f_k, f_j) @ G,
                        "vector", n, m)),
                    identity_term(slack, m),
                ]
                prob.add_block(name, sdp.SENSE_NEG, m, terms)

    # sliding-mode decrease blocks
    scope_codes = {d.codes for d in geo.scope}
    for codes in sorted(geo.sliding):
        info = geo.sliding[codes]
        Gs = info.gamma.gamma
        m = Gs.shape[1]
        F = info.flow_matrix
        for nb in info.neighbors:
            if nb.codes not in scope_codes:
                continue
            for k in ks:
                for j, w in enumerate(info.weight_vertices):
                    fw = F @ w
                    name = (f"slide[{_tag(codes)}][{_tag(nb.codes)}]"
                            + ("" if k is None else f"[k{k + 1}]") + f"[v{j}]")
                    slack = prob.declare(f"M.{name}", "symmetric", m, nonneg=True)
                    terms = _piece_terms(
                        prob, nb.codes, k,
                        lambda P, fw=fw: Gs.T @ decrease_form(P, zero_d, fw, C) @ Gs,
                        lambda d, fw=fw: Gs.T @ decrease_form(zero_P, d, fw, C) @ Gs,
                        m,
                    )
                    terms.append(identity_term(slack, m))
                    prob.add_block(name, sdp.SENSE_NEG, m, terms)

    # continuity equalities on qualifying facets
    for pair in geo.pairs:
        B = pair.basis
        r = B.shape[1]
        for k in ks:
            name = (f"cont[{_tag(pair.a.codes)}|{_tag(pair.b.codes)}]"
                    f"[{_tag(pair.facet.codes)}]" + ("" if k is None else f"[k{k + 1}]"))
            terms = _piece_terms(
                prob, pair.a.codes, k,
                lambda P: B.T @ pbar(P, zero_d, 0.0) @ B,
                lambda d: B.T @ pbar(zero_P, d, 0.0) @ B,
                r,
                lambda w: B.T @ pbar(zero_P, zero_d, w) @ B,
            )
            terms += [
                Term(var=t.var, tensor=-t.tensor)
                for t in _piece_terms(
                    prob, pair.b.codes, k,
                    lambda P: B.T @ pbar(P, zero_d, 0.0) @ B,
                    lambda d: B.T @ pbar(zero_P, d, 0.0) @ B,
                    r,
                    lambda w: B.T @ pbar(zero_P, zero_d, w) @ B,
                )
            ]
            prob.add_block(name, sdp.SENSE_EQ, r, terms)

    return prob


def assemble_common(model: UncertainGrn, config: CertifyConfig | None = None) -> SdpProblem:
    """Feasibility problem for one function decreasing along every extremal system."""
    return _assemble(model, config or CertifyConfig(), "common")


def assemble_extremal(model: UncertainGrn, config: CertifyConfig | None = None) -> SdpProblem:
    """Feasibility problem for per-system functions with blend-coupling blocks."""
    return _assemble(model, config or CertifyConfig(), "extremal")


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class PwqFunction:
    """Domain-indexed quadratic pieces x'Px + 2d'x + omega."""

    pieces: dict

    def piece(self, codes: tuple[int, ...]):
        return self.pieces[tuple(codes)]

    def value(self, codes: tuple[int, ...], x: np.ndarray) -> float:
        P, d, omega = self.pieces[tuple(codes)]
        x = np.asarray(x, dtype=float)
        return float(x @ P @ x + 2.0 * (d @ x) + omega)

    def pbar(self, codes: tuple[int, ...]) -> np.ndarray:
        P, d, omega = self.pieces[tuple(codes)]
        return pbar(P, d, omega)

    def covers(self, codes: tuple[int, ...]) -> bool:
        return tuple(codes) in self.pieces


@dataclass(frozen=True)
class Certificate:
    mode: str
    functions: tuple[PwqFunction, ...]
    excluded: tuple[tuple[int, ...], ...]
    residual_summary: dict
    config: dict
    solver_stats: dict = field(default_factory=dict)
    model_hash: str | None = None
    nothing_to_certify: bool = False

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "model_hash": self.model_hash,
            "nothing_to_certify": self.nothing_to_certify,
            "excluded": [list(c) for c in self.excluded],
            "config": self.config,
            "functions": [
                {
                    "system": None if self.mode == "common" else k + 1,
                    "pieces": [
                        {
                            "id": _tag(codes),
                            "codes": list(codes),
                            "P": np.asarray(P).tolist(),
                            "d": np.asarray(d).tolist(),
                            "omega": float(omega),
                        }
                        for codes, (P, d, omega) in sorted(fn.pieces.items())
                    ],
                }
                for k, fn in enumerate(self.functions)
            ],
            "residuals": self.residual_summary,
            "solver": self.solver_stats,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        functions = []
        for entry in data["functions"]:
            pieces = {
                tuple(p["codes"]): (
                    np.asarray(p["P"], dtype=float),
                    np.asarray(p["d"], dtype=float),
                    float(p["omega"]),
                )
                for p in entry["pieces"]
            }
            functions.append(PwqFunction(pieces=pieces))
        return cls(
            mode=data["mode"],
            functions=tuple(functions),
            excluded=tuple(tuple(c) for c in data["excluded"]),
            residual_summary=data.get("residuals", {}),
            config=data.get("config", {}),
            solver_stats=data.get("solver", {}),
            model_hash=data.get("model_hash"),
            nothing_to_certify=data.get("nothing_to_certify", False),
        )


def extract_certificate(problem: SdpProblem, solution: SdpSolution) -> Certificate:
    """Package a feasible solution, re-checking every constraint independently."""
    meta = problem.meta
    if solution.status != "feasible":
        raise SolverError(f"cannot extract a certificate from a {solution.status} solution")
    tol = meta["config"]["residual_tol"]

    for name, decl in problem.variables.items():
        if decl.kind == "symmetric" and name.startswith("P["):
            P = np.asarray(solution.values[name])
            asym = float(np.max(np.abs(P - P.T))) if P.size else 0.0
            if asym > 1e-12:
                raise ResidualTooLarge(f"symmetry[{name}]", asym, 1e-12)

    report = sdp.residuals(problem, solution)
    if report.max_violation > tol:
        worst = report.worst
        raise ResidualTooLarge(worst.name, worst.violation, tol)

    L = meta["L"]
    mode = meta["mode"]
    ks: list[int | None] = list(range(L)) if mode == "extremal" else [None]
    functions = []
    for k in ks:
        pieces = {}
        for codes_list in meta["scope"]:
            codes = tuple(codes_list)
            pieces[codes] = (
                np.asarray(solution.values[_vname("P", codes, k)]),
                np.asarray(solution.values[_vname("d", codes, k)]),
                float(solution.values[_vname("w", codes, k)]),
            )
        functions.append(PwqFunction(pieces=pieces))

    worst = report.worst
    return Certificate(
        mode=mode,
        functions=tuple(functions),
        excluded=tuple(tuple(c) for c in meta["excluded"]),
        residual_summary={
            "max_violation": report.max_violation,
            "worst_constraint": worst.name if worst else None,
            "solver_margin": solution.margin,
        },
        config=dict(meta["config"]),
        solver_stats=dict(solution.stats),
        nothing_to_certify=meta["nothing_to_certify"],
    )


def combine(cert: Certificate, lam: LambdaInstance) -> PwqFunction:
    """Convex combination of the extremal pieces with the system's own weights."""
    if cert.mode != "extremal":
        raise GrnCertError("combine requires an extremal-mode certificate")
    w = lam.as_array
    if w.size != len(cert.functions):
        raise SemanticError("lambda", f"expected {len(cert.functions)} weights, got {w.size}")
    if not cert.functions:
        return PwqFunction(pieces={})
    pieces = {}
    for codes in cert.functions[0].pieces:
        P = sum(w[k] * cert.functions[k].pieces[codes][0] for k in range(w.size))
        d = sum(w[k] * cert.functions[k].pieces[codes][1] for k in range(w.size))
        omega = sum(w[k] * cert.functions[k].pieces[codes][2] for k in range(w.size))
        pieces[codes] = (P, d, float(omega))
    return PwqFunction(pieces=pieces)
