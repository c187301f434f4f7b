"""Polyhedral computation substrate.

H- and V-representations are converted through a double description pass on
the homogenization cone: a polyhedron ``{x : Ax <= b, Ex = g}`` corresponds
to the cone ``{(x, t) : Ax <= bt, Ex = gt, t >= 0}``; generators with a
positive last coordinate are vertices, the others recession rays.  The same
pass applied to the polar cone of a generator matrix yields facets, i.e. the
reverse conversion.

Insertion order and all rank decisions are deterministic, so ray matrices
(and therefore downstream constraint ordering) are reproducible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import GeometryError, SemanticError, UnboundedPolytopeError
from .model import UncertainGrn, rate_in_domain
from .partition import Domain, Partition, adjacent_regulatory, build_partition

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class HPolyhedron:
    """Solution set of A x <= b, E x = g."""

    A: np.ndarray
    b: np.ndarray
    E: np.ndarray
    g: np.ndarray

    @classmethod
    def make(cls, A=None, b=None, E=None, g=None, dim: int | None = None) -> "HPolyhedron":
        if A is None:
            if dim is None:
                dim = 0 if E is None else np.asarray(E).shape[1]
            A = np.zeros((0, dim))
            b = np.zeros(0)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if E is None:
            E = np.zeros((0, A.shape[1]))
            g = np.zeros(0)
        E = np.atleast_2d(np.asarray(E, dtype=float))
        g = np.atleast_1d(np.asarray(g, dtype=float))
        if E.size == 0:
            E = E.reshape(0, A.shape[1])
        if A.shape[0] != b.shape[0] or E.shape[0] != g.shape[0]:
            raise GeometryError("row counts of matrices and offsets disagree")
        if A.shape[1] != E.shape[1]:
            raise GeometryError(
                f"column mismatch: inequalities have {A.shape[1]}, equalities {E.shape[1]}"
            )
        return cls(A=A, b=b, E=E, g=g)

    @property
    def dim(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True)
class VPolyhedron:
    """conv(vertices) + cone(rays); rays are unit rows."""

    vertices: np.ndarray
    rays: np.ndarray

    @classmethod
    def make(cls, vertices, rays=None, dim: int | None = None) -> "VPolyhedron":
        V = np.asarray(vertices, dtype=float)
        if V.size == 0:
            V = V.reshape(0, dim if dim is not None else 0)
        V = np.atleast_2d(V)
        if rays is None:
            R = np.zeros((0, V.shape[1]))
        else:
            R = np.atleast_2d(np.asarray(rays, dtype=float))
            if R.size == 0:
                R = R.reshape(0, V.shape[1])
        return cls(vertices=V, rays=R)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def is_empty(self) -> bool:
        return self.vertices.shape[0] == 0 and self.rays.shape[0] == 0


@dataclass(frozen=True)
class RayMatrix:
    """Homogenization-cone generators as columns; vertex columns end in 1,
    recession-ray columns in 0."""

    gamma: np.ndarray
    vertex_count: int

    @property
    def ncols(self) -> int:
        return self.gamma.shape[1]


# ---------------------------------------------------------------------------
# double description core


def _sorted_rows(M: np.ndarray) -> np.ndarray:
    if M.shape[0] <= 1:
        return M
    order = sorted(range(M.shape[0]), key=lambda i: tuple(M[i]))
    return M[order]


def _dedupe_rows(M: np.ndarray, tol: float) -> np.ndarray:
    out: list[np.ndarray] = []
    for row in M:
        if not any(np.max(np.abs(row - kept)) <= tol for kept in out):
            out.append(row)
    return np.array(out) if out else M.reshape(0, M.shape[1])


def _dd_cone(A: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Extreme rays and lineality basis of the cone {y : A y <= 0}.

    Returns (rays, lines) as row matrices.  Rows of A are inserted in their
    given order after a full-rank initial basis has been selected, and every
    adjacency decision uses exact active-set comparison, so the output order
    is deterministic.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[1]
    norms = np.linalg.norm(A, axis=1)
    A = A[norms > tol] / norms[norms > tol, None]
    m = A.shape[0]
    if m == 0:
        return np.zeros((0, d)), np.eye(d)

    # lineality space and row-space coordinates
    u, s, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    lines = vt[rank:]
    W = vt[:rank].T                       # d x r
    r = rank
    A2 = A @ W                            # m x r

    # initial full-rank row basis, greedy in row order
    basis: list[int] = []
    Q: list[np.ndarray] = []
    for idx in range(m):
        if len(basis) == r:
            break
        v = A2[idx].copy()
        for q in Q:
            v -= (v @ q) * q
        nv = np.linalg.norm(v)
        if nv > tol:
            if nv < 10 * tol:
                raise GeometryError(
                    f"rank decision for inequality row {idx} is ambiguous "
                    f"(pivot {nv:.3e} within a decade of tolerance {tol:.3e})"
                )
            basis.append(idx)
            Q.append(v / nv)
    if len(basis) < r:
        raise GeometryError("row space rank collapsed during basis selection")

    B = A2[basis]
    gens = list((-np.linalg.inv(B)).T)    # rows: generators of {z : Bz <= 0}
    gens = [g / np.linalg.norm(g) for g in gens]
    processed = list(basis)

    def active_set(g: np.ndarray) -> frozenset:
        return frozenset(j for j in processed if abs(A2[j] @ g) <= tol)

    actives = [active_set(g) for g in gens]

    for idx in range(m):
        if idx in basis:
            continue
        processed.append(idx)
        a = A2[idx]
        vals = np.array([a @ g for g in gens])
        pos = [i for i, v in enumerate(vals) if v > tol]
        keep = [i for i, v in enumerate(vals) if v <= tol]
        if not pos:
            actives = [
                act | {idx} if abs(vals[i]) <= tol else act
                for i, act in enumerate(actives)
            ]
            continue
        neg = [i for i, v in enumerate(vals) if v < -tol]
        new_gens: list[np.ndarray] = []
        for p, q in itertools.product(pos, neg):
            common = actives[p] & actives[q]
            adjacent = not any(
                k != p and k != q and common <= actives[k]
                for k in range(len(gens))
            )
            if not adjacent:
                continue
            g = vals[p] * gens[q] - vals[q] * gens[p]
            ng = np.linalg.norm(g)
            if ng <= tol:
                continue
            g /= ng
            if any(np.max(np.abs(g - h)) <= tol for h in new_gens):
                continue
            new_gens.append(g)
        gens = [gens[i] for i in keep] + new_gens
        actives = [
            actives[i] | ({idx} if abs(vals[i]) <= tol else set()) for i in keep
        ] + [active_set(g) for g in new_gens]
        if not gens:
            break

    rays = np.array([W @ g for g in gens]) if gens else np.zeros((0, d))
    return rays, lines


def _nullspace(M: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of M."""
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    u, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    return vt[rank:].T


def _is_feasible(p: HPolyhedron, tol: float) -> bool:
    res = linprog(
        c=np.zeros(p.dim),
        A_ub=p.A if p.A.shape[0] else None,
        b_ub=p.b if p.A.shape[0] else None,
        A_eq=p.E if p.E.shape[0] else None,
        b_eq=p.g if p.E.shape[0] else None,
        bounds=[(None, None)] * p.dim,
        method="highs",
    )
    return res.status == 0


def h_to_v(p: HPolyhedron, tol: float = DEFAULT_TOL) -> VPolyhedron:
    """Convert an H-representation to vertices and unit rays."""
    d = p.dim
    if not _is_feasible(p, tol):
        return VPolyhedron.make(np.zeros((0, d)), np.zeros((0, d)))

    ineq = np.hstack([p.A, -p.b[:, None]]) if p.A.shape[0] else np.zeros((0, d + 1))
    ineq = np.vstack([ineq, np.append(np.zeros(d), -1.0)[None, :]])  # t >= 0
    eq = np.hstack([p.E, -p.g[:, None]]) if p.E.shape[0] else np.zeros((0, d + 1))

    N = _nullspace(eq, tol)
    if N.shape[1] == 0:
        return VPolyhedron.make(np.zeros((0, d)), np.zeros((0, d)))
    rays_z, lines_z = _dd_cone(ineq @ N, tol)
    gens = [N @ g for g in rays_z]
    for line in lines_z:
        y = N @ line
        gens.extend([y, -y])

    verts: list[np.ndarray] = []
    rays: list[np.ndarray] = []
    for y in gens:
        y = y / np.linalg.norm(y)
        t = y[-1]
        if t > tol:
            verts.append(y[:-1] / t)
        elif t >= -tol:
            ray = y[:-1]
            nr = np.linalg.norm(ray)
            if nr > tol:
                rays.append(ray / nr)
        else:
            raise GeometryError("homogenization produced a generator with negative scale")

    V = _dedupe_rows(np.array(verts) if verts else np.zeros((0, d)), 1e-9)
    R = _dedupe_rows(np.array(rays) if rays else np.zeros((0, d)), 1e-9)
    if V.shape[0] == 0:
        raise GeometryError("feasible polyhedron produced no vertices (degenerate input)")
    return VPolyhedron.make(_sorted_rows(V), _sorted_rows(R))


def v_to_h(p: VPolyhedron, tol: float = DEFAULT_TOL) -> HPolyhedron:
    """Convert a V-representation to a minimal H-representation."""
    if p.vertices.shape[0] == 0:
        raise GeometryError("cannot convert an empty V-representation")
    d = p.dim
    gens = np.vstack([
        np.hstack([p.vertices, np.ones((p.vertices.shape[0], 1))]),
        np.hstack([p.rays, np.zeros((p.rays.shape[0], 1))]),
    ])
    normals, lines = _dd_cone(gens, tol)

    A_rows, b_vals, E_rows, g_vals = [], [], [], []
    for a in normals:
        alpha, beta = a[:-1], a[-1]
        s = np.linalg.norm(alpha)
        if s <= tol:
            continue  # facet at infinity (t >= 0), no x-space content
        A_rows.append(alpha / s)
        b_vals.append(-beta / s)
    for a in lines:
        alpha, beta = a[:-1], a[-1]
        s = np.linalg.norm(alpha)
        if s <= tol:
            continue
        lead = alpha[np.argmax(np.abs(alpha) > tol)]
        if lead < 0:
            alpha, beta = -alpha, -beta
        E_rows.append(alpha / s)
        g_vals.append(-beta / s)

    A = _sorted_rows(np.hstack([np.array(A_rows), np.array(b_vals)[:, None]])) \
        if A_rows else np.zeros((0, d + 1))
    E = _sorted_rows(np.hstack([np.array(E_rows), np.array(g_vals)[:, None]])) \
        if E_rows else np.zeros((0, d + 1))
    return HPolyhedron.make(A=A[:, :-1], b=A[:, -1], E=E[:, :-1], g=E[:, -1], dim=d)


def contains(p: HPolyhedron, x, tol: float = 1e-7) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != (p.dim,):
        raise GeometryError(f"point of dimension {x.shape} vs polyhedron of dimension {p.dim}")
    if p.A.shape[0] and np.max(p.A @ x - p.b) > tol:
        return False
    if p.E.shape[0] and np.max(np.abs(p.E @ x - p.g)) > tol:
        return False
    return True


# ---------------------------------------------------------------------------
# domain geometry


def domain_closure_hrep(model: UncertainGrn, domain: Domain) -> HPolyhedron:
    """H-representation of the closure of a domain (box faces at thresholds,
    closed at the orthant boundary, recession directions where unbounded)."""
    n = model.n
    A_rows, b_vals, E_rows, g_vals = [], [], [], []
    for i, c in enumerate(domain.codes):
        e = np.zeros(n)
        e[i] = 1.0
        if c % 2 == 1:
            E_rows.append(e)
            g_vals.append(model.thresholds[i][(c - 1) // 2])
        else:
            lo, hi = model.interval_bounds(i, c // 2)
            A_rows.append(-e)
            b_vals.append(-lo)
            if hi != float("inf"):
                A_rows.append(e)
                b_vals.append(hi)
    return HPolyhedron.make(
        A=np.array(A_rows), b=np.array(b_vals),
        E=np.array(E_rows) if E_rows else None,
        g=np.array(g_vals) if g_vals else None,
        dim=n,
    )


def homogenization_cone(obj, model: UncertainGrn | None = None,
                        tol: float = DEFAULT_TOL) -> RayMatrix:
    """Ray matrix of the homogenization cone of a polyhedron or domain closure.

    Columns are (vertex, 1) pairs followed by (ray, 0) pairs, each group in
    lexicographic order.
    """
    if isinstance(obj, Domain):
        if model is None:
            raise SemanticError("model", "a model is required to embed a domain")
        hp = domain_closure_hrep(model, obj)
    else:
        hp = obj
    vp = h_to_v(hp, tol)
    if vp.is_empty:
        raise GeometryError("cannot build the homogenization cone of an empty set")
    cols = [np.append(v, 1.0) for v in vp.vertices] + [np.append(r, 0.0) for r in vp.rays]
    return RayMatrix(gamma=np.column_stack(cols), vertex_count=vp.vertices.shape[0])


# ---------------------------------------------------------------------------
# sliding-mode polytope


def gamma_order(model: UncertainGrn, neighbors: tuple[Domain, ...]) -> list[tuple[int, Domain]]:
    """Index order of the convexified weights: system-major, neighbor-minor."""
    return [(k, nb) for k in range(model.L) for nb in neighbors]


def facet_flow_matrix(model: UncertainGrn, neighbors: tuple[Domain, ...]) -> np.ndarray:
    """Full production vectors of every (system, adjacent domain) pair as columns."""
    cols = [rate_in_domain(model, k, nb) for k, nb in gamma_order(model, neighbors)]
    return np.column_stack(cols)


def sliding_polytope(model: UncertainGrn, d_s: Domain,
                     partition: Partition | None = None) -> HPolyhedron:
    """Weight polytope of the convexified dynamics pinned to a switching domain.

    Variables are the L*q mixing weights (system-major, neighbor-minor over
    the adjacent regulatory domains); equalities force the pinned velocity
    components to zero and the weights to the standard simplex.
    """
    if d_s.is_regulatory:
        raise SemanticError("domain", "sliding polytope requires a switching domain")
    partition = partition or build_partition(model)
    neighbors = adjacent_regulatory(partition, d_s)
    order = gamma_order(model, neighbors)
    nvar = len(order)
    pinned = d_s.pinned
    E = np.zeros((len(pinned) + 1, nvar))
    g = np.zeros(len(pinned) + 1)
    for row, i in enumerate(pinned):
        theta = model.thresholds[i][d_s.pinned_threshold(i)]
        for col, (k, nb) in enumerate(order):
            E[row, col] = rate_in_domain(model, k, nb)[i]
        g[row] = model.degradation[i] * theta
    E[-1, :] = 1.0
    g[-1] = 1.0
    return HPolyhedron.make(A=-np.eye(nvar), b=np.zeros(nvar), E=E, g=g)


def vertices(p: HPolyhedron, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vertex list of a bounded polytope, lexicographically ordered."""
    try:
        vp = h_to_v(p, tol)
    except GeometryError:
        raise
    if vp.is_empty:
        return np.zeros((0, p.dim))
    if vp.rays.shape[0]:
        raise UnboundedPolytopeError(
            f"vertex enumeration on an unbounded polyhedron ({vp.rays.shape[0]} rays)"
        )
    return vp.vertices
