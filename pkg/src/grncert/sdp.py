"""Solver-agnostic LMI feasibility problems.

A problem is a list of declared unknowns (symmetric matrices, vectors,
scalars, optionally entrywise-nonnegative) together with affine matrix
blocks constrained negative/positive semidefinite or identically zero.
Block expressions are stored as explicit coefficient tensors, so the same
data drives the cvxpy translation, an independent numpy residual check, and
a JSON interchange dump.

Feasibility is solved in phase-1 form: minimize t subject to every
``<= 0`` block being ``<= t I`` (mirrored for ``>= 0``), equalities exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError

SENSE_NEG = "neg"   # block <= 0
SENSE_POS = "pos"   # block >= 0
SENSE_EQ = "eq"     # block == 0 entrywise

_T_CAP = 1.0  # lower cap on the phase-1 objective; keeps it bounded


@dataclass(frozen=True)
class VarDecl:
    name: str
    kind: str              # "symmetric" | "vector" | "scalar"
    size: int
    nonneg: bool = False


@dataclass(frozen=True)
class Term:
    var: str
    tensor: np.ndarray     # (m,m,s,s) symmetric / (m,m,s) vector / (m,m) scalar


@dataclass(frozen=True)
class Block:
    name: str
    sense: str
    size: int
    const: np.ndarray
    terms: tuple[Term, ...]


@dataclass
class SdpProblem:
    variables: dict = field(default_factory=dict)   # name -> VarDecl
    blocks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def declare(self, name: str, kind: str, size: int, nonneg: bool = False) -> str:
        if name in self.variables:
            raise ValueError(f"variable {name!r} declared twice")
        if kind not in ("symmetric", "vector", "scalar"):
            raise ValueError(f"unknown variable kind {kind!r}")
        self.variables[name] = VarDecl(name=name, kind=kind, size=size, nonneg=nonneg)
        return name

    def add_block(self, name: str, sense: str, size: int,
                  terms: list[Term], const: np.ndarray | None = None) -> None:
        if sense not in (SENSE_NEG, SENSE_POS, SENSE_EQ):
            raise ValueError(f"unknown sense {sense!r}")
        for t in terms:
            if t.var not in self.variables:
                raise ValueError(f"block {name!r} references undeclared variable {t.var!r}")
            decl = self.variables[t.var]
            expect = {
                "symmetric": (size, size, decl.size, decl.size),
                "vector": (size, size, decl.size),
                "scalar": (size, size),
            }[decl.kind]
            if t.tensor.shape != expect:
                raise ValueError(
                    f"block {name!r}, variable {t.var!r}: tensor shape "
                    f"{t.tensor.shape} != expected {expect}"
                )
        c = np.zeros((size, size)) if const is None else np.asarray(const, dtype=float)
        if c.shape != (size, size):
            raise ValueError(f"block {name!r}: constant shape {c.shape} != ({size},{size})")
        self.blocks.append(Block(name=name, sense=sense, size=size,
                                 const=c, terms=tuple(terms)))

    def to_json_dict(self) -> dict:
        return {
            "variables": [
                {"name": v.name, "kind": v.kind, "size": v.size, "nonneg": v.nonneg}
                for v in self.variables.values()
            ],
            "blocks": [
                {
                    "name": b.name,
                    "sense": b.sense,
                    "size": b.size,
                    "const": b.const.tolist(),
                    "terms": [
                        {"var": t.var, "tensor": t.tensor.tolist()} for t in b.terms
                    ],
                }
                for b in self.blocks
            ],
        }


def tensor_of(fun, kind: str, size: int, out: int) -> np.ndarray:
    """Coefficient tensor of a linear map given as a callable.

    ``fun`` maps one variable value (matrix/vector/scalar of the declared
    shape) to an ``out x out`` matrix and must be linear.
    """
    if kind == "symmetric":
        T = np.zeros((out, out, size, size))
        for a in range(size):
            for b in range(size):
                E = np.zeros((size, size))
                E[a, b] = 1.0
                T[:, :, a, b] = fun(E)
        return T
    if kind == "vector":
        T = np.zeros((out, out, size))
        for a in range(size):
            e = np.zeros(size)
            e[a] = 1.0
            T[:, :, a] = fun(e)
        return T
    if kind == "scalar":
        return np.asarray(fun(1.0), dtype=float).reshape(out, out)
    raise ValueError(f"unknown kind {kind!r}")


def identity_term(var: str, size: int, scale: float = 1.0) -> Term:
    """Term contributing ``scale * X`` for a symmetric matrix variable."""
    T = np.zeros((size, size, size, size))
    for a in range(size):
        for b in range(size):
            T[a, b, a, b] = scale
    return Term(var=var, tensor=T)


def eval_block(block: Block, values: dict) -> np.ndarray:
    acc = block.const.copy()
    for term in block.terms:
        val = values[term.var]
        if term.tensor.ndim == 4:
            acc = acc + np.tensordot(term.tensor, np.asarray(val), axes=([2, 3], [0, 1]))
        elif term.tensor.ndim == 3:
            acc = acc + np.tensordot(term.tensor, np.asarray(val), axes=([2], [0]))
        else:
            acc = acc + term.tensor * float(val)
    return acc


@dataclass(frozen=True)
class SolveSettings:
    margin_accept: float = 1e-8
    eq_tol: float = 1e-7
    solver: str = "CLARABEL"
    max_iters: int | None = None
    verbose: bool = False


@dataclass
class SdpSolution:
    status: str                 # "feasible" | "infeasible" | "inaccurate"
    values: dict
    margin: float | None
    stats: dict = field(default_factory=dict)


def _cvxpy_expr(block: Block, cvars: dict):
    import cvxpy as cp

    m = block.size
    expr = cp.Constant(block.const)
    for term in block.terms:
        v = cvars[term.var]
        if term.tensor.ndim == 4:
            s = term.tensor.shape[2]
            M = term.tensor.reshape(m * m, s * s)
            flat = cp.reshape(v, (s * s,), order="C")
            expr = expr + cp.reshape(M @ flat, (m, m), order="C")
        elif term.tensor.ndim == 3:
            s = term.tensor.shape[2]
            M = term.tensor.reshape(m * m, s)
            expr = expr + cp.reshape(M @ v, (m, m), order="C")
        else:
            expr = expr + term.tensor * v
    return expr


def solve(problem: SdpProblem, settings: SolveSettings | None = None) -> SdpSolution:
    """Phase-1 feasibility solve; never reports numerical breakdown as infeasible."""
    import cvxpy as cp

    settings = settings or SolveSettings()
    cvars: dict = {}
    constraints = []
    for decl in problem.variables.values():
        if decl.kind == "symmetric":
            v = cp.Variable((decl.size, decl.size), symmetric=True, name=decl.name)
            if decl.nonneg:
                constraints.append(v >= 0)
        elif decl.kind == "vector":
            v = cp.Variable(decl.size, name=decl.name, nonneg=decl.nonneg)
        else:
            v = cp.Variable(name=decl.name, nonneg=decl.nonneg)
        cvars[decl.name] = v

    t = cp.Variable(name="__margin")
    constraints.append(t >= -_T_CAP)
    eye = {}
    for block in problem.blocks:
        expr = _cvxpy_expr(block, cvars)
        sym = (expr + expr.T) / 2
        if block.size not in eye:
            eye[block.size] = np.eye(block.size)
        if block.sense == SENSE_NEG:
            constraints.append(sym << t * eye[block.size])
        elif block.sense == SENSE_POS:
            constraints.append(sym >> -t * eye[block.size])
        else:
            constraints.append(expr == np.zeros((block.size, block.size)))

    prob = cp.Problem(cp.Minimize(t), constraints)
    solver_kwargs = {}
    if settings.max_iters is not None:
        solver_kwargs["max_iter"] = settings.max_iters
    started = time.perf_counter()
    try:
        prob.solve(solver=settings.solver, verbose=settings.verbose, **solver_kwargs)
    except cp.error.SolverError as exc:
        return SdpSolution(status="inaccurate", values={}, margin=None,
                           stats={"error": str(exc)})
    elapsed = time.perf_counter() - started

    stats = {
        "solver": settings.solver,
        "runtime_s": elapsed,
        "cvxpy_status": prob.status,
    }
    if prob.solver_stats is not None and prob.solver_stats.num_iters is not None:
        stats["iterations"] = int(prob.solver_stats.num_iters)

    if prob.status in ("infeasible", "infeasible_inaccurate"):
        status = "infeasible" if prob.status == "infeasible" else "inaccurate"
        return SdpSolution(status=status, values={}, margin=None, stats=stats)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return SdpSolution(status="inaccurate", values={}, margin=None, stats=stats)

    values = {}
    for name, var in cvars.items():
        val = var.value
        if val is None:
            return SdpSolution(status="inaccurate", values={}, margin=None, stats=stats)
        decl = problem.variables[name]
        if decl.kind == "symmetric":
            val = np.asarray(val, dtype=float)
            val = (val + val.T) / 2
        elif decl.kind == "vector":
            val = np.asarray(val, dtype=float).reshape(decl.size)
        else:
            val = float(val)
        values[name] = val

    margin = float(t.value)
    if prob.status == "optimal_inaccurate":
        return SdpSolution(status="inaccurate", values=values, margin=margin, stats=stats)

    report = residuals(problem, SdpSolution(status="feasible", values=values,
                                            margin=margin, stats=stats))
    eq_ok = report.max_equality_violation <= settings.eq_tol
    feasible = margin <= -settings.margin_accept and eq_ok
    return SdpSolution(
        status="feasible" if feasible else "infeasible",
        values=values,
        margin=margin,
        stats=stats,
    )


@dataclass(frozen=True)
class ConstraintResidual:
    name: str
    kind: str        # "lmi<=0" | "lmi>=0" | "equality" | "nonneg-var"
    violation: float


@dataclass
class ResidualReport:
    entries: list

    @property
    def max_violation(self) -> float:
        return max((e.violation for e in self.entries), default=0.0)

    @property
    def worst(self) -> ConstraintResidual | None:
        return max(self.entries, key=lambda e: e.violation, default=None)

    @property
    def max_equality_violation(self) -> float:
        return max((e.violation for e in self.entries if e.kind == "equality"), default=0.0)

    def to_dict(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "entries": [
                {"name": e.name, "kind": e.kind, "violation": e.violation}
                for e in self.entries
            ],
        }


def residuals(problem: SdpProblem, solution: SdpSolution) -> ResidualReport:
    """Independent residual check: plain numpy evaluation of every block with
    a symmetric eigensolver, never consulting the optimization backend."""
    if not solution.values and problem.variables:
        raise SolverError("solution carries no variable assignments")
    entries = []
    for block in problem.blocks:
        val = eval_block(block, solution.values)
        sym = (val + val.T) / 2
        if block.sense == SENSE_NEG:
            lam = float(np.linalg.eigvalsh(sym)[-1])
            entries.append(ConstraintResidual(block.name, "lmi<=0", max(0.0, lam)))
        elif block.sense == SENSE_POS:
            lam = float(np.linalg.eigvalsh(sym)[0])
            entries.append(ConstraintResidual(block.name, "lmi>=0", max(0.0, -lam)))
        else:
            entries.append(ConstraintResidual(
                block.name, "equality", float(np.max(np.abs(val))) if val.size else 0.0))
    for decl in problem.variables.values():
        if decl.nonneg:
            v = np.asarray(solution.values[decl.name])
            worst = float(v.min()) if v.size else 0.0
            entries.append(ConstraintResidual(
                f"nonneg[{decl.name}]", "nonneg-var", max(0.0, -worst)))
    return ResidualReport(entries=entries)
