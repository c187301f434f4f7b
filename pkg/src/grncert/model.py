"""Uncertain piecewise-affine GRN models.

A model couples a diagonal degradation matrix with a family of L extremal
production-rate functions sharing one threshold structure.  Every concrete
system of interest is the convex combination of the extremal ones with a
weight vector on the standard simplex; inside a regulatory box every rate
function collapses to a constant vector, which is what the certification
pipeline consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SchemaError, SemanticError

SIMPLEX_TOL = 1e-12

_SIGNS = ("plus", "minus")


@dataclass(frozen=True)
class StepFactor:
    """One step-function factor s^+/s^- of a production term.

    ``var`` and ``threshold`` are 0-based internally (1-based in model files).
    """

    var: int
    threshold: int
    sign: str

    def value_on_interval(self, interval: int) -> float:
        # interval t of a variable spans (theta_{t-1}, theta_t); it lies
        # above threshold j exactly when t >= j + 1.
        above = interval >= self.threshold + 1
        if self.sign == "plus":
            return 1.0 if above else 0.0
        return 0.0 if above else 1.0


@dataclass(frozen=True)
class ProductTerm:
    coeff: float
    factors: tuple[StepFactor, ...]


@dataclass(frozen=True)
class RateFunction:
    """Production rates for all proteins: per protein, a sum of product terms."""

    production: tuple[tuple[ProductTerm, ...], ...]


@dataclass(frozen=True)
class UncertainGrn:
    n: int
    degradation: tuple[float, ...]
    thresholds: tuple[tuple[float, ...], ...]
    bounds: tuple[float | None, ...]
    extremal: tuple[RateFunction, ...]

    @property
    def L(self) -> int:
        return len(self.extremal)

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.degradation, dtype=float)

    @property
    def C(self) -> np.ndarray:
        return np.diag(self.degradation)

    def interval_bounds(self, var: int, interval: int) -> tuple[float, float]:
        """Return (lo, hi) of interval index ``interval`` for ``var``.

        lo of the first interval is 0; hi of the last is the optional state
        bound or +inf.
        """
        th = self.thresholds[var]
        lo = 0.0 if interval == 0 else th[interval - 1]
        if interval < len(th):
            hi = th[interval]
        else:
            b = self.bounds[var]
            hi = float("inf") if b is None else b
        return lo, hi


@dataclass(frozen=True)
class LambdaInstance:
    """A point of the standard simplex selecting one system of the family."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise SemanticError("lambda", "weight vector must be 1-D and nonempty")
        if np.any(w < 0):
            raise SemanticError("lambda", f"negative weight in {self.weights}")
        if abs(float(w.sum()) - 1.0) > SIMPLEX_TOL:
            raise SemanticError("lambda", f"weights sum to {w.sum()!r}, not 1")

    @property
    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @classmethod
    def unit(cls, k: int, L: int) -> "LambdaInstance":
        w = [0.0] * L
        w[k] = 1.0
        return cls(tuple(w))


# ---------------------------------------------------------------------------
# parsing / serialization


def _expect(cond: bool, path: str, message: str, semantic: bool = False):
    if not cond:
        raise (SemanticError if semantic else SchemaError)(path, message)


def _parse_factor(obj, path: str, n: int, thresholds) -> StepFactor:
    _expect(isinstance(obj, dict), path, "factor must be an object")
    for key in ("var", "threshold", "sign"):
        _expect(key in obj, f"{path}.{key}", "missing field")
    var, thr, sign = obj["var"], obj["threshold"], obj["sign"]
    _expect(isinstance(var, int) and not isinstance(var, bool), f"{path}.var", "must be an integer")
    _expect(1 <= var <= n, f"{path}.var", f"must be in 1..{n}", semantic=True)
    m = len(thresholds[var - 1])
    _expect(isinstance(thr, int) and not isinstance(thr, bool), f"{path}.threshold", "must be an integer")
    _expect(1 <= thr <= m, f"{path}.threshold",
            f"protein {var} has {m} threshold(s), got index {thr}", semantic=True)
    _expect(sign in _SIGNS, f"{path}.sign", f"must be one of {_SIGNS}")
    return StepFactor(var=var - 1, threshold=thr - 1, sign=sign)


def _parse_term(obj, path: str, n: int, thresholds) -> ProductTerm:
    _expect(isinstance(obj, dict), path, "term must be an object")
    _expect("coeff" in obj, f"{path}.coeff", "missing field")
    coeff = obj["coeff"]
    _expect(isinstance(coeff, (int, float)) and not isinstance(coeff, bool),
            f"{path}.coeff", "must be a number")
    _expect(coeff >= 0, f"{path}.coeff", "production coefficient must be nonnegative",
            semantic=True)
    raw_factors = obj.get("factors", [])
    _expect(isinstance(raw_factors, list), f"{path}.factors", "must be a list")
    factors = tuple(
        _parse_factor(f, f"{path}.factors[{i + 1}]", n, thresholds)
        for i, f in enumerate(raw_factors)
    )
    seen: dict[tuple[int, int], str] = {}
    for i, f in enumerate(factors):
        key = (f.var, f.threshold)
        if key in seen and seen[key] != f.sign:
            raise SemanticError(
                f"{path}.factors[{i + 1}]",
                "contradictory step factors on the same threshold make the term identically zero",
            )
        seen[key] = f.sign
    return ProductTerm(coeff=float(coeff), factors=factors)


def _parse_rate(obj, path: str, n: int, thresholds) -> RateFunction:
    _expect(isinstance(obj, dict), path, "extremal system must be an object")
    _expect("production" in obj, f"{path}.production", "missing field")
    entries = obj["production"]
    _expect(isinstance(entries, list), f"{path}.production", "must be a list")
    per_target: dict[int, tuple[ProductTerm, ...]] = {}
    for i, entry in enumerate(entries):
        epath = f"{path}.production[{i + 1}]"
        _expect(isinstance(entry, dict), epath, "must be an object")
        _expect("target" in entry, f"{epath}.target", "missing field")
        tgt = entry["target"]
        _expect(isinstance(tgt, int) and not isinstance(tgt, bool), f"{epath}.target",
                "must be an integer")
        _expect(1 <= tgt <= n, f"{epath}.target", f"must be in 1..{n}", semantic=True)
        _expect(tgt not in per_target, f"{epath}.target", f"duplicate target {tgt}",
                semantic=True)
        raw_terms = entry.get("terms", [])
        _expect(isinstance(raw_terms, list), f"{epath}.terms", "must be a list")
        per_target[tgt] = tuple(
            _parse_term(t, f"{epath}.terms[{j + 1}]", n, thresholds)
            for j, t in enumerate(raw_terms)
        )
    production = tuple(per_target.get(i + 1, ()) for i in range(n))
    return RateFunction(production=production)


def parse_model(text: str) -> UncertainGrn:
    """Parse and validate a model file (JSON, 1-based indices)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    _expect(isinstance(raw, dict), "$", "top level must be an object")
    for key in ("n", "degradation", "thresholds", "extremal_systems"):
        _expect(key in raw, f"$.{key}", "missing field")
    n = raw["n"]
    _expect(isinstance(n, int) and not isinstance(n, bool) and n >= 1, "$.n",
            "must be a positive integer")

    deg = raw["degradation"]
    _expect(isinstance(deg, list) and len(deg) == n, "$.degradation",
            f"must be a list of {n} numbers")
    for i, c in enumerate(deg):
        _expect(isinstance(c, (int, float)) and not isinstance(c, bool),
                f"degradation[{i + 1}]", "must be a number")
        _expect(c > 0, f"degradation[{i + 1}]",
                "degradation rate must be strictly positive", semantic=True)

    ths = raw["thresholds"]
    _expect(isinstance(ths, list) and len(ths) == n, "$.thresholds",
            f"must be a list of {n} lists")
    thresholds = []
    for i, tl in enumerate(ths):
        _expect(isinstance(tl, list), f"thresholds[{i + 1}]", "must be a list")
        vals = []
        for j, t in enumerate(tl):
            _expect(isinstance(t, (int, float)) and not isinstance(t, bool),
                    f"thresholds[{i + 1}][{j + 1}]", "must be a number")
            _expect(t > 0, f"thresholds[{i + 1}][{j + 1}]",
                    "thresholds must be strictly positive", semantic=True)
            if vals and t <= vals[-1]:
                raise SemanticError(f"thresholds[{i + 1}][{j + 1}]",
                                    "thresholds must be strictly increasing")
            vals.append(float(t))
        thresholds.append(tuple(vals))
    thresholds = tuple(thresholds)

    raw_bounds = raw.get("bounds", [None] * n)
    _expect(isinstance(raw_bounds, list) and len(raw_bounds) == n, "$.bounds",
            f"must be a list of {n} entries")
    bounds = []
    for i, b in enumerate(raw_bounds):
        if b is None:
            bounds.append(None)
            continue
        _expect(isinstance(b, (int, float)) and not isinstance(b, bool),
                f"bounds[{i + 1}]", "must be a number or null")
        top = thresholds[i][-1] if thresholds[i] else 0.0
        _expect(b > top, f"bounds[{i + 1}]",
                "state bound must exceed every threshold of its protein", semantic=True)
        bounds.append(float(b))
    bounds = tuple(bounds)

    systems = raw["extremal_systems"]
    _expect(isinstance(systems, list) and len(systems) >= 1, "$.extremal_systems",
            "must be a nonempty list")
    extremal = tuple(
        _parse_rate(s, f"extremal_systems[{k + 1}]", n, thresholds)
        for k, s in enumerate(systems)
    )

    return UncertainGrn(n=n, degradation=tuple(float(c) for c in deg),
                        thresholds=thresholds, bounds=bounds, extremal=extremal)


def load_model(path) -> UncertainGrn:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def model_to_dict(model: UncertainGrn) -> dict:
    """Inverse of :func:`parse_model` up to JSON encoding (1-based indices)."""
    systems = []
    for rate in model.extremal:
        production = []
        for i, terms in enumerate(rate.production):
            production.append({
                "target": i + 1,
                "terms": [
                    {
                        "coeff": t.coeff,
                        "factors": [
                            {"var": f.var + 1, "threshold": f.threshold + 1, "sign": f.sign}
                            for f in t.factors
                        ],
                    }
                    for t in terms
                ],
            })
        systems.append({"production": production})
    return {
        "n": model.n,
        "degradation": list(model.degradation),
        "thresholds": [list(t) for t in model.thresholds],
        "bounds": list(model.bounds),
        "extremal_systems": systems,
    }


def serialize_model(model: UncertainGrn) -> str:
    return json.dumps(model_to_dict(model), indent=2)


# ---------------------------------------------------------------------------
# evaluation on regulatory domains


def _interval_profile(domain) -> Sequence[int]:
    intervals = getattr(domain, "intervals", domain)
    if any(t is None for t in intervals):
        raise SemanticError("domain", "rate undefined on switching domain")
    return intervals


def rate_in_domain(model: UncertainGrn, k: int, domain) -> np.ndarray:
    """Constant production vector of extremal system ``k`` on a regulatory domain.

    ``domain`` is a partition domain (or a plain sequence of per-variable
    interval indices).
    """
    if not 0 <= k < model.L:
        raise SemanticError("k", f"extremal index {k} out of range 0..{model.L - 1}")
    intervals = _interval_profile(domain)
    rate = model.extremal[k]
    out = np.zeros(model.n)
    for i, terms in enumerate(rate.production):
        acc = 0.0
        for term in terms:
            val = term.coeff
            for f in term.factors:
                val *= f.value_on_interval(intervals[f.var])
                if val == 0.0:
                    break
            acc += val
        out[i] = acc
    return out


def instantiate(model: UncertainGrn, lam: LambdaInstance, domain) -> np.ndarray:
    """Production vector of the convex-combination system on a regulatory domain."""
    w = lam.as_array
    if w.size != model.L:
        raise SemanticError("lambda", f"expected {model.L} weights, got {w.size}")
    out = np.zeros(model.n)
    for k in range(model.L):
        if w[k] != 0.0:
            out += w[k] * rate_in_domain(model, k, domain)
    return out
