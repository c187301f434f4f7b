"""Command-line front end.

Exit codes are a stable contract: 0 ok, 1 shared-structure check failure,
2 input error, 3 infeasible, 4 solver inaccurate, 5 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import certify, jsonio, sdp, simulate
from .errors import AssumptionViolation, GrnCertError, SchemaError, SemanticError
from .model import LambdaInstance, load_model
from .partition import build_partition, build_stg, check_shared_stg, focal_point, sink_domains
from .polytope import homogenization_cone

EXIT_OK = 0
EXIT_ASSUMPTION = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_INACCURATE = 4
EXIT_VERIFY = 5


def _model_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load(args):
    path = Path(args.model)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    return load_model(path), _model_hash(path)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_partition(args) -> int:
    model, digest = _load(args)
    out = _outdir(args)
    partition = build_partition(model)
    sinks = {d.codes for d in sink_domains(model, partition)}
    domains = []
    for d in partition.domains:
        entry = {
            "id": d.id,
            "codes": list(d.codes),
            "kind": "regulatory" if d.is_regulatory else "switching",
            "box": d.describe(model),
        }
        if d.is_regulatory:
            entry["focal"] = [focal_point(model, k, d).tolist() for k in range(model.L)]
            entry["sink"] = d.codes in sinks
        parts_pinned = list(d.pinned)
        if parts_pinned:
            entry["pinned_vars"] = [i + 1 for i in parts_pinned]
        domains.append(entry)
    jsonio.dump_path({
        "model_hash": digest,
        "domain_count": len(partition),
        "domains": domains,
        "sink_ids": [d.id for d in partition.regulatory if d.codes in sinks],
    }, out / "partition.json")

    gammas = {}
    for d in partition.domains:
        cone = homogenization_cone(d, model)
        gammas[d.id] = {
            "gamma": cone.gamma.tolist(),
            "vertex_count": cone.vertex_count,
        }
    jsonio.dump_path(gammas, out / "gammas.json")
    print(f"{len(partition)} domains ({len(sinks)} sink); wrote "
          f"{out / 'partition.json'} and {out / 'gammas.json'}")
    return EXIT_OK


def _dot(stg, model) -> str:
    lines = ["digraph stg {"]
    for codes in stg.nodes:
        tag = "-".join(map(str, codes))
        shape = "box" if all(c % 2 == 0 for c in codes) else "ellipse"
        lines.append(f'  "{tag}" [shape={shape}];')
    for e in sorted(stg.edges, key=lambda e: (e.src, e.dst)):
        src = "-".join(map(str, e.src))
        dst = "-".join(map(str, e.dst))
        style = ' [style=dashed, label="sliding"]' if e.kind == "sliding-entry" else ""
        lines.append(f'  "{src}" -> "{dst}"{style};')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_stg(args) -> int:
    model, digest = _load(args)
    out = _outdir(args)
    partition = build_partition(model)
    for k in range(model.L):
        stg = build_stg(model, k, partition)
        jsonio.dump_path({
            "model_hash": digest,
            "system": k + 1,
            "nodes": ["-".join(map(str, c)) for c in stg.nodes],
            "edges": [
                {
                    "src": "-".join(map(str, e.src)),
                    "dst": "-".join(map(str, e.dst)),
                    "kind": e.kind,
                    "sliding_vars": [v + 1 for v in e.sliding_vars],
                }
                for e in sorted(stg.edges, key=lambda e: (e.src, e.dst, e.kind))
            ],
            "degenerate": list(stg.degenerate),
        }, out / f"stg_k{k + 1}.json")
        (out / f"stg_k{k + 1}.dot").write_text(_dot(stg, model), encoding="utf-8")
    report = check_shared_stg(model, partition)
    jsonio.dump_path({
        "model_hash": digest,
        "passed": report.passed,
        "differing_edges": list(report.differing_edges),
        "degenerate": list(report.degenerate),
        "sink_ids": ["-".join(map(str, c)) for c in report.sink_codes],
    }, out / "stg_check.json")
    if not report.passed:
        print("shared-structure check FAILED:", file=sys.stderr)
        for line in report.differing_edges:
            print(f"  {line}", file=sys.stderr)
        return EXIT_ASSUMPTION
    print(f"{model.L} identical transition graph(s); wrote {out}/stg_k*.json|dot")
    return EXIT_OK


def cmd_certify(args) -> int:
    model, digest = _load(args)
    out = _outdir(args)
    config = certify.CertifyConfig(
        margin=args.margin,
        drop_sinks=not args.no_drop_sinks,
        include_positivity=not args.no_positivity,
        residual_tol=args.residual_tol,
    )
    assemble = (certify.assemble_extremal if args.mode == "extremal"
                else certify.assemble_common)
    problem = assemble(model, config)
    if args.dump_problem:
        jsonio.dump_path(problem.to_json_dict(), out / "problem.json")
    settings = sdp.SolveSettings(margin_accept=config.margin_accept,
                                 eq_tol=config.eq_tol)
    solution = sdp.solve(problem, settings)
    if solution.status == "infeasible":
        print(f"infeasible ({args.mode} mode); solver margin "
              f"{solution.margin}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if solution.status == "inaccurate":
        print("solver did not reach an accurate verdict", file=sys.stderr)
        return EXIT_INACCURATE
    cert = certify.extract_certificate(problem, solution)
    cert_dict = cert.to_dict()
    cert_dict["model_hash"] = digest
    jsonio.dump_path(cert_dict, out / "certificate.json")
    n_dom = len(problem.meta["scope"])
    n_fun = len(cert.functions)
    print(f"feasible: {n_fun} piecewise-quadratic function(s) over {n_dom} "
          f"domain(s); max residual {cert.residual_summary['max_violation']:.2e}; "
          f"wrote {out / 'certificate.json'}")
    return EXIT_OK


def _parse_x0(values, n: int) -> list:
    pts = []
    for raw in values:
        parts = [p for p in raw.replace(",", " ").split() if p]
        if len(parts) != n:
            raise SemanticError("x0", f"expected {n} coordinates, got {raw!r}")
        pts.append(tuple(float(p) for p in parts))
    return pts


def cmd_verify(args) -> int:
    model, digest = _load(args)
    out = _outdir(args)
    cert_path = Path(args.certificate)
    if not cert_path.is_file():
        raise FileNotFoundError(f"certificate file not found: {cert_path}")
    import json as _json

    cert = certify.Certificate.from_dict(_json.loads(cert_path.read_text()))
    if cert.model_hash and cert.model_hash != digest:
        print("certificate was produced for a different model file "
              f"(hash {cert.model_hash[:12]}... vs {digest[:12]}...)", file=sys.stderr)
        return EXIT_INPUT

    x0_list = _parse_x0(args.x0, model.n)
    warnings = []
    if args.samples == 0:
        lam_list = []
        warnings.append("samples=0: vacuous pass")
    else:
        lam_list = [tuple(row) for row in
                    simulate.sample_simplex(model.L, args.samples, args.seed)]
    report = simulate.verify(model, cert, lam_list, x0_list,
                             t_max=args.tmax, tol=args.tol)
    report_dict = report.to_dict()
    report_dict["model_hash"] = digest
    report_dict["seed"] = args.seed
    report_dict["samples"] = args.samples
    report_dict["warnings"] = warnings
    jsonio.dump_path(report_dict, out / "verification.json")

    for idx, entry in enumerate(report.entries):
        lam = LambdaInstance(entry.lam)
        traj = simulate.simulate(model, lam, np.asarray(entry.x0), args.tmax,
                                 sinks=frozenset(tuple(c) for c in cert.excluded) or None)
        V = (certify.combine(cert, lam) if cert.mode == "extremal"
             else cert.functions[0])
        series = simulate.eval_lyapunov(
            V, traj, dt_sample=0.01,
            sink_codes=frozenset(tuple(c) for c in cert.excluded))
        lines = ["t," + ",".join(f"x_{i + 1}" for i in range(model.n)) + ",domain_id,V"]
        for tt, codes, vv in zip(series.times, series.domains, series.values):
            xx = traj.state(tt)
            coords = ",".join(format(v, ".17g") for v in xx)
            lines.append(f"{tt:.17g},{coords},{'-'.join(map(str, codes))},{vv:.17g}")
        (out / f"trajectory_{idx:03d}.csv").write_text("\n".join(lines) + "\n",
                                                       encoding="utf-8")

    if warnings:
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
    if not report.passed:
        bad = sum(1 for e in report.entries if not e.passed)
        print(f"verification FAILED on {bad}/{len(report.entries)} trajectories "
              f"(max normalized increase {report.max_increase:.3e})", file=sys.stderr)
        return EXIT_VERIFY
    print(f"verification passed on {len(report.entries)} trajectories; wrote "
          f"{out / 'verification.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grncert",
        description="Robust piecewise-quadratic Lyapunov certification for "
                    "uncertain piecewise-affine GRN models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="model file (JSON)")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("partition", help="dump domains, focal points, sinks, cones")
    common(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("stg", help="dump per-system transition graphs and the "
                                   "shared-structure check")
    common(p)
    p.set_defaults(func=cmd_stg)

    p = sub.add_parser("certify", help="assemble and solve the feasibility problem")
    common(p)
    p.add_argument("--mode", choices=("common", "extremal"), default="extremal")
    p.add_argument("--margin", type=float, default=1e-3,
                   help="positivity normalization strength")
    p.add_argument("--no-drop-sinks", action="store_true",
                   help="keep sink domains in the problem")
    p.add_argument("--no-positivity", action="store_true",
                   help="skip the positivity normalization (zero becomes feasible)")
    p.add_argument("--residual-tol", type=float, default=1e-7)
    p.add_argument("--dump-problem", action="store_true",
                   help="also write the problem in JSON interchange form")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", help="simulate sampled systems and check "
                                      "certificate monotonicity")
    common(p)
    p.add_argument("--certificate", required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--x0", action="append", required=True,
                   help='start state, e.g. "0.2,0.5" (repeatable)')
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, SchemaError, SemanticError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssumptionViolation as exc:
        print(f"shared-structure check failed: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except GrnCertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INACCURATE


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
