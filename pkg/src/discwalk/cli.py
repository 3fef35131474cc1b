"""Command-line front end.

Subcommands: ``gen`` (emit an instance file), ``run`` (walk an instance
and emit a report), ``oracle`` (exact minimum), ``baseline`` (random or
iterated rounding), ``verify`` (re-check a report against its instance),
``bench`` (seed sweep with a tail table), ``cert`` (certificate suite).

Exit codes: 0 success, 1 invariant violation, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, certificates, generators, oracle, serialize
from .instances import InputError, MatrixInstance, SetSystemInstance, discrepancy
from .sdp import SolverError
from .walk import TRACE_FULL, TRACE_SCALAR, WalkParams, run

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_INPUT = 2


def _params_from_args(instance, args) -> WalkParams:
    overrides = {}
    if args.gamma is not None:
        overrides["step_size"] = args.gamma
    overrides["bigness"] = args.a
    overrides["trace"] = args.trace
    overrides["tmax_extension"] = args.tmax_extension
    if args.snapshot_every is not None:
        overrides["snapshot_every"] = args.snapshot_every
    if args.mode == "paper":
        return WalkParams.paper_faithful(instance, seed=args.seed, **overrides)
    return WalkParams.practical(instance, seed=args.seed, **overrides)


def cmd_gen(args) -> int:
    meta = {"generator": args.kind, "seed": args.seed}
    if args.kind == "set-system":
        lo, hi = (int(v) for v in args.sizes.split(":"))
        inst = generators.gen_set_system(args.n, args.t, (lo, hi), args.seed)
        meta.update({"t": args.t, "sizes": [lo, hi],
                     "degree_attained": int(inst.degrees.max(initial=0))})
    else:
        inst = generators.gen_komlos_matrix(args.m, args.n, args.density, args.seed)
        meta.update({"m": args.m, "density": args.density})
    serialize.save_instance(inst, args.output, meta)
    print(f"wrote {args.output}")
    return EXIT_OK


def cmd_run(args) -> int:
    inst = serialize.load_instance(args.instance)
    params = _params_from_args(inst, args)
    t0 = time.perf_counter()
    report = run(inst, params)
    elapsed = time.perf_counter() - t0
    timing = {"seconds": elapsed,
              "max_step_seconds": report.diagnostics.max_step_seconds}
    serialize.save_report(report, args.output, timing)
    if args.trace in (TRACE_SCALAR, TRACE_FULL) and report.traces is not None:
        trace = report.traces
        scalar = trace if args.trace == TRACE_SCALAR else None
        if scalar is not None:
            if args.trace_csv:
                serialize.write_scalar_trace_csv(scalar, args.trace_csv)
            if args.jsonl:
                serialize.write_step_jsonl(scalar, args.jsonl)
        elif args.trace_csv or args.jsonl:
            print("full traces are in-memory only; use --trace scalar for CSV/JSONL",
                  file=sys.stderr)
    print(f"max discrepancy {report.max_discrepancy:g} "
          f"in {report.steps_taken} steps ({elapsed:.2f}s) -> {args.output}")
    lam_extra = ""
    if args.lam is not None and isinstance(inst, MatrixInstance):
        cutoff = 4.0 * params.bigness / args.lam
        trunc = inst.rows * (np.abs(inst.rows) <= cutoff)
        vals = trunc @ report.final_coloring.astype(np.float64)
        lam_extra = f"truncated (lambda={args.lam:g}) max {np.abs(vals).max():g}"
        print(lam_extra)
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = serialize.load_instance(args.instance)
    value, witness = oracle.exact_min_discrepancy(inst)
    print(serialize.canonical_json({"value": value, "witness": witness}), end="")
    return EXIT_OK


def cmd_baseline(args) -> int:
    inst = serialize.load_instance(args.instance)
    if args.algo == "random":
        rep = oracle.random_coloring(inst, args.seed, args.trials)
        value, coloring = rep.value, rep.coloring
    else:
        if not isinstance(inst, SetSystemInstance):
            raise InputError("beck-fiala baseline needs a set system")
        coloring = oracle.beck_fiala_rounding(inst)
        _, value = discrepancy(inst, coloring.astype(np.float64))
    print(serialize.canonical_json(
        {"algorithm": args.algo, "value": value,
         "coloring": coloring}), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = serialize.load_instance(args.instance)
    doc = serialize.load_report(args.report)
    coloring = np.asarray(doc.get("final_coloring"), dtype=np.float64)
    problems = []
    if coloring.shape != (inst.n,):
        problems.append("coloring length does not match the instance")
    elif not np.isin(coloring, (-1.0, 1.0)).all():
        problems.append("coloring entries must be ±1")
    else:
        per_row, max_abs = discrepancy(inst, coloring)
        stored = np.asarray(doc.get("per_row_discrepancy"), dtype=np.float64)
        if stored.shape != per_row.shape:
            problems.append("per-row discrepancy length mismatch")
        elif float(np.abs(stored - per_row).max(initial=0.0)) > 1e-9:
            problems.append("per-row discrepancy does not match the coloring")
        if abs(float(doc.get("max_discrepancy", np.nan)) - max_abs) > 1e-9:
            problems.append("max discrepancy does not match the rows")
    if problems:
        for p in problems:
            print(f"verify FAILED: {p}", file=sys.stderr)
        return EXIT_INVARIANT
    print("verify OK")
    return EXIT_OK


def cmd_bench(args) -> int:
    inst = serialize.load_instance(args.instance)
    reports = []
    for s in range(args.seed, args.seed + args.seeds):
        ns = argparse.Namespace(**vars(args), seed_override=None)
        ns.seed = s
        params = _params_from_args(inst, ns)
        reports.append(run(inst, params))
    grid = [float(v) for v in args.lambda_grid.split(",")]
    table = analysis.tail_estimate(reports, grid)
    serialize.write_tail_csv(table, args.output)
    summary = {
        "seeds": args.seeds,
        "median_max_discrepancy": table.median_max_discrepancy,
        "p90_max_discrepancy": table.p90_max_discrepancy,
        "max_max_discrepancy": max(r.max_discrepancy for r in reports),
    }
    print(serialize.canonical_json(summary), end="")
    if args.summary:
        Path(args.summary).write_text(serialize.canonical_json(summary))
    return EXIT_OK


def cmd_cert(args) -> int:
    rng = np.random.Generator(np.random.Philox(key=int(args.seed)))
    failures = []
    for i in range(args.count):
        n = int(rng.integers(4, args.n + 1))
        h = int(rng.integers(2, 2 * n))
        m = rng.standard_normal((h, n))
        norms = np.sqrt((m * m).sum(axis=0))
        m = m / np.maximum(norms, 1.0)[None, :]
        sub = certificates.column_subspace(m)
        if sub.dim < -(-n // 2):
            failures.append(f"column_subspace[{i}]: dim {sub.dim} < {-(-n // 2)}")
        for _ in range(5):
            y = sub.sample(rng)
            if float(np.sum((m @ y) ** 2)) > 2.0 * float(y @ y) + 1e-8:
                failures.append(f"column_subspace[{i}]: norm bound violated")
                break
    for i in range(args.count):
        n = int(rng.integers(4, args.n + 1))
        h = int(rng.integers(1, 3 * n))
        vecs = rng.uniform(-1.0, 1.0, size=(h, n))
        beta = rng.uniform(0.0, 2.0, size=h)
        try:
            sub = certificates.nsd_subspace(vecs, beta, n)
        except RuntimeError as exc:
            failures.append(f"nsd_subspace[{i}]: {exc}")
            continue
        if sub.dim < -(-n // 2):
            failures.append(f"nsd_subspace[{i}]: dim {sub.dim} < {-(-n // 2)}")
    out = {"count": 2 * args.count, "failures": failures}
    print(serialize.canonical_json(out), end="")
    return EXIT_INVARIANT if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="discwalk", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def add_walk_flags(p):
        p.add_argument("--mode", choices=["paper", "practical"], default="practical")
        p.add_argument("--gamma", type=float, default=None,
                       help="step size override (default: mode-specific)")
        p.add_argument("--a", type=float, default=6.0, help="bigness constant")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trace", choices=["none", "scalar", "full"], default="none")
        p.add_argument("--lambda", dest="lam", type=float, default=None,
                       help="matrix report cutoff scale")
        p.add_argument("--tmax-extension", type=float, default=2.0)
        p.add_argument("--snapshot-every", type=int, default=None)

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--kind", choices=["set-system", "matrix"], required=True)
    g.add_argument("-n", type=int, required=True)
    g.add_argument("-t", type=int, default=4)
    g.add_argument("-m", type=int, default=16)
    g.add_argument("--sizes", default="2:8", help="set size range lo:hi")
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run the walk on an instance")
    r.add_argument("instance")
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--trace-csv", default=None)
    r.add_argument("--jsonl", default=None)
    add_walk_flags(r)
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="exact minimum discrepancy (n <= 24)")
    o.add_argument("instance")
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("baseline", help="random or iterated-rounding baseline")
    b.add_argument("instance")
    b.add_argument("--algo", choices=["random", "beck-fiala"], default="random")
    b.add_argument("--trials", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_baseline)

    v = sub.add_parser("verify", help="re-check a report against its instance")
    v.add_argument("instance")
    v.add_argument("report")
    v.set_defaults(func=cmd_verify)

    be = sub.add_parser("bench", help="seed sweep with tail table")
    be.add_argument("instance")
    be.add_argument("--seeds", type=int, default=10)
    be.add_argument("--lambda-grid", default="0,1,2,3,4,6,8")
    be.add_argument("-o", "--output", required=True)
    be.add_argument("--summary", default=None)
    add_walk_flags(be)
    be.set_defaults(func=cmd_bench)

    c = sub.add_parser("cert", help="run the subspace certificate suite")
    c.add_argument("--count", type=int, default=50)
    c.add_argument("-n", type=int, default=32)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_cert)

    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
