"""Benchmark command line: `qsprox <experiment> [options]`.

Experiments reproduce the timing and convergence studies at a desk scale
by default; --full-scale switches to the larger problem sizes.  Every run
is seeded, and repeated runs with the same seed produce identical CSV
rows apart from the seconds column.

    prox-timing   scaled prox of the l1 norm under diag+low-rank metrics
    lsq-l1        banded least squares + l1, planted minimizer
    lsq-group     banded least squares + sum of block norms
    lsq-tv        banded least squares + path total variation
    conditioning  l1 regression across curvature ratios, with an
                  observed-convergence summary CSV
    logreg        l1-regularized logistic regression
    describe      parse a JSON qs-spec, print its canonical form and shape
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from qsprox import linops, pqn, problems, proxeval, qscalc

PROX_HEADER = ["n", "k", "rep", "seconds", "inner_iters"]
SOLVER_HEADER = ["iter", "seconds", "objective", "error_or_residual",
                 "inner_iters", "shift"]
OC_HEADER = ["ratio", "memory", "oc", "iterations", "final_error"]


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def _mem_path(out, m):
    stem, dot, ext = out.rpartition(".")
    if not dot:
        return f"{out}_mem{m}"
    return f"{stem}_mem{m}.{ext}"


def validate_csv(path, header):
    with open(path, newline="") as fh:
        first = next(csv.reader(fh))
    if first != header:
        raise ValueError(f"{path}: expected header {header}, found {first}")


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def run_prox_timing(args):
    rows = []
    for n in args.sizes:
        g = qscalc.build_l1(n)
        for k in args.ranks:
            for rep in range(args.reps):
                rng = np.random.default_rng(args.seed + 1000 * rep)
                U = rng.standard_normal((n, k))
                H = linops.Metric.from_direct_parts(
                    np.ones(n), U, np.eye(k))
                z = rng.standard_normal(n)
                t0 = time.perf_counter()
                res = proxeval.prox(g, H, z, tol=args.tol)
                dt = time.perf_counter() - t0
                if res.status != "optimal":
                    print(f"warning: n={n} k={k} rep={rep} "
                          f"ended with status {res.status}", file=sys.stderr)
                rows.append([n, k, rep, repr(dt), res.iterations])
    _write_csv(args.out, PROX_HEADER, rows)
    return 0


def _solver_rows(result, xstar):
    rows = []
    for e in result.history:
        err = (float(np.max(np.abs(e.x - xstar)))
               if xstar is not None else e.residual)
        rows.append([e.iteration, repr(e.seconds), repr(e.objective),
                     repr(err), e.inner_iterations, repr(e.shift)])
    return rows


def _run_solver_family(args, make_instance, residual_only=False):
    for m in args.mem:
        problem, g, xstar = make_instance()
        cfg = pqn.PQNConfig(mem=m, kappa=args.kappa, tol=args.tol,
                            max_iter=args.max_iter)
        result = pqn.solve(problem, g, np.zeros(problem.n), cfg)
        rows = _solver_rows(result, None if residual_only else xstar)
        path = _mem_path(args.out, m)
        _write_csv(path, SOLVER_HEADER, rows)
        print(f"mem={m}: status={result.status} iterations={result.iterations} "
              f"residual={result.residual:.3e}")
    return 0


def run_lsq(args, flavor):
    def make():
        return problems.synthetic_instance(flavor, args.n, args.p, args.seed,
                                           blocks=args.blocks)
    return _run_solver_family(args, make)


def run_conditioning(args):
    oc_rows = []
    for ratio in args.ratios:
        for m in args.mem:
            problem, g, xstar = problems.conditioned_instance(
                args.n, ratio, args.seed)
            cfg = pqn.PQNConfig(mem=m, kappa=args.kappa, tol=args.tol,
                                max_iter=args.max_iter)
            result = pqn.solve(problem, g, np.zeros(problem.n), cfg)
            errors = [max(float(np.max(np.abs(e.x - xstar))), 0.0)
                      for e in result.history]
            oc = problems.observed_convergence(errors)
            rows = _solver_rows(result, xstar)
            path = _mem_path(args.out, m).replace(
                ".csv", f"_r{ratio:g}.csv") if args.out.endswith(".csv") \
                else f"{_mem_path(args.out, m)}_r{ratio:g}"
            _write_csv(path, SOLVER_HEADER, rows)
            oc_rows.append([repr(float(ratio)), m, repr(oc),
                            result.iterations, repr(errors[-1])])
            print(f"ratio={ratio:g} mem={m}: oc={oc:.3f} "
                  f"iterations={result.iterations}")
    oc_path = args.out.replace(".csv", ".oc.csv") \
        if args.out.endswith(".csv") else args.out + ".oc.csv"
    _write_csv(oc_path, OC_HEADER, oc_rows)
    return 0


def run_logreg(args):
    if args.data:
        Z = problems.load_dense_matrix(args.data)
    else:
        Z = problems.logistic_synthetic(args.N, args.n, args.seed)
    problem = problems.LogisticLoss(Z)
    g = qscalc.scale(qscalc.build_l1(problem.n), args.lam)

    def make():
        return problem, g, None
    return _run_solver_family(args, make, residual_only=True)


def run_describe(args):
    text = args.spec
    if args.spec_file:
        with open(args.spec_file) as fh:
            text = fh.read()
    if text is None:
        print("describe needs --spec or --spec-file", file=sys.stderr)
        return 2
    g = qscalc.parse_qs_spec(text)
    print(qscalc.format_qs_spec(g))
    blocks = ", ".join(f"{b.kind}({b.dim})" for b in g.K.blocks)
    print(f"n={g.n} dual_dim={g.dual_dim} rows={g.A.shape[0]} "
          f"strategy={g.strategy}")
    print(f"cone: {blocks}")
    if args.at:
        x = np.array(_float_list(args.at))
        if x.size != g.n:
            print(f"--at needs {g.n} components", file=sys.stderr)
            return 2
        print(f"value: {qscalc.evaluate(g, x)!r}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="qsprox",
        description="benchmarks for scaled proxes of quadratic-support functions")
    sub = parser.add_subparsers(dest="experiment", required=True)

    pt = sub.add_parser("prox-timing", help="time scaled l1 proxes")
    pt.add_argument("--sizes", type=_int_list, default=None)
    pt.add_argument("--ranks", type=_int_list, default=[1, 10])
    pt.add_argument("--reps", type=int, default=5)
    pt.add_argument("--tol", type=float, default=1e-7)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("--out", default="prox_timing.csv")
    pt.add_argument("--full-scale", action="store_true")

    def solver_args(sp, tol=1e-6):
        sp.add_argument("--n", type=int, default=None)
        sp.add_argument("--p", type=int, default=None)
        sp.add_argument("--mem", type=_int_list, default=[0, 10])
        sp.add_argument("--kappa", type=float, default=0.1)
        sp.add_argument("--tol", type=float, default=tol)
        sp.add_argument("--max-iter", type=int, default=500)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--blocks", type=int, default=5)
        sp.add_argument("--full-scale", action="store_true")

    for name in ("lsq-l1", "lsq-group", "lsq-tv"):
        sp = sub.add_parser(name, help=f"banded least squares ({name[4:]})")
        solver_args(sp)
        sp.add_argument("--out", default=f"{name.replace('-', '_')}.csv")

    co = sub.add_parser("conditioning", help="curvature-ratio sweep")
    solver_args(co)
    co.add_argument("--ratios", type=_float_list, default=[1.0, 10.0, 100.0])
    co.add_argument("--out", default="conditioning.csv")

    lr = sub.add_parser("logreg", help="l1-regularized logistic regression")
    solver_args(lr)
    lr.add_argument("--N", type=int, default=500)
    lr.add_argument("--lam", type=float, default=0.01)
    lr.add_argument("--data", default=None,
                    help="text matrix of rows z_i = -y_i a_i")
    lr.add_argument("--out", default="logreg.csv")

    de = sub.add_parser("describe", help="inspect a JSON qs-spec")
    de.add_argument("--spec", default=None)
    de.add_argument("--spec-file", default=None)
    de.add_argument("--at", default=None,
                    help="comma-separated point to evaluate at")

    return parser


def _apply_scale_defaults(args):
    full = getattr(args, "full_scale", False)
    if args.experiment == "prox-timing" and args.sizes is None:
        args.sizes = ([2 ** e for e in range(10, 17)] if full
                      else [1024, 8192])
    if getattr(args, "n", None) is None and hasattr(args, "n"):
        if args.experiment == "logreg":
            args.n = 200
        elif args.experiment == "conditioning":
            args.n = 1000 if full else 500
        else:
            args.n = 2000 if full else 500
    if getattr(args, "p", None) is None and hasattr(args, "p"):
        args.p = args.n // 2


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_scale_defaults(args)
    if args.experiment == "prox-timing":
        return run_prox_timing(args)
    if args.experiment == "lsq-l1":
        return run_lsq(args, "l1")
    if args.experiment == "lsq-group":
        return run_lsq(args, "group")
    if args.experiment == "lsq-tv":
        return run_lsq(args, "tv")
    if args.experiment == "conditioning":
        return run_conditioning(args)
    if args.experiment == "logreg":
        return run_logreg(args)
    if args.experiment == "describe":
        return run_describe(args)
    raise AssertionError(f"unhandled experiment {args.experiment!r}")


if __name__ == "__main__":
    raise SystemExit(main())
