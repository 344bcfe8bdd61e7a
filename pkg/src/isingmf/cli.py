"""Command-line front end.

Exit codes: 0 success, 2 bad arguments, 3 unreadable or invalid model file,
4 model too large for exact enumeration.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time

import numpy as np

from . import bounds, feapprox, ferro, meanfield
from .errors import IsingMFError, ModelFormatError, TooLargeForExact
from .models import (
    FreeEnergyReport,
    IsingModel,
    Mrf,
    ProductDistribution,
    exact_free_energy,
    generate,
    load_model,
    mf_objective,
    model_to_json,
    save_model,
)

RANDOM_KINDS = ("uniform_graph", "uniform_hypergraph", "random_gaussian")
FIXED_POINT_START = 0.5  # uniform start of the parallel iteration, off the symmetric point


class UsageError(Exception):
    """Bad flag combination detected after parsing (exit 2)."""


def _ising(model, what):
    if isinstance(model, IsingModel):
        return model
    if all(len(k) <= 2 for k in model.terms):
        return model.pairwise_part()
    raise UsageError(f"{what} needs a pairwise model; got an order-{model.order} Mrf")


def _need_seed(args, what):
    if args.seed is None:
        raise UsageError(f"{what} is randomised; pass --seed")
    return args.seed


def _write_json(path, payload):
    text = json.dumps(payload, indent=1) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit(args, report: FreeEnergyReport, label):
    _write_json(args.out, report.to_json())
    extra = ""
    if report.budget:
        extra = f"  budget {sum(report.budget.values()):.6g}" + ("  (degraded)" if report.degraded else "")
    print(f"{label}: {report.estimate:.10g}{extra}  [{report.wall_time:.3f}s]")


# ---------------------------------------------------------------------------
# subcommands


def cmd_exact(args):
    model = load_model(args.model)
    start = time.perf_counter()
    value = exact_free_energy(model)
    _emit(args, FreeEnergyReport(value, None, {}, 0, time.perf_counter() - start), "log Z")


def cmd_meanfield(args):
    model = _ising(load_model(args.model), "meanfield")
    start = time.perf_counter()
    method = args.method or "multistart"
    tol = args.tol if args.tol is not None else 1e-10
    seed = 0
    if method == "fixed-point":
        trace = meanfield.mf_iterate(model, np.full(model.n, FIXED_POINT_START), tol=tol)
        dist = trace.final
        value = mf_objective(model, dist)
        if not trace.converged:
            print(f"warning: fixed-point iteration did not converge in {trace.steps} steps", file=sys.stderr)
    elif method == "concave":
        dist, value = meanfield.concave_solve(model, tol=tol)
    elif method == "multistart":
        seed = _need_seed(args, "multistart")
        dist, value = meanfield.multistart_ascent(model, seed=seed, tol=tol)
    else:
        raise UsageError(f"unknown meanfield method {method!r}")
    budget = {"mean_field_error": bounds.mean_field_error_bound(model)}
    report = FreeEnergyReport(value, dist, budget, seed, time.perf_counter() - start)
    _emit(args, report, f"F* ({method})")


def _caps(args):
    caps = {}
    if args.cap_grid is not None:
        caps["max_grid_points"] = args.cap_grid
    if args.cap_width is not None:
        caps["max_width"] = args.cap_width
    return caps


def cmd_approx(args):
    model = load_model(args.model)
    seed = _need_seed(args, "approx")
    eps = args.epsilon if args.epsilon is not None else 0.5
    tol = args.tol if args.tol is not None else feapprox.DEFAULT_TOL
    if isinstance(model, Mrf):
        report = feapprox.approx_free_energy_mrf(model, eps, seed, mode=args.method or "narrow",
                                                 budget_caps=_caps(args), tol=tol)
    else:
        report = feapprox.approx_free_energy(model, eps, seed, budget_caps=_caps(args), tol=tol)
    _emit(args, report, "F_hat")


def cmd_ferro(args):
    model = _ising(load_model(args.model), "ferro")
    seed = _need_seed(args, "ferro")
    start = time.perf_counter()
    eps = args.epsilon if args.epsilon is not None else 0.1
    dist, value = ferro.ferro_optimize(model, eps, args.delta, seed)
    _emit(args, FreeEnergyReport(value, dist, {}, seed, time.perf_counter() - start), "F* (ferro)")


def cmd_bounds(args):
    model = load_model(args.model)
    eps = args.epsilon if args.epsilon is not None else 0.5
    out = {}
    if isinstance(model, Mrf):
        out["mrf_error_bound"] = bounds.mrf_error_bound(model)
        if any(len(k) > 2 for k in model.terms):
            _write_json(args.out, out)
            print(json.dumps(out))
            return
        model = model.pairwise_part()
    out["mean_field_error_bound"] = bounds.mean_field_error_bound(model)
    out["epsilon_tradeoff_bound"] = bounds.epsilon_tradeoff_bound(model, eps)
    if np.any(model.couplings):
        out["threshold_rank"] = bounds.threshold_rank(model, eps / 2.0)
        out["low_threshold_rank_bound"] = bounds.low_threshold_rank_bound(model, eps)
    _write_json(args.out, out)
    print(json.dumps(out))


def cmd_generate(args):
    kind = args.kind.replace("-", "_")
    params = {}
    for name in ("n", "beta", "h", "m", "r", "sigma"):
        val = getattr(args, name)
        if val is not None:
            params[name] = val
    seed = 0
    if kind in RANDOM_KINDS:
        seed = _need_seed(args, f"generate {args.kind}")
    if kind == "block_copies":
        if args.base is None or args.m is None:
            raise UsageError("block-copies needs --base PATH and --m")
        params = {"base": _ising(load_model(args.base), "block-copies"), "m": args.m}
    model = generate(kind, params, seed)
    if args.out:
        save_model(model, args.out)
    else:
        print(json.dumps(model_to_json(model)))
    print(f"generated {kind} with n = {model.n}", file=sys.stderr if not args.out else sys.stdout)


def _parse_sweep(spec):
    try:
        name, rng = spec.split(":")
        lo, hi, step = (float(v) for v in rng.split(","))
    except ValueError as exc:
        raise UsageError(f"--sweep must look like beta:0,2,0.1, got {spec!r}") from exc
    if name not in ("beta", "epsilon") or step <= 0 or hi < lo:
        raise UsageError("--sweep needs name beta or epsilon, step > 0 and stop >= start")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return name, [lo + k * step for k in range(count)]


def cmd_bench(args):
    if not args.sweep:
        raise UsageError("bench needs --sweep")
    if not args.out:
        raise UsageError("bench needs --out")
    model = _ising(load_model(args.model), "bench")
    name, points = _parse_sweep(args.sweep)
    seed = 0 if args.seed is None else args.seed
    rows = []
    for val in points:
        val = round(val, 12)
        if name == "beta":
            m = model.scaled(val)
            F = exact_free_energy(m)
            _, Fstar = meanfield.multistart_ascent(m, seed=seed)
            rows.append([val, F, Fstar, F - Fstar, bounds.mean_field_error_bound(m)])
        else:
            F = exact_free_energy(model)
            rep = feapprox.approx_free_energy(model, val, seed, budget_caps=_caps(args))
            _, Fstar = meanfield.multistart_ascent(model, seed=seed)
            rows.append([val, F, rep.estimate, Fstar, sum(rep.budget.values())])
    header = ["beta", "F", "Fstar", "gap", "bound"] if name == "beta" else ["epsilon", "F", "Fhat", "Fstar", "bound"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    print(f"wrote {len(rows)} rows to {args.out}")


# ---------------------------------------------------------------------------
# parser


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isingmf", description="Mean-field free energies of Ising models and MRFs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, metavar="PATH", help="model JSON file")
        sp.add_argument("--out", metavar="PATH", help="output file")
        sp.add_argument("--epsilon", type=float, metavar="F")
        sp.add_argument("--tol", type=float, metavar="F")
        sp.add_argument("--seed", type=_seed, metavar="U64")
        sp.add_argument("--threads", type=_positive_int, default=1, metavar="N",
                        help="worker cap (computations are single-threaded)")
        sp.add_argument("--method", metavar="NAME")
        sp.add_argument("--sweep", metavar="SPEC")
        sp.add_argument("--cap-grid", type=_positive_int, metavar="N", help="max grid points")
        sp.add_argument("--cap-width", type=int, metavar="N", help="max cuts kept")
        return sp

    common(sub.add_parser("exact", help="exact log Z by enumeration")).set_defaults(func=cmd_exact)
    common(sub.add_parser("meanfield", help="F* via fixed-point, concave or multistart")).set_defaults(
        func=cmd_meanfield)
    common(sub.add_parser("approx", help="regularity-based estimate")).set_defaults(func=cmd_approx)
    sp = common(sub.add_parser("ferro", help="blow-up and sampling for ferromagnets"))
    sp.add_argument("--delta", type=float, default=0.1, metavar="F")
    sp.set_defaults(func=cmd_ferro)
    common(sub.add_parser("bounds", help="structural error bounds")).set_defaults(func=cmd_bounds)
    sp = common(sub.add_parser("generate", help="write a model file"), model=False)
    sp.add_argument("kind", help="curie-weiss, uniform-graph, uniform-hypergraph, block-copies, random-gaussian")
    sp.add_argument("--n", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--m", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--base", metavar="PATH", help="base model for block-copies")
    sp.set_defaults(func=cmd_generate)
    common(sub.add_parser("bench", help="sweep beta or epsilon and write CSV")).set_defaults(func=cmd_bench)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except TooLargeForExact as exc:
        print(f"error: TooLargeForExact: {exc}", file=sys.stderr)
        return 4
    except ModelFormatError as exc:
        print(f"error: ModelFormatError: {exc}", file=sys.stderr)
        return 3
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IsingMFError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
