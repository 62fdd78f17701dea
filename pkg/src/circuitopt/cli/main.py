"""``circuitopt`` command line.

Exit codes: 0 success, 1 analytic failure (not admissible, no certificate,
target missed), 2 malformed input or I/O trouble.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from ..discretize import CircuitAlgorithm, DiscretizationParams, run
from ..dynamics import assemble, energy, find_equilibrium, integrate, power_residual
from ..errors import AnalyticFailure, CircuitOptError, InputError, NotAdmissible, ParseError
from ..netlist import check_admissible, parse_netlist, parse_nets
from ..oracles import FunctionClass, SeparableSum
from ..pep import SearchBounds, build_pep, extract_certificate, search_params, solve_sdp, verify_certificate
from ..zoo.circuits import AlgorithmId
from .bench import Method, bench, grid_search, run_method
from .problems import parse_problem, terminal_oracles

log = logging.getLogger("circuitopt")


def _emit(args, payload, text):
    if args.json:
        print(json.dumps(payload, default=_default))
    else:
        print(text)


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and not np.isfinite(o):
        return None
    return str(o)


def _load(netlist_path, nets_path=None):
    netlist, nets = parse_netlist(netlist_path)
    if nets_path is not None:
        nets = parse_nets(nets_path, m=netlist.m)
    if nets is None:
        raise ParseError("no nets given and the netlist carries no 'net' records", path=str(netlist_path))
    return netlist, nets


def _class(text):
    try:
        mu, M = (float(t) for t in text.split(","))
        return FunctionClass(mu, M)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--class expects mu,M ({exc})") from None


def _params(text):
    try:
        return DiscretizationParams.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# ----------------------------------------------------------------------------

def cmd_check(args):
    netlist, nets = _load(args.netlist, args.nets)
    res = check_admissible(netlist, nets)
    payload = {"result": str(res), "distance": res.distance}
    if res.witness is not None:
        payload["witness"] = res.witness
    _emit(args, payload, str(res) if res else f"NotAdmissible (subspace distance {res.distance:.3g})")
    return 0 if res else 1


def cmd_certify(args):
    netlist, nets = _load(args.netlist, args.nets)
    classes = args.fclass or [FunctionClass(0.0, np.inf)]
    if args.search:
        res = search_params(netlist, classes, SearchBounds(h=(1e-3, args.h_max)), nets,
                            samples=args.samples, threads=args.threads)
        p = res.params
        payload = {"result": "PASS", "params": dict(zip(("alpha", "beta", "h", "eta", "rho", "gamma"), p.as_tuple())),
                   "value": res.value, "h_upper": res.h_upper, "warnings": res.warnings}
        if args.json:
            payload["certificate"] = json.loads(res.certificate.to_json())
        text = "PASS  " + " ".join(f"{k}={v:.6g}" for k, v in payload["params"].items())
        if res.h_upper is not None:
            text += f"\nrelaxation bound on h: {res.h_upper:.6g}"
        _emit(args, payload, text)
        return 0
    if args.params is None:
        raise InputError("certify needs --params or --search")
    gp = build_pep(netlist, args.params, classes, nets)
    sol = solve_sdp(gp)
    ok = sol.status == "Optimal" and sol.feasible
    cert = extract_certificate(gp, sol) if sol.status == "Optimal" else None
    ok = ok and cert is not None and verify_certificate(gp, cert)
    payload = {"result": "PASS" if ok else "FAIL", "status": sol.status, "value": sol.value}
    if cert is not None and args.json:
        payload["certificate"] = json.loads(cert.to_json())
    _emit(args, payload, f"{payload['result']}  (SDP {sol.status}, worst-case value {sol.value:.3e})")
    return 0 if ok else 1


def _zoo_id(text):
    try:
        return AlgorithmId.parse(text.partition(":")[0])
    except (ValueError, KeyError):
        return None


def cmd_run(args):
    inst = parse_problem(args.problem)
    if _zoo_id(args.circuit) is not None and not os.path.isfile(args.circuit):
        method = Method.parse(args.circuit)
        if args.params is not None:
            over = dict(zip(("alpha", "beta", "h", "eta", "rho", "gamma"), args.params.as_tuple()))
            method = Method(method.id, {**method.values, **over})
        if inst.fstar is None:
            raise InputError("the problem has no known optimal value; add an 'fstar' line")
        curve, hit, p = run_method(method, inst, args.target, args.K)
        rows = [(int(k), rel, en) for k, rel, en in curve]
    else:
        netlist, _ = parse_netlist(args.circuit)
        parts = terminal_oracles(inst)
        if len(parts) != netlist.m:
            raise InputError(f"netlist has {netlist.m} terminals, problem has {len(parts)} functions")
        oracle = parts[0] if len(parts) == 1 else SeparableSum(parts, dim=inst.n)
        p = args.params or DiscretizationParams()
        alg = CircuitAlgorithm(netlist, p)
        s0 = alg.dynamics(oracle, inst.n).initial_state()
        objective = (lambda x: inst.objective(np.asarray(x).T)) if inst.fstar is not None else None
        res = run(alg, oracle, s0, args.K, objective=objective, fstar=inst.fstar,
                  target=args.target if objective else None)
        rel = res.rel_error if res.rel_error is not None else [np.nan] * len(res.states)
        rows = [(k, float(r), np.nan) for k, r in enumerate(rel)]
        hit = next((k for k, r in enumerate(rel) if r <= args.target), None) if objective else None
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("k,rel_error,energy\n")
            fh.writelines(f"{k},{r:.17g},{e:.17g}\n" for k, r, e in rows)
    payload = {"iterations": hit, "target": args.target, "final_rel_error": rows[-1][1],
               "params": dict(zip(("alpha", "beta", "h", "eta", "rho", "gamma"), p.as_tuple()))}
    if hit is None:
        _emit(args, payload, f"target {args.target:g} not reached in {len(rows) - 1} iterations "
                             f"(relative error {rows[-1][1]:.3e})")
        return 1 if inst.fstar is not None else 0
    _emit(args, payload, f"reached {args.target:g} after {hit} iterations")
    return 0


def cmd_bench(args):
    inst = parse_problem(args.problem)
    if inst.fstar is None:
        raise InputError("the problem has no known optimal value; add an 'fstar' line")
    if args.grid:
        head, _, vals = args.grid.partition("=")
        ident, _, key = head.partition(":")
        values = [float(v) for v in vals.split(",")]
        counts = grid_search(inst, ident, key, values, target=args.target, K_max=args.K, n_threads=args.threads)
        _emit(args, {"grid": counts}, "\n".join(f"{key}={v:g}: {c}" for v, c in counts.items()))
        return 0
    methods = [Method.parse(m) for m in args.methods] if args.methods else None
    res = bench(inst, methods, args.target, args.K, args.threads)
    if args.csv:
        res.write_csv(args.csv)
    lines = [f"{label:40s} {'not reached' if c is None else c:>10}  ({res.wall[label]:.2f} s)"
             for label, c in res.counts.items()]
    _emit(args, res.to_dict(), "\n".join(lines))
    return 1 if res.not_reached else 0


def cmd_simulate(args):
    netlist, nets = parse_netlist(args.netlist)
    if args.nets:
        nets = parse_nets(args.nets, m=netlist.m)
    inst = parse_problem(args.problem)
    parts = terminal_oracles(inst)
    if len(parts) != netlist.m:
        raise InputError(f"netlist has {netlist.m} terminals, problem has {len(parts)} functions")
    oracle = parts[0] if len(parts) == 1 else SeparableSum(parts, dim=inst.n)
    dyn = assemble(netlist, oracle, inst.n)
    eq = find_equilibrium(netlist, nets, oracle, inst.n)
    states = integrate(dyn, dyn.initial_state(), args.dt, args.T)
    from ..dynamics import EnergySpec

    spec = EnergySpec.physical(netlist)
    rows = [(s.t, energy(s, eq, spec, dyn), power_residual(dyn, s, eq)) for s in states[::args.every]]
    out = open(args.csv, "w", encoding="utf-8") if args.csv else sys.stdout
    try:
        if args.json and not args.csv:
            print(json.dumps({"t": [r[0] for r in rows], "energy": [r[1] for r in rows],
                              "power_residual": [r[2] for r in rows]}))
        else:
            out.write("t,energy,power_residual\n")
            out.writelines(f"{t:.17g},{e:.17g},{r:.17g}\n" for t, e, r in rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# ----------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="circuitopt", description="Circuit-based design and certification of optimization methods.")
    ap.add_argument("--json", action="store_true", help="machine-readable output")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("check-admissible", help="compare a circuit's equilibria with the consensus nets")
    c.add_argument("netlist")
    c.add_argument("nets", nargs="?")
    c.set_defaults(fn=cmd_check)

    c = sub.add_parser("certify", help="SDP certificate of sufficient dissipativity")
    c.add_argument("netlist")
    c.add_argument("nets", nargs="?")
    c.add_argument("--class", dest="fclass", type=_class, action="append",
                   help="mu,M per terminal (repeat; one value applies to all)")
    g = c.add_mutually_exclusive_group()
    g.add_argument("--params", type=_params, help="alpha,beta,h,eta,rho,gamma")
    g.add_argument("--search", action="store_true", help="search for the largest certified step")
    c.add_argument("--h-max", type=float, default=20.0)
    c.add_argument("--samples", type=int, default=1000, help="sampled instances checked after a search")
    c.add_argument("--threads", type=int)
    c.set_defaults(fn=cmd_certify)

    c = sub.add_parser("run", help="iterate a zoo method or a netlist on a problem")
    c.add_argument("circuit", help="netlist file or zoo id such as DADMM:R=0.6")
    c.add_argument("problem", help="problem file or generator[:seed]")
    c.add_argument("--params", type=_params)
    c.add_argument("-K", type=int, default=10_000, help="iteration cap")
    c.add_argument("--target", type=float, default=1e-10)
    c.add_argument("--csv", help="write the error curve here")
    c.set_defaults(fn=cmd_run)

    c = sub.add_parser("bench", help="iterations to a target for several methods")
    c.add_argument("problem")
    c.add_argument("--methods", nargs="+", help="Id[:k=v,...] entries; defaults depend on the problem")
    c.add_argument("--target", type=float, default=1e-10)
    c.add_argument("-K", type=int, default=100_000)
    c.add_argument("--csv", help="directory for per-method curves")
    c.add_argument("--grid", help="Id:key=v1,v2,... one-parameter sweep")
    c.add_argument("--threads", type=int)
    c.set_defaults(fn=cmd_bench)

    c = sub.add_parser("simulate", help="integrate the continuous-time circuit")
    c.add_argument("netlist")
    c.add_argument("problem")
    c.add_argument("--nets")
    c.add_argument("--dt", type=float, default=1e-3)
    c.add_argument("--T", type=float, default=1.0)
    c.add_argument("--every", type=int, default=1, help="keep every k-th sample")
    c.add_argument("--csv")
    c.set_defaults(fn=cmd_simulate)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.fn(args)
    except AnalyticFailure as exc:
        if isinstance(exc, NotAdmissible):
            _emit(args, {"result": "NotAdmissible", "error": str(exc)}, f"NotAdmissible: {exc}")
        else:
            _emit(args, {"result": "FAIL", "error": type(exc).__name__, "message": str(exc)},
                  f"FAIL: {type(exc).__name__}: {exc}")
        return 1
    except (InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CircuitOptError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
