"""Command line front end: load inputs, run the pipelines, emit reports.

Machine-readable reports are JSON with sorted keys and every float
printed to 12 significant digits, so identical runs produce identical
bytes. A solve report echoes its inputs and is self-contained: `verify`
re-checks all invariants from the report alone. Human-readable summaries
go to stderr; the report goes to --out when given, stdout otherwise.

Residual names in reports follow the report format: np1 is the residual
of full acceptance on the strictly-above set, np2 full rejection on the
strictly-below set, eq9 the agreement of the terminal shortfall risk
with the static value. `verify` failures cite these names.

Exit codes: 0 success, 1 verification failure, 2 invalid input,
3 arbitrage, 4 solver failure, 5 certification gap.
"""

import argparse
import json
import sys

import numpy as np

from .errors import (ArbitrageError, CertificationError, MarketError,
                     SolverError)
from .hedge import find_arbitrage, solve_dynamic, superhedge, terminal_values
from .lp import DEFAULT_TOLERANCES, SolverTolerances
from .market import TerminalMeasure, load_claim, load_market
from .martingale import (MAX_LEAVES, check_no_arbitrage, enumerate_vertices,
                         superhedging_price)
from .nptest import construct_test, strong_duality_check, verify_np
from .oracle import grid_oracle_static, weak_duality_sweep
from .risk import Entropic, evaluate, load_risk_config, penalty
from .saddle import certify


def _fmt(x):
    return float(f"{float(x):.12g}")


def _jsonable(obj):
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _emit(report, out):
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _say(msg):
    print(msg, file=sys.stderr)


def _read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _tolerances(args):
    base = DEFAULT_TOLERANCES
    return SolverTolerances(
        feasibility=args.tol_feasibility if args.tol_feasibility is not None
        else base.feasibility,
        duality_gap=args.tol_duality_gap if args.tol_duality_gap is not None
        else base.duality_gap,
        complementary=args.tol_complementary
        if args.tol_complementary is not None else base.complementary,
        pivot=args.tol_pivot if args.tol_pivot is not None else base.pivot,
        kelley=args.tol_kelley if args.tol_kelley is not None
        else base.kelley)


def _load_inputs(args, need_risk=False):
    tree, p = load_market(_read(args.market))
    claim = load_claim(_read(args.claim), tree)
    rm = None
    if need_risk:
        rm = load_risk_config(_read(args.risk), p)
    return tree, p, claim, rm


def _check_budget(budget):
    if not np.isfinite(budget) or budget <= 0.0:
        raise MarketError(f"budget must be a positive real, got {budget}")


def _strategy_rows(strategy, tree):
    rows = []
    for pos in range(tree.node_ids.shape[0]):
        rows.append({"node": int(tree.node_ids[pos]),
                     "value": float(strategy.values[pos]),
                     "holdings": [float(v) for v in strategy.holdings[pos]]})
    return rows


def _polytope_section(polytope, p, no_arb):
    dens = polytope.vertices / p.probabilities[None, :] \
        if polytope.n_vertices else np.zeros((0, p.probabilities.shape[0]))
    return {"vertices": polytope.vertices, "densities": dens,
            "no_arbitrage": bool(no_arb)}


def _arbitrage_report(args, tree, echo, out):
    witness = find_arbitrage(tree)
    report = {"command": args.command, "inputs": echo,
              "no_arbitrage": False, "witness": None}
    if witness is not None:
        report["witness"] = {
            "strategy": _strategy_rows(witness, tree),
            "terminal_gains": terminal_values(witness, tree)}
    _emit(report, out)
    _say("arbitrage detected: zero-capital strategy with nonnegative "
         "terminal value, positive somewhere")
    return 3


def cmd_price(args):
    tree, p, claim, _ = _load_inputs(args)
    echo = {"market": json.loads(_read(args.market)),
            "claim": json.loads(_read(args.claim))}
    tols = _tolerances(args)
    ok, _ = check_no_arbitrage(tree, tols)
    if not ok:
        return _arbitrage_report(args, tree, echo, args.out)
    poly = enumerate_vertices(tree, max_leaves=args.max_leaves, tols=tols)
    u0 = superhedging_price(poly, claim)
    strat = superhedge(tree, claim.payoff, tols, polytope=poly)
    best = int(np.argmax(poly.vertices @ claim.payoff))
    report = {"command": "price", "inputs": echo, "no_arbitrage": True,
              "superhedging_price": u0,
              "attaining_vertex": poly.vertices[best],
              "strategy": _strategy_rows(strat, tree)}
    _emit(report, args.out)
    _say(f"superhedging price: {u0:.12g}")
    _say(f"attaining vertex: {[_fmt(v) for v in poly.vertices[best]]}")
    for row in report["strategy"]:
        _say(f"  node {row['node']}: value {row['value']:.12g}, "
             f"holdings {[_fmt(v) for v in row['holdings']]}")
    return 0


def cmd_polytope(args):
    tree, p = load_market(_read(args.market))
    tols = _tolerances(args)
    ok, _ = check_no_arbitrage(tree, tols)
    poly = enumerate_vertices(tree, max_leaves=args.max_leaves, tols=tols)
    report = _polytope_section(poly, p, ok)
    _emit(report, args.out)
    _say(f"{poly.n_vertices} vertices; "
         f"{'no arbitrage' if ok else 'arbitrage'}")
    return 0


def cmd_solve(args):
    tree, p, claim, rm = _load_inputs(args, need_risk=True)
    budget = float(args.budget)
    _check_budget(budget)
    echo = {"market": json.loads(_read(args.market)),
            "claim": json.loads(_read(args.claim)),
            "risk": json.loads(_read(args.risk)), "budget": budget}
    tols = _tolerances(args)
    ok, _ = check_no_arbitrage(tree, tols)
    if not ok:
        return _arbitrage_report(args, tree, echo, args.out)
    poly = enumerate_vertices(tree, max_leaves=args.max_leaves, tols=tols)
    gap_tol = args.tol_gap if args.tol_gap is not None \
        else (1e-5 if isinstance(rm, Entropic) else 1e-6)

    if args.skip_hedge:
        certified = certify(tree, p, poly, claim, budget, rm, tols,
                            eq_tol=args.tol_eq, gap_tol=args.tol_gap)
        strategy_rows = []
        dynamic_risk = None
        eq9 = None
    else:
        result = solve_dynamic(tree, p, claim, budget, rm, tols,
                               polytope=poly, eq_tol=args.tol_eq,
                               gap_tol=args.tol_gap)
        certified = result
        strategy_rows = _strategy_rows(result.strategy, tree)
        dynamic_risk = result.dynamic_risk
        eq9 = abs(result.dynamic_risk - result.static.value)

    cert = certified.certificate
    np_test = certified.np_test
    static = certified.static
    diag = cert.diagnostics
    flags = []
    if args.skip_hedge:
        flags.append("skip-hedge")
    if cert.degenerate:
        flags.append("degenerate-certificate")
    if isinstance(rm, Entropic):
        flags.append("cutting-plane")

    report = {
        "command": "solve",
        "inputs": echo,
        "tolerances": {"feasibility": tols.feasibility,
                       "duality_gap": tols.duality_gap,
                       "complementary": tols.complementary,
                       "pivot": tols.pivot, "kelley": tols.kelley,
                       "certification_gap": gap_tol,
                       "equality_set": diag["eq_tol"]},
        "polytope": _polytope_section(poly, p, True),
        "static": {"phi": static.test.values, "value": static.value},
        "certificate": {
            "q_tilde": cert.q_tilde.probabilities,
            "y": cert.y_tilde,
            "p": cert.primal_value,
            "d": cert.dual_value,
            "gap": diag["gap"],
            "saddle_value": cert.saddle_value,
            "penalty": cert.penalty_at_q,
            "degenerate": bool(cert.degenerate),
            "phi_tilde": np_test.test.values,
            "delta": np_test.delta,
            "equality_set": np_test.equality_set,
            "diagnostics": diag,
            "residuals": {"np1": diag["structure_up"],
                          "np2": diag["structure_down"],
                          "budget": diag["budget_residual"],
                          "eq9": eq9},
        },
        "strategy": strategy_rows,
        "flags": sorted(flags),
        "dynamic_risk": dynamic_risk,
    }
    _emit(report, args.out)
    _say(f"static value p: {cert.primal_value:.12g}")
    _say(f"dual value d:   {cert.dual_value:.12g}  (gap {diag['gap']:.3g})")
    if cert.degenerate:
        _say("degenerate certificate: the budget superhedges the full claim")
    if dynamic_risk is not None:
        _say(f"dynamic risk:   {dynamic_risk:.12g}")
    return 0


def _load_measure(text, tree):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MarketError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "probabilities" not in doc:
        raise MarketError(
            "measure document must be an object with a 'probabilities' "
            "field keyed by leaf id")
    given = {}
    for key, val in doc["probabilities"].items():
        given[int(key)] = float(val)
    missing = [int(i) for i in tree.leaf_ids if int(i) not in given]
    if missing:
        raise MarketError(f"missing probability for leaf {missing[0]}")
    q = np.array([given[int(i)] for i in tree.leaf_ids])
    return TerminalMeasure(probabilities=q)


class _Checker:
    def __init__(self):
        self.failures = []

    def check(self, name, ok, detail=""):
        if ok:
            print(f"PASS {name}")
        else:
            print(f"FAIL {name}: {detail}")
            self.failures.append(name)
        return bool(ok)


def cmd_verify(args):
    try:
        report = json.loads(_read(args.report))
    except json.JSONDecodeError as exc:
        raise MarketError(f"report is not valid JSON: {exc}") from None
    for key in ("inputs", "tolerances", "polytope", "static", "certificate"):
        if key not in report:
            raise MarketError(f"report is missing the {key!r} section")
    inputs = report["inputs"]
    tree, p = load_market(json.dumps(inputs["market"]))
    claim = load_claim(json.dumps(inputs["claim"]), tree)
    rm = load_risk_config(json.dumps(inputs["risk"]), p)
    budget = float(inputs["budget"])
    _check_budget(budget)
    tols = _tolerances(args)
    rtol = report["tolerances"]
    gap_tol = float(rtol.get("certification_gap", 1e-6))
    eq_tol = float(rtol.get("equality_set", 1e-7))

    cert = report["certificate"]
    phi = np.asarray(cert["phi_tilde"], dtype=float)
    q_tilde = np.asarray(cert["q_tilde"], dtype=float)
    y = np.asarray(cert["y"], dtype=float)
    p_val = float(cert["p"])
    h = claim.payoff
    pr = p.probabilities
    scale = max(1.0, abs(p_val))
    ck = _Checker()

    poly = enumerate_vertices(tree, max_leaves=args.max_leaves, tols=tols)
    stored = np.asarray(report["polytope"]["vertices"], dtype=float)
    ok = stored.shape == poly.vertices.shape and (
        stored.size == 0 or bool(np.allclose(stored, poly.vertices,
                                             atol=1e-8)))
    ck.check("polytope", ok, "stored vertices disagree with re-enumeration")

    in_range = bool(np.all(phi >= -1e-9) and np.all(phi <= 1.0 + 1e-9))
    prices = (poly.vertices * h) @ phi
    worst = float(np.max(prices)) if prices.size else 0.0
    ck.check("feasibility",
             in_range and worst <= budget + 1e-6 * max(1.0, budget),
             f"test in [0,1]: {in_range}, worst price {worst:.12g} "
             f"vs budget {budget:.12g}")

    risk_phi = evaluate(rm, (phi - 1.0) * h, pr).value
    static_val = float(report["static"]["value"])
    ck.check("static value",
             abs(risk_phi - p_val) <= 1e-6 * scale
             and abs(static_val - p_val) <= gap_tol * scale,
             f"risk of stored test {risk_phi:.12g} vs p {p_val:.12g}")

    try:
        alpha = penalty(rm, TerminalMeasure(probabilities=q_tilde), pr, tols)
        mix = y @ poly.vertices if y.size else np.zeros_like(pr)
        d_re = float(np.minimum(h * q_tilde, h * mix).sum()
                     - budget * y.sum() - alpha)
        ck.check("gap", abs(p_val - d_re) <= gap_tol * scale,
                 f"recomputed dual {d_re:.12g} vs p {p_val:.12g}")
    except (SolverError, MarketError) as exc:
        ck.check("gap", False, f"dual recomputation failed: {exc}")
        mix = np.zeros_like(pr)

    nu = h * q_tilde - h * mix
    up = nu > eq_tol * pr
    down = nu < -eq_tol * pr
    np1 = float(np.max(1.0 - phi[up])) if up.any() else 0.0
    np2 = float(np.max(phi[down])) if down.any() else 0.0
    ck.check("NP-1", np1 <= 1e-6,
             f"acceptance residual {np1:.3g} on the strictly-above set")
    ck.check("NP-2", np2 <= 1e-6,
             f"rejection residual {np2:.3g} on the strictly-below set")

    active = y > 1e-9
    worst_cs = float(np.max(np.abs(prices[active] - budget))) \
        if active.any() else 0.0
    ck.check("budget complementarity",
             worst_cs <= 1e-6 * max(1.0, budget),
             f"active vertex price off the budget by {worst_cs:.3g}")

    rows = report.get("strategy") or []
    if rows:
        by_node = {int(r["node"]): r for r in rows}
        values = np.zeros(tree.node_ids.shape[0])
        holdings = np.zeros_like(tree.prices)
        try:
            for pos in range(tree.node_ids.shape[0]):
                r = by_node[int(tree.node_ids[pos])]
                values[pos] = float(r["value"])
                holdings[pos] = np.asarray(r["holdings"], dtype=float)
        except KeyError as exc:
            raise MarketError(f"strategy row missing node {exc}") from None
        resid = 0.0
        for a in np.flatnonzero(tree.times < tree.horizon):
            for c in tree.children[int(a)]:
                move = tree.prices[c] - tree.prices[int(a)]
                resid = max(resid, abs(values[c] - values[int(a)]
                                       - float(holdings[int(a)] @ move)))
        ck.check("self-financing", resid <= 1e-8,
                 f"flow residual {resid:.3g}")
        ck.check("admissibility", float(np.min(values)) >= -1e-9,
                 f"minimum node value {np.min(values):.3g}")
        root = int(np.flatnonzero(tree.parent == -1)[0])
        ck.check("capital",
                 abs(values[root] - budget) <= 1e-8 * max(1.0, budget),
                 f"root value {values[root]:.12g} vs budget {budget:.12g}")
        v_term = values[tree.leaf_positions]
        shortfall = np.maximum(h - v_term, 0.0)
        dyn = evaluate(rm, -shortfall, pr).value
        ck.check("Eq. 9", abs(dyn - static_val) <= 1e-6 * scale,
                 f"terminal shortfall risk {dyn:.12g} vs static value "
                 f"{static_val:.12g}")

    if args.q:
        q_probe = _load_measure(_read(args.q), tree)
        try:
            gap_rep = strong_duality_check(q_probe, p, poly, claim, budget,
                                           tols)
            ck.check("inner gap", True)
            probe_test = construct_test(q_probe, p, gap_rep.dual, poly,
                                        claim, budget, tols=tols)
            diag = verify_np(probe_test, q_probe, gap_rep.dual, poly, claim,
                             budget)
            ck.check("inner structure", diag.ok,
                     f"residuals {diag.above_not_full:.3g} / "
                     f"{diag.below_not_zero:.3g} / "
                     f"{diag.budget_complementarity:.3g}")
        except SolverError as exc:
            ck.check("inner gap", False, str(exc))

    if args.out:
        _emit({"command": "verify", "report": args.report,
               "failures": ck.failures, "ok": not ck.failures}, args.out)
    if ck.failures:
        print(f"verification failed: {', '.join(ck.failures)}")
        return 1
    print("verification passed")
    return 0


def cmd_oracle(args):
    tree, p, claim, rm = _load_inputs(args, need_risk=True)
    budget = float(args.budget)
    _check_budget(budget)
    tols = _tolerances(args)
    poly = enumerate_vertices(tree, max_leaves=args.max_leaves, tols=tols)
    res = grid_oracle_static(tree, p, poly, claim, budget, rm,
                             grid=args.grid)
    sweep = weak_duality_sweep(p, poly, claim, budget, samples=300,
                               seed=args.seed)
    report = {
        "command": "oracle",
        "inputs": {"market": json.loads(_read(args.market)),
                   "claim": json.loads(_read(args.claim)),
                   "risk": json.loads(_read(args.risk)), "budget": budget,
                   "grid": int(args.grid), "seed": int(args.seed)},
        "lower": res.lower, "upper": res.value,
        "lipschitz": res.lipschitz, "grid": res.grid,
        "n_effective": res.n_effective, "test": res.test,
        "weak_duality": {"samples": sweep.samples,
                         "violations": sweep.violations,
                         "max_violation": sweep.max_violation,
                         "min_objective": sweep.min_objective,
                         "inner_value": sweep.inner_value},
    }
    _emit(report, args.out)
    _say(f"oracle bracket: [{res.lower:.12g}, {res.value:.12g}] "
         f"(grid {res.grid}, {res.n_effective} effective leaves)")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="convexhedge",
        description="Risk-minimizing partial hedges in finite market trees")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the JSON report to this file")
    common.add_argument("--max-leaves", type=int, default=MAX_LEAVES,
                        help="vertex enumeration cap")
    for name in ("feasibility", "duality-gap", "complementary", "pivot",
                 "kelley"):
        common.add_argument(f"--tol-{name}", type=float, default=None,
                            help=f"solver {name.replace('-', ' ')} tolerance")
    sub = parser.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("price", parents=[common],
                        help="superhedging price and strategy")
    pr.add_argument("--market", required=True)
    pr.add_argument("--claim", required=True)
    pr.set_defaults(func=cmd_price)

    po = sub.add_parser("polytope", parents=[common],
                        help="martingale polytope vertices")
    po.add_argument("--market", required=True)
    po.set_defaults(func=cmd_polytope)

    so = sub.add_parser("solve", parents=[common],
                        help="certified partial hedge")
    so.add_argument("--market", required=True)
    so.add_argument("--claim", required=True)
    so.add_argument("--risk", required=True)
    so.add_argument("--budget", type=float, required=True)
    so.add_argument("--skip-hedge", action="store_true",
                    help="stop after the certificate")
    so.add_argument("--tol-gap", type=float, default=None,
                    help="certification gap tolerance")
    so.add_argument("--tol-eq", type=float, default=None,
                    help="equality set tolerance")
    so.set_defaults(func=cmd_solve)

    ve = sub.add_parser("verify", parents=[common],
                        help="re-check a solve report")
    ve.add_argument("--report", required=True)
    ve.add_argument("--q", help="probe measure file for the inner problem")
    ve.set_defaults(func=cmd_verify)

    orc = sub.add_parser("oracle", parents=[common],
                         help="grid-search bracket for the static value")
    orc.add_argument("--market", required=True)
    orc.add_argument("--claim", required=True)
    orc.add_argument("--risk", required=True)
    orc.add_argument("--budget", type=float, required=True)
    orc.add_argument("--grid", type=int, default=200)
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MarketError as exc:
        _say(f"error: {exc}")
        return 2
    except OSError as exc:
        _say(f"error: {exc}")
        return 2
    except ArbitrageError as exc:
        _say(f"error: {exc}")
        return 3
    except CertificationError as exc:
        _say(f"error: {exc}")
        return 5
    except SolverError as exc:
        _say(f"error: {exc}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
