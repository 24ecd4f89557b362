"""Command-line entry point.

Usage: teamlqg COMMAND SPECFILE [flags].  Commands parse a JSON spec file,
dispatch the solvers/checks, print a human-readable summary, and (with
--out) write a JSON report whose numbers round-trip losslessly.

Exit codes: 0 success, 1 validation failure, 2 numerical failure,
3 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import delayed as _delayed
from . import sim as _sim
from . import tree as _tree
from .model import (
    Blocked,
    CostSpec,
    Delayed,
    DimensionError,
    Homogeneous,
    MeanFieldTree,
    NoiseSpec,
    TeamSpec,
    Tree,
    validate,
)
from .riccati import ConvergenceError, RiccatiError, dare_solve

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 3


class SpecFileError(ValueError):
    pass


# ---------------------------------------------------------------------------
# spec file parsing


def _require_keys(obj, allowed, required, where):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise SpecFileError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise SpecFileError(f"missing keys in {where}: {sorted(missing)}")


def _matrix(v, name):
    try:
        M = np.array(v, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SpecFileError(f"{name} is not a numeric matrix") from exc
    if M.ndim != 2:
        raise SpecFileError(f"{name} must be a 2-D nested array")
    return M


def _delay_value(v):
    if v is None or (isinstance(v, str) and v.lower() in ("inf", "infinity")):
        return math.inf
    return float(v)


def parse_spec(data: dict) -> TeamSpec:
    _require_keys(data, ["model", "cost", "noise", "info", "horizon", "n_dm"],
                  ["model", "cost", "noise", "info", "horizon", "n_dm"],
                  "spec file")
    model = data["model"]
    if "A_blocks" in model or "B_blocks" in model:
        _require_keys(model, ["A_blocks", "B_blocks"], ["A_blocks", "B_blocks"],
                      "model")
        dynamics = Blocked(
            A_blocks=tuple(tuple(_matrix(b, "A block") for b in row)
                           for row in model["A_blocks"]),
            B_blocks=tuple(tuple(_matrix(b, "B block") for b in row)
                           for row in model["B_blocks"]),
        )
    else:
        _require_keys(model, ["A", "B"], ["A", "B"], "model")
        dynamics = Homogeneous(A=_matrix(model["A"], "A"),
                               B=_matrix(model["B"], "B"))

    cost_d = data["cost"]
    _require_keys(cost_d, ["Q", "R", "R_tilde", "Q_tilde", "S"], ["Q", "R"],
                  "cost")
    cost = CostSpec(
        Q=_matrix(cost_d["Q"], "Q"),
        R=_matrix(cost_d["R"], "R"),
        R_tilde=(_matrix(cost_d["R_tilde"], "R_tilde")
                 if cost_d.get("R_tilde") is not None else None),
        Q_tilde=(_matrix(cost_d["Q_tilde"], "Q_tilde")
                 if cost_d.get("Q_tilde") is not None else None),
        S=_matrix(cost_d["S"], "S") if cost_d.get("S") is not None else None,
    )

    noise_d = data["noise"]
    _require_keys(noise_d, ["sigma_w", "init_diag", "init_offdiag", "family"],
                  ["sigma_w", "init_diag", "init_offdiag"], "noise")
    noise = NoiseSpec(
        sigma_w=_matrix(noise_d["sigma_w"], "sigma_w"),
        init_diag=_matrix(noise_d["init_diag"], "init_diag"),
        init_offdiag=_matrix(noise_d["init_offdiag"], "init_offdiag"),
        family=noise_d.get("family", "gaussian"),
    )

    info_d = data["info"]
    kind = info_d.get("kind")
    if kind == "tree":
        _require_keys(info_d, ["kind"], ["kind"], "info")
        info = Tree()
    elif kind == "meanfield":
        _require_keys(info_d, ["kind"], ["kind"], "info")
        info = MeanFieldTree()
    elif kind == "delayed":
        _require_keys(info_d, ["kind", "delays"], ["kind", "delays"], "info")
        info = Delayed(delays=tuple(
            tuple(_delay_value(v) for v in row) for row in info_d["delays"]
        ))
    else:
        raise SpecFileError(f"info.kind must be tree|meanfield|delayed, got {kind!r}")

    try:
        return TeamSpec(n_dm=int(data["n_dm"]), horizon=int(data["horizon"]),
                        dynamics=dynamics, cost=cost, noise=noise, info=info)
    except DimensionError as exc:
        raise SpecFileError(str(exc)) from exc


def load_spec(path: str) -> TeamSpec:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise SpecFileError(f"cannot read spec file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"spec file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SpecFileError("spec file must contain a JSON object")
    return parse_spec(data)


def write_report(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# policy (de)serialization for simulate/verify round-trips


def policy_from_report(data: dict, spec: TeamSpec):
    kind = data.get("kind")
    if kind == "tree":
        mode = _tree.Population(data["mode"], data.get("mode_n"))
        pol = _tree.TreePolicy(
            horizon=int(data["horizon"]),
            mode=mode,
            K=[np.array(k) for k in data["K"]],
            L=[np.array(l) for l in data["L"]],
            P=[np.array(p) for p in data["P"]],
            G=[np.array(g) for g in data["G"]],
        )
        return _sim.TreePolicySet.from_policy(pol, spec.n_dm), pol
    if kind == "delayed":
        graph = _delayed.check_preconditions(spec)
        key = lambda s: ",".join(str(i + 1) for i in s)
        gains = {r: [np.array(g) for g in data["gains"][key(r)]]
                 for r in graph.nodes}
        values = {r: [np.array(x) for x in data["values"][key(r)]]
                  for r in graph.nodes}
        pol = _delayed.GraphPolicy(graph=graph, horizon=int(data["horizon"]),
                                   gains=gains, values=values)
        return _sim.GraphPolicySet(policy=pol), pol
    raise SpecFileError(f"unsupported policy kind {kind!r} in policy file")


def load_policy(path: str, spec: TeamSpec):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecFileError(f"cannot read policy file: {exc}") from exc
    return policy_from_report(data.get("policy", data), spec)


# ---------------------------------------------------------------------------
# commands


def _validated_spec(path):
    spec = load_spec(path)
    rep = validate(spec)
    if not rep.ok:
        names = ", ".join(c.name for c in rep.failed())
        raise SpecFileError(f"spec validation failed: {names}")
    return spec


def cmd_check(args):
    spec = load_spec(args.spec)
    rep = validate(spec)
    print(rep.summary())
    payload = {"command": "check", "ok": rep.ok,
               "checks": [{"name": c.name, "passed": c.passed,
                           "message": c.message} for c in rep.checks]}
    if args.out:
        write_report(args.out, payload)
    return EXIT_OK if rep.ok else EXIT_VALIDATION


def cmd_solve_tree(args):
    spec = _validated_spec(args.spec)
    T = args.horizon or spec.horizon
    pol = _tree.solve_tree(spec, T)
    cost = _tree.predicted_cost(spec, T, pol)
    print(f"tree policy solved: horizon {T}, mode {pol.mode.kind}")
    print(f"predicted cost: {cost:.12g}")
    for t in range(T):
        print(f"  t={t}  K={pol.K[t].ravel().tolist()}  "
              f"L={pol.L[t].ravel().tolist()}")
    if args.out:
        write_report(args.out, {"command": "solve-tree",
                                "predicted_cost": cost,
                                "policy": pol.as_dict()})
    return EXIT_OK


def cmd_solve_tree_inf(args):
    spec = _validated_spec(args.spec)
    pol = _tree.solve_infinite_tree(spec, tol=args.tol)
    print(f"stationary gain K = {pol.K.ravel().tolist()}")
    print(f"value matrix P = {pol.P.ravel().tolist()}")
    print(f"average cost = {pol.average_cost:.12g}")
    print(f"closed-loop spectral radius = {pol.closed_loop_radius:.6g}")
    print(f"coupling decay horizon = {pol.decay_horizon}")
    if args.out:
        write_report(args.out, {"command": "solve-tree-inf",
                                "policy": pol.as_dict()})
    return EXIT_OK


def cmd_solve_ndm(args):
    spec = _validated_spec(args.spec)
    if args.n < 2:
        raise SpecFileError("--n must be at least 2")
    from dataclasses import replace
    nspec = replace(spec, n_dm=args.n)
    T = args.horizon or spec.horizon
    pol = _tree.solve_tree(nspec, T, mode=_tree.n_dm(args.n))
    cost = _tree.exact_policy_cost(nspec, T, pol.K, pol.L, pol.mode)
    print(f"{args.n}-agent policy solved: horizon {T}")
    print(f"predicted cost: {cost:.12g}")
    if args.out:
        write_report(args.out, {"command": "solve-ndm", "n": args.n,
                                "predicted_cost": cost,
                                "policy": pol.as_dict()})
    return EXIT_OK


def cmd_solve_mf(args):
    spec = _validated_spec(args.spec)
    T = args.horizon or spec.horizon
    res = _tree.meanfield_limit_policy(spec, T, n_cap=args.n_max)
    pol = res.policy
    print(f"mean-field limit policy solved at horizon {T}")
    for N, d in res.convergence_series():
        print(f"  N={N:4d}  L change {d:.3e}")
    for t in range(T):
        print(f"  t={t}  K={pol.K[t].ravel().tolist()}  "
              f"L={pol.L[t].ravel().tolist()}")
    if args.out:
        write_report(args.out, {
            "command": "solve-mf",
            "convergence": [{"N": N, "L_change": d}
                            for N, d in res.convergence_series()],
            "policy": pol.as_dict(),
        })
    return EXIT_OK


def cmd_solve_delayed(args):
    spec = _validated_spec(args.spec)
    T = args.horizon or spec.horizon
    pol, cost = _delayed.solve_delayed_finite(spec, T)
    print(f"delayed-sharing policy solved: horizon {T}")
    print("information graph:")
    print("  " + pol.graph.adjacency_listing().replace("\n", "\n  "))
    print(f"predicted cost: {cost:.12g}")
    if args.out:
        write_report(args.out, {"command": "solve-delayed",
                                "predicted_cost": cost,
                                "policy": pol.as_dict()})
    return EXIT_OK


def cmd_solve_delayed_inf(args):
    spec = _validated_spec(args.spec)
    pol = _delayed.solve_delayed_infinite(spec, tol=args.tol)
    cost = _delayed.average_cost(spec, pol)
    radius = _delayed.closed_loop_radius(spec, pol)
    print("stationary delayed-sharing policy solved")
    print("  " + pol.graph.adjacency_listing().replace("\n", "\n  "))
    print(f"average cost = {cost:.12g}")
    print(f"closed-loop spectral radius = {radius:.6g}")
    if args.out:
        write_report(args.out, {"command": "solve-delayed-inf",
                                "average_cost": cost,
                                "closed_loop_radius": radius,
                                "policy": pol.as_dict()})
    return EXIT_OK


def cmd_dare(args):
    spec = _validated_spec(args.spec)
    sol = dare_solve(spec.dynamics.A, spec.dynamics.B, spec.cost.Q, spec.cost.R)
    print(f"P = {sol.P.ravel().tolist()}")
    print(f"K = {sol.K.ravel().tolist()}")
    print(f"residual = {sol.residual:.3e} after {sol.iterations} iterations")
    if args.out:
        write_report(args.out, {"command": "dare", "P": sol.P.tolist(),
                                "K": sol.K.tolist(),
                                "residual": sol.residual,
                                "iterations": sol.iterations})
    return EXIT_OK


def cmd_simulate(args):
    spec = _validated_spec(args.spec)
    pset, _ = load_policy(args.policy, spec)
    T = args.horizon or spec.horizon
    rep = _sim.simulate(spec, pset, T, args.rollouts, args.seed)
    print(f"mean cost = {rep.mean_cost:.12g} +/- {rep.std_error:.3g} "
          f"(1 SE, {rep.n_rollouts} rollouts, seed {rep.seed})")
    if args.out:
        write_report(args.out, {"command": "simulate", **rep.as_dict()})
    return EXIT_OK


def cmd_sweep_mft(args):
    spec = _validated_spec(args.spec)
    try:
        schedule = [int(v) for v in args.schedule.split(",") if v]
    except ValueError as exc:
        raise SpecFileError(f"bad --schedule: {exc}") from exc
    T = args.horizon or spec.horizon
    rows = _sim.mft_sweep(spec, T, schedule, args.rollouts, args.seed)
    cols = ["N", "L_diff_prev", "predicted_cost", "mc_cost", "cost_gap",
            "cost_gap_3se", "moment_dist_first", "moment_dist_second",
            "ui_surrogate"]
    print("\t".join(cols))
    for row in rows:
        print("\t".join(
            "-" if row[c] is None else (str(row[c]) if c == "N" else f"{row[c]:.6g}")
            for c in cols
        ))
    if args.out:
        write_report(args.out, {"command": "sweep-mft", "table": rows})
    return EXIT_OK


def cmd_verify(args):
    spec = _validated_spec(args.spec)
    T = args.horizon or spec.horizon
    if args.policy:
        pset, _ = load_policy(args.policy, spec)
    else:
        pol = _tree.solve_tree(spec, T)
        pset = _sim.TreePolicySet.from_policy(pol, spec.n_dm)

    results = []

    defect = _sim.pbp_check(spec, pset, T)
    results.append(("pbp_check", defect < args.pbp_tol,
                    f"max unilateral improvement {defect:.3e}"))

    if isinstance(pset, _sim.TreePolicySet):
        perm = list(range(1, spec.n_dm)) + [0]
        delta, ci = _sim.exchangeability_check(spec, pset, perm,
                                              args.rollouts, args.seed)
        results.append(("exchangeability_check", abs(delta) <= max(ci, 1e-12),
                        f"delta {delta:.3e} +/- {ci:.3e}"))
        cs, co, ci2 = _sim.symmetrization_check(spec, pset, args.rollouts,
                                                args.seed)
        results.append(("symmetrization_check", cs <= co + ci2,
                        f"symmetrized {cs:.6g} vs original {co:.6g}"))
        ce = _sim.certainty_equivalence_check(spec, args.rollouts, args.seed)
        results.append(("certainty_equivalence_check",
                        ce["gains_identical"] and ce["uniform_mc_within_3se"],
                        f"gains identical: {ce['gains_identical']}, "
                        f"uniform MC within 3 SE: {ce['uniform_mc_within_3se']}"))

    ok = True
    for name, passed, msg in results:
        tag = "PASS" if passed else "FAIL"
        ok = ok and passed
        print(f"[{tag}] {name} ({msg})")
    if args.out:
        write_report(args.out, {
            "command": "verify", "ok": ok,
            "checks": [{"name": n, "passed": p, "message": m}
                       for n, p, m in results],
        })
    return EXIT_OK if ok else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(
        prog="teamlqg",
        description="Solvers and checks for decentralized LQG team problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        p = sub.add_parser(name, **kw)
        p.add_argument("spec", help="JSON spec file")
        p.add_argument("--out", help="write a JSON report to this path")
        p.set_defaults(fn=fn)
        return p

    add("check", cmd_check, help="validate a spec file")
    p = add("solve-tree", cmd_solve_tree, help="finite-horizon tree policy")
    p.add_argument("--horizon", type=int)
    p = add("solve-tree-inf", cmd_solve_tree_inf,
            help="average-cost stationary tree policy")
    p.add_argument("--tol", type=float, default=1e-8)
    p = add("solve-ndm", cmd_solve_ndm, help="N-agent sum-coupled policy")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--horizon", type=int)
    p = add("solve-mf", cmd_solve_mf, help="mean-field limit policy")
    p.add_argument("--n-max", type=int, default=512)
    p.add_argument("--horizon", type=int)
    p = add("solve-delayed", cmd_solve_delayed,
            help="finite-horizon delayed-sharing policy")
    p.add_argument("--horizon", type=int)
    p = add("solve-delayed-inf", cmd_solve_delayed_inf,
            help="stationary delayed-sharing policy")
    p.add_argument("--tol", type=float, default=1e-10)
    add("dare", cmd_dare, help="stationary Riccati solve on (A, B, Q, R)")
    p = add("simulate", cmd_simulate, help="Monte Carlo policy evaluation")
    p.add_argument("--policy", required=True, help="policy report file")
    p.add_argument("--rollouts", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--horizon", type=int)
    p = add("sweep-mft", cmd_sweep_mft, help="mean-field convergence sweep")
    p.add_argument("--schedule", required=True,
                   help="comma-separated population sizes, e.g. 2,4,8")
    p.add_argument("--rollouts", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--horizon", type=int)
    p = add("verify", cmd_verify, help="run the structural check suite")
    p.add_argument("--policy", help="policy report file (default: re-solve)")
    p.add_argument("--rollouts", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--horizon", type=int)
    p.add_argument("--pbp-tol", type=float, default=1e-7)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except SpecFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError,) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (RiccatiError, _tree.CouplingSystemError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
