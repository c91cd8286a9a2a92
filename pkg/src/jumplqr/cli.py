"""Command-line frontend: exact solves, evaluation, gradient checks,
certified natural-gradient runs, model-free learning, and model generation.

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 learning collapse.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .benchmarks import BUILTIN_MODELS, builtin_model
from .errors import AllDiverged, MjlsError, NoConvergence
from .exact import evaluate_cost, optimal_gains, solve_coupled_are
from .gradient import certify_convergence, exact_gradient, run_model_based_npg
from .generate import GenSpec, gen_model
from .learner import (
    LearnerConfig,
    run_repetitions,
    summarize_ensemble,
    write_summary_csv,
)
from .model import (
    GainPolicy,
    StructureMask,
    is_ms_stabilizing,
    load_model,
    save_model,
    validate_model,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_COLLAPSE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _resolve_model(source, gamma=None, eps=None):
    if source.startswith("builtin:"):
        model = builtin_model(source.split(":", 1)[1])
    else:
        model = load_model(source)
    overrides = {}
    if gamma is not None:
        overrides["gamma"] = gamma
    if eps is not None:
        overrides["eps"] = eps
    if overrides:
        model = validate_model(dataclasses.replace(model, **overrides))
    return model


def _load_gains(path, model):
    data = json.loads(Path(path).read_text())
    gains = np.asarray(data["gains"] if isinstance(data, dict) else data, dtype=float)
    policy = GainPolicy(gains)
    policy.check_dims(model)
    return gains


def _parse_mask(pattern, model):
    if pattern.startswith("observe:"):
        observed = [int(s) for s in pattern.split(":", 1)[1].split(",")]
        return StructureMask.observing_states(model.n_modes, model.input_dim,
                                              model.state_dim, observed)
    data = json.loads(Path(pattern).read_text())
    return StructureMask(np.asarray(data["mask"] if isinstance(data, dict) else data,
                                    dtype=float))


def _write_json(payload, out):
    text = json.dumps(payload, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_solve(args):
    model = _resolve_model(args.model, args.gamma, args.eps)
    t0 = time.perf_counter()
    try:
        value = solve_coupled_are(model)
    except NoConvergence as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    policy = optimal_gains(model, value)
    cost = evaluate_cost(model, policy)
    grad = exact_gradient(model, policy)
    runtime = time.perf_counter() - t0
    payload = {
        "P": value.P.tolist(),
        "gains": policy.gains.tolist(),
        "cost": cost,
        "stationarity_residuals": [float(np.linalg.norm(L)) for L in grad.L],
        "runtime_s": runtime,
    }
    _write_json(payload, args.out)
    print(f"optimal cost {cost:.6g} (runtime {runtime:.3f}s)")
    return EXIT_OK


def cmd_eval(args):
    model = _resolve_model(args.model, args.gamma, args.eps)
    gains = (np.zeros((model.n_modes, model.input_dim, model.state_dim))
             if args.gains is None else _load_gains(args.gains, model))
    policy = GainPolicy(gains, args.sigma)
    report = is_ms_stabilizing(model, policy)
    payload = {"stable": report.stable, "spectral_radius": report.spectral_radius}
    if report.stable:
        payload["cost"] = evaluate_cost(model, policy)
        print(f"cost {payload['cost']:.6g} (radius {report.spectral_radius:.6g})")
    else:
        print(f"policy not mean-square stabilizing (radius {report.spectral_radius:.6g})")
    _write_json(payload, args.out)
    return EXIT_OK


def cmd_grad(args):
    model = _resolve_model(args.model, args.gamma, args.eps)
    gains = (np.zeros((model.n_modes, model.input_dim, model.state_dim))
             if args.gains is None else _load_gains(args.gains, model))
    policy = GainPolicy(gains, args.sigma)
    grad = exact_gradient(model, policy)
    payload = {
        "grad_K": grad.grad_K.tolist(),
        "grad_sigma": grad.grad_sigma,
        "grad_K_norm": float(np.linalg.norm(grad.grad_K)),
        "kernels_norms": [float(np.linalg.norm(L)) for L in grad.L],
    }
    _write_json(payload, args.out)
    print(f"|grad_K| = {payload['grad_K_norm']:.6g}, grad_sigma = {grad.grad_sigma:.6g}")
    return EXIT_OK


def cmd_npg_exact(args):
    model = _resolve_model(args.model, args.gamma, args.eps)
    initial = GainPolicy(np.zeros((model.n_modes, model.input_dim, model.state_dim)))
    try:
        cert = certify_convergence(model, initial)
        eta = args.eta_tilde if args.eta_tilde is not None else cert.eta_tilde_max
        trace = run_model_based_npg(model, initial, args.steps, eta)
    except NoConvergence as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"certified eta_tilde_max {cert.eta_tilde_max:.6g}, "
          f"contraction {cert.contraction:.9g}")
    print(f"final cost {trace.costs[-1]:.8g}, gap {trace.gaps[-1]:.3e} "
          f"(C* = {trace.c_star:.8g})")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "cost", "gap"])
            for i in range(len(trace.costs)):
                writer.writerow([i, repr(float(trace.costs[i])), repr(float(trace.gaps[i]))])
    return EXIT_OK


def _learn_config(args, model, mode):
    mask = _parse_mask(args.mask, model) if args.mask else None
    if mode == "structured_gd" and mask is None:
        mask = StructureMask(np.ones((model.n_modes, model.input_dim, model.state_dim)))
    return LearnerConfig(
        steps=args.iters, eta=args.eta, sigma0=args.sigma0, N=args.N, T_F=args.T,
        seed=args.seed, sigma_decay=args.sigma_decay, mode=mode, mask=mask,
        chi_floor=args.chi_floor,
    )


def _run_learn(args, mode):
    model = _resolve_model(args.model, args.gamma, args.eps)
    config = _learn_config(args, model, mode)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        traces = run_repetitions(model, config, args.reps, workers=args.workers)
    except AllDiverged as exc:
        print(f"learning collapsed: {exc}", file=sys.stderr)
        if exc.trace is not None:
            exc.trace.write_csv(out_dir / "partial_trace.csv")
        return EXIT_COLLAPSE
    for r, trace in enumerate(traces):
        trace.write_csv(out_dir / f"trace_rep{r:03d}.csv")
        trace.write_json(out_dir / f"trace_rep{r:03d}.json")
    summary = summarize_ensemble(traces)
    write_summary_csv(summary, out_dir / "summary.csv")
    finals = [t.final.cost for t in traces]
    payload = {
        "repetitions": args.reps,
        "c_star": traces[0].c_star,
        "final_costs": finals,
        "final_rel_err_pct": [t.final.relative_error_pct for t in traces],
    }
    _write_json(payload, out_dir / "summary.json")
    print(f"{args.reps} repetition(s) done; final costs "
          f"{np.nanmin(finals):.6g}..{np.nanmax(finals):.6g} (C* {traces[0].c_star:.6g})")
    return EXIT_OK


def cmd_learn(args):
    return _run_learn(args, "npg")


def cmd_structured(args):
    return _run_learn(args, "structured_gd")


def cmd_gen(args):
    spec = GenSpec(n_modes=args.modes, state_dim=args.dim, input_dim=args.inputs,
                   spectral_cap=args.spectral_cap, seed=args.seed)
    model = gen_model(spec, gamma=args.gamma if args.gamma is not None else 0.99,
                      eps=args.eps if args.eps is not None else 0.0)
    save_model(model, args.out)
    print(f"wrote {args.out} ({args.modes} modes, d={args.dim}, k={args.inputs})")
    return EXIT_OK


def cmd_bench(args):
    rows = []
    for name in sorted(BUILTIN_MODELS):
        model = builtin_model(name)
        t0 = time.perf_counter()
        value = solve_coupled_are(model)
        policy = optimal_gains(model, value)
        cost = evaluate_cost(model, policy)
        zero = GainPolicy(np.zeros_like(policy.gains))
        cost0 = evaluate_cost(model, zero)
        rows.append({"model": name, "optimal_cost": cost, "zero_gain_cost": cost0,
                     "runtime_s": time.perf_counter() - t0})
        print(f"{name:16s} C* = {cost:.6g}   C(K=0) = {cost0:.6g}   "
              f"({rows[-1]['runtime_s']:.3f}s)")
    if args.out:
        _write_json(rows, args.out)
    return EXIT_OK


def _add_common(p):
    p.add_argument("--model", default="builtin:small441",
                   help="builtin:NAME or path to a model JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path")
    p.add_argument("--gamma", type=float, help="override the model discount")
    p.add_argument("--eps", type=float, help="override the process-noise level")


def _add_policy(p):
    p.add_argument("--gains", help="JSON file with per-mode gain matrices")
    p.add_argument("--sigma", type=float, default=0.0)


def _add_learn(p):
    p.add_argument("--N", type=int, default=1000, help="trajectories per iteration")
    p.add_argument("--T", type=int, default=500, help="rollout horizon")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--eta", type=float, default=0.04, help="gain step size")
    p.add_argument("--sigma0", type=float, default=0.5)
    p.add_argument("--sigma-decay", type=float, default=0.99, dest="sigma_decay")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--mask", help="JSON mask file or observe:i,j,... pattern")
    p.add_argument("--chi-floor", type=float, dest="chi_floor")
    p.add_argument("--workers", type=int, default=1)


def build_parser():
    parser = _Parser(prog="jumplqr",
                     description="Solve, evaluate and learn jump-linear quadratic controllers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="coupled Riccati solve and optimal gains")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="exact cost of a fixed policy")
    _add_common(p)
    _add_policy(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad", help="exact cost gradient at a policy")
    _add_common(p)
    _add_policy(p)
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("npg-exact", help="certified model-based natural-gradient run")
    _add_common(p)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--eta-tilde", type=float, dest="eta_tilde",
                   help="scaled step size; defaults to the certified maximum")
    p.set_defaults(func=cmd_npg_exact)

    p = sub.add_parser("learn", help="model-free natural-gradient learning")
    _add_common(p)
    _add_learn(p)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("structured", help="projected gradient descent under a gain mask")
    _add_common(p)
    _add_learn(p)
    # plain gradient descent is not covariance-preconditioned, so its stable
    # step-size scale is far below the natural-gradient default
    p.set_defaults(func=cmd_structured, eta=2e-5)

    p = sub.add_parser("gen", help="generate a random benchmark model")
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--inputs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spectral-cap", type=float, default=0.95, dest="spectral_cap")
    p.add_argument("--gamma", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="solve the built-in benchmarks and report costs")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MjlsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, NoConvergence):
            return EXIT_SOLVER
        if isinstance(exc, AllDiverged):
            return EXIT_COLLAPSE
        return EXIT_USAGE
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
