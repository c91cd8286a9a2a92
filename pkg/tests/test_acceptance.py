"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The heavy learning criteria parallelize their independent repetitions over
two worker processes; all randomness is seeded, so reruns are reproducible.
"""

import json
import time

import numpy as np

from jumplqr import (
    BlackBoxSystem,
    GainPolicy,
    GenSpec,
    LearnerConfig,
    MjlsModel,
    certify_convergence,
    compute_chi,
    estimate,
    evaluate_cost,
    exact_gradient,
    first_state_feedback_mask,
    fisher_matrix,
    gen_model,
    is_ms_stabilizing,
    optimal_gains,
    run_model_based_npg,
    run_repetitions,
    solve_coupled_are,
    substream,
    validate_model,
)
from jumplqr.cli import main
from jumplqr.simulate import simulate_policy_batch
from conftest import make_two_mode_scalar


def check(criterion, ok, detail):
    status = "PASS" if ok else "FAIL"
    line = f"[acceptance] criterion {criterion:>2}: {status} - {detail}"
    print(line)
    assert ok, line


def zero_policy(model, sigma=0.0):
    return GainPolicy(np.zeros((model.n_modes, model.input_dim, model.state_dim)), sigma)


# --------------------------------------------------------------------------


def test_criterion_01_riccati_optimum_cost(tmp_path):
    t0 = time.perf_counter()
    out = tmp_path / "solve.json"
    code = main(["solve", "--model", "builtin:structured443", "--out", str(out)])
    wall = time.perf_counter() - t0
    cost = json.loads(out.read_text())["cost"]
    check(1, code == 0 and abs(cost - 2.5704) <= 1e-3 and wall < 1.0,
          f"solve cost {cost:.6f} vs 2.5704 +/- 1e-3, runtime {wall:.3f}s")


def test_criterion_02_no_feedback_cost(structured_model):
    t0 = time.perf_counter()
    cost = evaluate_cost(structured_model, zero_policy(structured_model))
    wall = time.perf_counter() - t0
    check(2, abs(cost - 8.4861) <= 1e-3 and wall < 1.0,
          f"zero-gain cost {cost:.6f} vs 8.4861 +/- 1e-3, runtime {wall:.3f}s")


def test_criterion_03_projected_optimum_cost(structured_model):
    t0 = time.perf_counter()
    policy = optimal_gains(structured_model, solve_coupled_are(structured_model))
    projected = first_state_feedback_mask().apply(policy)
    cost = evaluate_cost(structured_model, projected)
    wall = time.perf_counter() - t0
    check(3, abs(cost - 13.3227) <= 1e-3 and wall < 1.0,
          f"projected-optimum cost {cost:.6f} vs 13.3227 +/- 1e-3, runtime {wall:.3f}s")


def test_criterion_04_structured_learning_bracket(structured_model):
    t0 = time.perf_counter()
    config = LearnerConfig(steps=100, eta=2e-5, sigma0=0.5, N=2000, T_F=500,
                           seed=4443, mode="structured_gd",
                           mask=first_state_feedback_mask())
    traces = run_repetitions(structured_model, config, reps=20, workers=2)
    finals = np.array([t.final.cost for t in traces])
    inside = np.sum((finals > 2.5704) & (finals < 8.4861))
    wall = time.perf_counter() - t0
    check(4, inside >= 18 and wall < 600.0,
          f"{inside}/20 runs ended strictly inside (2.5704, 8.4861); "
          f"finals {np.nanmin(finals):.4f}..{np.nanmax(finals):.4f}, "
          f"runtime {wall:.0f}s < 600s")


def test_criterion_05_learning_curve_trend(small_model):
    t0 = time.perf_counter()
    finals = {}
    for N in (1000, 10000):
        config = LearnerConfig(steps=100, eta=0.01 / 0.5**2, sigma0=0.5, N=N,
                               T_F=500, seed=(4415, N))
        traces = run_repetitions(small_model, config, reps=20, workers=2)
        finals[N] = np.array([t.final.relative_error_pct for t in traces])
    wall = time.perf_counter() - t0
    median_large = float(np.median(finals[10000]))
    mean_large = float(np.mean(finals[10000]))
    mean_small = float(np.mean(finals[1000]))
    check(5, median_large < 5.0 and mean_large < mean_small and wall < 1800.0,
          f"median final rel err at N=10000 {median_large:.4g}% < 5%; "
          f"mean {mean_large:.4g}% (N=10000) < {mean_small:.4g}% (N=1000); "
          f"runtime {wall:.0f}s < 1800s")


def test_criterion_06_gradient_oracle():
    t0 = time.perf_counter()
    h = 1e-5
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(600 + seed)
        spec = GenSpec(n_modes=int(rng.integers(2, 4)), state_dim=int(rng.integers(2, 4)),
                       input_dim=int(rng.integers(1, 3)), seed=600 + seed)
        model = gen_model(spec, gamma=float(rng.uniform(0.9, 0.98)))
        policy = None
        for _ in range(50):
            gains = 0.2 * rng.standard_normal((model.n_modes, model.input_dim,
                                               model.state_dim))
            cand = GainPolicy(gains, sigma=float(rng.uniform(0.1, 1.0)))
            if is_ms_stabilizing(model, cand).stable:
                policy = cand
                break
        assert policy is not None
        grad = exact_gradient(model, policy)
        fd = np.zeros_like(policy.gains)
        for idx in np.ndindex(policy.gains.shape):
            bump = np.zeros_like(policy.gains)
            bump[idx] = h
            cp = evaluate_cost(model, GainPolicy(policy.gains + bump, policy.sigma))
            cm = evaluate_cost(model, GainPolicy(policy.gains - bump, policy.sigma))
            fd[idx] = (cp - cm) / (2 * h)
        cp = evaluate_cost(model, policy.with_sigma(policy.sigma + h))
        cm = evaluate_cost(model, policy.with_sigma(policy.sigma - h))
        fd_sigma = (cp - cm) / (2 * h)
        coords = np.append(grad.grad_K.ravel(), grad.grad_sigma)
        oracle = np.append(GainPolicy(fd).stacked.ravel(), fd_sigma)
        rel = np.abs(coords - oracle) / np.maximum.reduce(
            [np.abs(coords), np.abs(oracle), np.full_like(coords, 1e-4)])
        worst = max(worst, float(rel.max()))
    wall = time.perf_counter() - t0
    check(6, worst < 1e-4 and wall < 60.0,
          f"max coordinate-wise relative error {worst:.3g} < 1e-4 over 20 triples, "
          f"runtime {wall:.0f}s < 60s")


def test_criterion_07_estimator_unbiasedness():
    t0 = time.perf_counter()
    model = make_two_mode_scalar(gamma=0.95)
    system = BlackBoxSystem(model)
    policy = GainPolicy(np.zeros((2, 1, 1)), 0.5)
    exact = exact_gradient(model, policy)
    target = np.append(exact.grad_K.ravel(), exact.grad_sigma)
    batches = np.empty((200, 3))
    for b in range(200):
        est = estimate(system, policy, 2000, 200, model.gamma, stream=(700, b))
        batches[b] = np.append(est.grad_K_hat.ravel(), est.grad_sigma_hat)
    mean = batches.mean(axis=0)
    se = batches.std(axis=0, ddof=1) / np.sqrt(len(batches))
    dev = np.abs(mean - target) / se
    wall = time.perf_counter() - t0
    check(7, np.all(dev <= 3.0) and wall < 300.0,
          f"batch-mean gradient within {dev.max():.2f} standard errors (<= 3) "
          f"of the exact gradient, runtime {wall:.0f}s < 300s")


def test_criterion_08_certified_npg_convergence(structured_model):
    t0 = time.perf_counter()
    initial = zero_policy(structured_model)
    cert = certify_convergence(structured_model, initial)
    trace = run_model_based_npg(structured_model, initial, 500, cert.eta_tilde_max)
    wall = time.perf_counter() - t0
    gaps = trace.gaps
    contraction_ok = all(gaps[n + 1] <= cert.contraction * gaps[n] + 1e-12
                         for n in range(500))
    reached = np.nonzero(gaps < 1e-8 * trace.c_star)[0]
    first = int(reached[0]) if len(reached) else -1
    check(8, contraction_ok and first >= 0 and wall < 5.0,
          f"per-step contraction holds: {contraction_ok}; gap < 1e-8*C* first "
          f"reached at step {first if first >= 0 else '>500'} "
          f"(gap at 500 = {gaps[-1]:.3e}, threshold {1e-8 * trace.c_star:.3e}); "
          f"eta_tilde_max {cert.eta_tilde_max:.4g}; runtime {wall:.1f}s < 5s")


def test_criterion_09_fisher_identity(small_model):
    t0 = time.perf_counter()
    sigma = 0.5
    policy = zero_policy(small_model, sigma)
    G = fisher_matrix(small_model, policy)
    k = small_model.input_dim
    m = small_model.n_modes * small_model.state_dim * k

    # analytic identity against the independently truncated covariance series
    series = compute_chi(small_model, policy, method="truncated", horizon=6000)
    analytic_err = np.max(np.abs(G[:m, :m] - np.kron(series.chi, np.eye(k)) / sigma**2))

    # Monte Carlo outer-product estimate at N = 1e5, compared per entry at the
    # same truncation horizon
    horizon = 500
    truncated = compute_chi(small_model, policy, method="truncated", horizon=horizon)
    target = np.kron(truncated.chi, np.eye(k)) / sigma**2
    system = BlackBoxSystem(small_model)
    gamma_pow = small_model.gamma ** np.arange(horizon + 1)
    n_total, chunk = 100_000, 5000
    s1 = np.zeros((m, m))
    s2 = np.zeros((m, m))
    for start in range(0, n_total, chunk):
        streams = [substream(900, 0, j) for j in range(start, start + chunk)]
        batch = simulate_policy_batch(system, policy, horizon, streams)
        nsd = small_model.n_modes * small_model.state_dim
        xe = np.zeros((chunk, horizon + 1, nsd))
        for i in range(small_model.n_modes):
            sel = batch.omega == i
            block = np.where(sel[:, :, None], batch.x, 0.0)
            xe[:, :, i * small_model.state_dim:(i + 1) * small_model.state_dim] = block
        # score vec in column-stacked order: g[c*k + r] = -(1/sigma) v_r * xe_c
        g = -(xe[:, :, :, None] * batch.action_noise[:, :, None, :]).reshape(
            chunk, horizon + 1, m) / sigma
        F = np.einsum("t,nti,ntj->nij", gamma_pow, g, g)
        s1 += F.sum(axis=0)
        s2 += (F * F).sum(axis=0)
    mc_mean = s1 / n_total
    mc_var = s2 / n_total - mc_mean**2
    se = np.sqrt(mc_var / n_total)
    dev = np.abs(mc_mean - target) / np.maximum(se, 1e-300)
    dev_ok = float(dev[se > 0].max())
    wall = time.perf_counter() - t0
    check(9, analytic_err < 1e-10 and dev_ok <= 3.0 and wall < 300.0,
          f"analytic identity error {analytic_err:.2e} < 1e-10; Monte Carlo "
          f"within {dev_ok:.2f} standard errors (<= 3) at N=1e5; "
          f"runtime {wall:.0f}s < 300s")


def test_criterion_10_lti_reduction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1000)
    worst = 0.0
    for _ in range(10):
        d = int(rng.integers(2, 5))
        k = int(rng.integers(1, 4))
        A = rng.standard_normal((d, d))
        A *= rng.uniform(0.3, 0.95) / np.max(np.abs(np.linalg.eigvals(A)))
        B = rng.standard_normal((d, k))
        gamma = float(rng.uniform(0.9, 0.99))
        model = validate_model(MjlsModel(
            n_modes=1, state_dim=d, input_dim=k,
            A=[A], B=[B], Q=[np.eye(d)], R=[np.eye(k)],
            trans=[[1.0]], rho=[1.0], gamma=gamma,
        ))
        # independent oracle: plain DARE value iteration on the scaled system
        As, Bs = np.sqrt(gamma) * A, np.sqrt(gamma) * B
        P = np.eye(d)
        for _ in range(200_000):
            Pn = np.eye(d) + As.T @ P @ As - As.T @ P @ Bs @ np.linalg.solve(
                np.eye(k) + Bs.T @ P @ Bs, Bs.T @ P @ As)
            if np.max(np.abs(Pn - P)) < 1e-13 * (1 + np.max(np.abs(Pn))):
                P = Pn
                break
            P = Pn
        value = solve_coupled_are(model)
        err = np.linalg.norm(value.P[0] - P, 2) / (1 + np.linalg.norm(P, 2))
        worst = max(worst, float(err))
    wall = time.perf_counter() - t0
    check(10, worst <= 1e-9 and wall < 10.0,
          f"max scaled deviation from independent DARE value iteration "
          f"{worst:.2e} <= 1e-9 over 10 systems, runtime {wall:.1f}s < 10s")


def test_criterion_11_generated_model_learning():
    t0 = time.perf_counter()
    spec = GenSpec(n_modes=10, state_dim=10, input_dim=3, seed=2024)
    model = gen_model(spec, gamma=0.99)
    config = LearnerConfig(steps=100, eta=0.005, sigma0=1.0, N=5000, T_F=300,
                           seed=4420)
    traces = run_repetitions(model, config, reps=20, workers=2)
    finals = np.array([t.final.relative_error_pct for t in traces])
    hits = int(np.sum(finals < 10.0))
    wall = time.perf_counter() - t0
    check(11, hits >= 15 and wall < 2700.0,
          f"{hits}/20 seeded runs reached relative error < 10% "
          f"(finals {np.nanmin(finals):.3g}%..{np.nanmax(finals):.3g}%), "
          f"runtime {wall:.0f}s < 2700s")
