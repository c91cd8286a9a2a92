"""Compiled batch kernels for rollout simulation and score accumulation.

Every loop is written per trajectory with disjoint output writes, so the
results are bit-identical for any number of numba threads.
"""

import numba
import numpy as np

# OpenMP is not fork-safe and TBB may be absent; workqueue keeps process
# pools over these kernels usable
numba.config.THREADING_LAYER = "workqueue"

# squared norm threshold at which a rollout is tagged diverged
DIVERGE_NORM2 = 1e16


@numba.njit(cache=True, parallel=True)
def simulate_batch_kernel(A, B, K, Q, R, cumtrans, cumrho, sigma, eps,
                          init_factor, x0_raw, mode_u, act_noise, proc_noise):
    """Simulate N closed-loop trajectories from pre-drawn noise blocks.

    Returns states x (N, T+1, d), modes (N, T+1), stage costs c (N, T+1)
    and valid_len (N,): valid_len[n] < T+1 marks a diverged trajectory whose
    entries are only meaningful for t < valid_len[n].
    """
    N = x0_raw.shape[0]
    T1 = mode_u.shape[1]
    d = A.shape[1]
    k = B.shape[2]
    n_modes = cumrho.shape[0]
    x = np.zeros((N, T1, d))
    modes = np.zeros((N, T1), dtype=np.int64)
    c = np.zeros((N, T1))
    valid_len = np.full(N, T1, dtype=np.int64)
    for n in numba.prange(N):
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += init_factor[i, j] * x0_raw[n, j]
            x[n, 0, i] = acc
        w = 0
        while w < n_modes - 1 and mode_u[n, 0] >= cumrho[w]:
            w += 1
        modes[n, 0] = w
        u = np.zeros(k)
        for t in range(T1):
            w = modes[n, t]
            nrm2 = 0.0
            for i in range(d):
                nrm2 += x[n, t, i] * x[n, t, i]
            if nrm2 > DIVERGE_NORM2:
                valid_len[n] = t
                break
            for a in range(k):
                acc = sigma * act_noise[n, t, a]
                for j in range(d):
                    acc -= K[w, a, j] * x[n, t, j]
                u[a] = acc
            stage = 0.0
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += Q[w, i, j] * x[n, t, j]
                stage += x[n, t, i] * acc
            for a in range(k):
                acc = 0.0
                for b in range(k):
                    acc += R[w, a, b] * u[b]
                stage += u[a] * acc
            c[n, t] = stage
            if t + 1 < T1:
                for i in range(d):
                    acc = eps * proc_noise[n, t, i]
                    for j in range(d):
                        acc += A[w, i, j] * x[n, t, j]
                    for a in range(k):
                        acc += B[w, i, a] * u[a]
                    x[n, t + 1, i] = acc
                wn = 0
                while wn < n_modes - 1 and mode_u[n, t + 1] >= cumtrans[w, wn]:
                    wn += 1
                modes[n, t + 1] = wn
    return x, modes, c, valid_len


@numba.njit(cache=True, parallel=True)
def accumulate_scores_kernel(x, modes, act_noise, weights, gamma_pow,
                             valid_len, sigma, n_modes):
    """Per-trajectory likelihood-ratio gradient terms and covariance sums.

    With innovation u + K x = sigma * v the gain score at time t is
    -(1/sigma) v_t x_t^T placed in the active mode's column block, and the
    sigma score is (||v_t||^2 - k)/sigma.  weights[n, t] carries
    gamma^t (Qhat - baseline); gamma_pow[t] = gamma^t weights the
    covariance accumulation.
    """
    N, T1, d = x.shape
    k = act_noise.shape[2]
    grads = np.zeros((N, k, n_modes * d))
    grad_sigma = np.zeros(N)
    xcov = np.zeros((N, n_modes, d, d))
    inv_sigma = 1.0 / sigma
    for n in numba.prange(N):
        for t in range(valid_len[n]):
            w = modes[n, t]
            wt = weights[n, t]
            col = w * d
            vnorm2 = 0.0
            for a in range(k):
                coeff = -inv_sigma * wt * act_noise[n, t, a]
                vnorm2 += act_noise[n, t, a] * act_noise[n, t, a]
                for j in range(d):
                    grads[n, a, col + j] += coeff * x[n, t, j]
            grad_sigma[n] += wt * (vnorm2 - k) * inv_sigma
            gp = gamma_pow[t]
            for i in range(d):
                for j in range(d):
                    xcov[n, w, i, j] += gp * x[n, t, i] * x[n, t, j]
    return grads, grad_sigma, xcov
