"""Hot numeric kernels for belief inference and query planning.

Two interchangeable implementations live here: numba ``@njit`` loop kernels
(the default) and vectorized numpy fallbacks. Set ``FRAMESEEK_NUMBA=0`` to
select the numpy path; ``benchmarks/bench_kernels.py`` times both. The two
paths agree to ~1e-12; they are not required to be bitwise identical.

All kernels work on raw float64 arrays. A "likelihood matrix" is a (T, 2)
array whose row t holds P(observed evidence at t | Y_t = y) for y in {0, 1};
rows of unobserved frames are all ones.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("FRAMESEEK_NUMBA", "1").lower() not in (
    "0",
    "false",
    "off",
)

# Probabilities are clamped into [PROB_FLOOR, 1 - PROB_FLOOR] before any log;
# exact 0 and 1 contribute zero entropy (0 log 0 := 0).
PROB_FLOOR = 1e-12

# Guards divisions when the evidence mass at a step underflows; adding it to a
# healthy normalizer is a no-op in float64.
_TINY = 1e-300


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _entropy_terms_numpy(p: np.ndarray) -> np.ndarray:
    """Per-frame binary cross entropy -(p ln p + (1-p) ln(1-p)), zero at 0/1."""
    pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    h = -(pc * np.log(pc) + (1.0 - pc) * np.log(1.0 - pc))
    h[(p <= 0.0) | (p >= 1.0)] = 0.0
    return h


def posterior_numpy(transition: np.ndarray, initial: np.ndarray, lik: np.ndarray) -> np.ndarray:
    """Scaled forward-backward; returns P(Y_t = 1 | evidence) for every t."""
    T = lik.shape[0]
    alphas = np.empty((T, 2))
    a = initial * lik[0]
    a = a / (a.sum() + _TINY)
    alphas[0] = a
    for t in range(1, T):
        a = (a @ transition) * lik[t]
        a = a / (a.sum() + _TINY)
        alphas[t] = a

    p = np.empty(T)
    b = np.ones(2)
    for t in range(T - 1, -1, -1):
        g = alphas[t] * b
        p[t] = g[1] / (g[0] + g[1] + _TINY)
        if t > 0:
            b = transition @ (lik[t] * b)
            b = b / (b.sum() + _TINY)
    return p


def expected_losses_numpy(
    transition: np.ndarray,
    emission: np.ndarray,
    initial: np.ndarray,
    lik: np.ndarray,
    candidates: np.ndarray,
    belief: np.ndarray,
) -> np.ndarray:
    """Expected post-query mean cross entropy for each candidate frame.

    For candidate q and each observation value x, reruns forward-backward on
    the evidence extended with (q, x) and averages the resulting mean binary
    cross entropy under the predictive P(X_q = x) implied by ``belief[q]``.
    Batched over all (candidate, observation value) pairs.
    """
    T = lik.shape[0]
    n_obs = emission.shape[1]
    m = candidates.shape[0]
    cand = np.repeat(candidates, n_obs)  # (M,)
    obs = np.tile(np.arange(n_obs), m)  # (M,)
    override = emission.T[obs]  # (M, 2) likelihood row at the queried frame

    alphas = np.empty((T, cand.shape[0], 2))
    at_q = cand[:, None] == 0
    a = np.where(at_q, override, lik[0][None, :]) * initial[None, :]
    a = a / (a.sum(axis=1, keepdims=True) + _TINY)
    alphas[0] = a
    for t in range(1, T):
        lt = np.where(cand[:, None] == t, override, lik[t][None, :])
        a = (a @ transition) * lt
        a = a / (a.sum(axis=1, keepdims=True) + _TINY)
        alphas[t] = a

    h_sum = np.zeros(cand.shape[0])
    b = np.ones((cand.shape[0], 2))
    for t in range(T - 1, -1, -1):
        g = alphas[t] * b
        p = g[:, 1] / (g[:, 0] + g[:, 1] + _TINY)
        h_sum += _entropy_terms_numpy(p)
        if t > 0:
            lt = np.where(cand[:, None] == t, override, lik[t][None, :])
            b = (lt * b) @ transition.T
            b = b / (b.sum(axis=1, keepdims=True) + _TINY)

    weights = (1.0 - belief[cand]) * emission[0, obs] + belief[cand] * emission[1, obs]
    return (weights * h_sum / T).reshape(m, n_obs).sum(axis=1)


# ---------------------------------------------------------------------------
# numba implementations (same recursions, explicit loops)
# ---------------------------------------------------------------------------


def _posterior_loops(transition, initial, lik):
    T = lik.shape[0]
    alphas = np.empty((T, 2))
    c = initial[0] * lik[0, 0] + initial[1] * lik[0, 1] + _TINY
    alphas[0, 0] = initial[0] * lik[0, 0] / c
    alphas[0, 1] = initial[1] * lik[0, 1] / c
    for t in range(1, T):
        a0 = (alphas[t - 1, 0] * transition[0, 0] + alphas[t - 1, 1] * transition[1, 0]) * lik[t, 0]
        a1 = (alphas[t - 1, 0] * transition[0, 1] + alphas[t - 1, 1] * transition[1, 1]) * lik[t, 1]
        c = a0 + a1 + _TINY
        alphas[t, 0] = a0 / c
        alphas[t, 1] = a1 / c

    p = np.empty(T)
    b0 = 1.0
    b1 = 1.0
    for t in range(T - 1, -1, -1):
        g0 = alphas[t, 0] * b0
        g1 = alphas[t, 1] * b1
        p[t] = g1 / (g0 + g1 + _TINY)
        if t > 0:
            n0 = transition[0, 0] * lik[t, 0] * b0 + transition[0, 1] * lik[t, 1] * b1
            n1 = transition[1, 0] * lik[t, 0] * b0 + transition[1, 1] * lik[t, 1] * b1
            c = n0 + n1 + _TINY
            b0 = n0 / c
            b1 = n1 / c
    return p


def _expected_losses_loops(transition, emission, initial, lik, candidates, belief):
    T = lik.shape[0]
    n_obs = emission.shape[1]
    m = candidates.shape[0]
    losses = np.zeros(m)
    alphas = np.empty((T, 2))
    for i in range(m):
        q = candidates[i]
        for x in range(n_obs):
            lq0 = emission[0, x]
            lq1 = emission[1, x]

            l0 = lq0 if q == 0 else lik[0, 0]
            l1 = lq1 if q == 0 else lik[0, 1]
            c = initial[0] * l0 + initial[1] * l1 + _TINY
            alphas[0, 0] = initial[0] * l0 / c
            alphas[0, 1] = initial[1] * l1 / c
            for t in range(1, T):
                l0 = lq0 if q == t else lik[t, 0]
                l1 = lq1 if q == t else lik[t, 1]
                a0 = (alphas[t - 1, 0] * transition[0, 0] + alphas[t - 1, 1] * transition[1, 0]) * l0
                a1 = (alphas[t - 1, 0] * transition[0, 1] + alphas[t - 1, 1] * transition[1, 1]) * l1
                c = a0 + a1 + _TINY
                alphas[t, 0] = a0 / c
                alphas[t, 1] = a1 / c

            h_sum = 0.0
            b0 = 1.0
            b1 = 1.0
            for t in range(T - 1, -1, -1):
                g0 = alphas[t, 0] * b0
                g1 = alphas[t, 1] * b1
                p = g1 / (g0 + g1 + _TINY)
                if p > 0.0 and p < 1.0:
                    pc = p
                    if pc < PROB_FLOOR:
                        pc = PROB_FLOOR
                    elif pc > 1.0 - PROB_FLOOR:
                        pc = 1.0 - PROB_FLOOR
                    h_sum += -(pc * math.log(pc) + (1.0 - pc) * math.log(1.0 - pc))
                if t > 0:
                    l0 = lq0 if q == t else lik[t, 0]
                    l1 = lq1 if q == t else lik[t, 1]
                    n0 = transition[0, 0] * l0 * b0 + transition[0, 1] * l1 * b1
                    n1 = transition[1, 0] * l0 * b0 + transition[1, 1] * l1 * b1
                    c = n0 + n1 + _TINY
                    b0 = n0 / c
                    b1 = n1 / c

            weight = (1.0 - belief[q]) * emission[0, x] + belief[q] * emission[1, x]
            losses[i] += weight * h_sum / T
    return losses


if HAVE_NUMBA:
    posterior_numba = numba.njit(cache=True)(_posterior_loops)
    expected_losses_numba = numba.njit(cache=True)(_expected_losses_loops)

if USE_NUMBA:
    posterior_kernel = posterior_numba
    expected_losses_kernel = expected_losses_numba
else:
    posterior_kernel = posterior_numpy
    expected_losses_kernel = expected_losses_numpy
