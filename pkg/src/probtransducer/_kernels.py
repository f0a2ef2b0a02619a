"""Compiled inner loop of the Gibbs sampler."""

import math

import numpy as np
from numba import njit

_CUTOFF = -40.0


@njit(cache=True, nogil=True)
def assign_and_tally(y, classes, log_w, log_alpha, mu, prec, u, z, counts, class_tally, sum_y, sum_yy):
    """Resample every latent assignment and accumulate sufficient statistics.

    ``u`` holds one uniform draw per record; record i goes to the first
    component whose cumulative normalized probability exceeds ``u[i]``.
    Statistics arrays are overwritten.
    """
    n, d = y.shape
    K = log_w.shape[0]
    counts[:] = 0
    class_tally[:, :] = 0
    sum_y[:, :] = 0.0
    sum_yy[:, :] = 0.0
    base = np.empty(K)
    for k in range(K):
        acc = log_w[k]
        for j in range(d):
            acc += 0.5 * math.log(prec[k, j])
        base[k] = acc
    lp = np.empty(K)
    for i in range(n):
        c = classes[i]
        top = -np.inf
        for k in range(K):
            v = base[k] + log_alpha[k, c]
            for j in range(d):
                r = y[i, j] - mu[k, j]
                v -= 0.5 * prec[k, j] * r * r
            lp[k] = v
            if v > top:
                top = v
        total = 0.0
        for k in range(K):
            gap = lp[k] - top
            # below double precision relative to the leading term
            e = math.exp(gap) if gap > _CUTOFF else 0.0
            lp[k] = e
            total += e
        target = u[i] * total
        chosen = K - 1
        run = 0.0
        for k in range(K):
            run += lp[k]
            if run > target and lp[k] > 0.0:
                chosen = k
                break
        while lp[chosen] == 0.0:
            chosen -= 1
        z[i] = chosen
        counts[chosen] += 1
        class_tally[chosen, c] += 1
        for j in range(d):
            sum_y[chosen, j] += y[i, j]
            sum_yy[chosen, j] += y[i, j] * y[i, j]
