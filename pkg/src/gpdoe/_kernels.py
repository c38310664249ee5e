"""Compiled profiled log-likelihood used inside the hyperparameter search.

Mirrors ``gp._Likelihood.solve`` (which stays the reference path): the
correlation matrix, a Cholesky factorization, whitening of the trend basis
and outputs, a Gram-Schmidt QR for the GLS trend, then the profiled
variance and log-determinant. Returns -inf when the matrix is not
numerically positive definite.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_LOG_2PI = math.log(2.0 * math.pi)


def _loglik(log_absdiff, pair_i, pair_j, n, theta, p, nugget, f, y):
    npairs = log_absdiff.shape[0]
    d = log_absdiff.shape[1]
    r = np.empty((n, n))
    for a in range(n):
        r[a, a] = 1.0 + nugget
    for q in range(npairs):
        s = 0.0
        for l in range(d):
            if theta[l] > 0.0:
                s += theta[l] * math.exp(p[l] * log_absdiff[q, l])
        v = math.exp(-s)
        r[pair_i[q], pair_j[q]] = v
        r[pair_j[q], pair_i[q]] = v

    # in-place lower Cholesky
    for j in range(n):
        s = r[j, j]
        for k in range(j):
            s -= r[j, k] * r[j, k]
        if not s > 0.0:
            return -np.inf, 0.0
        ljj = math.sqrt(s)
        r[j, j] = ljj
        for i in range(j + 1, n):
            s = r[i, j]
            for k in range(j):
                s -= r[i, k] * r[j, k]
            r[i, j] = s / ljj

    m = f.shape[1]
    ft = np.empty((n, m))
    yt = np.empty(n)
    for i in range(n):
        for c in range(m):
            s = f[i, c]
            for k in range(i):
                s -= r[i, k] * ft[k, c]
            ft[i, c] = s / r[i, i]
        s = y[i]
        for k in range(i):
            s -= r[i, k] * yt[k]
        yt[i] = s / r[i, i]

    # modified Gram-Schmidt: project yt off the column space of ft
    for c in range(m):
        nrm = 0.0
        for i in range(n):
            nrm += ft[i, c] * ft[i, c]
        nrm = math.sqrt(nrm)
        if nrm == 0.0:
            continue
        for i in range(n):
            ft[i, c] /= nrm
        for c2 in range(c + 1, m):
            dot = 0.0
            for i in range(n):
                dot += ft[i, c] * ft[i, c2]
            for i in range(n):
                ft[i, c2] -= dot * ft[i, c]
        dot = 0.0
        for i in range(n):
            dot += ft[i, c] * yt[i]
        for i in range(n):
            yt[i] -= dot * ft[i, c]

    sigma2 = 0.0
    logdet = 0.0
    for i in range(n):
        sigma2 += yt[i] * yt[i]
        logdet += 2.0 * math.log(r[i, i])
    sigma2 /= n
    ll = -0.5 * n * math.log(max(sigma2, 1e-300)) - 0.5 * logdet - 0.5 * n * (1.0 + _LOG_2PI)
    return ll, sigma2


if numba is not None:
    loglik = numba.njit(cache=True, nogil=True)(_loglik)
else:  # pragma: no cover
    loglik = _loglik
