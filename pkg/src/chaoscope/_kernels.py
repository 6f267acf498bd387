# Compiled inner loops for long tangent-dynamics runs.
#
# Every kernel evolves one orbit and one tangent vector, renormalizes the
# tangent vector after each step, and records lambda_N = S_{N-1} / N at the
# requested checkpoints, where S_k is the sum of the first k log stretch
# factors (N counts trajectory rows, so N rows carry N-1 tangent steps).
# The state updates mirror dynamics.py operation for operation.
import math

import numba
import numpy as np

# prefer OpenMP over TBB; older TBB builds only emit a warning and fall back anyway
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

TWO_PI = 2.0 * math.pi
# log(0) guard for the logistic derivative at x == 0.5
_TINY = 1e-300


@numba.njit(cache=True, inline="always")
def _wrap(v):
    r = v % 1.0
    if r >= 1.0:
        r = 0.0
    return r


@numba.njit(cache=True, parallel=True)
def standard_lyapunov(p0, x0, K, tangent_scale, d0, z0, checkpoints):
    """lambda_N at each checkpoint for each orbit; checkpoints sorted, >= 2."""
    n = p0.shape[0]
    m = checkpoints.shape[0]
    out = np.empty((n, m))
    kk = K / TWO_PI
    c = K * tangent_scale
    last = checkpoints[m - 1]
    for i in numba.prange(n):
        p = p0[i]
        x = x0[i]
        d = d0[i]
        z = z0[i]
        s = 0.0
        j = 0
        for step in range(1, last):
            d = d + c * z * math.cos(TWO_PI * x)
            z = z + d
            p = _wrap(p + kk * math.sin(TWO_PI * x))
            x = _wrap(x + p)
            nr = math.sqrt(d * d + z * z)
            s += math.log(nr)
            d /= nr
            z /= nr
            # step tangent updates done -> that is row count step+1
            while j < m and checkpoints[j] == step + 1:
                out[i, j] = s / (step + 1)
                j += 1
    return out


@numba.njit(cache=True)
def standard_lyapunov_series(p, x, K, tangent_scale, d, z, N):
    """Full running series lambda_2..lambda_N for one orbit."""
    out = np.empty(N - 1)
    kk = K / TWO_PI
    c = K * tangent_scale
    s = 0.0
    nr0 = math.sqrt(d * d + z * z)
    d /= nr0
    z /= nr0
    for step in range(1, N):
        d = d + c * z * math.cos(TWO_PI * x)
        z = z + d
        p = _wrap(p + kk * math.sin(TWO_PI * x))
        x = _wrap(x + p)
        nr = math.sqrt(d * d + z * z)
        s += math.log(nr)
        d /= nr
        z /= nr
        out[step - 1] = s / (step + 1)
    return out


@numba.njit(cache=True, parallel=True)
def logistic_lyapunov(x0, r, checkpoints, floor):
    n = x0.shape[0]
    m = checkpoints.shape[0]
    out = np.empty((n, m))
    last = checkpoints[m - 1]
    for i in numba.prange(n):
        x = x0[i]
        s = 0.0
        j = 0
        for step in range(1, last):
            g = abs(r * (1.0 - 2.0 * x))
            if floor and g < _TINY:
                g = _TINY
            s += math.log(g)
            x = r * x * (1.0 - x)
            if x > 1.0:
                x = 1.0
            elif x < 0.0:
                x = 0.0
            while j < m and checkpoints[j] == step + 1:
                out[i, j] = s / (step + 1)
                j += 1
    return out


@numba.njit(cache=True)
def logistic_lyapunov_series(x, r, N):
    out = np.empty(N - 1)
    s = 0.0
    for step in range(1, N):
        s += math.log(abs(r * (1.0 - 2.0 * x)))
        x = r * x * (1.0 - x)
        if x > 1.0:
            x = 1.0
        elif x < 0.0:
            x = 0.0
        out[step - 1] = s / (step + 1)
    return out


@numba.njit(cache=True, inline="always")
def _lorenz_tangent(X, Y, Z, v0, v1, v2, s, r, b, D, printed):
    n0 = (1.0 - s * D) * v0 + s * D * v1
    if printed:
        n1 = (r * D - D * Z) * v0 + v1 + (-D * X - D) * v2
    else:
        n1 = (r * D - D * Z) * v0 + (1.0 - D) * v1 + (-D * X) * v2
    n2 = D * Y * v0 + D * X * v1 + (1.0 - b * D) * v2
    return n0, n1, n2


@numba.njit(cache=True, inline="always")
def _lorenz_state(X, Y, Z, s, r, b, D, printed):
    Xn = X + s * D * (Y - X)
    if printed:
        Yn = Y + r * D * X - D * X * Z - D * Z
    else:
        Yn = Y + D * (r * X - X * Z - Y)
    Zn = Z + D * X * Y - b * D * Z
    return Xn, Yn, Zn


@numba.njit(cache=True, parallel=True)
def lorenz_lyapunov(S0, s, r, b, D, printed, v_init, checkpoints):
    n = S0.shape[0]
    m = checkpoints.shape[0]
    out = np.empty((n, m))
    last = checkpoints[m - 1]
    for i in numba.prange(n):
        X = S0[i, 0]
        Y = S0[i, 1]
        Z = S0[i, 2]
        v0 = v_init[i, 0]
        v1 = v_init[i, 1]
        v2 = v_init[i, 2]
        acc = 0.0
        j = 0
        for step in range(1, last):
            v0, v1, v2 = _lorenz_tangent(X, Y, Z, v0, v1, v2, s, r, b, D, printed)
            X, Y, Z = _lorenz_state(X, Y, Z, s, r, b, D, printed)
            nr = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
            acc += math.log(nr)
            v0 /= nr
            v1 /= nr
            v2 /= nr
            while j < m and checkpoints[j] == step + 1:
                out[i, j] = acc / (step + 1)
                j += 1
    return out


@numba.njit(cache=True)
def lorenz_lyapunov_series(X, Y, Z, s, r, b, D, printed, v0, v1, v2, N):
    out = np.empty(N - 1)
    acc = 0.0
    nr0 = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    v0 /= nr0
    v1 /= nr0
    v2 /= nr0
    for step in range(1, N):
        v0, v1, v2 = _lorenz_tangent(X, Y, Z, v0, v1, v2, s, r, b, D, printed)
        X, Y, Z = _lorenz_state(X, Y, Z, s, r, b, D, printed)
        nr = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
        acc += math.log(nr)
        v0 /= nr
        v1 /= nr
        v2 /= nr
        out[step - 1] = acc / (step + 1)
    return out
