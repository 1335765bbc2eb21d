"""Exact lattice dynamic program for the weighted-TV proximal subproblem."""
import numba
import numpy as np


@numba.njit(cache=True)
def prox_lattice(u, mu, c, w, d, n_levels, top):
    """Minimize sum_i w_i |v_{i+1}-v_i| + sum_i (mu_i v_i + c_i/2 (v_i - u_i)^2) on v_i in d*Z.

    v_0 = 0 and v_N = d*top are fixed; interior nodes range over levels 0..n_levels-1.
    The L1 coupling is handled by a forward and a backward running-minimum sweep.
    """
    N = u.shape[0] - 1
    F = np.full(n_levels, np.inf)
    F[0] = 0.0
    arg = np.zeros((N + 1, n_levels), np.int32)
    G = np.empty(n_levels)
    idx = np.empty(n_levels, np.int32)
    for i in range(1, N + 1):
        ww = w[i - 1] * d
        best = np.inf
        bi = 0
        for l in range(n_levels):
            val = F[l] - ww * l
            if val < best:
                best = val
                bi = l
            G[l] = best + ww * l
            idx[l] = bi
        best = np.inf
        bi = n_levels - 1
        for l in range(n_levels - 1, -1, -1):
            val = F[l] + ww * l
            if val < best:
                best = val
                bi = l
            g2 = best - ww * l
            if g2 < G[l]:
                G[l] = g2
                idx[l] = bi
        for l in range(n_levels):
            arg[i, l] = idx[l]
            if i < N:
                lam = d * l
                F[l] = G[l] + lam * mu[i] + 0.5 * c[i] * (lam - u[i]) ** 2
            else:
                F[l] = G[l]
    v = np.zeros(N + 1)
    v[N] = d * top
    cur = top
    for i in range(N, 0, -1):
        cur = arg[i, cur]
        v[i - 1] = d * cur
    return v


@numba.njit(cache=True)
def march(v, w):
    """Impose w_i e^{-u_i} = w_{i-1} e^{-u_{i-1}} where the outgoing edge rises.

    A flat incoming edge followed by a rising one is never stationary while the area
    grows, so such nodes are moved as well; genuine plateau ends have w_i <= w_{i-1}.
    """
    u = v.copy()
    for i in range(1, v.shape[0] - 1):
        if v[i] >= v[i - 1] and v[i + 1] > v[i] and w[i] > w[i - 1]:
            u[i] = u[i - 1] + np.log(w[i] / w[i - 1])
    return u
