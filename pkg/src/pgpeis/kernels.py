"""Compiled inner loops shared by the smc and eis modules.

Everything here is numba-jitted and takes the model's scalar functions as
arguments. Indices are 0-based; particle 0 is the reference in conditional
runs. Kernels taking function arguments are not disk-cached: numba's cache
index cannot be re-saved once it holds first-class function signatures from
an earlier process, so these compile once per process and model.
"""
import numba as nb
import numpy as np

from .ssm import normal_logpdf

BPF = 0
PEIS = 1

OK = 0
DEGENERATE = 1
NAN_DENSITY = 2


@nb.njit(cache=True)
def effective_coefficients(var, c1, c2, eps_var):
    """Kernel coefficients actually used for a transition with variance ``var``.

    Where the fitted kernel is not normalisable (1 - 2 c2 var <= eps_var) the
    bootstrap kernel (c = 0) is used for that particle, which keeps the
    proposal and its integrating factor consistent functions of x_{t-1}.
    """
    den = 1.0 - 2.0 * c2 * var
    if den <= eps_var:
        return 0.0, 0.0, 1.0
    return c1, c2, den


@nb.njit(cache=True)
def proposal_moments(mu, var, c1, c2, den):
    v2 = var / den
    m = (mu + var * c1) / den
    return m, v2


@nb.njit(cache=True)
def log_chi(mu, var, c1, c2, den):
    """log of the integral of N(x | mu, var) exp(c1 x + c2 x^2) over x."""
    return -0.5 * np.log(den) + (mu * c1 + c2 * mu * mu + 0.5 * c1 * c1 * var) / den


@nb.njit(cache=True)
def _inverse_cdf(cum, u):
    # first index j with cum[j] > u * cum[-1]
    target = u * cum[cum.shape[0] - 1]
    lo = 0
    hi = cum.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > target:
            hi = mid
        else:
            lo = mid + 1
    return lo


@nb.njit(cache=True)
def inverse_cdf_draws(weights, uniforms):
    cum = np.cumsum(weights)
    out = np.empty(uniforms.shape[0], dtype=np.int64)
    for i in range(uniforms.shape[0]):
        out[i] = _inverse_cdf(cum, uniforms[i])
    return out


@nb.njit(cache=True)
def _normalize(log_w, W):
    m = -np.inf
    for i in range(log_w.shape[0]):
        if log_w[i] > m:
            m = log_w[i]
    if m == -np.inf:
        return -np.inf
    s = 0.0
    for i in range(log_w.shape[0]):
        W[i] = np.exp(log_w[i] - m)
        s += W[i]
    for i in range(log_w.shape[0]):
        W[i] /= s
    return m + np.log(s)


@nb.njit
def smc_pass(log_g, transition, initial, y, theta, kind, c1, c2,
             normals, uniforms, as_uniforms, resample_after,
             conditional, reference, ancestor_sampling, eps_var):
    """One (conditional) SMC pass with BPF or PEIS proposals.

    Returns particles, log weights, normalized weights, ancestors,
    per-period log weight sums, a status code and the (t, i) location of a
    failure.
    """
    T, N = normals.shape
    X = np.empty((T, N))
    LW = np.full((T, N), -np.inf)
    W = np.zeros((T, N))
    A = np.empty((max(T - 1, 0), N), dtype=np.int64)
    log_sums = np.full(T, -np.inf)
    logprev = np.full(N, -np.log(N))
    parent = np.empty(N, dtype=np.int64)
    start = 1 if conditional else 0

    for t in range(T):
        if t == 0:
            mu0, var0 = initial(theta, y)
        else:
            if resample_after[t - 1]:
                cum = np.cumsum(W[t - 1])
                for i in range(start, N):
                    parent[i] = _inverse_cdf(cum, uniforms[t - 1, i])
                if conditional:
                    parent[0] = 0
                    if ancestor_sampling:
                        las = np.empty(N)
                        for j in range(N):
                            if W[t - 1, j] > 0.0:
                                mu, var = transition(X[t - 1, j], theta)
                                las[j] = np.log(W[t - 1, j]) + normal_logpdf(reference[t], mu, var)
                                if kind == PEIS:
                                    e1, e2, den = effective_coefficients(var, c1[t], c2[t], eps_var)
                                    las[j] -= log_chi(mu, var, e1, e2, den)
                            else:
                                las[j] = -np.inf
                        Was = np.empty(N)
                        if _normalize(las, Was) == -np.inf:
                            return X, LW, W, A, log_sums, DEGENERATE, t, 0
                        parent[0] = _inverse_cdf(np.cumsum(Was), as_uniforms[t])
                for i in range(N):
                    logprev[i] = -np.log(N)
            else:
                for i in range(N):
                    parent[i] = i
                    logprev[i] = np.log(W[t - 1, i])
            for i in range(N):
                A[t - 1, i] = parent[i]

        for i in range(N):
            e1 = 0.0
            e2 = 0.0
            if t == 0:
                mu, var = mu0, var0
            else:
                mu, var = transition(X[t - 1, parent[i]], theta)
            if kind == PEIS:
                e1, e2, den = effective_coefficients(var, c1[t], c2[t], eps_var)
                m, v2 = proposal_moments(mu, var, e1, e2, den)
            else:
                m, v2 = mu, var
            if conditional and i == 0:
                x = reference[t]
            else:
                x = m + np.sqrt(v2) * normals[t, i]
            X[t, i] = x
            inc = log_g(y[t], x, theta)
            if kind == PEIS:
                if t < T - 1:
                    mu_n, var_n = transition(x, theta)
                    f1, f2, fden = effective_coefficients(var_n, c1[t + 1], c2[t + 1], eps_var)
                    inc = inc + log_chi(mu_n, var_n, f1, f2, fden)
                inc = inc - (e1 * x + e2 * x * x)
            if np.isnan(inc) or np.isnan(x):
                return X, LW, W, A, log_sums, NAN_DENSITY, t, i
            LW[t, i] = logprev[i] + inc
        log_sums[t] = _normalize(LW[t], W[t])
        if log_sums[t] == -np.inf:
            return X, LW, W, A, log_sums, DEGENERATE, t, -1
    return X, LW, W, A, log_sums, OK, -1, -1


@nb.njit
def expansion_points(log_g_derivs, transition, initial, y, theta, max_iter):
    """Per-period maximiser of log g(y_t | x) - (x - m_t)^2 / (2 s^2) by
    damped Newton steps, m_t the prior mean path, s^2 the initial variance."""
    T = y.shape[0]
    m = np.empty(T)
    m0, s2 = initial(theta, y)
    m[0] = m0
    for t in range(1, T):
        m[t] = transition(m[t - 1], theta)[0]
    step_max = 3.0 * np.sqrt(s2)
    x = m.copy()
    for t in range(T):
        for _ in range(max_iter):
            d1, d2 = log_g_derivs(y[t], x[t], theta)
            hess = min(d2, 0.0) - 1.0 / s2
            step = -(d1 - (x[t] - m[t]) / s2) / hess
            step = max(-step_max, min(step_max, step))
            x[t] += step
            if abs(step) < 1e-10:
                break
    return x


@nb.njit(cache=True)
def _sym3_eigvals(a, b, c, d, e, f):
    """Eigenvalues of [[a, d, f], [d, b, e], [f, e, c]] (trigonometric method)."""
    p1 = d * d + e * e + f * f
    q = (a + b + c) / 3.0
    if p1 == 0.0:
        return min(a, min(b, c)), max(a, max(b, c))
    p2 = (a - q) ** 2 + (b - q) ** 2 + (c - q) ** 2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    if p == 0.0:
        return q, q
    ba, bb, bc = (a - q) / p, (b - q) / p, (c - q) / p
    bd, be, bf = d / p, e / p, f / p
    r = 0.5 * (ba * (bb * bc - be * be) - bd * (bd * bc - be * bf) + bf * (bd * be - bb * bf))
    r = min(max(r, -1.0), 1.0)
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    return lo, hi


@nb.njit(cache=True)
def _regress_quadratic(x, r, cond_max, ridge_scale):
    """OLS of r on (1, x, x^2) using standardised regressors.

    The 3x3 normal equations are formed and solved in closed form. Returns
    (c1, c2, r2, max_abs_residual, used_ridge).
    """
    R = x.shape[0]
    xm = 0.0
    for i in range(R):
        xm += x[i]
    xm /= R
    s = 0.0
    for i in range(R):
        s += (x[i] - xm) ** 2
    s = np.sqrt(s / R)
    if not s > 0.0:
        s = 1.0
    s1 = s2 = s3 = s4 = 0.0
    b0 = b1 = b2 = 0.0
    for i in range(R):
        z = (x[i] - xm) / s
        z2 = z * z
        s1 += z
        s2 += z2
        s3 += z2 * z
        s4 += z2 * z2
        b0 += r[i]
        b1 += z * r[i]
        b2 += z2 * r[i]
    # M = [[R, s1, s2], [s1, s2, s3], [s2, s3, s4]]
    m00, m11, m22, m01, m12, m02 = float(R), s2, s4, s1, s3, s2
    lo, hi = _sym3_eigvals(m00, m11, m22, m01, m12, m02)
    used_ridge = False
    if not lo > 0.0 or hi / lo > cond_max:
        lam = ridge_scale * (m00 + m11 + m22) / 3.0
        m00 += lam
        m11 += lam
        m22 += lam
        used_ridge = True
    # adjugate inverse of the symmetric 3x3 matrix
    i00 = m11 * m22 - m12 * m12
    i01 = m02 * m12 - m01 * m22
    i02 = m01 * m12 - m02 * m11
    i11 = m00 * m22 - m02 * m02
    i12 = m01 * m02 - m00 * m12
    i22 = m00 * m11 - m01 * m01
    det = m00 * i00 + m01 * i01 + m02 * i02
    g0 = (i00 * b0 + i01 * b1 + i02 * b2) / det
    g1 = (i01 * b0 + i11 * b1 + i12 * b2) / det
    g2 = (i02 * b0 + i12 * b1 + i22 * b2) / det
    rm = b0 / R
    sst = 0.0
    ssr = 0.0
    maxres = 0.0
    for i in range(R):
        z = (x[i] - xm) / s
        e = r[i] - (g0 + g1 * z + g2 * z * z)
        sst += (r[i] - rm) ** 2
        ssr += e * e
        if abs(e) > maxres:
            maxres = abs(e)
    r2 = 1.0 - ssr / sst if sst > 0.0 else 1.0
    c2 = g2 / (s * s)
    c1 = g1 / s - 2.0 * g2 * xm / (s * s)
    return c1, c2, r2, maxres, used_ridge


@nb.njit
def simulate_eis_paths(transition, initial, y, theta, c1, c2, U, eps_var):
    """Draw R trajectories from q(.; c) driven by the normals U (T, R).

    Also returns the transition variance each draw was generated under.
    """
    T, R = U.shape
    X = np.empty((T, R))
    V = np.empty((T, R))
    mu0, var0 = initial(theta, y)
    for t in range(T):
        for r in range(R):
            if t == 0:
                mu, var = mu0, var0
            else:
                mu, var = transition(X[t - 1, r], theta)
            e1, e2, den = effective_coefficients(var, c1[t], c2[t], eps_var)
            m, v2 = proposal_moments(mu, var, e1, e2, den)
            X[t, r] = m + np.sqrt(v2) * U[t, r]
            V[t, r] = var
    return X, V


@nb.njit
def fit_eis_kernel(log_g, transition, initial, y, theta, c1_init, c2_init, U,
                   n_iter, eps_var, eps_adm, cond_max, ridge_scale):
    T, R = U.shape
    c1 = c1_init.copy()
    c2 = c2_init.copy()
    r2 = np.ones(T)
    maxres = np.zeros(T)
    mean_r2 = np.empty(n_iter)
    n_clamped = 0
    n_ridge = 0
    n_kept = 0
    resp = np.empty(R)
    for it in range(n_iter):
        X, V = simulate_eis_paths(transition, initial, y, theta, c1, c2, U, eps_var)
        n1 = np.empty(T)
        n2 = np.empty(T)
        for t in range(T - 1, -1, -1):
            for r in range(R):
                resp[r] = log_g(y[t], X[t, r], theta)
                if t < T - 1:
                    mu_n, var_n = transition(X[t, r], theta)
                    f1, f2, fden = effective_coefficients(var_n, n1[t + 1], n2[t + 1], eps_var)
                    resp[r] += log_chi(mu_n, var_n, f1, f2, fden)
            a1, a2, rsq, mres, ridged = _regress_quadratic(X[t], resp, cond_max, ridge_scale)
            if ridged:
                n_ridge += 1
            if not (np.isfinite(a1) and np.isfinite(a2)):
                # overflowing responses: keep this period's previous kernel
                a1 = c1[t]
                a2 = c2[t]
                rsq = np.nan
                mres = np.nan
                n_kept += 1
            vmax = 0.0
            for r in range(R):
                if V[t, r] > vmax:
                    vmax = V[t, r]
            if 1.0 - 2.0 * a2 * vmax <= eps_var:
                a2 = (1.0 - eps_adm) / (2.0 * vmax)
                n_clamped += 1
            n1[t] = a1
            n2[t] = a2
            r2[t] = rsq
            maxres[t] = mres
        c1 = n1
        c2 = n2
        mean_r2[it] = np.nanmean(r2)
    return c1, c2, r2, maxres, mean_r2, n_clamped, n_ridge, n_kept
