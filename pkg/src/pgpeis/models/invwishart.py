"""Inverted-Wishart model for realized covariance matrices.

    Y_t ~ IW_q(nu, Sigma_t),   Sigma_t = H D_t H',   D_t = diag(exp(x_t)),
    x_{l,t} = mu_l + delta_l (x_{l,t-1} - mu_l) + sigma_l eps_{l,t}.

H is unit lower triangular with free sub-diagonal column blocks h~_l. Given
theta the log density splits into q scalar terms in x_{l,t} with auxiliary
observations y~_{l,t} = h_l' Y_t^{-1} h_l, so each state process is handled
as its own scalar component.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import stats
from scipy.special import gammaln

from ..ssm import StateSpaceModel
from .base import Model, ar1_delta_mh, inv_chi2

LOG_2 = float(np.log(2.0))
LOG_PI = float(np.log(np.pi))


@nb.njit(cache=True)
def log_g(ytilde, x, theta):
    # x-dependent part of the factorised IW density, theta = (nu, mu, delta, sigma)
    return 0.5 * theta[0] * x - 0.5 * ytilde * np.exp(x)


@nb.njit(cache=True)
def log_g_derivs(ytilde, x, theta):
    e = 0.5 * ytilde * np.exp(x)
    return 0.5 * theta[0] - e, -e


@nb.njit(cache=True)
def transition(x_prev, theta):
    mu, d, s = theta[1], theta[2], theta[3]
    return mu + d * (x_prev - mu), s * s


@nb.njit(cache=True)
def initial(theta, y):
    d, s = theta[2], theta[3]
    return theta[1], s * s / (1.0 - d * d)


def n_free(q: int) -> int:
    return q * (q - 1) // 2


@dataclass(frozen=True)
class IwParams:
    nu: float
    mu: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    h: np.ndarray  # free entries of H, column by column (h~_1, h~_2, ...)

    def __post_init__(self):
        for name in ("mu", "delta", "sigma", "h"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        q = self.q
        if not (self.delta.shape == self.sigma.shape == (q,) and self.h.shape == (n_free(q),)):
            raise ValueError("inconsistent IW parameter shapes")
        if not (self.nu > q + 1 and np.all(np.abs(self.delta) < 1) and np.all(self.sigma > 0)):
            raise ValueError("IW parameters outside support")

    @property
    def q(self) -> int:
        return self.mu.shape[0]

    def H(self) -> np.ndarray:
        return build_h(self.h, self.q)

    def names(self) -> tuple[str, ...]:
        q = self.q
        out = ["nu"]
        for ell in range(1, q + 1):
            out += [f"mu_{ell}", f"delta_{ell}", f"sigma_{ell}"]
        for ell in range(1, q):
            out += [f"h_{ell}_{m}" for m in range(1, q - ell + 1)]
        return tuple(out)

    def to_array(self) -> np.ndarray:
        per = np.column_stack((self.mu, self.delta, self.sigma)).ravel()
        return np.concatenate(([self.nu], per, self.h))

    def component_theta(self, ell: int) -> np.ndarray:
        return np.array([self.nu, self.mu[ell], self.delta[ell], self.sigma[ell]])


def build_h(h_free, q: int) -> np.ndarray:
    H = np.eye(q)
    k = 0
    for ell in range(q - 1):
        n = q - ell - 1
        H[ell + 1:, ell] = h_free[k:k + n]
        k += n
    return H


@dataclass(frozen=True)
class IwPrior:
    mu_var: float = 25.0
    h_var: float = 100.0
    sigma_p0: float = 4.0
    sigma_s0: float = 0.25
    nu_step: float = 0.01
    nu_max: float = 200.0

    def nu_grid(self, q: int) -> np.ndarray:
        n = int(round((self.nu_max - (q + 2)) / self.nu_step)) + 1
        return (q + 2) + self.nu_step * np.arange(n)


class DataError(ValueError):
    def __init__(self, t: int, msg: str):
        super().__init__(f"row {t}: {msg}")
        self.t = t


def precompute(Y) -> tuple[np.ndarray, np.ndarray]:
    """Inverses and log-determinants of the (T, q, q) data, checked PD."""
    Y = np.asarray(Y, dtype=np.float64)
    P = np.empty_like(Y)
    logdet = np.empty(Y.shape[0])
    eye = np.eye(Y.shape[1])
    for t in range(Y.shape[0]):
        try:
            L = np.linalg.cholesky(Y[t])
        except np.linalg.LinAlgError:
            raise DataError(t, "matrix is not positive definite") from None
        Li = np.linalg.solve(L, eye)
        P[t] = Li.T @ Li
        logdet[t] = 2.0 * np.log(np.diag(L)).sum()
    return P, logdet


def ytilde(P, H) -> np.ndarray:
    """(q, T) auxiliary observations h_l' Y_t^{-1} h_l."""
    return np.einsum("il,tij,jl->lt", H, P, H)


def iw_log_g(Y, Sigma, nu: float) -> float:
    """Full log IW_q(nu, Sigma) density at Y."""
    Y = np.asarray(Y, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    q = Y.shape[0]
    try:
        Ly = np.linalg.cholesky(Y)
        Ls = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise DataError(-1, "matrix is not positive definite") from None
    ldy = 2.0 * np.log(np.diag(Ly)).sum()
    lds = 2.0 * np.log(np.diag(Ls)).sum()
    tr = np.trace(np.linalg.solve(Y, Sigma))
    lnorm = 0.5 * nu * q * LOG_2 + 0.25 * q * (q - 1) * LOG_PI + gammaln(0.5 * (nu + 1 - np.arange(1, q + 1))).sum()
    return float(0.5 * nu * lds - 0.5 * (nu + q + 1) * ldy - 0.5 * tr - lnorm)


def simulate(params: IwParams, T: int, seed):
    """States (q, T) and matrices (T, q, q)."""
    rng = np.random.default_rng(seed)
    q = params.q
    x = np.empty((q, T))
    x[:, 0] = params.mu + params.sigma / np.sqrt(1 - params.delta ** 2) * rng.standard_normal(q)
    for t in range(1, T):
        x[:, t] = params.mu + params.delta * (x[:, t - 1] - params.mu) + params.sigma * rng.standard_normal(q)
    H = params.H()
    Y = np.empty((T, q, q))
    for t in range(T):
        S = (H * np.exp(x[:, t])) @ H.T
        Y[t] = stats.invwishart.rvs(df=params.nu, scale=S, random_state=rng)
    return x, Y


def sample_mu(x, delta, sigma, prior: IwPrior, rng) -> float:
    prec = ((1 - delta ** 2) + (len(x) - 1) * (1 - delta) ** 2) / sigma ** 2 + 1.0 / prior.mu_var
    lin = ((1 - delta ** 2) * x[0] + (1 - delta) * np.sum(x[1:] - delta * x[:-1])) / sigma ** 2
    return float(lin / prec + rng.standard_normal() / np.sqrt(prec))


def sample_h(states, P, prior: IwPrior, rng) -> np.ndarray:
    """Columns h~_l are conditionally independent Gaussians given the states."""
    q = P.shape[1]
    out = []
    for ell in range(q - 1):
        w = np.exp(states[ell])
        lo = slice(ell + 1, q)
        prec = np.einsum("t,tij->ij", w, P[:, lo, lo]) + np.eye(q - ell - 1) / prior.h_var
        lin = -np.einsum("t,ti->i", w, P[:, lo, ell])
        L = np.linalg.cholesky(prec)
        mean = np.linalg.solve(prec, lin)
        out.append(mean + np.linalg.solve(L.T, rng.standard_normal(q - ell - 1)))
    return np.concatenate(out) if out else np.zeros(0)


def sample_sigma(x, mu, delta, prior: IwPrior, rng) -> float:
    z = x - mu
    ss = (1 - delta ** 2) * z[0] ** 2 + np.sum((z[1:] - delta * z[:-1]) ** 2)
    return float(np.sqrt(inv_chi2(rng, prior.sigma_p0 * prior.sigma_s0 + ss, prior.sigma_p0 + len(x))))


def nu_log_conditional(states, logdet, grid) -> np.ndarray:
    q, T = states.shape
    a = states.sum() - logdet.sum() - T * q * LOG_2
    ell = np.arange(1, q + 1)
    lg = gammaln(0.5 * (np.asarray(grid)[:, None] + 1 - ell)).sum(axis=1)
    return 0.5 * np.asarray(grid) * a - T * lg


def sample_nu(states, logdet, prior: IwPrior, rng) -> float:
    grid = prior.nu_grid(states.shape[0])
    lp = nu_log_conditional(states, logdet, grid)
    p = np.exp(lp - lp.max())
    cdf = np.cumsum(p)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return float(grid[min(k, len(grid) - 1)])


def _uniform_log_prior(d):
    return 0.0


class InvWishartModel(Model):
    name = "invwishart"

    def __init__(self, Y, prior: IwPrior | None = None):
        self.Y = np.asarray(Y, dtype=np.float64)
        if self.Y.ndim != 3 or self.Y.shape[1] != self.Y.shape[2]:
            raise ValueError("IW data must have shape (T, q, q)")
        self.prior = prior or IwPrior()
        self.P, self.logdet = precompute(self.Y)

    @property
    def T(self) -> int:
        return self.Y.shape[0]

    @property
    def q(self) -> int:
        return self.Y.shape[1]

    @property
    def n_components(self) -> int:
        return self.q

    @property
    def param_names(self) -> tuple[str, ...]:
        q = self.q
        dummy = IwParams(q + 2.0, np.zeros(q), np.zeros(q), np.ones(q), np.zeros(n_free(q)))
        return dummy.names()

    def components(self, params: IwParams):
        yt = ytilde(self.P, params.H())
        return [StateSpaceModel(yt[ell], params.component_theta(ell), log_g, transition,
                                initial, log_g_derivs, f"invwishart[{ell}]")
                for ell in range(self.q)]

    def sample_params(self, params: IwParams, states, rng) -> IwParams:
        states = np.asarray(states, dtype=np.float64)
        q, prior = self.q, self.prior
        mu = np.array([sample_mu(states[l], params.delta[l], params.sigma[l], prior, rng) for l in range(q)])
        h = sample_h(states, self.P, prior, rng)
        sigma = np.array([sample_sigma(states[l], mu[l], params.delta[l], prior, rng) for l in range(q)])
        delta = np.array([ar1_delta_mh(states[l], mu[l], sigma[l], params.delta[l],
                                       _uniform_log_prior, rng)[0] for l in range(q)])
        nu = sample_nu(states, self.logdet, prior, rng)
        return IwParams(nu, mu, delta, sigma, h)

    def flatten(self, params: IwParams) -> np.ndarray:
        return params.to_array()

    def unflatten(self, values) -> IwParams:
        v = np.asarray(values, dtype=np.float64)
        q = self.q
        per = v[1:1 + 3 * q].reshape(q, 3)
        return IwParams(float(v[0]), per[:, 0], per[:, 1], per[:, 2], v[1 + 3 * q:])
