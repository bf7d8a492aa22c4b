"""Euler-discretised CEV short-rate model observed with noise.

    y_t = x_t + sigma_y eta_t,
    x_t = x_{t-1} + Delta (alpha - beta x_{t-1}) + sigma_x x_{t-1}^gamma sqrt(Delta) eps_t,
    x_1 ~ N(y_1, 0.01^2),   Delta = 1/252.

The power x^gamma is evaluated at max(x, X_MIN) so that paths wandering
below zero keep a proper transition density.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..ssm import LOG_2PI, StateSpaceModel
from .base import Model, inv_chi2

log = logging.getLogger(__name__)

DELTA = 1.0 / 252.0
X_MIN = 1e-8
X1_SD = 0.01


@nb.njit(cache=True)
def log_g(y, x, theta):
    s2 = theta[4] * theta[4]
    d = y - x
    return -0.5 * (LOG_2PI + np.log(s2) + d * d / s2)


@nb.njit(cache=True)
def log_g_derivs(y, x, theta):
    s2 = theta[4] * theta[4]
    return (y - x) / s2, -1.0 / s2


@nb.njit(cache=True)
def transition(x_prev, theta):
    alpha, beta, sx, gamma, dt, xmin = theta[0], theta[1], theta[2], theta[3], theta[5], theta[6]
    xp = x_prev if x_prev > xmin else xmin
    return x_prev + dt * (alpha - beta * x_prev), sx * sx * xp ** (2.0 * gamma) * dt


@nb.njit(cache=True)
def initial(theta, y):
    return y[0], theta[7] * theta[7]


@dataclass(frozen=True)
class CevParams:
    alpha: float
    beta: float
    sigma_x: float
    gamma: float
    sigma_y: float

    names = ("alpha", "beta", "sigma_x", "gamma", "sigma_y")

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0 and 0 <= self.gamma <= 4):
            raise ValueError(f"CEV parameters outside support: {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.sigma_x, self.gamma, self.sigma_y,
                         DELTA, X_MIN, X1_SD])


ML_PARAMS = CevParams(0.0097, 0.1656, 0.4250, 1.201, 0.0005)


@dataclass(frozen=True)
class CevPrior:
    """N(0, var) on alpha and beta, uniform gamma on a grid over [0, 4],
    1/sigma^2 on both variances."""

    coef_var: float = 1000.0
    gamma_grid: tuple = (0.0, 4.0, 400)

    def grid(self) -> np.ndarray:
        lo, hi, n = self.gamma_grid
        return np.linspace(lo, hi, int(n))


def make_model(y, params: CevParams) -> StateSpaceModel:
    return StateSpaceModel(np.asarray(y, dtype=np.float64), params.to_array(),
                           log_g, transition, initial, log_g_derivs, "cev")


def simulate(params: CevParams, T: int, seed, x1: float | None = None):
    """Simulate (x, y); x_1 defaults to the drift's fixed point alpha / beta."""
    rng = np.random.default_rng(seed)
    th = params.to_array()
    x = np.empty(T)
    x[0] = params.alpha / params.beta if x1 is None else x1
    for t in range(1, T):
        mu, var = transition(x[t - 1], th)
        x[t] = mu + np.sqrt(var) * rng.standard_normal()
    y = x + params.sigma_y * rng.standard_normal(T)
    return x, y


def _design(x, gamma):
    """Regression form z_t = alpha a_t + beta b_t + sigma_x e_t, t >= 2."""
    xp = np.maximum(x[:-1], X_MIN)
    s = np.sqrt(DELTA) * xp ** gamma
    z = (x[1:] - x[:-1]) / s
    D = np.column_stack((DELTA / s, -DELTA * x[:-1] / s))
    return z, D


def sample_drift(x, sigma_x, gamma, prior: CevPrior, rng) -> tuple[float, float]:
    z, D = _design(x, gamma)
    prec = D.T @ D / sigma_x ** 2 + np.eye(2) / prior.coef_var
    L = np.linalg.cholesky(prec)
    mean = np.linalg.solve(prec, D.T @ z / sigma_x ** 2)
    draw = mean + np.linalg.solve(L.T, rng.standard_normal(2))
    return float(draw[0]), float(draw[1])


def sample_sigma_x(x, alpha, beta, gamma, rng) -> float:
    z, D = _design(x, gamma)
    e = z - D @ np.array([alpha, beta])
    return float(np.sqrt(inv_chi2(rng, float(e @ e), len(z))))


def sample_sigma_y(x, y, rng) -> float:
    e = y - x
    return float(np.sqrt(inv_chi2(rng, float(e @ e), len(y))))


def gamma_log_conditional(x, alpha, beta, sigma_x, grid) -> np.ndarray:
    """log p(gamma | x, alpha, beta, sigma_x) on ``grid``, up to a constant."""
    xp = np.maximum(x[:-1], X_MIN)
    e = x[1:] - x[:-1] - DELTA * (alpha - beta * x[:-1])
    lx = np.log(xp)
    g = np.asarray(grid)[:, None]
    return -(g * lx).sum(axis=1) - 0.5 * (e * e * np.exp(-2.0 * g * lx)).sum(axis=1) / (sigma_x ** 2 * DELTA)


def gamma_log_marginal(x, alpha, beta, grid) -> np.ndarray:
    """log p(gamma | x, alpha, beta) with sigma_x^2 integrated out under 1/sigma^2."""
    xp = np.maximum(x[:-1], X_MIN)
    e = x[1:] - x[:-1] - DELTA * (alpha - beta * x[:-1])
    lx = np.log(xp)
    g = np.asarray(grid)[:, None]
    ss = (e * e * np.exp(-2.0 * g * lx)).sum(axis=1)
    return -(g * lx).sum(axis=1) - 0.5 * e.shape[0] * np.log(ss)


def griddy_draw(grid, log_density, u: float) -> float:
    """Griddy Gibbs draw: trapezoid CDF on ``grid``, inverted by linear
    interpolation between the grid cumulative values."""
    p = np.exp(log_density - log_density.max())
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(grid))))
    return float(np.interp(u * cdf[-1], cdf, grid))


def sample_gamma(x, alpha, beta, prior: CevPrior, rng) -> float:
    """Griddy Gibbs draw of gamma from its conditional with sigma_x^2 integrated out."""
    grid = prior.grid()
    return griddy_draw(grid, gamma_log_marginal(x, alpha, beta, grid), rng.random())


def sample_theta_cev(x, y, params: CevParams, prior: CevPrior, rng) -> CevParams:
    # (gamma, sigma_x^2) form one block: gamma | x, alpha, beta, then sigma_x^2 | gamma
    alpha, beta = sample_drift(x, params.sigma_x, params.gamma, prior, rng)
    gamma = sample_gamma(x, alpha, beta, prior, rng)
    sigma_x = sample_sigma_x(x, alpha, beta, gamma, rng)
    sigma_y = sample_sigma_y(x, y, rng)
    return CevParams(alpha, beta, sigma_x, gamma, sigma_y)


class CevModel(Model):
    name = "cev"
    param_names = CevParams.names

    def __init__(self, y, prior: CevPrior | None = None):
        self.y = np.asarray(y, dtype=np.float64)
        self.prior = prior or CevPrior()

    @property
    def T(self) -> int:
        return self.y.shape[0]

    def components(self, params: CevParams):
        return [make_model(self.y, params)]

    def sample_params(self, params: CevParams, states, rng) -> CevParams:
        return sample_theta_cev(states[0], self.y, params, self.prior, rng)

    def flatten(self, params: CevParams) -> np.ndarray:
        return params.to_array()[:5]

    def unflatten(self, values) -> CevParams:
        return CevParams(*map(float, values))

    def check_states(self, states) -> None:
        n = int(np.sum(states[0] <= X_MIN))
        if n:
            log.warning("%d CEV states at or below the floor %g", n, X_MIN)
