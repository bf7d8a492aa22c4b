"""Univariate stochastic volatility model.

    y_t = beta exp(x_t / 2) eta_t,   x_t = delta x_{t-1} + nu eps_t,
    x_1 ~ N(0, nu^2 / (1 - delta^2)).
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import stats

from ..ssm import LOG_2PI, StateSpaceModel
from .base import Model, ar1_delta_mh, inv_chi2


@nb.njit(cache=True)
def log_g(y, x, theta):
    beta = theta[0]
    return -0.5 * (LOG_2PI + 2.0 * np.log(beta) + x + y * y * np.exp(-x) / (beta * beta))


@nb.njit(cache=True)
def log_g_derivs(y, x, theta):
    beta = theta[0]
    e = 0.5 * y * y * np.exp(-x) / (beta * beta)
    return -0.5 + e, -e


@nb.njit(cache=True)
def transition(x_prev, theta):
    return theta[1] * x_prev, theta[2] * theta[2]


@nb.njit(cache=True)
def initial(theta, y):
    d = theta[1]
    return 0.0, theta[2] * theta[2] / (1.0 - d * d)


@dataclass(frozen=True)
class SvParams:
    beta: float
    delta: float
    nu: float

    names = ("beta", "delta", "nu")

    def __post_init__(self):
        if not (self.beta > 0 and -1 < self.delta < 1 and self.nu > 0):
            raise ValueError(f"SV parameters outside support: {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.beta, self.delta, self.nu])


ML_PARAMS = SvParams(1.065, 0.992, 0.122)


@dataclass(frozen=True)
class SvPrior:
    """Flat on log beta; Beta on (delta + 1) / 2 given by the mean and
    variance of delta; nu^2 ~ p0 s0 / chi2(p0)."""

    delta_mean: float = 0.86
    delta_var: float = 0.012
    nu_p0: float = 10.0
    nu_s0: float = 0.01

    @property
    def beta_ab(self) -> tuple[float, float]:
        m = (self.delta_mean + 1.0) / 2.0
        v = self.delta_var / 4.0
        k = m * (1.0 - m) / v - 1.0
        return m * k, (1.0 - m) * k

    def log_prior_delta(self, delta: float) -> float:
        a, b = self.beta_ab
        return float(stats.beta.logpdf((delta + 1.0) / 2.0, a, b))


def make_model(y, params: SvParams) -> StateSpaceModel:
    return StateSpaceModel(np.asarray(y, dtype=np.float64), params.to_array(),
                           log_g, transition, initial, log_g_derivs, "sv")


def simulate(params: SvParams, T: int, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x = np.empty(T)
    x[0] = rng.normal(0.0, params.nu / np.sqrt(1.0 - params.delta ** 2))
    for t in range(1, T):
        x[t] = params.delta * x[t - 1] + params.nu * rng.standard_normal()
    y = params.beta * np.exp(x / 2.0) * rng.standard_normal(T)
    return x, y


def sample_beta(x, y, rng) -> float:
    # flat prior on log beta: beta^2 | x, y ~ S / chi2(T)
    s = float(np.sum(y * y * np.exp(-x)))
    return float(np.sqrt(inv_chi2(rng, s, len(y))))


def sample_nu(x, delta, prior: SvPrior, rng) -> float:
    ss = (1.0 - delta ** 2) * x[0] ** 2 + float(np.sum((x[1:] - delta * x[:-1]) ** 2))
    return float(np.sqrt(inv_chi2(rng, prior.nu_p0 * prior.nu_s0 + ss, prior.nu_p0 + len(x))))


def sample_theta_sv(x, y, params: SvParams, prior: SvPrior, rng) -> SvParams:
    beta = sample_beta(x, y, rng)
    delta, _, _ = ar1_delta_mh(x, 0.0, params.nu, params.delta, prior.log_prior_delta, rng)
    nu = sample_nu(x, delta, prior, rng)
    return SvParams(beta, delta, nu)


class SvModel(Model):
    name = "sv"
    param_names = SvParams.names

    def __init__(self, y, prior: SvPrior | None = None):
        self.y = np.asarray(y, dtype=np.float64)
        self.prior = prior or SvPrior()

    @property
    def T(self) -> int:
        return self.y.shape[0]

    def components(self, params: SvParams):
        return [make_model(self.y, params)]

    def sample_params(self, params: SvParams, states, rng) -> SvParams:
        return sample_theta_sv(states[0], self.y, params, self.prior, rng)

    def flatten(self, params: SvParams) -> np.ndarray:
        return params.to_array()

    def unflatten(self, values) -> SvParams:
        return SvParams(*map(float, values))
