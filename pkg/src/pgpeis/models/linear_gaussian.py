"""Linear-Gaussian AR(1)-plus-noise model, used where exact answers exist.

    y_t = x_t + sigma_e e_t,   x_t = phi x_{t-1} + sigma_x eta_t,
    x_1 ~ N(0, sigma_x^2 / (1 - phi^2)).
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from ..ssm import LOG_2PI, StateSpaceModel


@nb.njit(cache=True)
def log_g(y, x, theta):
    se2 = theta[2] * theta[2]
    d = y - x
    return -0.5 * (LOG_2PI + np.log(se2) + d * d / se2)


@nb.njit(cache=True)
def log_g_derivs(y, x, theta):
    se2 = theta[2] * theta[2]
    return (y - x) / se2, -1.0 / se2


@nb.njit(cache=True)
def transition(x_prev, theta):
    return theta[0] * x_prev, theta[1] * theta[1]


@nb.njit(cache=True)
def initial(theta, y):
    return 0.0, theta[1] * theta[1] / (1.0 - theta[0] * theta[0])


@dataclass(frozen=True)
class LgParams:
    phi: float
    sigma_x: float
    sigma_e: float

    def to_array(self) -> np.ndarray:
        return np.array([self.phi, self.sigma_x, self.sigma_e])


def make_model(y, params: LgParams) -> StateSpaceModel:
    return StateSpaceModel(np.asarray(y, dtype=np.float64), params.to_array(),
                           log_g, transition, initial, log_g_derivs, "linear_gaussian")


def simulate(params: LgParams, T: int, seed):
    rng = np.random.default_rng(seed)
    x = np.empty(T)
    x[0] = rng.normal(0.0, params.sigma_x / np.sqrt(1.0 - params.phi ** 2))
    for t in range(1, T):
        x[t] = params.phi * x[t - 1] + params.sigma_x * rng.standard_normal()
    return x, x + params.sigma_e * rng.standard_normal(T)
