"""Efficient importance sampling for Gaussian-transition models.

The kernel of period t is f(x_t | x_{t-1}) exp(c1_t x_t + c2_t x_t^2); the
coefficients come from back-recursive least-squares fits under common
random numbers and define the PEIS proposal used by the SMC engine.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .smc import EPS_VAR
from .ssm import StateSpaceModel

log = logging.getLogger(__name__)

EPS_ADM = 1e-3
COND_MAX = 1e12
RIDGE_SCALE = 1e-8


class InadmissibleKernelError(ValueError):
    """1 - 2 c2 sigma^2 is not positive: the kernel does not normalise."""


@dataclass(frozen=True)
class EisParameters:
    c1: np.ndarray
    c2: np.ndarray
    r2: np.ndarray = None
    max_residual: np.ndarray = None
    mean_r2_history: np.ndarray = None
    n_clamped: int = 0
    n_ridge: int = 0

    @classmethod
    def zeros(cls, T: int) -> "EisParameters":
        return cls(np.zeros(T), np.zeros(T))

    @property
    def T(self) -> int:
        return self.c1.shape[0]


def eis_proposal_moments(mu, var, c1, c2, eps_var: float = EPS_VAR):
    """Mean and variance of the normalised kernel N(mu, var) exp(c1 x + c2 x^2)."""
    mu, var, c1, c2 = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64)
                                            for a in (mu, var, c1, c2)))
    den = 1.0 - 2.0 * c2 * var
    if np.any(den <= eps_var):
        raise InadmissibleKernelError("1 - 2 c2 var <= eps")
    v2 = var / den
    m = (mu + var * c1) / den
    return m[()], v2[()]


def log_integrating_factor(mu, var, c1, c2, eps_var: float = EPS_VAR):
    mu, var, c1, c2 = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64)
                                            for a in (mu, var, c1, c2)))
    den = 1.0 - 2.0 * c2 * var
    if np.any(den <= eps_var):
        raise InadmissibleKernelError("1 - 2 c2 var <= eps")
    out = -0.5 * np.log(den) + (mu * c1 + c2 * mu * mu + 0.5 * c1 * c1 * var) / den
    return out[()]


def _effective(var, c1, c2, eps_var=EPS_VAR):
    # vectorised twin of kernels.effective_coefficients
    var = np.asarray(var, dtype=np.float64)
    den = 1.0 - 2.0 * c2 * var
    bad = den <= eps_var
    return (np.where(bad, 0.0, c1), np.where(bad, 0.0, c2), np.where(bad, 1.0, den))


def expansion_points(model: StateSpaceModel, max_iter: int = 50) -> np.ndarray:
    """Per-period maximiser of log g(y_t | x) - (x - m_t)^2 / (2 s^2).

    m_t is the prior mean path and s^2 the initial-state variance. Damped
    Newton steps; the prior term keeps the point finite when log g has no
    maximum (an SV observation of exactly zero, say).
    """
    return kernels.expansion_points(model.log_g_derivs_fn, model.transition_fn,
                                    model.initial_fn, model.y, model.theta, int(max_iter))


def taylor_init(model: StateSpaceModel) -> EisParameters:
    """Second-order expansion of log g in x_t around ``expansion_points``.

    Exact whenever log g is quadratic in x_t, whatever the expansion point.
    """
    x0 = expansion_points(model)
    d1, d2 = model.log_g_derivs(x0)
    c2 = np.minimum(0.5 * d2, 0.0)
    c1 = d1 - 2.0 * c2 * x0
    return EisParameters(c1, c2)


def fit_eis(model: StateSpaceModel, fit_normals, L: int = 4,
            c_init: EisParameters | None = None) -> EisParameters:
    """Fixed-point EIS fit driven by the (T, R) standard normals ``fit_normals``."""
    U = np.ascontiguousarray(fit_normals, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != model.T:
        raise ValueError(f"fit normals must have shape (T={model.T}, R)")
    if U.shape[1] < 3:
        raise ValueError("need R >= 3 trajectories for the quadratic regressions")
    if L < 1:
        raise ValueError("need L >= 1")
    if c_init is None:
        c_init = taylor_init(model)
    c1, c2, r2, maxres, mean_r2, n_clamped, n_ridge, n_kept = kernels.fit_eis_kernel(
        model.log_g_fn, model.transition_fn, model.initial_fn, model.y, model.theta,
        np.ascontiguousarray(c_init.c1, dtype=np.float64),
        np.ascontiguousarray(c_init.c2, dtype=np.float64),
        U, int(L), EPS_VAR, EPS_ADM, COND_MAX, RIDGE_SCALE)
    if n_clamped:
        log.warning("EIS fit clamped %d quadratic coefficients", n_clamped)
    if n_kept:
        log.warning("EIS fit kept previous coefficients in %d non-finite regressions", n_kept)
    return EisParameters(c1, c2, r2, maxres, mean_r2, int(n_clamped), int(n_ridge))


class PeisProposal:
    """Globally adapted proposal q_t = k_t / chi_t with targets
    p(x_{1:t}, y_{1:t}) chi_{t+1}(x_t)."""

    kind = kernels.PEIS

    def __init__(self, model: StateSpaceModel, params: EisParameters):
        if params.T != model.T:
            raise ValueError("EIS parameters and model disagree on T")
        self.model = model
        self.params = params
        self.c1 = np.ascontiguousarray(params.c1, dtype=np.float64)
        self.c2 = np.ascontiguousarray(params.c2, dtype=np.float64)
        mu, var = model.initial_moments()
        e1, e2, den = _effective(var, self.c1[0], self.c2[0])
        self.log_const = float(-0.5 * np.log(den) + (mu * e1 + e2 * mu * mu + 0.5 * e1 * e1 * var) / den)

    def _transition(self, t, x_prev):
        if t == 0:
            mu, var = self.model.initial_moments()
            return np.float64(mu), np.float64(var)
        return self.model.transition_moments(x_prev)

    def moments(self, t, x_prev=None):
        mu, var = self._transition(t, x_prev)
        e1, e2, den = _effective(var, self.c1[t], self.c2[t])
        return (mu + var * e1) / den, var / den

    def log_chi(self, t, x_prev=None):
        """log chi_t as a function of x_{t-1}; zero beyond the last period."""
        if t >= self.model.T:
            return np.zeros_like(np.asarray(x_prev, dtype=np.float64))
        mu, var = self._transition(t, x_prev)
        e1, e2, den = _effective(var, self.c1[t], self.c2[t])
        return -0.5 * np.log(den) + (mu * e1 + e2 * mu * mu + 0.5 * e1 * e1 * var) / den

    def sample(self, t, x_prev, normals):
        m, v2 = self.moments(t, x_prev)
        return m + np.sqrt(v2) * normals

    def log_q(self, t, x, x_prev=None):
        m, v2 = self.moments(t, x_prev)
        d = np.asarray(x) - m
        return -0.5 * (np.log(2 * np.pi * v2) + d * d / v2)

    def log_target_increment(self, t, x, x_prev=None):
        x = np.asarray(x, dtype=np.float64)
        lf = self.model.log_f1(x) if t == 0 else self.model.log_f(x, x_prev)
        inc = self.model.log_g(t, x) + lf + self.log_chi(t + 1, x)
        if t > 0:
            inc = inc - self.log_chi(t, x_prev)
        return inc

    def log_weight(self, t, x, x_prev=None):
        return self.log_target_increment(t, x, x_prev) - self.log_q(t, x, x_prev)


def make_peis_proposal(model: StateSpaceModel, params: EisParameters) -> PeisProposal:
    return PeisProposal(model, params)
