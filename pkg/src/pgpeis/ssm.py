"""Core state-space model types: scalar Gaussian-transition models, particle
systems with full ancestry, and the common-random-number store.

A model is a bundle of numba-jitted scalar functions with the signatures

    log_g(y_t, x_t, theta) -> float
    transition(x_prev, theta) -> (mean, variance)
    initial(theta, y) -> (mean, variance)
    log_g_derivs(y_t, x_t, theta) -> (d/dx log_g, d2/dx2 log_g)

so that the compiled SMC and EIS kernels can be specialised per model.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numba as nb
import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class DegenerateWeightsError(ValueError):
    """All importance weights are zero (every log weight is -inf)."""


class ModelEvaluationError(FloatingPointError):
    """A model density returned NaN."""

    def __init__(self, t: int, i: int, msg: str = "NaN in model density"):
        super().__init__(f"{msg} at t={t}, particle={i}")
        self.t = t
        self.i = i


@nb.njit(cache=True)
def normal_logpdf(x, mean, var):
    d = x - mean
    return -0.5 * (LOG_2PI + np.log(var) + d * d / var)


@nb.njit
def _eval_log_g(log_g, y_t, x, theta):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = log_g(y_t, x[i], theta)
    return out


@nb.njit
def _eval_transition(transition, x_prev, theta):
    mu = np.empty(x_prev.shape[0])
    var = np.empty(x_prev.shape[0])
    for i in range(x_prev.shape[0]):
        mu[i], var[i] = transition(x_prev[i], theta)
    return mu, var


@nb.njit
def _eval_log_g_derivs(log_g_derivs, y, x, theta):
    d1 = np.empty(x.shape[0])
    d2 = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        d1[i], d2[i] = log_g_derivs(y[i], x[i], theta)
    return d1, d2


@nb.njit
def _prior_mean_path(transition, initial, y, theta):
    m = np.empty(y.shape[0])
    m[0] = initial(theta, y)[0]
    for t in range(1, y.shape[0]):
        m[t] = transition(m[t - 1], theta)[0]
    return m


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """One scalar state component observed through ``y``.

    ``theta`` is the packed float vector the jitted functions read; the
    meaning of its entries is owned by the model module that built it.
    """

    y: np.ndarray
    theta: np.ndarray
    log_g_fn: Callable
    transition_fn: Callable
    initial_fn: Callable
    log_g_derivs_fn: Callable
    name: str = "ssm"

    def __post_init__(self):
        object.__setattr__(self, "y", np.ascontiguousarray(self.y, dtype=np.float64))
        object.__setattr__(self, "theta", np.ascontiguousarray(self.theta, dtype=np.float64))

    @property
    def T(self) -> int:
        return self.y.shape[0]

    def log_g(self, t: int, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return _eval_log_g(self.log_g_fn, self.y[t], x, self.theta)

    def transition_moments(self, x_prev):
        x_prev = np.atleast_1d(np.asarray(x_prev, dtype=np.float64))
        return _eval_transition(self.transition_fn, x_prev, self.theta)

    def initial_moments(self) -> tuple[float, float]:
        return self.initial_fn(self.theta, self.y)

    def log_f(self, x, x_prev) -> np.ndarray:
        mu, var = self.transition_moments(x_prev)
        d = np.asarray(x, dtype=np.float64) - mu
        return -0.5 * (LOG_2PI + np.log(var) + d * d / var)

    def log_f1(self, x) -> np.ndarray:
        mu, var = self.initial_moments()
        d = np.asarray(x, dtype=np.float64) - mu
        return -0.5 * (LOG_2PI + np.log(var) + d * d / var)

    def log_g_derivs(self, x) -> tuple[np.ndarray, np.ndarray]:
        """First and second x-derivatives of log g at ``x[t]`` for every t."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _eval_log_g_derivs(self.log_g_derivs_fn, self.y, x, self.theta)

    def prior_mean_path(self) -> np.ndarray:
        """Transition means iterated from the initial mean, ignoring noise."""
        return _prior_mean_path(self.transition_fn, self.initial_fn, self.y, self.theta)

    def log_joint(self, x) -> float:
        """log p(x_{1:T}, y_{1:T})."""
        x = np.asarray(x, dtype=np.float64)
        lp = float(self.log_f1(x[0])) + float(self.log_g(0, x[0])[0])
        for t in range(1, self.T):
            lp += float(self.log_f(x[t], x[t - 1])[0]) + float(self.log_g(t, x[t])[0])
        return lp

    def with_theta(self, theta) -> "StateSpaceModel":
        return StateSpaceModel(self.y, theta, self.log_g_fn, self.transition_fn,
                               self.initial_fn, self.log_g_derivs_fn, self.name)


@dataclass(frozen=True)
class ParticleSystem:
    """N weighted trajectories over T periods, stored as full history.

    Arrays are 0-based: ``ancestors[t, i]`` is the index at period t of the
    parent of particle i at period t+1 (identity where no resampling took
    place). ``log_weights`` are the unnormalized weights w_t^i, carrying the
    normalized weight of the previous period.
    """

    particles: np.ndarray        # (T, N)
    log_weights: np.ndarray      # (T, N)
    weights: np.ndarray          # (T, N), rows sum to one
    ancestors: np.ndarray        # (T-1, N), int64
    log_weight_sums: np.ndarray  # (T,)  log sum_i w_t^i
    resampled: np.ndarray        # (T,)  bool, resampling after period t
    log_z: float = float("nan")
    ok: bool = True

    @property
    def T(self) -> int:
        return self.particles.shape[0]

    @property
    def N(self) -> int:
        return self.particles.shape[1]


@nb.njit(cache=True)
def _lineage(ancestors, k, T):
    b = np.empty(T, dtype=np.int64)
    b[T - 1] = k
    for t in range(T - 2, -1, -1):
        b[t] = ancestors[t, b[t + 1]]
    return b


def lineage(ps: ParticleSystem, k: int) -> np.ndarray:
    """Indices b_1..b_T of the ancestors of final particle ``k``."""
    if not 0 <= k < ps.N:
        raise IndexError(f"particle index {k} outside [0, {ps.N})")
    return _lineage(ps.ancestors, int(k), ps.T)


def extract_trajectory(ps: ParticleSystem, k: int) -> np.ndarray:
    b = lineage(ps, k)
    return ps.particles[np.arange(ps.T), b]


def unique_ancestors(ps: ParticleSystem, t: int = 0) -> int:
    """Number of distinct period-t particles that survive to period T."""
    idx = np.arange(ps.N)
    for s in range(ps.T - 2, t - 1, -1):
        idx = ps.ancestors[s, idx]
    return int(np.unique(idx).size)


def normalize_log_weights(log_w) -> tuple[np.ndarray, float]:
    """Normalized weights and log of the weight sum, computed in log space."""
    log_w = np.asarray(log_w, dtype=np.float64)
    if np.isnan(log_w).any():
        raise ValueError("NaN log weight")
    m = log_w.max()
    if not np.isfinite(m):
        if m == -np.inf:
            raise DegenerateWeightsError("all weights are zero")
        raise ValueError("infinite log weight")
    e = np.exp(log_w - m)
    s = e.sum()
    return e / s, float(m + np.log(s))


@dataclass(frozen=True)
class SmcRandomness:
    """Pre-drawn randomness consumed by one SMC pass."""

    normals: np.ndarray      # (T, N) propagation
    uniforms: np.ndarray     # (T, N) multinomial resampling after period t
    as_uniforms: np.ndarray  # (T,)   ancestor draw for the reference at period t
    select_uniform: float    # final trajectory index


@dataclass(frozen=True)
class CrnStore:
    """All random numbers of one Gibbs sweep for one state component.

    Drawn in a fixed order (EIS fitting block, MH uniform, SMC blocks) from
    one generator seeded by ``SeedSequence(seed, spawn_key=(sweep, component))``,
    so the fitting block does not depend on N or on the number of SMC blocks.
    """

    fit_normals: np.ndarray  # (T, R)
    smc: tuple[SmcRandomness, ...]
    seed: int
    sweep: int
    component: int = 0
    mh_uniform: float = 0.5  # accept/reject uniform of the PGMH move

    @classmethod
    def draw(cls, seed: int, sweep: int, T: int, N: int, R: int = 15,
             n_smc: int = 1, component: int = 0) -> "CrnStore":
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(sweep, component)))
        fit = rng.standard_normal((T, R))
        mh_u = float(rng.random())
        blocks = tuple(smc_randomness(rng, T, N) for _ in range(n_smc))
        return cls(fit, blocks, seed, sweep, component, mh_u)

    @property
    def T(self) -> int:
        return self.fit_normals.shape[0]

    @property
    def R(self) -> int:
        return self.fit_normals.shape[1]


def smc_randomness(rng: np.random.Generator, T: int, N: int) -> SmcRandomness:
    """One SMC block from an arbitrary generator (tests, one-off runs)."""
    return SmcRandomness(rng.standard_normal((T, N)), rng.random((T, N)),
                         rng.random(T), float(rng.random()))
