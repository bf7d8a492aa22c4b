"""Sequential Monte Carlo: unconditional and conditional passes, multinomial
resampling on a fixed schedule, trajectory selection and the likelihood
estimate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .ssm import (
    ModelEvaluationError,
    ParticleSystem,
    SmcRandomness,
    StateSpaceModel,
    extract_trajectory,
)

EPS_VAR = 1e-10


@dataclass(frozen=True)
class ResampleSchedule:
    """Periods (1-based) after which the particle system is resampled.

    ``stride=1`` resamples after every period; ``stride=K`` after periods
    K, 2K, ...; an explicit ``periods`` tuple overrides the stride.
    """

    stride: int = 1
    periods: tuple[int, ...] | None = None

    @classmethod
    def every(cls) -> "ResampleSchedule":
        return cls(stride=1)

    @classmethod
    def sparse(cls, stride: int) -> "ResampleSchedule":
        if stride < 1:
            raise ValueError("stride must be >= 1")
        return cls(stride=stride)

    @classmethod
    def at(cls, periods) -> "ResampleSchedule":
        return cls(periods=tuple(sorted(int(p) for p in periods)))

    @classmethod
    def never(cls) -> "ResampleSchedule":
        return cls(periods=())

    def mask(self, T: int) -> np.ndarray:
        m = np.zeros(T, dtype=np.bool_)
        if self.periods is not None:
            for p in self.periods:
                if not 1 <= p <= T - 1:
                    raise ValueError(f"resampling period {p} outside 1..{T - 1}")
                m[p - 1] = True
        else:
            m[self.stride - 1:T - 1:self.stride] = True
        return m

    def __str__(self) -> str:
        if self.periods is not None:
            return "at:" + ",".join(map(str, self.periods))
        return "every" if self.stride == 1 else f"stride:{self.stride}"


class BootstrapProposal:
    """Transition density as proposal; targets p(x_{1:t} | y_{1:t})."""

    kind = kernels.BPF
    log_const = 0.0

    def __init__(self, model: StateSpaceModel):
        self.model = model
        self.c1 = np.zeros(model.T)
        self.c2 = np.zeros(model.T)

    def moments(self, t: int, x_prev=None):
        if t == 0:
            mu, var = self.model.initial_moments()
            return np.float64(mu), np.float64(var)
        return self.model.transition_moments(x_prev)

    def sample(self, t, x_prev, normals):
        m, v2 = self.moments(t, x_prev)
        return m + np.sqrt(v2) * normals

    def log_q(self, t, x, x_prev=None):
        m, v2 = self.moments(t, x_prev)
        d = np.asarray(x) - m
        return -0.5 * (np.log(2 * np.pi * v2) + d * d / v2)

    def log_target_increment(self, t, x, x_prev=None):
        """log gamma_t(x_{1:t}) - log gamma_{t-1}(x_{1:t-1})."""
        lf = self.model.log_f1(x) if t == 0 else self.model.log_f(x, x_prev)
        return self.model.log_g(t, x) + lf

    def log_weight(self, t, x, x_prev=None):
        return self.log_target_increment(t, x, x_prev) - self.log_q(t, x, x_prev)


def _run(model: StateSpaceModel, proposal, schedule: ResampleSchedule, N: int,
         crn: SmcRandomness, reference=None, ancestor_sampling=False):
    T = model.T
    if N < 1 or T < 1:
        raise ValueError("need N >= 1 and T >= 1")
    if crn.normals.shape != (T, N):
        raise ValueError(f"CRN block has shape {crn.normals.shape}, expected {(T, N)}")
    conditional = reference is not None
    ref = np.zeros(T) if reference is None else np.ascontiguousarray(reference, dtype=np.float64)
    if ref.shape != (T,):
        raise ValueError(f"reference has length {ref.shape[0]}, expected {T}")
    X, LW, W, A, log_sums, status, bt, bi = kernels.smc_pass(
        model.log_g_fn, model.transition_fn, model.initial_fn, model.y, model.theta,
        proposal.kind, proposal.c1, proposal.c2,
        crn.normals, crn.uniforms, crn.as_uniforms, schedule.mask(T),
        conditional, ref, bool(ancestor_sampling), EPS_VAR)
    if status == kernels.NAN_DENSITY:
        raise ModelEvaluationError(int(bt), int(bi))
    ok = status == kernels.OK
    log_z = float(log_sums.sum()) + proposal.log_const if ok else -np.inf
    ps = ParticleSystem(X, LW, W, A, log_sums, schedule.mask(T), log_z, ok)
    return ps, log_z


def run_smc(model, proposal, schedule: ResampleSchedule, N: int, crn: SmcRandomness):
    """Unconditional SMC; returns the particle system and log of the
    likelihood estimate (-inf, with ``ps.ok`` False, on total weight
    collapse)."""
    return _run(model, proposal, schedule, N, crn)


def run_conditional_smc(model, proposal, schedule: ResampleSchedule, N: int,
                        crn: SmcRandomness, reference, ancestor_sampling: bool = False):
    """Conditional SMC with particle 0 pinned to ``reference``.

    With ``ancestor_sampling`` the reference's ancestor is redrawn at every
    scheduled resampling.
    """
    return _run(model, proposal, schedule, N, crn, reference, ancestor_sampling)


def multinomial_resample(W, N: int, uniforms) -> np.ndarray:
    """Ancestor indices by inverse-CDF lookup of ``uniforms`` in cumsum(W)."""
    W = np.asarray(W, dtype=np.float64)
    if (W < 0).any() or abs(W.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative and sum to one")
    u = np.asarray(uniforms, dtype=np.float64)
    if u.shape != (N,):
        raise ValueError(f"need {N} uniforms, got {u.shape}")
    return kernels.inverse_cdf_draws(W, u)


def sample_trajectory_index(ps: ParticleSystem, uniform: float) -> int:
    u = np.array([uniform], dtype=np.float64)
    return int(kernels.inverse_cdf_draws(ps.weights[-1], u)[0])


def draw_trajectory(ps: ParticleSystem, uniform: float) -> np.ndarray:
    return extract_trajectory(ps, sample_trajectory_index(ps, uniform))
