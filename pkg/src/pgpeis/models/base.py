"""Shared pieces of the concrete models."""
from __future__ import annotations

import numpy as np

from ..ssm import StateSpaceModel


def inv_chi2(rng: np.random.Generator, scale_sum: float, dof: float) -> float:
    """Draw from scale_sum / chi2(dof)."""
    return float(scale_sum / rng.chisquare(dof))


def ar1_delta_mh(x, center, sigma, delta, log_prior, rng):
    """Independence MH update of an AR(1) coefficient.

    The proposal is the Gaussian least-squares conditional of the AR
    regression of (x_t - center) on (x_{t-1} - center), t >= 2. The
    acceptance ratio therefore only involves the prior and the stationary
    density of the first state. Returns (delta, accepted, log_ratio).
    """
    z = np.asarray(x, dtype=np.float64) - center
    sxx = float(z[:-1] @ z[:-1])
    if sxx <= 0.0:
        return delta, False, -np.inf
    mean = float(z[1:] @ z[:-1]) / sxx
    prop = mean + sigma / np.sqrt(sxx) * rng.standard_normal()
    u = rng.random()
    if not -1.0 < prop < 1.0:
        return delta, False, -np.inf

    def target(d):
        v1 = sigma * sigma / (1.0 - d * d)
        return log_prior(d) - 0.5 * (np.log(v1) + z[0] ** 2 / v1)

    log_ratio = target(prop) - target(delta)
    if np.log(u) < log_ratio:
        return prop, True, log_ratio
    return delta, False, log_ratio


class Model:
    """Posterior structure the Gibbs drivers need from a concrete model.

    ``components(params)`` gives the scalar state-space models (one per
    independent state process), ``sample_params`` draws the parameter
    blocks given the current state paths (shape ``(n_components, T)``).
    """

    name = "model"
    n_components = 1
    param_names: tuple[str, ...] = ()

    @property
    def T(self) -> int:
        raise NotImplementedError

    def components(self, params) -> list[StateSpaceModel]:
        raise NotImplementedError

    def sample_params(self, params, states, rng):
        raise NotImplementedError

    def flatten(self, params) -> np.ndarray:
        raise NotImplementedError

    def check_states(self, states) -> None:
        """Hook for model-specific warnings about sampled states."""
