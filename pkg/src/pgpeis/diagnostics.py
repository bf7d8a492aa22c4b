"""Chain-quality metrics: Geyer initial-monotone ESS, state update rates and
posterior summaries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def autocorrelation(x) -> np.ndarray:
    """Biased sample autocorrelations rho(0..M-1), mean removed once."""
    x = np.asarray(x, dtype=np.float64)
    M = x.shape[0]
    z = x - x.mean()
    n = 1 << int(np.ceil(np.log2(2 * M)))
    f = np.fft.rfft(z, n)
    acov = np.fft.irfft(f * np.conj(f), n)[:M] / M
    return acov / acov[0]


def ess(chain) -> float:
    """Effective sample size by Geyer's initial monotone sequence estimator.

    Returns NaN for a zero-variance chain, whose ESS is undefined. Values
    above M (antithetic chains) are reported as computed, except that the
    integrated autocorrelation time is floored at 1 / log10(M).
    """
    x = np.asarray(chain, dtype=np.float64).ravel()
    M = x.shape[0]
    if M < 10:
        raise ValueError("need at least 10 draws")
    if not np.all(np.isfinite(x)):
        raise ValueError("chain has non-finite entries")
    if np.ptp(x) == 0.0:
        return float("nan")
    rho = autocorrelation(x)
    n_pairs = M // 2
    gam = rho[0:2 * n_pairs:2] + rho[1:2 * n_pairs:2]
    neg = np.flatnonzero(gam < 0.0)
    if neg.size:
        gam = gam[:neg[0]]
    gam = np.minimum.accumulate(gam)
    tau = -1.0 + 2.0 * gam.sum()
    tau = max(tau, 1.0 / np.log10(M))
    return float(M / tau)


def update_rate(draws) -> np.ndarray | float:
    """Share of consecutive draws that differ, per column.

    ``draws`` has shape (M,) or (M, k) with M >= 2; values are compared for
    exact equality.
    """
    d = np.asarray(draws)
    if d.shape[0] < 2:
        raise ValueError("need at least two sweeps")
    r = (d[1:] != d[:-1]).mean(axis=0)
    return float(r) if np.ndim(r) == 0 else r


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    ess: float
    ess_per_hour: float


def summarize(chain, seconds: float) -> Summary:
    x = np.asarray(chain, dtype=np.float64)
    e = ess(x)
    return Summary(float(x.mean()), float(x.std(ddof=1)), e,
                   e * 3600.0 / seconds if seconds > 0 else float("nan"))


@dataclass
class ChainOutput:
    """Retained draws and bookkeeping of one chain.

    ``states`` has shape (M, n_components, len(state_index)); ``changes``
    counts, per component and period, the sweeps after burn-in in which the
    state value changed, out of ``n_compared`` comparisons.
    """

    param_names: tuple[str, ...]
    theta: np.ndarray
    state_index: tuple[int, ...]
    states: np.ndarray
    changes: np.ndarray
    n_compared: int
    timings: dict = field(default_factory=dict)
    n_failures: int = 0
    n_accepted: int = 0
    eis_min_r2: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.theta.shape[0]

    def update_rates(self) -> np.ndarray:
        if self.n_compared == 0:
            return np.full(self.changes.shape, np.nan)
        return self.changes / self.n_compared

    def seconds(self) -> float:
        return float(self.timings.get("total", 0.0))

    def param_summary(self) -> dict[str, Summary]:
        s = self.seconds()
        return {n: summarize(self.theta[:, j], s) for j, n in enumerate(self.param_names)}

    def state_labels(self) -> list[str]:
        q = self.states.shape[1]
        if q == 1:
            return [f"x_{t + 1}" for t in self.state_index]
        return [f"x{c + 1}_{t + 1}" for c in range(q) for t in self.state_index]

    def state_matrix(self) -> np.ndarray:
        return self.states.reshape(self.M, -1)

    def state_summary(self) -> dict[str, Summary]:
        s = self.seconds()
        X = self.state_matrix()
        return {n: summarize(X[:, j], s) for j, n in enumerate(self.state_labels())}
