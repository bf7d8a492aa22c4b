"""Particle Gibbs drivers: baseline PG, PG with ancestor sampling and PG with
an extra particle MH move, each over a bootstrap or PEIS inner SMC.

Each sweep draws the parameters given the current reference paths, then
refreshes the common random numbers and, for PEIS, refits the EIS kernel per
state component before the state move.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import ChainOutput
from .eis import PeisProposal, fit_eis
from .smc import (BootstrapProposal, ResampleSchedule, run_conditional_smc, run_smc,
                  sample_trajectory_index)
from .ssm import CrnStore, StateSpaceModel, extract_trajectory

log = logging.getLogger(__name__)

VARIANTS = ("pg", "pgas", "pgmh")
PROPOSALS = ("bpf", "peis")
PARAM_STREAM = 2 ** 31 - 1  # spawn-key slot of the parameter-update generator


@dataclass(frozen=True)
class SamplerConfig:
    variant: str = "pgas"
    proposal: str = "peis"
    schedule: ResampleSchedule = field(default_factory=ResampleSchedule.every)
    N: int = 30
    iterations: int = 1000
    burn_in: int = 0
    thinning: int = 1
    eis_R: int = 15
    eis_L: int = 4
    update_params: bool = True
    state_index: tuple[int, ...] | None = None
    force_reference_ancestor: bool = False  # PGAS with a_t^1 pinned, i.e. plain PG

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.proposal not in PROPOSALS:
            raise ValueError(f"proposal must be one of {PROPOSALS}")
        if self.N < 2:
            raise ValueError("particle Gibbs needs N >= 2")
        if not 0 <= self.burn_in <= self.iterations:
            raise ValueError("need 0 <= burn_in <= iterations")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.eis_R < 3 or self.eis_L < 1:
            raise ValueError("need eis_R >= 3 and eis_L >= 1")

    def default_state_index(self, T: int) -> tuple[int, ...]:
        if self.state_index is not None:
            return tuple(self.state_index)
        return tuple(sorted({0, math.ceil(T / 2) - 1, T - 1}))


@dataclass(frozen=True)
class ChainState:
    params: object
    reference: np.ndarray  # (n_components, T)
    sweep: int
    seed: int


@dataclass
class SweepInfo:
    changed: np.ndarray
    failures: int = 0
    accepted: int = 0
    min_r2: float = float("nan")
    timings: dict = field(default_factory=dict)


def _proposal(comp: StateSpaceModel, config: SamplerConfig, crn: CrnStore):
    if config.proposal == "bpf":
        return BootstrapProposal(comp)
    return PeisProposal(comp, fit_eis(comp, crn.fit_normals, config.eis_L))


def _param_rng(seed: int, sweep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(sweep, PARAM_STREAM)))


def _sweep(state: ChainState, model, config: SamplerConfig, variant: str):
    clock = {"params": 0.0, "eis": 0.0, "smc": 0.0}
    sweep = state.sweep + 1
    t0 = time.perf_counter()
    params = state.params
    if config.update_params:
        params = model.sample_params(params, state.reference, _param_rng(state.seed, sweep))
    clock["params"] += time.perf_counter() - t0

    comps = model.components(params)
    T = model.T
    new_ref = state.reference.copy()
    info = SweepInfo(np.zeros(state.reference.shape, dtype=bool))
    r2 = []
    n_smc = 2 if variant == "pgmh" else 1
    for c, comp in enumerate(comps):
        t0 = time.perf_counter()
        crn = CrnStore.draw(state.seed, sweep, T, config.N, config.eis_R, n_smc, c)
        prop = _proposal(comp, config, crn)
        if config.proposal == "peis":
            r2.append(np.nanmin(prop.params.r2))
        t1 = time.perf_counter()
        clock["eis"] += t1 - t0
        ref = state.reference[c]
        if variant == "pgmh":
            ps, lz = run_conditional_smc(comp, prop, config.schedule, config.N, crn.smc[0], ref)
            ps_star, lz_star = run_smc(comp, prop, config.schedule, config.N, crn.smc[1])
            if not ps.ok:
                info.failures += 1
                log.warning("sweep %d component %d: conditional SMC degenerate", sweep, c)
            elif ps_star.ok and np.log(crn.mh_uniform) < lz_star - lz:
                new_ref[c] = extract_trajectory(
                    ps_star, sample_trajectory_index(ps_star, crn.smc[1].select_uniform))
                info.accepted += 1
        else:
            use_as = variant == "pgas" and not config.force_reference_ancestor
            ps, _ = run_conditional_smc(comp, prop, config.schedule, config.N, crn.smc[0], ref, use_as)
            if ps.ok:
                k = sample_trajectory_index(ps, crn.smc[0].select_uniform)
                new_ref[c] = extract_trajectory(ps, k)
            else:
                info.failures += 1
                log.warning("sweep %d component %d: conditional SMC degenerate, reference kept",
                            sweep, c)
        clock["smc"] += time.perf_counter() - t1
    model.check_states(new_ref)
    info.changed = new_ref != state.reference
    info.min_r2 = float(min(r2)) if r2 else float("nan")
    info.timings = clock
    return ChainState(params, new_ref, sweep, state.seed), info


def pg_sweep(state: ChainState, model, config: SamplerConfig):
    """Baseline PG: parameters, fresh CRNs, (refit), conditional SMC, draw k ~ W_T."""
    return _sweep(state, model, config, "pg")


def pgas_sweep(state: ChainState, model, config: SamplerConfig):
    """PG with the reference's ancestor redrawn at every scheduled resampling."""
    return _sweep(state, model, config, "pgas")


def pgmh_sweep(state: ChainState, model, config: SamplerConfig):
    """Parameters, then an independent SMC path accepted against the
    conditional-SMC likelihood estimate of the current reference."""
    return _sweep(state, model, config, "pgmh")


SWEEPS = {"pg": pg_sweep, "pgas": pgas_sweep, "pgmh": pgmh_sweep}


def initial_state(model, params, config: SamplerConfig, seed: int) -> ChainState:
    """Reference paths drawn from an unconditional SMC at ``params`` (sweep 0)."""
    refs = []
    for c, comp in enumerate(model.components(params)):
        crn = CrnStore.draw(seed, 0, model.T, config.N, config.eis_R, 1, c)
        prop = _proposal(comp, config, crn)
        ps, _ = run_smc(comp, prop, config.schedule, config.N, crn.smc[0])
        if not ps.ok:
            raise RuntimeError(f"initial SMC failed for component {c}")
        refs.append(extract_trajectory(ps, sample_trajectory_index(ps, crn.smc[0].select_uniform)))
    return ChainState(params, np.array(refs), 0, int(seed))


def run_chain(model, config: SamplerConfig, params0, seed: int,
              reference0=None) -> ChainOutput:
    """Run burn_in + retained sweeps from ``params0``; fully determined by ``seed``."""
    if model.T < 2:
        raise ValueError("need T >= 2")
    start = time.perf_counter()
    if reference0 is None:
        state = initial_state(model, params0, config, seed)
    else:
        ref = np.atleast_2d(np.asarray(reference0, dtype=np.float64))
        state = ChainState(params0, ref, 0, int(seed))
    step = SWEEPS[config.variant]
    idx = config.default_state_index(model.T)
    n_keep = (config.iterations - config.burn_in) // config.thinning
    q = state.reference.shape[0]
    names = tuple(model.param_names)
    theta = np.empty((n_keep, len(names)))
    states = np.empty((n_keep, q, len(idx)))
    changes = np.zeros(state.reference.shape, dtype=np.int64)
    min_r2 = np.full(config.iterations, np.nan)
    timings = {"params": 0.0, "eis": 0.0, "smc": 0.0}
    failures = accepted = n_compared = 0
    m = 0
    for j in range(1, config.iterations + 1):
        state, info = step(state, model, config)
        for k, v in info.timings.items():
            timings[k] += v
        failures += info.failures
        min_r2[j - 1] = info.min_r2
        if j > config.burn_in:
            changes += info.changed
            n_compared += 1
            accepted += info.accepted
            if (j - config.burn_in) % config.thinning == 0 and m < n_keep:
                theta[m] = model.flatten(state.params)
                states[m] = state.reference[:, idx]
                m += 1
    timings["total"] = time.perf_counter() - start
    out = ChainOutput(names, theta, idx, states, changes, n_compared, timings,
                      failures, accepted, min_r2)
    out.final_state = state
    return out


def with_variant(config: SamplerConfig, **kw) -> SamplerConfig:
    return replace(config, **kw)
