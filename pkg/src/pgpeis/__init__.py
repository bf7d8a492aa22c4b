"""Particle Gibbs samplers with bootstrap and PEIS proposals."""
from .eis import EisParameters, PeisProposal, fit_eis, make_peis_proposal
from .smc import (BootstrapProposal, ResampleSchedule, multinomial_resample,
                  run_conditional_smc, run_smc, sample_trajectory_index)
from .ssm import (CrnStore, ParticleSystem, StateSpaceModel, extract_trajectory,
                  normalize_log_weights)

__version__ = "0.1.0"

__all__ = ["BootstrapProposal", "CrnStore", "EisParameters", "ParticleSystem", "PeisProposal",
           "ResampleSchedule", "StateSpaceModel", "extract_trajectory", "fit_eis",
           "make_peis_proposal", "multinomial_resample", "normalize_log_weights",
           "run_conditional_smc", "run_smc", "sample_trajectory_index"]
