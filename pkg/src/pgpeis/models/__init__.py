"""Concrete state-space models with their parameter samplers."""
from . import cev, invwishart, linear_gaussian, sv
from .base import Model
from .cev import CevModel, CevParams, CevPrior
from .invwishart import InvWishartModel, IwParams, IwPrior
from .sv import SvModel, SvParams, SvPrior

__all__ = [
    "Model", "SvModel", "SvParams", "SvPrior", "CevModel", "CevParams", "CevPrior",
    "InvWishartModel", "IwParams", "IwPrior", "sv", "cev", "invwishart", "linear_gaussian",
]
