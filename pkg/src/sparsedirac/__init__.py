"""Spectral computations for radial Dirac operators with sparse bump potentials."""

from .errors import *  # noqa: F401,F403
from .potential import BumpPotential, BumpProfile, build_bump_potential, evaluate, free_potential, normalize_profile
from .pruefer import PrueferState, SpectralParam, kappa_of_lambda, lambda_of_kappa

__version__ = "0.1.0"
