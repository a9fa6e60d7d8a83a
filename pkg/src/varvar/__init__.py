"""Variational precision models for heteroscedastic regression and VAEs."""
from . import dists, ndcore, ppc, priors, regress, v3ae

__version__ = "0.1.0"
