"""Reverse-engineering elementary reaction networks from batch time series.

Trial networks are encoded as integer vectors and searched by self-adaptive
differential evolution; each is scored by a penalised Schwarz criterion on
derivative estimates, and the final population is re-ranked by the same
criterion on integrated concentration predictions.
"""

from .cases import CaseStudy, make_case_study
from .encoding import decode, encode, genome_bounds, round_genome
from .evolution import DEConfig, NetworkObjective, run
from .exceptions import ConfigError, CRNError, IntegrationFailure, SmoothingFailure
from .network import ConservationMatrix, Reaction, ReactionNetwork, flux, stoichiometric_matrix
from .regression import RegressionData, prune_and_fit
from .scoring import sic, sic_c, sic_d
from .selection import compare_topology, select_model
from .simulate import ExperimentSeries, ExperimentSpec, add_noise, integrate
from .smoothing import fit_rational_poly, smooth_all, smooth_experiment
from .validity import assess

__version__ = "0.1.0"

__all__ = [
    "CaseStudy", "make_case_study", "decode", "encode", "genome_bounds", "round_genome",
    "DEConfig", "NetworkObjective", "run", "ConfigError", "CRNError", "IntegrationFailure",
    "SmoothingFailure", "ConservationMatrix", "Reaction", "ReactionNetwork", "flux",
    "stoichiometric_matrix", "RegressionData", "prune_and_fit", "sic", "sic_c", "sic_d",
    "compare_topology", "select_model", "ExperimentSeries", "ExperimentSpec", "add_noise",
    "integrate", "fit_rational_poly", "smooth_all", "smooth_experiment", "assess",
]
