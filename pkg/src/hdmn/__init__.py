"""Hybrid dynamic mixed networks: CLG Bayesian networks with hard constraints, filtered
exactly, by iterative join-graph propagation, or by Rao-Blackwellised particle filtering."""

from .errors import DegeneratePotentialError, FilterFailure, HDMNError, InconsistentEvidenceError, ModelError
from .exact import BeliefState, brute_force_marginals, exact_filter, jtc_infer
from .ijgp import ijgp, ijgp_infer, ijgp_s_filter
from .network import (
    ConstraintRelation,
    DiscreteCPD,
    DynamicMixedNetwork,
    LinearGaussianCPD,
    MixedNetwork,
    Variable,
    unroll,
)
from .rbpf import bootstrap_filter, ijgp_rbpf_filter

__all__ = [
    "BeliefState", "ConstraintRelation", "DegeneratePotentialError", "DiscreteCPD", "DynamicMixedNetwork",
    "FilterFailure", "HDMNError", "InconsistentEvidenceError", "LinearGaussianCPD", "MixedNetwork", "ModelError",
    "Variable", "bootstrap_filter", "brute_force_marginals", "exact_filter", "ijgp", "ijgp_infer",
    "ijgp_rbpf_filter", "ijgp_s_filter", "jtc_infer", "unroll",
]
