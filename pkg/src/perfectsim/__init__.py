"""Perfect sampling of Gibbs measures for +-1 spin systems on Z^d."""
from . import errors
from .errors import *  # noqa: F403
from .extinction import (
    ExtinctionSpec,
    TablePMF,
    VertexClass,
    check_hypotheses,
    eta,
    galton_watson,
    galton_watson_spec,
    simulate,
)
from .kernel import BACKEND
from .lattice import (
    ExplicitFinite,
    Interaction,
    Modified,
    PairGeometric,
    PairTable,
    Scaled,
    nearest_neighbour_ising,
)
from .modelio import load_extinction_spec, load_model
from .optimize import (
    brute_force_min,
    check_H1,
    check_H2,
    ising_optimal_sequence,
    mu_ising_closed_form,
    sequence_for,
    upsilon_refine,
)
from .oracle import compare_empirical, exact_gibbs_finite_support, verify_decomposition
from .sampler import (
    ModelContext,
    backward_sketch,
    forward_spin,
    perfect_sample,
    replica_rng,
    sample_replicas,
    spin_matrix,
)
from .sequences import (
    LambdaDistribution,
    RegionSequence,
    from_offsets,
    from_sets,
    is_less_refined,
    l1_balls,
    stochastically_dominates,
    validate_sequence,
)

__version__ = "0.1.0"

__all__ = errors.__all__ + [
    "verify_decomposition",
    "exact_gibbs_finite_support",
    "compare_empirical",
    "load_model",
    "load_extinction_spec",
    "BACKEND",
    "ExplicitFinite",
    "ExtinctionSpec",
    "Interaction",
    "LambdaDistribution",
    "ModelContext",
    "Modified",
    "PairGeometric",
    "PairTable",
    "RegionSequence",
    "Scaled",
    "TablePMF",
    "VertexClass",
    "backward_sketch",
    "brute_force_min",
    "check_H1",
    "check_H2",
    "check_hypotheses",
    "eta",
    "forward_spin",
    "from_offsets",
    "from_sets",
    "galton_watson",
    "galton_watson_spec",
    "is_less_refined",
    "ising_optimal_sequence",
    "l1_balls",
    "mu_ising_closed_form",
    "nearest_neighbour_ising",
    "perfect_sample",
    "replica_rng",
    "sample_replicas",
    "sequence_for",
    "simulate",
    "spin_matrix",
    "stochastically_dominates",
    "upsilon_refine",
    "validate_sequence",
]
