"""Sample-based distinguishability and closeness testing for discrete distributions."""

from .distributions import (
    DimensionError,
    DiscreteDistribution,
    PermutedPair,
    PreconditionError,
    SeparationParams,
    WeaklyDisjointDecomposition,
    apply_permutation,
    load_distribution,
    make_hard_pair,
    norms,
    permute,
    save_distribution,
    theorem_sample_size,
    weakly_disjoint_decompose,
)
from .sampling import (
    Configuration,
    SampleBudget,
    SampleSource,
    SignatureHistogram,
    derive_seed,
    extract_signatures,
    pattern_sample,
    pattern_sample_total,
    reconstruct_sigs,
    sample_type1,
    sample_type2,
    type_bridge_check,
)
from .estimators import (
    EstimatorFailure,
    L2Estimate,
    bernoulli_dominance_frequency,
    bernoulli_tail_bound,
    estimate_l2_squared,
    two_norm_comparison_experiment,
)
from .distinguisher import (
    Decision,
    DistinguishConfig,
    closeness_from_distinguisher,
    distinguish,
    distinguisher_from_closeness,
)
from .lowerbound import (
    BUILTIN_TESTERS,
    indistinguishability_experiment,
    lower_h_bound_experiment,
    play_permutation_game,
)
from .harness import ExperimentSpec, run_spec

__version__ = "0.1.0"
