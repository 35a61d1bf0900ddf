"""Desk-scale simulator for decentralized stochastic gradient methods.

Builds gossip topologies and mixing matrices, analyzes their spectra and
contraction constants, generates synthetic problems with tunable intra- and
inter-worker variance, and runs three synchronous-round algorithms (a
variance-reduced decentralized update, plain decentralized SGD, and
centralized parallel SGD) under fully deterministic sample streams.
"""

from .harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    compare_report,
    load_config,
    preset_config,
    run_experiment,
)
from .lemma_oracles import (
    GeometricSumBounds,
    RecurrenceSpec,
    geometric_sum_bounds,
    negative_mode_coefficients,
    recurrence_closed_form,
    recurrence_direct,
    rotation_invariance_check,
)
from .metrics import MetricRecord, Trajectory, TrajectorySummary, evaluate, summarize, zeta0
from .mixing import (
    EigenConvergenceError,
    MixingMatrix,
    TheoryConstants,
    TheoryPreconditionError,
    Topology,
    ValidationReport,
    build_mixing_matrix,
    build_topology,
    contraction_constants,
    custom_topology,
    dump_mixing,
    mixing_matrix_from_weights,
    recommended_stepsize,
    symmetric_eigen,
    theory_constants,
    validate,
)
from .optimizers import (
    ALGORITHMS,
    OptimizerState,
    cpsgd_step,
    d2_step,
    dpsgd_step,
    initial_state,
    run,
    sample_gradient_matrix,
)
from .problems import (
    GradientSample,
    ProblemInstance,
    Shard,
    VarianceEstimates,
    estimate_variances,
    full_local_gradient,
    gen_label_partition,
    gen_least_squares,
    problem_from_json,
    problem_to_json,
    stochastic_gradient,
)
from .rng import aux_stream, sample_stream

__version__ = "0.1.0"
