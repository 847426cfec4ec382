"""Constraint-aware Bayesian optimization for parametric hardware design spaces.

The pieces, in dependency order: ``space`` defines parameter spaces and the
one-hot/rank encoding with its snap projection; ``constraints`` evaluates
declarative parameter constraints both exactly and as a smooth relaxation;
``gp`` fits the snap-composed Gaussian process surrogate; ``checkpoints``
stores evaluated designs and their synthesis artifacts and learns the
distance weights used for checkpoint retrieval; ``warmstart`` generates
orthogonal-array initial designs; ``acquisition`` maximizes cost-cooled
Expected Improvement under the constraints; ``evaluation`` prices and scores
configurations (synthetic model or external tool); ``driver`` ties it all
into reproducible optimization runs; ``assets`` ships verified space,
constraint, and model files for three processors.
"""

from .acquisition import (
    AcquisitionContext,
    CoolingSchedule,
    alpha_cool,
    cooled_value,
    cooling_factor,
    ei_value,
    expected_improvement,
    maximize_acquisition,
)
from .checkpoints import (
    CheckpointRecord,
    CheckpointStore,
    DistanceWeights,
    cost_estimate,
    learn_weights,
    match_config,
    weighted_distance,
)
from .constraints import (
    exact_configuration,
    exact_tree,
    load_constraints,
    parse_constraints,
    smooth_gradient,
    smooth_tree,
)
from .driver import (
    RunConfig,
    RunReport,
    emit_report,
    run_baseline,
    run_eval_bench,
    run_optimization,
)
from .evaluation import (
    EvalHarness,
    EvaluationResult,
    ExternalEvaluator,
    ResourceBudget,
    SyntheticModel,
    estimated_execution_time,
)
from .gp import GpModel, KernelParams, fit, kernel_value
from .space import ParameterDef, ParameterSpace, decode, encode, snap
from .warmstart import OrthogonalArray, generate_oa, warm_start_configs

__version__ = "0.1.0"
