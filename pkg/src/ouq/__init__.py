"""Optimal bounds on failure probabilities from partial information about inputs and response."""

__version__ = "0.1.0"

from .bounds import (
    BoundResult,
    CertificationVerdict,
    CoagulationResult,
    Verdict,
    certify,
    coagulation_fragmentation,
    optimize_functional,
    solve_bound,
    solve_lower,
    solve_upper,
)
from .experiments import (
    ExperimentFunctional,
    ExperimentScore,
    JIntervals,
    Outcome,
    classify_outcome,
    clue_candidates,
    most_predictive_experiment,
    safe_unsafe_intervals,
)
from .expression import DomainError, ParseError, evaluate, parse_expression, to_text
from .inequalities import (
    DiameterVector,
    OptimalBoundResult,
    StrictlyBelowMcDiarmid,
    classic_mcdiarmid,
    hypercube_oracle,
    log_pressure_deviation_bound,
    optimal_hoeffding,
    optimal_mcdiarmid,
)
from .measure import Marginal, ProductMeasure, effective_support, event_probability, expectation
from .optimizer import ConvergenceTrace, Infeasible, OptimizerConfig, maximize, repair
from .problem import (
    AdmissibleProblem,
    AxisMean,
    AxisMedian,
    AxisPin,
    AxisProbability,
    AxisVariance,
    FailureEvent,
    InputMean,
    Known,
    MomentConstraint,
    OscillationClass,
    ResponseMean,
    ResponseProbability,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    reduce,
)
from .response import (
    BoxDomain,
    ExpressionModel,
    SurrogateModel,
    SurrogateParams,
    ballistic_limit,
    impact_domain,
    oscillation,
    sub_diameters,
)
