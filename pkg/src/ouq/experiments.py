"""Experiment selection: ranges of a measured quantity under safe and unsafe scenarios, and what-if rankings."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounds import optimize_functional, solve_bound
from .optimizer import Infeasible, OptimizerConfig
from .problem import (
    AdmissibleProblem,
    AxisMean,
    AxisMedian,
    AxisPin,
    AxisProbability,
    AxisVariance,
    Functional,
    InputMean,
    MomentConstraint,
    ProblemError,
)

Interval = tuple[float, float]

UNSAFE_TIE = 1e-9


@dataclass(frozen=True)
class ExperimentFunctional:
    name: str
    functional: Functional
    outcome_grid: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "outcome_grid", tuple(float(c) for c in self.outcome_grid))

    @property
    def kind(self) -> str:
        f = self.functional
        if isinstance(f, AxisProbability):
            return "probability"
        if isinstance(f, (AxisMean, InputMean)):
            return "mean"
        if isinstance(f, AxisVariance):
            return "variance"
        if isinstance(f, AxisMedian):
            return "median"
        if isinstance(f, AxisPin):
            return "pin"
        return "other"

    def constraints_for(self, outcome: float) -> tuple[MomentConstraint, ...]:
        """Constraints saying the experiment returned ``outcome``."""
        f = self.functional
        if isinstance(f, AxisMedian):
            return MomentConstraint.median(f.scope, outcome)
        if isinstance(f, AxisPin):
            return (MomentConstraint.pin(f.scope, outcome),)
        return (MomentConstraint(f, outcome, outcome, f"{self.name} = {outcome:g}"),)

    @classmethod
    def mean(cls, problem: AdmissibleProblem, axis: int, points: int = 9, name: str = "") -> "ExperimentFunctional":
        ax = problem.domain.axes[axis]
        return cls(name or f"mean({ax.name or f'x{axis + 1}'})", AxisMean(axis), _interior(ax.lo, ax.hi, points))

    @classmethod
    def variance(cls, problem: AdmissibleProblem, axis: int, points: int = 9, name: str = "") -> "ExperimentFunctional":
        ax = problem.domain.axes[axis]
        return cls(name or f"var({ax.name or f'x{axis + 1}'})", AxisVariance(axis), _interior(0.0, ax.width**2 / 4, points))

    @classmethod
    def median(cls, problem: AdmissibleProblem, axis: int, points: int = 9, name: str = "") -> "ExperimentFunctional":
        ax = problem.domain.axes[axis]
        return cls(name or f"median({ax.name or f'x{axis + 1}'})", AxisMedian(axis), _interior(ax.lo, ax.hi, points))

    @classmethod
    def probability(cls, problem: AdmissibleProblem, axis: int, op: str, threshold: float, points: int = 9, name: str = "") -> "ExperimentFunctional":
        ax = problem.domain.axes[axis]
        return cls(
            name or f"P[{ax.name or f'x{axis + 1}'} {op} {threshold:g}]",
            AxisProbability(axis, op, threshold),
            _interior(0.0, 1.0, points),
        )


def _interior(lo: float, hi: float, n: int) -> tuple[float, ...]:
    """n cell midpoints of [lo, hi]; endpoints are avoided since they force degenerate measures."""
    return tuple(lo + (hi - lo) * (j + 0.5) / n for j in range(n))


def clue_candidates(problem: AdmissibleProblem, points: int = 9) -> list[ExperimentFunctional]:
    """Mean and variance of every axis."""
    out = []
    for i in range(problem.domain.dim):
        out.append(ExperimentFunctional.mean(problem, i, points))
        out.append(ExperimentFunctional.variance(problem, i, points))
    return out


@dataclass(frozen=True)
class JIntervals:
    safe: Interval | None
    unsafe: Interval | None
    epsilon: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "safe": None if self.safe is None else list(self.safe),
            "unsafe": None if self.unsafe is None else list(self.unsafe),
        }


def _extreme(problem, functional, maximize_it, cfg, seeds) -> float | None:
    values = []
    for s in seeds:
        try:
            values.append(optimize_functional(problem, functional, maximize_it, cfg.with_seed(s)).value)
        except Infeasible:
            continue
    if not values:
        return None
    return max(values) if maximize_it else min(values)


def safe_unsafe_intervals(
    problem: AdmissibleProblem,
    phi: ExperimentFunctional | Functional,
    epsilon: float,
    cfg: OptimizerConfig = OptimizerConfig(),
    seeds: Sequence[int] | None = None,
) -> JIntervals:
    """Ranges of ``phi`` over admissible scenarios with failure probability <= eps, and >= eps (plus a tie margin)."""
    fn = phi.functional if isinstance(phi, ExperimentFunctional) else phi
    seeds = list(seeds) if seeds else [cfg.seed]
    fail = problem.failure_probability()
    parts = {}
    for label, con in (
        ("safe", MomentConstraint(fail, -math.inf, epsilon, "P[fail] <= eps")),
        ("unsafe", MomentConstraint(fail, epsilon + UNSAFE_TIE, math.inf, "P[fail] > eps")),
    ):
        sub = problem.with_constraints(con)
        hi = _extreme(sub, fn, True, cfg, seeds)
        lo = None if hi is None else _extreme(sub, fn, False, cfg, seeds)
        parts[label] = None if hi is None or lo is None else (lo, hi)
    if parts["safe"] is None and parts["unsafe"] is None:
        raise ProblemError("both the safe and the unsafe scenario sets are empty")
    return JIntervals(parts["safe"], parts["unsafe"], float(epsilon))


class Outcome(enum.Enum):
    NO_CONCLUSION = "NoConclusion"
    SAFE = "Safe"
    UNSAFE = "Unsafe"
    FAULTY_ASSUMPTIONS = "FaultyAssumptions"


def _inside(v: float, iv: Interval | None) -> bool:
    return iv is not None and iv[0] <= v <= iv[1]


def classify_outcome(value: float, j_safe: Interval | None, j_unsafe: Interval | None) -> Outcome:
    in_safe = _inside(value, j_safe)
    in_unsafe = _inside(value, j_unsafe)
    if in_safe and in_unsafe:
        return Outcome.NO_CONCLUSION
    if in_safe:
        return Outcome.SAFE
    if in_unsafe:
        return Outcome.UNSAFE
    return Outcome.FAULTY_ASSUMPTIONS


@dataclass(frozen=True)
class OutcomeCell:
    outcome: float
    upper: float | None
    lower: float | None

    @property
    def feasible(self) -> bool:
        return self.upper is not None

    @property
    def gap(self) -> float:
        return 0.0 if self.upper is None else max(0.0, self.upper - self.lower)


@dataclass(frozen=True)
class ExperimentScore:
    name: str
    score: float
    mean_gap: float
    cells: tuple[OutcomeCell, ...]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "score": self.score,
            "mean_gap": self.mean_gap,
            "curve": [
                {"outcome": c.outcome, "upper": c.upper, "lower": c.lower, "gap": c.gap, "feasible": c.feasible}
                for c in self.cells
            ],
        }


def score_experiment(
    problem: AdmissibleProblem,
    experiment: ExperimentFunctional,
    cfg: OptimizerConfig = OptimizerConfig(),
    seeds: Sequence[int] | None = None,
) -> ExperimentScore:
    if not experiment.outcome_grid:
        raise ProblemError(f"experiment {experiment.name!r} has an empty outcome grid")
    seeds = list(seeds) if seeds else None
    cells = []
    for c in experiment.outcome_grid:
        sub = problem.with_constraints(*experiment.constraints_for(c))
        try:
            up = solve_bound(sub, "upper", cfg, seeds).value
            lo = solve_bound(sub, "lower", cfg, seeds).value
            cells.append(OutcomeCell(c, up, min(lo, up)))
        except Infeasible:
            cells.append(OutcomeCell(c, None, None))
    gaps = [cell.gap for cell in cells]
    return ExperimentScore(experiment.name, max(gaps), float(np.mean(gaps)), tuple(cells))


def rank_scores(scores: Sequence[ExperimentScore], tie_tol: float = 0.005) -> list[ExperimentScore]:
    """Ascending worst-case gap; scores within ``tie_tol`` of the best remaining one are ordered by mean gap."""
    rest = sorted(scores, key=lambda s: (s.score, s.mean_gap, s.name))
    ranked = []
    while rest:
        floor = rest[0].score
        tier = [s for s in rest if s.score <= floor + tie_tol]
        tier.sort(key=lambda s: (s.mean_gap, s.score, s.name))
        ranked.extend(tier)
        rest = [s for s in rest if s not in tier]
    return ranked


def most_predictive_experiment(
    problem: AdmissibleProblem,
    experiments: Sequence[ExperimentFunctional],
    cfg: OptimizerConfig = OptimizerConfig(),
    seeds: Sequence[int] | None = None,
    tie_tol: float = 0.005,
) -> list[ExperimentScore]:
    """Rank experiments by the largest bound gap U - L left over their possible outcomes, smallest first."""
    if not experiments:
        raise ProblemError("need at least one candidate experiment")
    return rank_scores([score_experiment(problem, e, cfg, seeds) for e in experiments], tie_tol)
