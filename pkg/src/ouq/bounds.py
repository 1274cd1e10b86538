"""Optimal upper and lower bounds on the failure probability, certification, and support-collapse detection."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .inequalities import optimal_mcdiarmid
from .measure import BatchSupport, ProductMeasure, effective_support
from .optimizer import ConvergenceTrace, Infeasible, OptimizerConfig, maximize
from .problem import (
    AdmissibleProblem,
    EvalContext,
    FailureProbability,
    Functional,
    Known,
    OscillationClass,
    ProblemError,
    ReducedProblem,
    mean_interval,
    reduce,
    support_bounds,
)


def draw_seed() -> int:
    return int(np.random.SeedSequence().entropy % (2**31 - 1))


@dataclass(frozen=True)
class BoundResult:
    value: float
    direction: str  # "upper" or "lower"
    measure: ProductMeasure | None
    trace: ConvergenceTrace | None
    seed: int | None
    route: str = "measure"
    regime: str | None = None
    counts: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "direction": self.direction,
            "seed": self.seed,
            "route": self.route,
            "regime": self.regime,
            "support_counts": list(self.counts),
            "extremal_measure": None if self.measure is None else self.measure.to_dict(),
        }


@dataclass(frozen=True)
class FunctionalOptimum:
    value: float
    measure: ProductMeasure
    trace: ConvergenceTrace
    seed: int
    counts: tuple[int, ...]


def _callables(reduced: ReducedProblem, score: Functional, sign: float):
    problem = reduced.problem
    layout = reduced.layout
    model = problem.model
    active = [c for c in problem.constraints if not c.is_pin]
    needs_model = score.uses_response or any(c.functional.uses_response for c in active)
    if needs_model and model is None:
        raise ProblemError("a known response model is required for this solve")

    def objective(X):
        ctx = EvalContext(BatchSupport(layout, X), model)
        return sign * score.evaluate(ctx)

    if not active:
        return objective, None

    def feasibility(X):
        ctx = EvalContext(BatchSupport(layout, X), model)
        return np.column_stack([c.violation(c.functional.evaluate(ctx)) for c in active])

    return objective, feasibility


def optimize_functional(
    problem: AdmissibleProblem,
    functional: Functional,
    maximize_it: bool,
    cfg: OptimizerConfig = OptimizerConfig(),
    counts: Sequence[int] | None = None,
) -> FunctionalOptimum:
    """Extremize a functional over the reduced admissible measures."""
    reduced = reduce(problem, counts)
    if reduced.route != "measure":
        raise ProblemError("functional optimization needs a known response model")
    seed = cfg.seed if cfg.seed is not None else draw_seed()
    sign = 1.0 if maximize_it else -1.0
    objective, feasibility = _callables(reduced, functional, sign)
    x, best, trace = maximize(objective, feasibility, reduced.layout, cfg.with_seed(seed))
    measure = reduced.layout.decode(x)
    return FunctionalOptimum(sign * best, measure, trace, seed, reduced.counts)


def _hypercube_bound(problem: AdmissibleProblem, direction: str) -> BoundResult:
    cls: OscillationClass = problem.response
    lo, hi = mean_interval(problem)
    if lo > hi:
        raise Infeasible(lo - hi, "mean constraints are contradictory")
    a = problem.failure.threshold
    D = cls.diameters
    if problem.failure.direction == ">=":
        upper_margin, lower_margin = a - hi, lo - a
    else:
        upper_margin, lower_margin = lo - a, a - hi
    if direction == "upper":
        res = optimal_mcdiarmid(upper_margin, D)
        value = res.value
    else:
        res = optimal_mcdiarmid(lower_margin, D)
        value = 1.0 - res.value
    return BoundResult(value, direction, None, None, None, "hypercube", res.regime, (2,) * D.m)


def _solve(problem: AdmissibleProblem, direction: str, cfg: OptimizerConfig, counts) -> BoundResult:
    if isinstance(problem.response, OscillationClass):
        reduce(problem)  # validates the constraint family
        return _hypercube_bound(problem, direction)
    opt = optimize_functional(problem, problem.failure_probability(), direction == "upper", cfg, counts)
    value = min(1.0, max(0.0, opt.value))
    return BoundResult(value, direction, opt.measure, opt.trace, opt.seed, "measure", None, opt.counts)


def solve_upper(problem: AdmissibleProblem, cfg: OptimizerConfig = OptimizerConfig(), counts: Sequence[int] | None = None) -> BoundResult:
    """Largest failure probability over the admissible set."""
    return _solve(problem, "upper", cfg, counts)


def solve_lower(problem: AdmissibleProblem, cfg: OptimizerConfig = OptimizerConfig(), counts: Sequence[int] | None = None) -> BoundResult:
    """Smallest failure probability over the admissible set."""
    return _solve(problem, "lower", cfg, counts)


def solve_bound(
    problem: AdmissibleProblem,
    direction: str,
    cfg: OptimizerConfig = OptimizerConfig(),
    seeds: Sequence[int] | None = None,
    counts: Sequence[int] | None = None,
) -> BoundResult:
    """Best of several seeded solves: the largest upper value or the smallest lower value."""
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    solver = solve_upper if direction == "upper" else solve_lower
    if not seeds:
        return solver(problem, cfg, counts)
    best: BoundResult | None = None
    last_error: Infeasible | None = None
    for s in seeds:
        try:
            r = solver(problem, cfg.with_seed(int(s)), counts)
        except Infeasible as exc:
            last_error = exc
            continue
        if best is None or (r.value > best.value if direction == "upper" else r.value < best.value):
            best = r
    if best is None:
        raise last_error
    return best


class Verdict(enum.Enum):
    CERTIFY = "Certify"
    DECERTIFY = "Decertify"
    CANNOT_DECIDE = "CannotDecide"


@dataclass(frozen=True)
class CertificationVerdict:
    verdict: Verdict
    lower: float
    upper: float
    epsilon: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "lower": self.lower, "upper": self.upper, "epsilon": self.epsilon}


def certify(lower: float, upper: float, epsilon: float) -> CertificationVerdict:
    """Certify when U <= eps, decertify when eps < L, otherwise undecided."""
    L, U, eps = float(lower), float(upper), float(epsilon)
    if not (0.0 <= L <= 1.0 and 0.0 <= U <= 1.0):
        raise ValueError(f"bounds must lie in [0, 1], got L={L}, U={U}")
    if L > U:
        raise ValueError(f"lower bound {L} exceeds upper bound {U}")
    if U <= eps:
        v = Verdict.CERTIFY
    elif eps < L:
        v = Verdict.DECERTIFY
    else:
        v = Verdict.CANNOT_DECIDE
    return CertificationVerdict(v, L, U, eps)


@dataclass(frozen=True)
class CoagulationResult:
    result: BoundResult
    support: tuple[int, ...]
    reduction_detected: bool
    history: tuple[tuple[int, float, tuple[int, ...]], ...] = ()
    flags: tuple[str, ...] = ()


def coagulation_fragmentation(
    problem: AdmissibleProblem,
    k_schedule: Sequence[int],
    weight_tol: float = 1e-4,
    cfg: OptimizerConfig = OptimizerConfig(),
    merge_fraction: float = 1e-3,
) -> CoagulationResult:
    """Solve with at most k atoms per axis for increasing k until the extremizer stops using them.

    An axis is settled when its effective support is below k (the optimizer
    collapsed atoms on its own) or when k already reaches the atom count that
    the reduction guarantees is enough for that axis.
    """
    ks = [int(k) for k in k_schedule]
    if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError("k schedule must be a strictly increasing list of positive integers")
    if not isinstance(problem.response, Known):
        raise ProblemError("support collapse is only meaningful for a known response")
    bound = support_bounds(problem)
    pinned = {c.scope for c in problem.constraints if c.is_pin}
    history = []
    last = None
    for k in ks:
        counts = tuple(1 if i in pinned else k for i in range(problem.domain.dim))
        res = solve_upper(problem, cfg, counts)
        eff = effective_support(res.measure, weight_tol, merge_fraction, problem.domain.intervals)
        history.append((k, res.value, eff))
        last = (res, eff)
        settled = all(i in pinned or eff[i] < k or k >= bound[i] for i in range(problem.domain.dim))
        if settled:
            return CoagulationResult(res, eff, True, tuple(history))
    res, eff = last
    return CoagulationResult(res, eff, False, tuple(history), ("no reduction detected",))
