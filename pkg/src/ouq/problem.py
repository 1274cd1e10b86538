"""Admissible sets: box, response information, generalized-moment constraints and the failure event.

Also the reduction to finitely supported product measures and the JSON
problem format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from .expression import Node, evaluate, parse_expression, to_text, variables
from .inequalities import DiameterVector
from .measure import BatchSupport, ParamLayout, ProductMeasure
from .response import (
    MIL_TO_MM,
    Axis,
    BoxDomain,
    ExpressionModel,
    ResponseError,
    ResponseModel,
    SurrogateModel,
    SurrogateParams,
)

_OPS = {
    "<=": np.less_equal,
    "<": np.less,
    ">=": np.greater_equal,
    ">": np.greater,
}


class ProblemError(ValueError):
    pass


class ReductionError(ProblemError):
    """A constraint falls outside the generalized-moment family."""


class SpecError(ProblemError):
    """Invalid problem specification; ``pointer`` is a JSON pointer to the offending value."""

    def __init__(self, message: str, pointer: str = "", offset: int | None = None):
        self.pointer = pointer
        self.offset = offset
        self.detail = message
        super().__init__(f"{pointer or '/'}: {message}")


# evaluation context shared by every functional for one batch of measures


class EvalContext:
    def __init__(self, batch: BatchSupport, model: ResponseModel | None):
        self.batch = batch
        self.model = model

    def response(self) -> np.ndarray:
        if self.model is None:
            raise ProblemError("this functional needs a known response model")
        b = self.batch
        return b.cached("response", lambda: self.model.evaluate(b.flat_points()).reshape(b.n, b.size))

    def expect(self, values: np.ndarray) -> np.ndarray:
        """Expectation over the product grid of an (N, S) array."""
        return np.sum(self.batch.weights * values, axis=1)


class Functional:
    """A real-valued functional of (response, product measure), evaluated on batches."""

    # subclasses provide ``scope``: None for global functionals, else an axis index
    moment_count = 1
    uses_response = False
    reducible = True

    def evaluate(self, ctx: EvalContext) -> np.ndarray:
        raise NotImplementedError

    def value(self, pm: ProductMeasure, model: ResponseModel | None = None) -> float:
        return float(self.evaluate(EvalContext(BatchSupport.from_measure(pm), model))[0])

    def describe(self) -> str:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ResponseMean(Functional):
    scope = None
    uses_response = True

    def evaluate(self, ctx):
        return ctx.expect(ctx.response())

    def describe(self):
        return "E[f]"

    def to_dict(self):
        return {"scope": "global", "integrand": "response"}


@dataclass(frozen=True)
class ResponseProbability(Functional):
    op: str
    threshold: float
    scope = None
    uses_response = True

    def __post_init__(self):
        if self.op not in _OPS:
            raise ProblemError(f"unknown comparison {self.op!r}")

    def evaluate(self, ctx):
        return ctx.expect(_OPS[self.op](ctx.response(), self.threshold).astype(float))

    def describe(self):
        return f"P[f {self.op} {self.threshold:g}]"

    def to_dict(self):
        return {"scope": "global", "integrand": {"kind": "response_probability", "op": self.op, "threshold": self.threshold}}


@dataclass(frozen=True)
class ResponseMoment(Functional):
    """E[g(f)] with g written as an expression in ``y``."""

    transform: Node
    scope = None
    uses_response = True

    def evaluate(self, ctx):
        y = ctx.response()
        return ctx.expect(evaluate(self.transform, y.reshape(-1, 1)).reshape(y.shape))

    def describe(self):
        return f"E[{to_text(self.transform).replace('x1', 'y')}]"

    def to_dict(self):
        return {"scope": "global", "integrand": {"kind": "response_expression", "expression": self.describe()[2:-1]}}


@dataclass(frozen=True)
class FailureProbability(Functional):
    event: "FailureEvent"
    scope = None
    uses_response = True

    def evaluate(self, ctx):
        return ctx.expect(self.event.indicator(ctx.response()).astype(float))

    def describe(self):
        return f"P[{self.event.describe()}]"

    def to_dict(self):
        return {"scope": "global", "integrand": {"kind": "failure_probability"}}


@dataclass(frozen=True)
class InputMean(Functional):
    """E[g(x)] for an expression g of the inputs; factor-scoped when ``scope`` is an axis."""

    expression: Node
    scope: int | None = None

    def __post_init__(self):
        if self.scope is not None:
            extra = variables(self.expression) - {self.scope}
            if extra:
                names = ", ".join(f"x{i + 1}" for i in sorted(extra))
                raise ReductionError(f"integrand scoped to axis {self.scope} also depends on {names}")

    def evaluate(self, ctx):
        b = ctx.batch
        if self.scope is not None:
            pos = b.axis_positions[self.scope]
            pts = np.zeros((pos.size, b.dim))
            pts[:, self.scope] = pos.ravel()
            vals = evaluate(self.expression, pts).reshape(pos.shape)
            return np.sum(b.axis_weights[self.scope] * vals, axis=1)
        return ctx.expect(evaluate(self.expression, b.flat_points()).reshape(b.n, b.size))

    def describe(self):
        return f"E[{to_text(self.expression)}]"

    def to_dict(self):
        return {
            "scope": "global" if self.scope is None else self.scope,
            "integrand": {"kind": "expression", "expression": to_text(self.expression)},
        }


@dataclass(frozen=True)
class AxisMean(Functional):
    scope: int

    def evaluate(self, ctx):
        b = ctx.batch
        return np.sum(b.axis_weights[self.scope] * b.axis_positions[self.scope], axis=1)

    def describe(self):
        return f"mean(x{self.scope + 1})"

    def to_dict(self):
        return {"scope": self.scope, "integrand": "mean"}


@dataclass(frozen=True)
class AxisVariance(Functional):
    scope: int
    moment_count = 2

    def evaluate(self, ctx):
        b = ctx.batch
        w = b.axis_weights[self.scope]
        p = b.axis_positions[self.scope]
        mu = np.sum(w * p, axis=1, keepdims=True)
        return np.sum(w * (p - mu) ** 2, axis=1)

    def describe(self):
        return f"var(x{self.scope + 1})"

    def to_dict(self):
        return {"scope": self.scope, "integrand": "variance"}


@dataclass(frozen=True)
class AxisProbability(Functional):
    scope: int
    op: str
    threshold: float

    def __post_init__(self):
        if self.op not in _OPS:
            raise ProblemError(f"unknown comparison {self.op!r}")

    def evaluate(self, ctx):
        b = ctx.batch
        hit = _OPS[self.op](b.axis_positions[self.scope], self.threshold)
        return np.sum(b.axis_weights[self.scope] * hit, axis=1)

    def describe(self):
        return f"P[x{self.scope + 1} {self.op} {self.threshold:g}]"

    def to_dict(self):
        return {"scope": self.scope, "integrand": {"kind": "probability", "op": self.op, "threshold": self.threshold}}


@dataclass(frozen=True)
class AxisMedian(Functional):
    """Lower median of one marginal.  As a constraint it expands to two indicator moments."""

    scope: int
    moment_count = 2
    reducible = False

    def evaluate(self, ctx):
        b = ctx.batch
        p = b.axis_positions[self.scope]
        w = b.axis_weights[self.scope]
        order = np.argsort(p, axis=1)
        ps = np.take_along_axis(p, order, axis=1)
        cw = np.cumsum(np.take_along_axis(w, order, axis=1), axis=1)
        idx = np.argmax(cw >= 0.5 - 1e-12, axis=1)
        return ps[np.arange(b.n), idx]

    def describe(self):
        return f"median(x{self.scope + 1})"

    def to_dict(self):
        return {"scope": self.scope, "integrand": "median"}


@dataclass(frozen=True)
class AxisPin(Functional):
    """Almost-sure fixing of one axis; the reduction replaces the marginal by a single atom."""

    scope: int
    moment_count = 0

    def evaluate(self, ctx):
        b = ctx.batch
        return np.sum(b.axis_weights[self.scope] * b.axis_positions[self.scope], axis=1)

    def describe(self):
        return f"x{self.scope + 1} (almost surely)"

    def to_dict(self):
        return {"scope": self.scope, "integrand": "pin"}


@dataclass(frozen=True)
class CallableFunctional(Functional):
    """Arbitrary functional of a single measure, for objectives only; never reducible as a constraint."""

    fn: Callable[[ProductMeasure], float]
    label: str = "custom"
    scope = None
    reducible = False

    def evaluate(self, ctx):
        b = ctx.batch
        out = np.empty(b.n)
        for j in range(b.n):
            from .measure import Marginal

            margs = tuple(Marginal(tuple(p[j]), tuple(w[j])) for p, w in zip(b.axis_positions, b.axis_weights))
            out[j] = float(self.fn(ProductMeasure(margs)))
        return out

    def describe(self):
        return self.label

    def to_dict(self):
        return {"scope": "global", "integrand": {"kind": "custom", "label": self.label}}


@dataclass(frozen=True)
class MomentConstraint:
    functional: Functional
    lo: float = -math.inf
    hi: float = math.inf
    name: str = ""

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ProblemError(f"constraint {self.label}: need lo <= hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def scope(self) -> int | None:
        return self.functional.scope

    @property
    def label(self) -> str:
        return self.name or self.functional.describe()

    @property
    def is_pin(self) -> bool:
        return isinstance(self.functional, AxisPin)

    def violation(self, values: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.maximum(self.lo - values, 0.0) + np.maximum(values - self.hi, 0.0)

    @classmethod
    def pin(cls, axis: int, value: float) -> "MomentConstraint":
        return cls(AxisPin(axis), value, value, f"x{axis + 1} = {value:g} a.s.")

    @classmethod
    def median(cls, axis: int, value: float) -> tuple["MomentConstraint", "MomentConstraint"]:
        return (
            cls(AxisProbability(axis, "<=", value), 0.5, math.inf, f"P[x{axis + 1} <= {value:g}] >= 1/2"),
            cls(AxisProbability(axis, ">=", value), 0.5, math.inf, f"P[x{axis + 1} >= {value:g}] >= 1/2"),
        )

    def to_dict(self) -> dict:
        d = self.functional.to_dict()
        if self.is_pin:
            d["value"] = self.lo
        else:
            d["lo"] = None if math.isinf(self.lo) else self.lo
            d["hi"] = None if math.isinf(self.hi) else self.hi
        if self.name:
            d["name"] = self.name
        return d


@dataclass(frozen=True)
class FailureEvent:
    direction: str  # "<=" or ">="
    threshold: float
    strict: bool = False

    def __post_init__(self):
        if self.direction not in ("<=", ">="):
            raise ProblemError(f"failure direction must be '<=' or '>=', got {self.direction!r}")
        if not math.isfinite(float(self.threshold)):
            raise ProblemError("failure threshold must be finite")
        object.__setattr__(self, "threshold", float(self.threshold))

    def indicator(self, values: np.ndarray) -> np.ndarray:
        if self.direction == "<=":
            return values < self.threshold if self.strict else values <= self.threshold
        return values > self.threshold if self.strict else values >= self.threshold

    def describe(self) -> str:
        op = self.direction.replace("=", "") if self.strict else self.direction
        return f"f {op} {self.threshold:g}"

    def to_dict(self) -> dict:
        return {"direction": self.direction, "threshold": self.threshold, "strict": self.strict}


@dataclass(frozen=True)
class Known:
    model: ResponseModel


@dataclass(frozen=True)
class OscillationClass:
    """All responses whose oscillation in coordinate i is at most D_i, with mean in ``mean``."""

    diameters: DiameterVector
    mean: tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        d = self.diameters if isinstance(self.diameters, DiameterVector) else DiameterVector(tuple(self.diameters))
        lo, hi = (float(v) for v in self.mean)
        if lo > hi:
            raise ProblemError("mean interval needs lo <= hi")
        object.__setattr__(self, "diameters", d)
        object.__setattr__(self, "mean", (lo, hi))


ResponseMode = Union[Known, OscillationClass]


@dataclass(frozen=True)
class AdmissibleProblem:
    domain: BoxDomain
    response: ResponseMode
    constraints: tuple[MomentConstraint, ...] = ()
    failure: FailureEvent = FailureEvent("<=", 0.0)
    epsilon: float | None = None

    def __post_init__(self):
        cons = tuple(self.constraints)
        object.__setattr__(self, "constraints", cons)
        for c in cons:
            if c.scope is not None and not 0 <= c.scope < self.domain.dim:
                raise ProblemError(f"constraint {c.label} refers to axis {c.scope}, box has {self.domain.dim}")
            if isinstance(c.functional, InputMean):
                used = variables(c.functional.expression)
                if used and max(used) >= self.domain.dim:
                    raise ProblemError(f"constraint {c.label} uses an input beyond the box dimension")
        if isinstance(self.response, Known) and self.response.model.domain.dim != self.domain.dim:
            raise ProblemError("response model and box have different dimensions")
        if isinstance(self.response, OscillationClass) and self.response.diameters.m != self.domain.dim:
            raise ProblemError("need one sub-diameter per axis")
        if self.epsilon is not None and not 0 <= self.epsilon <= 1:
            raise ProblemError("epsilon must lie in [0, 1]")

    @property
    def model(self) -> ResponseModel | None:
        return self.response.model if isinstance(self.response, Known) else None

    def with_constraints(self, *extra: MomentConstraint) -> "AdmissibleProblem":
        return replace(self, constraints=self.constraints + tuple(extra))

    def failure_probability(self) -> FailureProbability:
        return FailureProbability(self.failure)


@dataclass(frozen=True)
class ReducedProblem:
    problem: AdmissibleProblem
    counts: tuple[int, ...]
    layout: ParamLayout | None
    route: str  # "measure" or "hypercube"

    @property
    def cube_dim(self) -> int | None:
        return self.problem.domain.dim if self.route == "hypercube" else None


def support_bounds(problem: AdmissibleProblem) -> tuple[int, ...]:
    """Atoms per axis sufficient for the optimum: 1 + global moments + that axis's moments."""
    m = problem.domain.dim
    n_global = 0
    n_axis = [0] * m
    for c in problem.constraints:
        if c.is_pin:
            continue
        if c.scope is None:
            n_global += c.functional.moment_count
        else:
            n_axis[c.scope] += c.functional.moment_count
    return tuple(n_global + n_axis[i] + 1 for i in range(m))


def reduce(problem: AdmissibleProblem, counts: Sequence[int] | None = None) -> ReducedProblem:
    """Finite-support reduction; ``counts`` overrides the per-axis atom counts of free axes."""
    for c in problem.constraints:
        if not c.functional.reducible:
            raise ReductionError(f"constraint {c.label!r} is not a generalized moment")
        if isinstance(c.functional, InputMean) and c.scope is not None:
            extra = variables(c.functional.expression) - {c.scope}
            if extra:
                raise ReductionError(f"constraint {c.label!r} is scoped to one axis but uses others")
    if isinstance(problem.response, OscillationClass):
        for c in problem.constraints:
            if not isinstance(c.functional, ResponseMean):
                raise ReductionError(
                    f"constraint {c.label!r}: only mean-of-response constraints are supported for oscillation classes"
                )
        return ReducedProblem(problem, (2,) * problem.domain.dim, None, "hypercube")

    pinned: dict[int, float] = {}
    for c in problem.constraints:
        if c.is_pin:
            if c.scope in pinned and pinned[c.scope] != c.lo:
                raise ProblemError(f"axis {c.scope} is pinned to two different values")
            pinned[c.scope] = c.lo
    base = support_bounds(problem)
    if counts is None:
        k = base
    else:
        if len(counts) != problem.domain.dim:
            raise ProblemError("need one support count per axis")
        k = tuple(int(v) for v in counts)
    k = tuple(1 if i in pinned else k[i] for i in range(problem.domain.dim))
    try:
        layout = ParamLayout(k, problem.domain.intervals, pinned)
    except ValueError as exc:
        raise ProblemError(str(exc)) from exc
    return ReducedProblem(problem, k, layout, "measure")


def mean_interval(problem: AdmissibleProblem) -> tuple[float, float]:
    """Intersection of the class's mean interval with every mean-of-response constraint."""
    lo, hi = problem.response.mean
    for c in problem.constraints:
        lo, hi = max(lo, c.lo), min(hi, c.hi)
    return lo, hi


# JSON problem format


def _unit_scale(unit: str) -> tuple[float, str]:
    if unit.lower() in ("mil", "mils"):
        return MIL_TO_MM, "mm"
    return 1.0, unit


def unit_scale(unit: str) -> float:
    """Factor converting a declared axis unit to the internal one (mils become mm)."""
    return _unit_scale(unit)[0]


def _number(data: dict, key: str, ptr: str, default=None, allow_null=True) -> float | None:
    if key not in data:
        if default is None:
            raise SpecError(f"missing '{key}'", ptr)
        return default
    v = data[key]
    if v is None and allow_null:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SpecError(f"'{key}' must be a number", f"{ptr}/{key}")
    return float(v)


def _parse_domain(data, ptr: str) -> tuple[BoxDomain, list[float]]:
    if not isinstance(data, dict) or not isinstance(data.get("axes"), list) or not data["axes"]:
        raise SpecError("domain needs a non-empty 'axes' list", ptr)
    axes, scales = [], []
    for i, ax in enumerate(data["axes"]):
        p = f"{ptr}/axes/{i}"
        if not isinstance(ax, dict):
            raise SpecError("axis must be an object", p)
        scale, unit = _unit_scale(str(ax.get("unit", "")))
        lo = _number(ax, "lo", p, allow_null=False)
        hi = _number(ax, "hi", p, allow_null=False)
        try:
            axes.append(Axis(lo * scale, hi * scale, unit, str(ax.get("name", ""))))
        except ResponseError as exc:
            raise SpecError(str(exc), p) from exc
        scales.append(scale)
    return BoxDomain(tuple(axes)), scales


def _scope(value, domain: BoxDomain, ptr: str) -> int | None:
    if value is None or value == "global":
        return None
    try:
        return domain.axis_index(value)
    except ResponseError as exc:
        raise SpecError(str(exc), ptr) from exc


def functional_from_dict(item: dict, domain: BoxDomain, scales: Sequence[float] | None = None, ptr: str = "") -> Functional:
    """Functional described by {scope, integrand}; values scoped to an axis use that axis's declared unit."""
    if not isinstance(item, dict):
        raise SpecError("expected an object", ptr)
    scope = _scope(item.get("scope", "global"), domain, f"{ptr}/scope")
    integrand = item.get("integrand")
    if isinstance(integrand, str):
        integrand = {"kind": integrand}
    if not isinstance(integrand, dict) or "kind" not in integrand:
        raise SpecError("integrand must be a kind name or an object with 'kind'", f"{ptr}/integrand")
    kind = integrand["kind"]
    iptr = f"{ptr}/integrand"
    scale = 1.0 if scope is None or scales is None else scales[scope]
    names = {a.name: i for i, a in enumerate(domain.axes) if a.name}

    def need_axis():
        if scope is None:
            raise SpecError(f"integrand '{kind}' needs an axis scope", f"{ptr}/scope")
        return scope

    try:
        if kind == "response":
            if scope is not None:
                raise SpecError("the response mean is a global moment", f"{ptr}/scope")
            return ResponseMean()
        if kind == "response_probability":
            return ResponseProbability(str(integrand.get("op", "<=")), _number(integrand, "threshold", iptr))
        if kind == "response_expression":
            return ResponseMoment(parse_expression(str(integrand.get("expression", "")), dim=1, names={"y": 0}))
        if kind == "failure_probability":
            raise SpecError("use the problem's failure event instead", iptr)
        if kind == "expression":
            expr = parse_expression(str(integrand.get("expression", "")), dim=domain.dim, names=names)
            return InputMean(expr, scope)
        if kind == "mean":
            return AxisMean(need_axis())
        if kind == "variance":
            return AxisVariance(need_axis())
        if kind == "median":
            return AxisMedian(need_axis())
        if kind == "pin":
            return AxisPin(need_axis())
        if kind == "probability":
            ax = need_axis()
            return AxisProbability(ax, str(integrand.get("op", "<=")), _number(integrand, "threshold", iptr) * scale)
    except SpecError:
        raise
    except (ProblemError, ValueError) as exc:
        raise SpecError(str(exc), iptr, getattr(exc, "offset", None)) from exc
    raise SpecError(f"unknown integrand kind {kind!r}", f"{iptr}/kind")


def value_scale(functional: Functional, scale: float) -> float:
    if isinstance(functional, AxisVariance):
        return scale * scale
    if isinstance(functional, (AxisMean, AxisMedian, AxisPin)):
        return scale
    return 1.0


def constraints_from_dict(item: dict, domain: BoxDomain, scales: Sequence[float], ptr: str) -> list[MomentConstraint]:
    fn = functional_from_dict(item, domain, scales, ptr)
    vs = value_scale(fn, scales[fn.scope] if fn.scope is not None else 1.0)
    name = str(item.get("name", ""))
    try:
        if isinstance(fn, (AxisPin, AxisMedian)):
            value = _number(item, "value", ptr, allow_null=False) * vs
            if isinstance(fn, AxisPin):
                return [MomentConstraint.pin(fn.scope, value)]
            return list(MomentConstraint.median(fn.scope, value))
        lo = _number(item, "lo", ptr, default=-math.inf)
        hi = _number(item, "hi", ptr, default=math.inf)
        lo = -math.inf if lo is None else lo * vs
        hi = math.inf if hi is None else hi * vs
        if "value" in item:
            lo = hi = _number(item, "value", ptr, allow_null=False) * vs
        return [MomentConstraint(fn, lo, hi, name)]
    except SpecError:
        raise
    except ProblemError as exc:
        raise SpecError(str(exc), ptr) from exc


def problem_from_dict(data: dict) -> AdmissibleProblem:
    """Build a problem from the JSON format; errors carry a JSON pointer."""
    if not isinstance(data, dict):
        raise SpecError("problem specification must be a JSON object", "")
    resp = data.get("response")
    if not isinstance(resp, dict) or "kind" not in resp:
        raise SpecError("response needs a 'kind'", "/response")
    kind = resp["kind"]
    if "domain" in data:
        domain, scales = _parse_domain(data["domain"], "/domain")
    elif kind == "oscillation_class" and isinstance(resp.get("diameters"), list):
        domain = BoxDomain(tuple(Axis(0.0, 1.0, "", f"x{i + 1}") for i in range(len(resp["diameters"]))))
        scales = [1.0] * domain.dim
    else:
        raise SpecError("missing 'domain'", "")

    try:
        if kind == "surrogate":
            params = resp.get("params", {})
            if not isinstance(params, dict):
                raise SpecError("params must be an object", "/response/params")
            unknown = set(params) - set(SurrogateParams().to_dict())
            if unknown:
                raise SpecError(f"unknown surrogate parameters {sorted(unknown)}", "/response/params")
            response: ResponseMode = Known(SurrogateModel(domain, SurrogateParams(**params)))
        elif kind == "expression":
            text = resp.get("expression")
            if not isinstance(text, str):
                raise SpecError("expression response needs an 'expression' string", "/response/expression")
            try:
                response = Known(ExpressionModel.from_text(text, domain))
            except ValueError as exc:
                raise SpecError(str(exc), "/response/expression", getattr(exc, "offset", None)) from exc
        elif kind == "oscillation_class":
            diam = resp.get("diameters")
            if not isinstance(diam, list):
                raise SpecError("oscillation class needs a 'diameters' list", "/response/diameters")
            mean = resp.get("mean", [None, None])
            if not isinstance(mean, list) or len(mean) != 2:
                raise SpecError("mean must be [lo, hi]", "/response/mean")
            lo = -math.inf if mean[0] is None else float(mean[0])
            hi = math.inf if mean[1] is None else float(mean[1])
            try:
                response = OscillationClass(DiameterVector(tuple(diam)), (lo, hi))
            except (ValueError, TypeError) as exc:
                raise SpecError(str(exc), "/response/diameters") from exc
        else:
            raise SpecError(f"unknown response kind {kind!r}", "/response/kind")
    except ResponseError as exc:
        raise SpecError(str(exc), "/response") from exc

    cons: list[MomentConstraint] = []
    items = data.get("constraints", [])
    if not isinstance(items, list):
        raise SpecError("constraints must be a list", "/constraints")
    for i, item in enumerate(items):
        cons.extend(constraints_from_dict(item, domain, scales, f"/constraints/{i}"))

    fail = data.get("failure", {"direction": "<=", "threshold": 0.0})
    if not isinstance(fail, dict):
        raise SpecError("failure must be an object", "/failure")
    try:
        failure = FailureEvent(
            str(fail.get("direction", "<=")),
            _number(fail, "threshold", "/failure", allow_null=False),
            bool(fail.get("strict", False)),
        )
    except ProblemError as exc:
        raise SpecError(str(exc), "/failure") from exc
    eps = data.get("epsilon")
    if eps is not None and (isinstance(eps, bool) or not isinstance(eps, (int, float))):
        raise SpecError("epsilon must be a number", "/epsilon")
    try:
        return AdmissibleProblem(domain, response, tuple(cons), failure, None if eps is None else float(eps))
    except ProblemError as exc:
        raise SpecError(str(exc), "") from exc


def problem_to_dict(problem: AdmissibleProblem) -> dict:
    out: dict = {
        "domain": {
            "axes": [{"name": a.name, "lo": a.lo, "hi": a.hi, "unit": a.unit} for a in problem.domain.axes]
        },
        "constraints": [c.to_dict() for c in problem.constraints],
        "failure": problem.failure.to_dict(),
    }
    if isinstance(problem.response, Known):
        out["response"] = problem.response.model.to_dict()
    else:
        lo, hi = problem.response.mean
        out["response"] = {
            "kind": "oscillation_class",
            "diameters": list(problem.response.diameters.values),
            "mean": [None if math.isinf(lo) else lo, None if math.isinf(hi) else hi],
        }
    if problem.epsilon is not None:
        out["epsilon"] = problem.epsilon
    return out


def load_problem(text: str) -> AdmissibleProblem:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise SpecError(f"malformed JSON at byte offset {offset}: {exc.msg}", "", offset) from exc
    return problem_from_dict(data)
