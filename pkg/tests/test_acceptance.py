"""Acceptance criteria, one verdict line per criterion.

Lines are printed as each criterion finishes and collected into the pytest
terminal summary. Run directly with ``python3 tests/test_acceptance.py`` or
through pytest (``-m "not slow"`` skips the optimizer-heavy criteria).
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
from conftest import ACCEPTANCE_LINES  # noqa: E402

from ouq.bounds import solve_bound, solve_lower, solve_upper
from ouq.experiments import clue_candidates, most_predictive_experiment, safe_unsafe_intervals
from ouq.inequalities import classic_mcdiarmid, hypercube_oracle, log_pressure_deviation_bound, optimal_mcdiarmid
from ouq.measure import effective_support
from ouq.optimizer import OptimizerConfig
from ouq.problem import (
    AdmissibleProblem,
    AxisProbability,
    FailureEvent,
    Known,
    MomentConstraint,
    OscillationClass,
    ResponseMean,
)
from ouq.inequalities import DiameterVector
from ouq.response import (
    Axis,
    BoxDomain,
    ExpressionModel,
    SurrogateModel,
    SurrogateParams,
    ballistic_limit,
    impact_domain,
    perforation_area,
    sub_diameters,
)

SOLVE_SEEDS = (0, 1, 2, 3, 4)
RANK_SEEDS = (0, 1, 2)


@dataclass
class Criterion:
    number: int
    title: str
    checks: list[tuple[bool, str]] = field(default_factory=list)

    def check(self, ok: bool, text: str) -> bool:
        self.checks.append((bool(ok), text))
        return bool(ok)

    def near(self, label: str, value: float, target: float, tol: float) -> bool:
        return self.check(abs(value - target) <= tol, f"{label} = {value:.6g} (target {target:g} ±{tol:g})")

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks)

    def report(self, blocking: bool = True) -> None:
        status = "PASS" if self.passed else "FAIL"
        failed = [t for ok, t in self.checks if not ok]
        detail = "; ".join(failed) if failed else "; ".join(t for _, t in self.checks[:4])
        tail = "" if blocking or self.passed else " [non-blocking]"
        line = f"[{status}] criterion {self.number}: {self.title} ({len(self.checks) - len(failed)}/{len(self.checks)} checks){tail} -- {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        if not self.passed:
            if blocking:
                pytest.fail(line, pytrace=False)
            pytest.xfail(line)


def a_h_problem() -> AdmissibleProblem:
    dom = impact_domain()
    return AdmissibleProblem(dom, Known(SurrogateModel(dom)), (MomentConstraint(ResponseMean(), 5.5, 7.5),), FailureEvent("<=", 0.0))


def refinements() -> dict[str, AdmissibleProblem]:
    base = a_h_problem()
    return {
        "median velocity 2.45": base.with_constraints(*MomentConstraint.median(2, 2.45)),
        "median obliquity pi/12": base.with_constraints(*MomentConstraint.median(1, math.pi / 12)),
        "obliquity pi/6 a.s.": base.with_constraints(MomentConstraint.pin(1, math.pi / 6)),
    }


_SOLVES: dict[str, object] = {}


def best_upper(name: str, problem: AdmissibleProblem):
    if name not in _SOLVES:
        _SOLVES[name] = solve_bound(problem, "upper", OptimizerConfig(), SOLVE_SEEDS)
    return _SOLVES[name]


# 1


def test_closed_form_pins():
    c = Criterion(1, "closed-form pins")
    r = optimal_mcdiarmid(5.5, (8.86, 7.20, 4.17))
    c.near("optimal bound", r.value, 0.437, 1e-3)
    c.near("F1", r.F1, 0.437, 1e-3)
    c.near("F2", r.F2, 0.253, 1e-3)
    c.near("classic bound", classic_mcdiarmid(5.5, (8.86, 7.20, 4.17)), 0.664, 1e-3)
    c.report()


# 2


def test_oracle_equivalence():
    c = Criterion(2, "oracle matches closed forms; continuous at seams")
    rng = np.random.default_rng(2024)
    for m in (1, 2, 3):
        worst = 0.0
        for _ in range(100):
            D = rng.uniform(0.1, 5.0, m)
            a = rng.uniform(0.0, 1.05 * D.sum())
            worst = max(worst, abs(hypercube_oracle(a, D) - optimal_mcdiarmid(a, D).value))
        c.check(worst <= 5e-3, f"m={m}: max |oracle - closed form| over 100 draws = {worst:.2e} (tol 5e-3)")
    jump = 0.0
    seams = 0
    for m in (1, 2, 3):
        for _ in range(100):
            D = rng.uniform(0.1, 5.0, m)
            for s in optimal_mcdiarmid(1.0, D).branch_boundaries:
                if s <= 0:
                    continue
                seams += 1
                lo = optimal_mcdiarmid(s * (1 - 1e-14), D).value
                at = optimal_mcdiarmid(s, D).value
                hi = optimal_mcdiarmid(s * (1 + 1e-14), D).value
                jump = max(jump, abs(lo - at), abs(hi - at))
    c.check(jump <= 1e-9, f"largest jump across {seams} seams = {jump:.2e} (tol 1e-9)")
    c.report()


# 3


def test_sub_diameters():
    c = Criterion(3, "sub-diameters of the surrogate")
    osc = sub_diameters(SurrogateModel())
    for name, v, t in zip(("thickness", "obliquity", "velocity"), osc, (8.86, 4.17, 7.20)):
        c.near(f"Osc[{name}]", v, t, 0.02)
    c.report()


# 4


def uniform_quadrature(n: int = 96) -> tuple[float, float]:
    """E[H] and P[H = 0] under the uniform measure on the box, by Gauss-Legendre quadrature.

    For each (h, theta) node the velocity integral is split at the ballistic
    limit; above it the substitution v = limit + (top - limit) s^2 removes the
    endpoint singularity of the tanh power.
    """
    (h0, h1), (t0, t1), (v0, v1) = impact_domain().intervals
    x, w = np.polynomial.legendre.leggauss(n)
    hs = 0.5 * (h1 - h0) * (x + 1) + h0
    ts = 0.5 * (t1 - t0) * (x + 1) + t0
    wh = 0.5 * w
    H, T = np.meshgrid(hs, ts, indexing="ij")
    W = np.outer(wh, wh)
    vbl = np.clip(ballistic_limit(H, T), v0, v1)
    p_zero = float(np.sum(W * (vbl - v0)) / (v1 - v0))
    s = 0.5 * (x + 1)
    ws = 0.5 * w
    V = vbl[..., None] + (v1 - vbl[..., None]) * s**2
    jac = 2 * (v1 - vbl[..., None]) * s
    inner = np.sum(perforation_area(H[..., None], T[..., None], V) * jac * ws, axis=-1)
    mean = float(np.sum(W * inner) / (v1 - v0))
    return mean, p_zero


def uniform_monte_carlo(n: int = 2_000_000, seed: int = 11) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(lo, hi, n) for lo, hi in impact_domain().intervals])
    y = SurrogateModel().evaluate(pts)
    return float(y.mean()), float(np.mean(y <= 0))


@pytest.mark.slow
def test_ouq_solves():
    c = Criterion(4, "optimal upper bounds on A_H and refinements; uniform-measure check")
    c.near("U(A_H)", best_upper("A_H", a_h_problem()).value, 0.379, 0.005)
    targets = {"median velocity 2.45": 0.300, "median obliquity pi/12": 0.365, "obliquity pi/6 a.s.": 0.280}
    for name, problem in refinements().items():
        c.near(f"U(A_H + {name})", best_upper(name, problem).value, targets[name], 0.01)
    mean_q, p_q = uniform_quadrature()
    mean_mc, p_mc = uniform_monte_carlo()
    c.check(abs(mean_q - mean_mc) < 0.01 and abs(p_q - p_mc) < 0.002, f"quadrature agrees with Monte Carlo ({mean_q:.4f}/{mean_mc:.4f}, {p_q:.4f}/{p_mc:.4f})")
    c.near("uniform E[H]", mean_q, 6.58, 0.01)
    c.near("uniform P[H = 0]", p_q, 0.038, 0.002)
    c.report()


# 5


@pytest.mark.slow
def test_support_collapse():
    c = Criterion(5, "support collapse of the A_H extremizer")
    problem = a_h_problem()
    res = best_upper("A_H", problem)
    pm = res.measure
    dom = problem.domain
    eff = effective_support(pm, 1e-4, 1e-3, dom.intervals)
    c.check(eff == (2, 1, 1), f"effective support {eff} (target (2, 1, 1))")

    def heavy(i):
        m = pm.marginals[i]
        return sorted((p, w) for p, w in zip(m.positions, m.weights) if w > 1e-4)

    th = heavy(0)
    lo, hi = dom.intervals[0]
    if len(th) == 2:
        (p1, w1), (p2, w2) = th
        c.check(abs(p1 - lo) < 1e-3 and abs(p2 - hi) < 1e-3, f"thickness atoms at {p1:.4f}, {p2:.4f} (box endpoints {lo:.4f}, {hi:.4f})")
        c.near("weight at 60 mils", w1, 0.621, 0.02)
        c.near("weight at 105 mils", w2, 0.379, 0.02)
    else:
        c.check(False, f"thickness has {len(th)} heavy atoms")
    vel = max(heavy(2), key=lambda t: t[1])[0]
    c.near("velocity atom", vel, float(ballistic_limit(2.667, 0.0)), 0.01)
    obl = max(heavy(1), key=lambda t: t[1])[0]
    c.near("obliquity atom", obl, 0.0, 0.01)
    c.report()


# 6


@pytest.mark.slow
def test_experiment_intervals():
    c = Criterion(6, "safe/unsafe ranges of mu[v >= 2.45] on A_H")
    phi = AxisProbability(2, ">=", 2.45)
    for eps, target in ((0.1, 0.900), (0.2, 0.800), (0.3, 0.599)):
        iv = safe_unsafe_intervals(a_h_problem(), phi, eps, OptimizerConfig(), SOLVE_SEEDS[:3])
        if iv.unsafe is None:
            c.check(False, f"eps={eps}: unsafe set empty")
        else:
            c.near(f"eps={eps} sup J_unsafe", iv.unsafe[1], target, 0.01)
        ok = iv.safe is not None and abs(iv.safe[0]) <= 1e-6 and abs(iv.safe[1] - 1) <= 1e-6
        c.check(ok, f"eps={eps} J_safe = {iv.safe} (target [0, 1])")
    c.report()


# 7


def _line(lo, hi, constraints, failure):
    dom = BoxDomain((Axis(lo, hi, name="x"),))
    return AdmissibleProblem(dom, Known(ExpressionModel.from_text("x", dom)), tuple(constraints), failure)


@pytest.mark.slow
def test_property_suites():
    c = Criterion(7, "property suites")
    cfg = OptimizerConfig(seed=0)
    for m, a in ((0.3, 0.8), (0.2, 0.5)):
        u = solve_upper(_line(0, 1, [MomentConstraint(ResponseMean(), m, m)], FailureEvent(">=", a)), cfg).value
        c.near(f"Markov m={m}, a={a}", u, m / a, 1e-3)
    for a, b, D in ((1.0, 0.4, 2.0), (3.0, 1.0, 2.5)):
        expected = max(0.0, 1 - max(0.0, a - b) / D)
        u = solve_upper(_line(a - D, a, [MomentConstraint(ResponseMean(), -math.inf, b)], FailureEvent(">=", a)), cfg).value
        c.near(f"seesaw a={a}, b={b}, D={D}", u, expected, 1e-3)
        cube = AdmissibleProblem(BoxDomain((Axis(0, 1),)), OscillationClass(DiameterVector((D,)), (-math.inf, b)), (), FailureEvent(">=", a))
        c.near(f"seesaw (cube route) a={a}", solve_upper(cube).value, expected, 1e-12)

    base_u = best_upper("A_H", a_h_problem()).value
    base_l = solve_lower(a_h_problem(), cfg).value
    c.check(0.0 <= base_l <= base_u <= 1.0, f"sandwich on A_H: 0 <= {base_l:.4f} <= {base_u:.4f} <= 1")
    for name, problem in refinements().items():
        u = best_upper(name, problem).value
        l = solve_lower(problem, cfg).value
        c.check(u <= base_u + 1e-3 and l >= base_l - 1e-3, f"monotone under '{name}': U {u:.4f} <= {base_u:.4f}, L {l:.4f} >= {base_l:.4f}")
        c.check(0.0 <= l <= u <= 1.0, f"sandwich under '{name}'")

    rng = np.random.default_rng(7)
    scale_err = perm_err = prop_err = 0.0
    for _ in range(300):
        m = int(rng.integers(1, 4))
        D = rng.uniform(0.1, 5, m)
        a = rng.uniform(0.01, D.sum())
        lam = rng.uniform(0.1, 20)
        v = optimal_mcdiarmid(a, D).value
        scale_err = max(scale_err, abs(optimal_mcdiarmid(lam * a, lam * D).value - v))
        perm_err = max(perm_err, abs(optimal_mcdiarmid(a, rng.permutation(D)).value - v))
        d1, d2 = sorted(rng.uniform(0.1, 5, 2), reverse=True)
        a2 = rng.uniform(0, d1 - d2)
        if a2 > 0:
            prop_err = max(prop_err, abs(optimal_mcdiarmid(a2, (d1, d2)).value - (1 - a2 / d1)))
    c.check(scale_err <= 1e-9, f"scale invariance max error {scale_err:.1e}")
    c.check(perm_err <= 1e-12, f"permutation invariance max error {perm_err:.1e}")
    c.check(prop_err <= 1e-12, f"m=2 non-propagation max error {prop_err:.1e}")
    c.report()


# 8


def test_porous_media_identity():
    c = Criterion(8, "log-pressure deviation bound equals the two-axis formula")
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(50):
        a, k, f = rng.uniform(0, 6), rng.uniform(0.05, 4), rng.uniform(0.05, 4)
        d1, d2 = max(k, f), min(k, f)
        if a >= d1 + d2:
            expected = 0.0
        elif a >= d1 - d2:
            expected = (d1 + d2 - a) ** 2 / (4 * d1 * d2)
        else:
            expected = 1 - a / d1
        mismatches += log_pressure_deviation_bound(a, k, f) != optimal_mcdiarmid(a, (k, f)).value
        mismatches += not math.isclose(log_pressure_deviation_bound(a, k, f), expected, rel_tol=1e-12, abs_tol=1e-15)
    c.check(mismatches == 0, f"{mismatches} mismatches over 50 random triples")
    c.report()


# 9


@pytest.mark.slow
def test_experiment_ranking():
    c = Criterion(9, "most predictive experiment among mean/variance candidates")
    problem = a_h_problem()
    rankings = []
    for seed in RANK_SEEDS:
        ranked = most_predictive_experiment(problem, clue_candidates(problem, points=5), OptimizerConfig(seed=seed))
        rankings.append([s.name for s in ranked])
        scores = ", ".join(f"{s.name}={s.score:.3f}/{s.mean_gap:.3f}" for s in ranked)
        c.check(ranked[0].name == "var(thickness)", f"seed {seed}: first = {ranked[0].name} ({scores})")
    c.check(all(r[0] == rankings[0][0] for r in rankings), f"first choice stable across seeds {RANK_SEEDS}")
    c.report(blocking=False)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
