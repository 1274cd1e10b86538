import numpy as np
import pytest

from ouq.measure import BatchSupport, ParamLayout
from ouq.optimizer import (
    ConvergenceTrace,
    Infeasible,
    OptimizerConfig,
    OptimizerError,
    maximize,
    repair,
)


def sphere(X):
    return -np.sum((X - 0.5) ** 2, axis=1)


def box(d):
    return np.tile([0.0, 1.0], (d, 1))


def mean_of(layout):
    def f(X):
        b = BatchSupport(layout, X)
        return np.sum(b.weights * b.points[:, :, 0], axis=1)

    return f


def markov_setup(m=0.3, a=0.8):
    lay = ParamLayout((2,), ((0.0, 1.0),))
    mean = mean_of(lay)

    def objective(X):
        b = BatchSupport(lay, X)
        return np.sum(b.weights * (b.points[:, :, 0] >= a), axis=1)

    def feasibility(X):
        e = mean(X)
        return np.column_stack([e - m, m - e])

    return lay, objective, feasibility


def test_sphere():
    cfg = OptimizerConfig(seed=1, max_generations=400)
    x, value, trace = maximize(sphere, None, box(4), cfg)
    assert value == pytest.approx(0.0, abs=1e-6)
    assert np.allclose(x, 0.5, atol=1e-3)


def test_markov_equality():
    lay, obj, feas = markov_setup()
    x, value, _ = maximize(obj, feas, lay, OptimizerConfig(seed=3))
    assert value == pytest.approx(0.3 / 0.8, abs=1e-3)
    assert np.max(feas(x[None, :])) <= 1e-6


def test_seeded_runs_are_identical():
    lay, obj, feas = markov_setup()
    cfg = OptimizerConfig(seed=11, max_generations=60)
    r1 = maximize(obj, feas, lay, cfg)
    r2 = maximize(obj, feas, lay, cfg)
    assert r1.value == r2.value
    assert np.array_equal(r1.x, r2.x)
    assert r1.trace.deterministic_rows() == r2.trace.deterministic_rows()


def test_objective_only_sees_admissible_candidates():
    lay, obj, feas = markov_setup()
    worst = []

    def guarded(X):
        worst.append(float(np.max(feas(X))))
        return obj(X)

    maximize(guarded, feas, lay, OptimizerConfig(seed=5, max_generations=80))
    assert max(worst) <= 1e-6


def test_trace_is_monotone_and_round_trips():
    lay, obj, feas = markov_setup()
    _, _, trace = maximize(obj, feas, lay, OptimizerConfig(seed=2, max_generations=50))
    vals = trace.best_values
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    text = trace.to_csv()
    assert text.splitlines()[0] == "generation,best_value,residual,evals,seconds"
    assert "\r" not in text
    assert ConvergenceTrace.from_csv(text).deterministic_rows() == trace.deterministic_rows()


def test_longer_budget_never_worse():
    f = lambda X: -np.sum(np.abs(X - 0.37) ** 1.5, axis=1) + np.sum(np.cos(9 * X), axis=1) * 0.1
    short = maximize(f, None, box(5), OptimizerConfig(seed=4, max_generations=40, stagnation_window=1000))
    long = maximize(f, None, box(5), OptimizerConfig(seed=4, max_generations=80, stagnation_window=1000))
    assert long.value >= short.value
    assert long.trace.best_values[: len(short.trace.records)] == short.trace.best_values


def test_contradictory_constraints_are_infeasible():
    lay = ParamLayout((2,), ((0.0, 1.0),))
    mean = mean_of(lay)

    def feas(X):
        e = mean(X)
        return np.column_stack([e - 0.0, 1.0 - e])

    with pytest.raises(Infeasible) as err:
        maximize(lambda X: np.zeros(len(X)), feas, lay, OptimizerConfig(seed=0, init_batches=2))
    assert err.value.best_residual > 0.4


def test_repair_keeps_feasible_candidates():
    lay, _, feas = markov_setup()
    x = lay.encode(lay.decode(np.array([0.2, 0.4, 0.0, 0.0])))
    out = repair(x, feas, lay)
    assert out.feasible and np.array_equal(out.x, x)


def test_repair_prefers_weights():
    lay, _, feas = markov_setup()
    rng = np.random.default_rng(0)
    moved = 0
    for _ in range(20):
        pos = np.sort(rng.uniform(0, 1, 2))
        if not pos[0] < 0.3 < pos[1]:
            continue
        x = np.concatenate([pos, rng.normal(0, 1, 2)])
        out = repair(x, feas, lay, OptimizerConfig())
        assert out.feasible
        assert out.residual <= 1e-6
        moved += int(not np.allclose(out.x[:2], pos))
    assert moved == 0


def test_config_validation():
    with pytest.raises((OptimizerError, ValueError)):
        OptimizerConfig(population=3)
    with pytest.raises((OptimizerError, ValueError)):
        OptimizerConfig(mutation=2.5)
    with pytest.raises((OptimizerError, ValueError)):
        OptimizerConfig(constraint_tol=0.0)


def test_zero_dimensional_problem():
    x, value, trace = maximize(lambda X: np.full(len(X), 0.25), None, np.zeros((0, 2)), OptimizerConfig(seed=0))
    assert x.shape == (0,) and value == 0.25
