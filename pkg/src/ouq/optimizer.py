"""Differential evolution with a repair step that makes every evaluated candidate admissible.

Objective and feasibility callables work on batches: they receive an (N, d)
array of flat parameter vectors.  The objective returns N values to be
maximized; the feasibility callable returns an (N, K) array of constraint
violations (zero when satisfied, positive otherwise).
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

Objective = Callable[[np.ndarray], np.ndarray]
Feasibility = Callable[[np.ndarray], np.ndarray]


class OptimizerError(ValueError):
    pass


class Infeasible(RuntimeError):
    """No candidate could be brought within the constraint tolerance."""

    def __init__(self, best_residual: float, message: str = ""):
        self.best_residual = float(best_residual)
        super().__init__(message or f"no admissible candidate found (best residual {self.best_residual:.3g})")


@dataclass(frozen=True)
class OptimizerConfig:
    population: int = 40
    mutation: float = 0.7
    crossover: float = 0.9
    max_generations: int = 1000
    stagnation_window: int = 100
    stagnation_tol: float = 1e-6
    seed: int | None = None
    constraint_tol: float = 1e-6
    repair_rounds: int = 6
    repair_steps: int = 3
    penalty_start: float = 1.0
    penalty_growth: float = 10.0
    init_batches: int = 10
    fd_step: float = 1e-7

    def __post_init__(self) -> None:
        if self.population < 4:
            raise OptimizerError("population must be at least 4")
        if not 0 < self.mutation < 2:
            raise OptimizerError("mutation factor must lie in (0, 2)")
        if not 0 <= self.crossover <= 1:
            raise OptimizerError("crossover rate must lie in [0, 1]")
        if self.max_generations < 0 or self.stagnation_window < 1:
            raise OptimizerError("generation budgets must be positive")
        for name in ("stagnation_tol", "constraint_tol", "penalty_start", "fd_step"):
            if not getattr(self, name) > 0:
                raise OptimizerError(f"{name} must be positive")
        if self.penalty_growth <= 1 or self.repair_rounds < 1 or self.repair_steps < 1 or self.init_batches < 1:
            raise OptimizerError("repair budget must be positive and penalty growth > 1")

    def with_seed(self, seed: int | None) -> "OptimizerConfig":
        return _replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def _replace(cfg: OptimizerConfig, **changes) -> OptimizerConfig:
    data = cfg.to_dict()
    data.update(changes)
    return OptimizerConfig(**data)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_value: float
    residual: float
    evals: int
    seconds: float


@dataclass
class ConvergenceTrace:
    records: list[GenerationRecord] = field(default_factory=list)

    COLUMNS = ("generation", "best_value", "residual", "evals", "seconds")

    def append(self, record: GenerationRecord) -> None:
        self.records.append(record)

    @property
    def best_values(self) -> list[float]:
        return [r.best_value for r in self.records]

    def deterministic_rows(self) -> list[tuple]:
        """Rows without wall time, which is the only run-to-run varying column."""
        return [(r.generation, r.best_value, r.residual, r.evals) for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.records:
            w.writerow([r.generation, repr(r.best_value), repr(r.residual), r.evals, f"{r.seconds:.6f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            [
                GenerationRecord(int(r["generation"]), float(r["best_value"]), float(r["residual"]), int(r["evals"]), float(r["seconds"]))
                for r in rows
            ]
        )


class MaximizeResult(NamedTuple):
    x: np.ndarray
    value: float
    trace: ConvergenceTrace


@dataclass(frozen=True)
class RepairOutcome:
    x: np.ndarray
    residual: float
    feasible: bool


def _search_box(layout) -> tuple[np.ndarray, np.ndarray | None]:
    bounds = getattr(layout, "bounds", layout)
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 0] > b[:, 1]) or not np.all(np.isfinite(b)):
        raise OptimizerError("layout must provide finite (lo, hi) bounds per parameter")
    mask = getattr(layout, "weight_mask", None)
    return b, None if mask is None else np.asarray(mask, dtype=bool)


class _Counter:
    def __init__(self):
        self.evals = 0


def _violations(feasibility: Feasibility | None, X: np.ndarray, counter: _Counter) -> np.ndarray:
    counter.evals += X.shape[0]
    if feasibility is None:
        return np.zeros((X.shape[0], 0))
    with np.errstate(all="ignore"):
        r = np.asarray(feasibility(X), dtype=float)
    r = r.reshape(X.shape[0], -1)
    return np.where(np.isfinite(r), np.maximum(r, 0.0), np.inf)


def _residual(r: np.ndarray) -> np.ndarray:
    return r.max(axis=1) if r.shape[1] else np.zeros(r.shape[0])


def _repair_batch(
    X: np.ndarray,
    feasibility: Feasibility | None,
    box: np.ndarray,
    weight_mask: np.ndarray | None,
    cfg: OptimizerConfig,
    counter: _Counter,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched repair.  Returns (repaired X, residuals); rows with residual <= tol are admissible.

    Each step minimizes |dz|^2 + rho |r + J dz|^2 for the linearized
    violations in coordinates scaled by the search box, with rho escalated
    per round.  Re-weighting alone is tried before moving positions.
    """
    X = np.clip(np.array(X, dtype=float), box[:, 0], box[:, 1])
    r = _violations(feasibility, X, counter)
    res = _residual(r)
    tol = cfg.constraint_tol
    if feasibility is None or r.shape[1] == 0:
        return X, res
    width = np.maximum(box[:, 1] - box[:, 0], 1e-12)
    d = X.shape[1]
    phases = []
    if weight_mask is not None and weight_mask.any() and not weight_mask.all():
        phases.append(np.flatnonzero(weight_mask))
    phases.append(np.arange(d))
    for cols in phases:
        for rnd in range(cfg.repair_rounds):
            rho = cfg.penalty_start * cfg.penalty_growth**rnd
            for _ in range(cfg.repair_steps):
                active = np.flatnonzero((res > tol) & np.isfinite(res))
                if active.size == 0:
                    return X, res
                xa = X[active]
                ra = r[active]
                h = cfg.fd_step * width[cols]
                # forward differences over the phase's columns, batched
                pert = np.repeat(xa[:, None, :], cols.size, axis=1)
                step_sign = np.where(xa[:, cols] + h > box[cols, 1], -1.0, 1.0)
                pert[:, np.arange(cols.size), cols] = xa[:, cols] + step_sign * h
                rp = _violations(feasibility, pert.reshape(-1, d), counter).reshape(active.size, cols.size, -1)
                J = (rp - ra[:, None, :]) / (step_sign * h)[:, :, None]  # (n, c, K)
                J = np.where(np.isfinite(J), J, 0.0)
                Js = J * width[cols][None, :, None]
                target = np.where(ra > 0, ra + tol, 0.0)
                M = np.einsum("nck,ncl->nkl", Js, Js) + np.eye(ra.shape[1])[None] / rho
                lam = np.linalg.solve(M, target[:, :, None])[:, :, 0]
                dz = -np.einsum("nck,nk->nc", Js, lam)
                step = np.zeros_like(xa)
                step[:, cols] = dz * width[cols]
                best_x = xa.copy()
                best_r = ra.copy()
                best_norm = np.linalg.norm(np.where(np.isfinite(ra), ra, 1e300), axis=1)
                pending = np.ones(active.size, dtype=bool)
                for frac in (1.0, 0.5, 0.25):
                    idx = np.flatnonzero(pending)
                    if idx.size == 0:
                        break
                    trial = np.clip(xa[idx] + frac * step[idx], box[:, 0], box[:, 1])
                    rt = _violations(feasibility, trial, counter)
                    nt = np.linalg.norm(np.where(np.isfinite(rt), rt, 1e300), axis=1)
                    ok = nt < best_norm[idx]
                    sel = idx[ok]
                    best_x[sel] = trial[ok]
                    best_r[sel] = rt[ok]
                    best_norm[sel] = nt[ok]
                    pending[sel] = False
                X[active] = best_x
                r[active] = best_r
                res[active] = _residual(best_r)
    return X, res


def repair(candidate, feasibility: Feasibility | None, layout, cfg: OptimizerConfig = OptimizerConfig()) -> RepairOutcome:
    """Bring one candidate within the constraint tolerance, leaving admissible ones untouched."""
    box, mask = _search_box(layout)
    x = np.asarray(candidate, dtype=float)
    if x.shape != (box.shape[0],):
        raise OptimizerError(f"candidate has shape {x.shape}, expected ({box.shape[0]},)")
    counter = _Counter()
    r0 = _residual(_violations(feasibility, np.clip(x, box[:, 0], box[:, 1])[None, :], counter))[0]
    if r0 <= cfg.constraint_tol and np.all((x >= box[:, 0]) & (x <= box[:, 1])):
        return RepairOutcome(x.copy(), float(r0), True)
    X, res = _repair_batch(x[None, :], feasibility, box, mask, cfg, counter)
    return RepairOutcome(X[0], float(res[0]), bool(res[0] <= cfg.constraint_tol))


def _initial_population(objective, feasibility, box, mask, cfg, rng, counter):
    n, d = cfg.population, box.shape[0]
    feasible: list[np.ndarray] = []
    best_res = math.inf
    for _ in range(cfg.init_batches):
        X = box[:, 0] + rng.random((n, d)) * (box[:, 1] - box[:, 0])
        X, res = _repair_batch(X, feasibility, box, mask, cfg, counter)
        ok = res <= cfg.constraint_tol
        best_res = min(best_res, float(np.min(res)))
        feasible.extend(X[ok])
        if len(feasible) >= n:
            break
    if not feasible:
        raise Infeasible(best_res)
    pop = np.array(feasible[:n])
    if pop.shape[0] < n:
        # jitter admissible members to fill the population; fall back to copies
        need = n - pop.shape[0]
        seeds = pop[rng.integers(pop.shape[0], size=need)]
        jitter = seeds + 0.01 * (box[:, 1] - box[:, 0]) * rng.standard_normal((need, d))
        jitter, res = _repair_batch(jitter, feasibility, box, mask, cfg, counter)
        jitter = np.where((res <= cfg.constraint_tol)[:, None], jitter, seeds)
        pop = np.vstack([pop, jitter])
    return pop


def _evaluate(objective: Objective, X: np.ndarray, counter: _Counter) -> np.ndarray:
    counter.evals += X.shape[0]
    with np.errstate(all="ignore"):
        v = np.asarray(objective(X), dtype=float).reshape(-1)
    if v.shape[0] != X.shape[0]:
        raise OptimizerError("objective must return one value per candidate")
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.isfinite(v))[0])
        raise OptimizerError(f"objective is not finite at candidate {X[bad].tolist()}")
    return v


def maximize(objective: Objective, feasibility: Feasibility | None, layout, cfg: OptimizerConfig = OptimizerConfig()) -> MaximizeResult:
    """rand/1/bin differential evolution; trials are repaired before they are scored."""
    box, mask = _search_box(layout)
    d = box.shape[0]
    rng = np.random.default_rng(cfg.seed)
    counter = _Counter()
    t0 = time.perf_counter()
    trace = ConvergenceTrace()

    if d == 0:
        x = np.zeros(0)
        res = _residual(_violations(feasibility, x[None, :], counter))[0]
        if res > cfg.constraint_tol:
            raise Infeasible(res)
        value = float(_evaluate(objective, x[None, :], counter)[0])
        trace.append(GenerationRecord(0, value, float(res), counter.evals, time.perf_counter() - t0))
        return MaximizeResult(x, value, trace)

    pop = _initial_population(objective, feasibility, box, mask, cfg, rng, counter)
    fit = _evaluate(objective, pop, counter)
    res_pop = _residual(_violations(feasibility, pop, counter))
    best = int(np.argmax(fit))
    best_x, best_v, best_r = pop[best].copy(), float(fit[best]), float(res_pop[best])
    trace.append(GenerationRecord(0, best_v, best_r, counter.evals, time.perf_counter() - t0))

    n = cfg.population
    others = np.array([[j for j in range(n) if j != i] for i in range(n)])
    for gen in range(1, cfg.max_generations + 1):
        picks = np.array([others[i][rng.permutation(n - 1)[:3]] for i in range(n)])
        mutant = pop[picks[:, 0]] + cfg.mutation * (pop[picks[:, 1]] - pop[picks[:, 2]])
        cross = rng.random((n, d)) < cfg.crossover
        cross[np.arange(n), rng.integers(d, size=n)] = True
        trial = np.clip(np.where(cross, mutant, pop), box[:, 0], box[:, 1])
        trial, tres = _repair_batch(trial, feasibility, box, mask, cfg, counter)
        ok = np.flatnonzero(tres <= cfg.constraint_tol)
        if ok.size:
            tv = _evaluate(objective, trial[ok], counter)
            better = tv >= fit[ok]
            win = ok[better]
            pop[win] = trial[win]
            fit[win] = tv[better]
            res_pop[win] = tres[win]
        b = int(np.argmax(fit))
        if fit[b] > best_v:
            best_x, best_v, best_r = pop[b].copy(), float(fit[b]), float(res_pop[b])
        trace.append(GenerationRecord(gen, best_v, best_r, counter.evals, time.perf_counter() - t0))
        w = cfg.stagnation_window
        if gen >= w and trace.records[gen].best_value - trace.records[gen - w].best_value <= cfg.stagnation_tol:
            break
    return MaximizeResult(best_x, best_v, trace)
