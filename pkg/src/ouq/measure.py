"""Finite-support product probability measures.

A product measure here is a list of marginals, one per input axis, each a
convex combination of Dirac masses.  Expectations are exact sums over the
product grid of atoms.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-12
# construction accepts weights summing to 1 within this and renormalizes
_WEIGHT_ACCEPT_TOL = 1e-9
# floor used when taking logs of zero weights in encode
_LOG_FLOOR = 1e-300


class MeasureError(ValueError):
    """Raised for malformed marginals, layouts or parameter vectors."""


class EvaluationError(RuntimeError):
    """A function failed (raised or returned a non-finite value) at a support point."""

    def __init__(self, message: str, point: Sequence[float] | None = None):
        super().__init__(message if point is None else f"{message} at point {tuple(point)}")
        self.point = None if point is None else tuple(float(v) for v in point)


@dataclass(frozen=True)
class Marginal:
    positions: tuple[float, ...]
    weights: tuple[float, ...]
    bounds: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        pos = tuple(float(p) for p in self.positions)
        w = tuple(float(x) for x in self.weights)
        if len(pos) == 0 or len(pos) != len(w):
            raise MeasureError("a marginal needs as many weights as positions, and at least one")
        if not all(np.isfinite(pos)):
            raise MeasureError("positions must be finite")
        if any(x < 0 or not np.isfinite(x) for x in w):
            raise MeasureError(f"weights must be finite and non-negative, got {w}")
        total = float(np.sum(w))
        if abs(total - 1.0) > _WEIGHT_ACCEPT_TOL:
            raise MeasureError(f"weights must sum to 1, got {total!r}")
        if total != 1.0:
            w = tuple(x / total for x in w)
        if self.bounds is not None:
            lo, hi = (float(b) for b in self.bounds)
            if not lo <= hi:
                raise MeasureError(f"bad interval {self.bounds}")
            bad = [p for p in pos if p < lo or p > hi]
            if bad:
                raise MeasureError(f"positions {bad} lie outside [{lo}, {hi}]")
            object.__setattr__(self, "bounds", (lo, hi))
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, x: float, bounds: tuple[float, float] | None = None) -> "Marginal":
        return cls((x,), (1.0,), bounds)

    @property
    def size(self) -> int:
        return len(self.positions)

    def mean(self) -> float:
        return float(np.dot(self.positions, self.weights))

    def variance(self) -> float:
        p = np.asarray(self.positions)
        w = np.asarray(self.weights)
        mu = float(np.dot(p, w))
        return float(np.dot(w, (p - mu) ** 2))


@dataclass(frozen=True)
class ProductMeasure:
    marginals: tuple[Marginal, ...]

    def __post_init__(self) -> None:
        margs = tuple(self.marginals)
        if len(margs) == 0:
            raise MeasureError("a product measure needs at least one axis")
        if not all(isinstance(m, Marginal) for m in margs):
            raise MeasureError("marginals must be Marginal instances")
        object.__setattr__(self, "marginals", margs)

    @property
    def dim(self) -> int:
        return len(self.marginals)

    @property
    def support_size(self) -> int:
        return int(np.prod([m.size for m in self.marginals]))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (points, weights) of the product grid, shapes (S, m) and (S,)."""
        grids = [np.asarray(m.positions) for m in self.marginals]
        wgrids = [np.asarray(m.weights) for m in self.marginals]
        points = np.array(list(itertools.product(*grids)), dtype=float).reshape(-1, self.dim)
        weights = np.array([float(np.prod(c)) for c in itertools.product(*wgrids)])
        return points, weights

    def to_dict(self) -> dict:
        return {
            "marginals": [
                {"positions": list(m.positions), "weights": list(m.weights)} for m in self.marginals
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict, bounds: Sequence[tuple[float, float]] | None = None) -> "ProductMeasure":
        try:
            items = data["marginals"]
            margs = []
            for i, item in enumerate(items):
                b = None if bounds is None else tuple(bounds[i])
                margs.append(Marginal(tuple(item["positions"]), tuple(item["weights"]), b))
        except (KeyError, TypeError) as exc:
            raise MeasureError(f"malformed product measure JSON: {exc}") from exc
        return cls(tuple(margs))

    @classmethod
    def from_json(cls, text: str) -> "ProductMeasure":
        return cls.from_dict(json.loads(text))


def _evaluate_on_points(f: Callable, points: np.ndarray) -> np.ndarray:
    """Evaluate a vectorized function on an (S, m) array, pinpointing failures."""
    try:
        with np.errstate(all="ignore"):
            values = np.asarray(f(points), dtype=float)
        if values.shape != (points.shape[0],):
            values = np.broadcast_to(values, (points.shape[0],)).astype(float)
        failed = None
    except EvaluationError:
        raise
    except Exception as exc:  # locate the offending point below
        values, failed = None, exc
    if values is not None:
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size == 0:
            return values
        raise EvaluationError("function returned a non-finite value", points[bad[0]])
    for row in points:
        try:
            with np.errstate(all="ignore"):
                v = np.asarray(f(row[None, :]), dtype=float).ravel()
        except Exception as exc:
            raise EvaluationError(f"function evaluation failed ({exc})", row) from exc
        if v.size and not np.all(np.isfinite(v)):
            raise EvaluationError("function returned a non-finite value", row)
    raise EvaluationError(f"function evaluation failed ({failed})") from failed


def expectation(pm: ProductMeasure, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Exact expectation of ``f`` under ``pm``.

    ``f`` receives an (S, m) array of support points and returns S values.
    """
    points, weights = pm.support()
    values = _evaluate_on_points(f, points)
    return float(np.dot(weights, values))


def event_probability(pm: ProductMeasure, predicate: Callable[[np.ndarray], np.ndarray]) -> float:
    """Mass of the support points where ``predicate`` holds."""
    points, weights = pm.support()
    try:
        hits = np.asarray(predicate(points), dtype=bool)
    except Exception as exc:
        raise EvaluationError(f"predicate evaluation failed ({exc})") from exc
    hits = np.broadcast_to(hits, weights.shape)
    return float(min(1.0, max(0.0, np.sum(weights[hits]))))


def softmax(raw: np.ndarray, axis: int = -1) -> np.ndarray:
    z = raw - np.max(raw, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


@dataclass(frozen=True)
class AxisSlot:
    """Where one axis lives inside the flat parameter vector."""

    count: int
    lo: float
    hi: float
    pinned: float | None
    pos_start: int
    weight_start: int

    @property
    def free_weights(self) -> int:
        return 0 if self.pinned is not None or self.count == 1 else self.count


class ParamLayout:
    """Maps flat real vectors to product measures and back.

    Each free axis stores its ``k`` positions followed by ``k`` raw weights
    (raw weights are dropped when ``k == 1``).  Pinned axes hold a single
    fixed atom and contribute no parameters.
    """

    def __init__(
        self,
        counts: Sequence[int],
        intervals: Sequence[tuple[float, float]],
        pinned: dict[int, float] | None = None,
        weight_range: float = 8.0,
    ):
        counts = [int(k) for k in counts]
        if len(counts) != len(intervals) or not counts:
            raise MeasureError("need one support count per axis interval")
        if any(k < 1 for k in counts):
            raise MeasureError(f"support counts must be >= 1, got {counts}")
        pinned = dict(pinned or {})
        slots = []
        cursor = 0
        for i, (k, (lo, hi)) in enumerate(zip(counts, intervals)):
            lo, hi = float(lo), float(hi)
            if not lo <= hi:
                raise MeasureError(f"axis {i}: bad interval ({lo}, {hi})")
            if i in pinned:
                v = float(pinned[i])
                if not lo <= v <= hi:
                    raise MeasureError(f"axis {i}: pinned value {v} outside [{lo}, {hi}]")
                slots.append(AxisSlot(1, lo, hi, v, cursor, cursor))
                continue
            ws = cursor + k
            slots.append(AxisSlot(k, lo, hi, None, cursor, ws))
            cursor = ws + (k if k > 1 else 0)
        self.slots: tuple[AxisSlot, ...] = tuple(slots)
        self.size = cursor
        self.weight_range = float(weight_range)
        self.counts = tuple(s.count for s in self.slots)
        self.intervals = tuple((s.lo, s.hi) for s in self.slots)

    @property
    def dim(self) -> int:
        return len(self.slots)

    @property
    def pinned(self) -> dict[int, float]:
        return {i: s.pinned for i, s in enumerate(self.slots) if s.pinned is not None}

    @property
    def bounds(self) -> np.ndarray:
        """Search box for the flat vector: axis intervals for positions, a symmetric range for raw weights."""
        b = np.zeros((self.size, 2))
        for s in self.slots:
            if s.pinned is not None:
                continue
            b[s.pos_start : s.pos_start + s.count] = (s.lo, s.hi)
            if s.free_weights:
                b[s.weight_start : s.weight_start + s.count] = (-self.weight_range, self.weight_range)
        return b

    @property
    def weight_mask(self) -> np.ndarray:
        """True for entries of the flat vector that are raw weights."""
        mask = np.zeros(self.size, dtype=bool)
        for s in self.slots:
            if s.free_weights:
                mask[s.weight_start : s.weight_start + s.count] = True
        return mask

    def _check(self, vector: np.ndarray) -> np.ndarray:
        v = np.asarray(vector, dtype=float)
        if v.shape[-1] != self.size:
            raise MeasureError(f"parameter vector has length {v.shape[-1]}, layout expects {self.size}")
        return v

    def axis_atoms(self, vectors: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Positions and weights of one axis for a batch, each of shape (N, k)."""
        v = self._check(vectors)
        if v.ndim == 1:
            v = v[None, :]
        s = self.slots[axis]
        n = v.shape[0]
        if s.pinned is not None:
            return np.full((n, 1), s.pinned), np.ones((n, 1))
        pos = np.clip(v[:, s.pos_start : s.pos_start + s.count], s.lo, s.hi)
        if s.count == 1:
            w = np.ones((n, 1))
        else:
            w = softmax(v[:, s.weight_start : s.weight_start + s.count], axis=1)
        return pos, w

    def decode(self, vector: np.ndarray) -> ProductMeasure:
        v = self._check(vector)
        if v.ndim != 1:
            raise MeasureError("decode expects a single flat vector")
        margs = []
        for i, s in enumerate(self.slots):
            pos, w = self.axis_atoms(v, i)
            margs.append(Marginal(tuple(pos[0]), tuple(w[0]), (s.lo, s.hi)))
        return ProductMeasure(tuple(margs))

    def encode(self, pm: ProductMeasure) -> np.ndarray:
        if pm.dim != self.dim:
            raise MeasureError(f"measure has {pm.dim} axes, layout has {self.dim}")
        out = np.zeros(self.size)
        for i, (s, m) in enumerate(zip(self.slots, pm.marginals)):
            if m.size != s.count:
                raise MeasureError(f"axis {i}: measure has {m.size} atoms, layout expects {s.count}")
            if s.pinned is not None:
                continue
            out[s.pos_start : s.pos_start + s.count] = m.positions
            if s.free_weights:
                logs = np.log(np.maximum(np.asarray(m.weights), _LOG_FLOOR))
                out[s.weight_start : s.weight_start + s.count] = logs - np.mean(logs)
        return out


class BatchSupport:
    """Product-grid support points and weights for a batch of parameter vectors."""

    def __init__(self, layout: ParamLayout, vectors: np.ndarray):
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        self.layout = layout
        self.n = v.shape[0]
        self.axis_positions = []
        self.axis_weights = []
        for i in range(layout.dim):
            p, w = layout.axis_atoms(v, i)
            self.axis_positions.append(p)
            self.axis_weights.append(w)
        index = np.array(list(itertools.product(*[range(k) for k in layout.counts])), dtype=int)
        self.size = index.shape[0]
        pts = np.empty((self.n, self.size, layout.dim))
        wts = np.ones((self.n, self.size))
        for i in range(layout.dim):
            pts[:, :, i] = self.axis_positions[i][:, index[:, i]]
            wts *= self.axis_weights[i][:, index[:, i]]
        self.points = pts
        self.weights = wts
        self._cache: dict = {}

    @classmethod
    def from_measure(cls, pm: ProductMeasure) -> "BatchSupport":
        """Single-member batch holding a given measure."""
        obj = cls.__new__(cls)
        obj.layout = None
        obj.n = 1
        obj.axis_positions = [np.asarray(m.positions, dtype=float)[None, :] for m in pm.marginals]
        obj.axis_weights = [np.asarray(m.weights, dtype=float)[None, :] for m in pm.marginals]
        pts, wts = pm.support()
        obj.size = pts.shape[0]
        obj.points = pts[None, :, :]
        obj.weights = wts[None, :]
        obj._cache = {}
        return obj

    @property
    def dim(self) -> int:
        return self.points.shape[2]

    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, self.dim)

    def cached(self, key, compute: Callable[[], np.ndarray]) -> np.ndarray:
        if key not in self._cache:
            self._cache[key] = compute()
        return self._cache[key]


def _merge_atoms(positions: np.ndarray, weights: np.ndarray, radius: float) -> np.ndarray:
    order = np.argsort(positions)
    p = positions[order]
    w = weights[order]
    merged = [w[0]]
    anchor = p[0]
    for x, wx in zip(p[1:], w[1:]):
        if x - anchor <= radius:
            merged[-1] += wx
        else:
            merged.append(wx)
            anchor = x
    return np.asarray(merged)


def effective_support(
    pm: ProductMeasure,
    tol: float = 1e-4,
    merge_fraction: float = 1e-3,
    intervals: Sequence[tuple[float, float]] | None = None,
) -> tuple[int, ...]:
    """Per-axis count of distinct atoms carrying weight above ``tol``.

    Atoms closer than ``merge_fraction`` times the axis width are pooled
    first.  The width comes from ``intervals``, else from the marginal's own
    bounds, else from the spread of its positions.
    """
    if not 0 <= tol < 1:
        raise MeasureError("tol must lie in [0, 1)")
    counts = []
    for i, m in enumerate(pm.marginals):
        if intervals is not None:
            lo, hi = intervals[i]
        elif m.bounds is not None:
            lo, hi = m.bounds
        else:
            lo, hi = min(m.positions), max(m.positions)
        radius = merge_fraction * (hi - lo)
        pooled = _merge_atoms(np.asarray(m.positions), np.asarray(m.weights), radius)
        counts.append(int(np.sum(pooled > tol)))
    return tuple(counts)
