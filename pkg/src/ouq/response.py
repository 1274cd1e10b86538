"""Response functions on a box: the hypervelocity-impact surrogate and parsed expressions.

Also computes per-axis oscillations (sub-diameters), the largest change in
the response when a single input moves across its interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expression import Node, evaluate, parse_expression, to_text, variables

MIL_TO_MM = 0.0254


class ResponseError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    unit: str = ""
    name: str = ""

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise ResponseError(f"axis {self.name or '?'}: need finite lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class BoxDomain:
    axes: tuple[Axis, ...]

    def __post_init__(self) -> None:
        axes = tuple(self.axes)
        if not axes:
            raise ResponseError("a box needs at least one axis")
        object.__setattr__(self, "axes", axes)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def intervals(self) -> tuple[tuple[float, float], ...]:
        return tuple((a.lo, a.hi) for a in self.axes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def axis_index(self, key: int | str) -> int:
        if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
            if not 0 <= key < self.dim:
                raise ResponseError(f"axis index {key} out of range for {self.dim} axes")
            return int(key)
        for i, a in enumerate(self.axes):
            if a.name and a.name == key:
                return i
        raise ResponseError(f"unknown axis {key!r}")

    def contains(self, x: np.ndarray, slack: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        lo = np.array([a.lo for a in self.axes]) - slack
        hi = np.array([a.hi for a in self.axes]) + slack
        return np.all((x >= lo) & (x <= hi), axis=1)


def impact_domain() -> BoxDomain:
    """Plate thickness (mm), obliquity (rad) and impact speed (km/s) ranges of the impact surrogate."""
    return BoxDomain(
        (
            Axis(60 * MIL_TO_MM, 105 * MIL_TO_MM, "mm", "thickness"),
            Axis(0.0, math.pi / 6, "rad", "obliquity"),
            Axis(2.1, 2.8, "km/s", "velocity"),
        )
    )


@dataclass(frozen=True)
class SurrogateParams:
    H0: float = 0.5794  # km/s
    s: float = 1.4004
    n: float = 0.4482
    K: float = 10.3936  # mm^2
    p: float = 0.4757
    u: float = 1.0275
    m: float = 0.4682
    Dp: float = 1.778  # projectile diameter, mm

    def __post_init__(self) -> None:
        for name in ("H0", "s", "n", "K", "p", "u", "m", "Dp"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ResponseError(f"surrogate parameter {name} must be positive, got {v}")
            object.__setattr__(self, name, v)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("H0", "s", "n", "K", "p", "u", "m", "Dp")}


def ballistic_limit(h, theta, params: SurrogateParams = SurrogateParams()):
    """Impact speed (km/s) below which the surrogate predicts no perforation."""
    h = np.asarray(h, dtype=float)
    c = np.cos(np.asarray(theta, dtype=float))
    if np.any(c <= 0):
        raise ResponseError("obliquity must satisfy cos(theta) > 0")
    if np.any(h <= 0):
        raise ResponseError("thickness must be positive")
    out = params.H0 * (h / c**params.n) ** params.s
    return float(out) if out.ndim == 0 else out


def perforation_area(h, theta, v, params: SurrogateParams = SurrogateParams()):
    """Perforation area (mm^2) of the surrogate; zero at or below the ballistic limit."""
    h = np.asarray(h, dtype=float)
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    vbl = ballistic_limit(h, theta, params)
    c = np.cos(theta)
    excess = np.maximum(np.tanh(v / vbl - 1.0), 0.0)
    out = params.K * (h / params.Dp) ** params.p * c**params.u * excess**params.m
    return float(out) if np.ndim(out) == 0 else out


class ResponseModel:
    """A response function on a box, evaluated row-wise on (N, m) arrays."""

    domain: BoxDomain

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class SurrogateModel(ResponseModel):
    domain: BoxDomain = field(default_factory=impact_domain)
    params: SurrogateParams = SurrogateParams()

    def __post_init__(self) -> None:
        if self.domain.dim != 3:
            raise ResponseError("the impact surrogate takes exactly three inputs")
        if self.domain.axes[1].hi >= math.pi / 2 or self.domain.axes[1].lo <= -math.pi / 2:
            raise ResponseError("obliquity interval must stay inside (-pi/2, pi/2)")
        if self.domain.axes[0].lo <= 0:
            raise ResponseError("thickness interval must be positive")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(perforation_area(x[:, 0], x[:, 1], x[:, 2], self.params), dtype=float).reshape(-1)

    def to_dict(self) -> dict:
        return {"kind": "surrogate", "params": self.params.to_dict()}


@dataclass(frozen=True)
class ExpressionModel(ResponseModel):
    domain: BoxDomain
    ast: Node

    def __post_init__(self) -> None:
        used = variables(self.ast)
        if used and max(used) >= self.domain.dim:
            raise ResponseError(f"expression uses x{max(used) + 1} but the box has {self.domain.dim} axes")

    @classmethod
    def from_text(cls, text: str, domain: BoxDomain) -> "ExpressionModel":
        names = [a.name for a in domain.axes if a.name]
        alias = {a.name: i for i, a in enumerate(domain.axes) if a.name} if names else {}
        return cls(domain, parse_expression(text, dim=domain.dim, names=alias))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(evaluate(self.ast, x), dtype=float).reshape(-1)

    def to_dict(self) -> dict:
        return {"kind": "expression", "expression": to_text(self.ast)}


@dataclass(frozen=True)
class OscillationSearch:
    grid: int = 33
    refinements: int = 2
    window_cells: float = 2.0
    polish_sweeps: int = 4
    polish_tol: float = 1e-10
    max_batch: int = 2_000_000

    def __post_init__(self) -> None:
        if self.grid < 3:
            raise ResponseError("oscillation grid needs at least 3 points per axis")


@dataclass(frozen=True)
class OscillationResult:
    axis: int
    value: float
    point: tuple[float, ...]
    other_point: tuple[float, ...]


def _checked(model: ResponseModel, x: np.ndarray) -> np.ndarray:
    y = model.evaluate(x)
    bad = np.flatnonzero(~np.isfinite(y))
    if bad.size:
        raise ResponseError(f"non-finite response at point {tuple(x[bad[0]])}")
    return y


def _local_grid(center: float, lo: float, hi: float, half: float, n: int) -> np.ndarray:
    a = max(lo, center - half)
    b = min(hi, center + half)
    if b <= a:
        return np.array([center])
    return np.linspace(a, b, n)


def _scan(model, axis, other_grids, a_grid, b_grid, dim):
    """Largest f(rest, a) - f(rest, b) over a product grid of the remaining coordinates."""
    rest = np.array(np.meshgrid(*other_grids, indexing="ij")).reshape(len(other_grids), -1).T
    others = [j for j in range(dim) if j != axis]

    def eval_on(values):
        n_rest, n_val = rest.shape[0], values.size
        x = np.empty((n_rest, n_val, dim))
        for c, j in enumerate(others):
            x[:, :, j] = rest[:, c][:, None]
        x[:, :, axis] = values[None, :]
        return _checked(model, x.reshape(-1, dim)).reshape(n_rest, n_val)

    fa = eval_on(a_grid)
    fb = eval_on(b_grid)
    hi_idx = fa.argmax(axis=1)
    lo_idx = fb.argmin(axis=1)
    gaps = fa[np.arange(rest.shape[0]), hi_idx] - fb[np.arange(rest.shape[0]), lo_idx]
    best = int(gaps.argmax())
    return float(gaps[best]), rest[best], float(a_grid[hi_idx[best]]), float(b_grid[lo_idx[best]])


def _golden_max(fun, lo: float, hi: float, tol: float, start: float) -> tuple[float, float]:
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    cand = [(fun(start), start), (fc, c), (fd, d), (fun(lo), lo), (fun(hi), hi)]
    return max(cand, key=lambda t: t[0])[::-1]


def oscillation(model: ResponseModel, axis: int, search: OscillationSearch = OscillationSearch()) -> OscillationResult:
    """Largest |f(x) - f(x')| over pairs of box points that differ only in coordinate ``axis``.

    Coarse product grid, local grid refinements around the incumbent, then a
    coordinate-wise golden-section polish.
    """
    dom = model.domain
    dim = dom.dim
    if not 0 <= axis < dim:
        raise ResponseError(f"axis {axis} out of range for {dim} axes")
    others = [j for j in range(dim) if j != axis]
    n = search.grid
    while n ** max(dim - 1, 0) * 2 * n > search.max_batch and n > 3:
        n -= 2
    full = [np.linspace(a.lo, a.hi, n) for a in dom.axes]
    other_grids = [full[j] for j in others]
    value, rest, xa, xb = _scan_any(model, axis, other_grids, full[axis], full[axis], dim)

    cells = [a.width / (n - 1) for a in dom.axes]
    for _ in range(search.refinements):
        half = [search.window_cells * c for c in cells]
        grids = [_local_grid(rest[c], dom.axes[j].lo, dom.axes[j].hi, half[j], n) for c, j in enumerate(others)]
        ag = _local_grid(xa, dom.axes[axis].lo, dom.axes[axis].hi, half[axis], n)
        bg = _local_grid(xb, dom.axes[axis].lo, dom.axes[axis].hi, half[axis], n)
        v2, r2, a2, b2 = _scan_any(model, axis, grids, ag, bg, dim)
        if v2 >= value:
            value, rest, xa, xb = v2, r2, a2, b2
        cells = [2 * h / (n - 1) for h in half]

    # coordinates: the shared ones, then the two values of the moving axis
    coords = list(rest) + [xa, xb]
    bounds = [(dom.axes[j].lo, dom.axes[j].hi) for j in others] + [(dom.axes[axis].lo, dom.axes[axis].hi)] * 2

    def pair(c):
        p = np.empty(dim)
        for k, j in enumerate(others):
            p[j] = c[k]
        q = p.copy()
        p[axis] = c[-2]
        q[axis] = c[-1]
        return p, q

    def gap(c):
        p, q = pair(c)
        f = _checked(model, np.vstack([p, q]))
        return float(f[0] - f[1])

    for _ in range(search.polish_sweeps):
        before = gap(coords)
        for k in range(len(coords)):
            lo_k, hi_k = bounds[k]
            half = cells[others[k]] if k < len(others) else cells[axis]
            a = max(lo_k, coords[k] - half)
            b = min(hi_k, coords[k] + half)
            if b <= a:
                continue

            def along(t, k=k):
                c = list(coords)
                c[k] = t
                return gap(c)

            coords[k], _ = _golden_max(along, a, b, search.polish_tol * max(1.0, hi_k - lo_k), coords[k])
        if gap(coords) - before <= 1e-14:
            break

    # each golden step keeps its starting point as a candidate, so this never drops below the grid value
    value = gap(coords)
    p, q = pair(coords)
    return OscillationResult(axis, value, tuple(map(float, p)), tuple(map(float, q)))


def _scan_any(model, axis, other_grids, a_grid, b_grid, dim):
    if other_grids:
        return _scan(model, axis, other_grids, a_grid, b_grid, dim)
    fa = _checked(model, a_grid[:, None])
    fb = _checked(model, b_grid[:, None])
    return float(fa.max() - fb.min()), np.zeros(0), float(a_grid[fa.argmax()]), float(b_grid[fb.argmin()])


def sub_diameters(model: ResponseModel, search: OscillationSearch = OscillationSearch()) -> tuple[float, ...]:
    return tuple(oscillation(model, i, search).value for i in range(model.domain.dim))
