"""Optimal concentration bounds for functions with bounded per-coordinate oscillation.

Given a margin a and sub-diameters D, the quantities here are the largest
possible mu[f - E f >= a] over product measures mu and functions f whose
oscillation in coordinate i is at most D_i.  Closed forms cover up to three
coordinates; beyond that a brute-force search over the discrete cube
supplies numerical values.  The same search doubles as an independent check
of every closed form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc


class InequalityError(ValueError):
    pass


@dataclass(frozen=True)
class DiameterVector:
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InequalityError("need at least one sub-diameter")
        for v in vals:
            if not math.isfinite(v) or v < 0:
                raise InequalityError(f"sub-diameters must be finite and non-negative, got {vals}")
        object.__setattr__(self, "values", vals)

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def descending(self) -> tuple[float, ...]:
        return tuple(sorted(self.values, reverse=True))

    @property
    def squared_norm(self) -> float:
        return float(sum(v * v for v in self.values))


def _diameters(D) -> DiameterVector:
    return D if isinstance(D, DiameterVector) else DiameterVector(tuple(np.atleast_1d(np.asarray(D, dtype=float))))


@dataclass(frozen=True)
class CubicAnalysis:
    """Real roots of (1+g)^3 - A (1+g)^2 + B = 0 and the quantities attached to each root."""

    A: float
    B: float
    roots: tuple[float, ...]
    thetas: tuple[float, ...]
    gates: tuple[int, ...]
    psis: tuple[float, ...]

    @property
    def value(self) -> float:
        vals = [p for p, g in zip(self.psis, self.gates) if g]
        return max(vals) if vals else 0.0

    @property
    def admissible_root(self) -> float | None:
        best = None
        for g, p, r in zip(self.gates, self.psis, self.roots):
            if g and (best is None or p > best[0]):
                best = (p, r)
        return None if best is None else best[1]


@dataclass(frozen=True)
class OptimalBoundResult:
    value: float
    regime: str
    margin: float
    F1: float | None = None
    F2: float | None = None
    cubic: CubicAnalysis | None = None
    vertex_set: tuple[tuple[int, ...], ...] | None = None
    alpha: tuple[float, ...] | None = None
    branch_boundaries: tuple[float, ...] = ()
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "regime": self.regime,
            "margin": self.margin,
            "F1": self.F1,
            "F2": self.F2,
            "branch_boundaries": list(self.branch_boundaries),
            "flags": list(self.flags),
        }
        if self.cubic is not None:
            out["cubic"] = {
                "A": self.cubic.A,
                "B": self.cubic.B,
                "roots": list(self.cubic.roots),
                "thetas": list(self.cubic.thetas),
                "gates": list(self.cubic.gates),
                "psis": list(self.cubic.psis),
            }
        if self.vertex_set is not None:
            out["vertex_set"] = [list(v) for v in self.vertex_set]
        if self.alpha is not None:
            out["alpha"] = list(self.alpha)
        return out


@dataclass(frozen=True)
class StrictlyBelowMcDiarmid:
    """The Hoeffding-class optimum is strictly smaller than ``upper``, which is still a valid bound."""

    upper: float
    mcdiarmid: OptimalBoundResult


def classic_mcdiarmid(a: float, D, b: float = 0.0) -> float:
    """exp(-2 M^2 / sum D_i^2) with margin M = a - b, capped at 1."""
    d = _diameters(D)
    margin = float(a) - float(b)
    if margin <= 0:
        return 1.0
    s = d.squared_norm
    if s == 0:
        return 0.0
    return min(1.0, math.exp(-2.0 * margin * margin / s))


# closed forms, D sorted descending and strictly positive, margin a > 0


def _one_axis(a: float, d1: float) -> tuple[float, int]:
    if a >= d1:
        return 0.0, 0
    return 1.0 - a / d1, 1


def _two_axes(a: float, d1: float, d2: float) -> tuple[float, int]:
    if a >= d1 + d2:
        return 0.0, 0
    if a >= abs(d1 - d2):
        return (d1 + d2 - a) ** 2 / (4.0 * d1 * d2), 2
    return 1.0 - a / max(d1, d2), 1


def single_vertex_bound(a: float, D: Sequence[float]) -> tuple[float, int]:
    """Value over the family where failure is the single corner (1, ..., 1).

    Returns (value, k): k is the number of leading coordinates that carry
    mass in the maximizer, 0 when the value is zero.
    """
    d = sorted((float(x) for x in D), reverse=True)
    total = sum(d)
    if a >= total:
        return 0.0, 0
    k_used = 1
    prefix = 0.0
    for k in range(1, len(d) + 1):
        prefix += d[k - 1]
        if prefix - k * d[k - 1] <= a:
            k_used = k
        else:
            break
    head = d[:k_used]
    s = sum(head) - a
    value = s**k_used / (k_used**k_used * math.prod(head))
    return min(1.0, value), k_used


def _three_axis_F1(a: float, d1: float, d2: float, d3: float) -> tuple[float, int]:
    total = d1 + d2 + d3
    if a >= total:
        return 0.0, 0
    if a >= d1 + d2 - 2 * d3:
        return (total - a) ** 3 / (27.0 * d1 * d2 * d3), 3
    if a >= d1 - d2:
        return (d1 + d2 - a) ** 2 / (4.0 * d1 * d2), 2
    return 1.0 - a / d1, 1


def _real_cubic_roots(c2: float, c1: float, c0: float) -> list[float]:
    """Real roots of x^3 + c2 x^2 + c1 x + c0, polished by Newton steps."""
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    roots: list[float] = []
    if p < 0:
        r = math.sqrt(-p / 3.0)
        arg = (3.0 * q / (2.0 * p)) * math.sqrt(-3.0 / p)
        if abs(arg) <= 1.0 + 1e-12:
            phi = math.acos(max(-1.0, min(1.0, arg)))
            roots = [2.0 * r * math.cos((phi - 2.0 * math.pi * k) / 3.0) - shift for k in range(3)]
    if not roots:
        disc = q * q / 4.0 + p**3 / 27.0
        sq = math.sqrt(max(disc, 0.0))
        y = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)
        roots = [float(y) - shift]

    def f(x):
        return ((x + c2) * x + c1) * x + c0

    def df(x):
        return (3.0 * x + 2.0 * c2) * x + c1

    polished = []
    for x in roots:
        for _ in range(8):
            d = df(x)
            if d == 0:
                break
            nx = x - f(x) / d
            if abs(f(nx)) >= abs(f(x)):
                break
            x = nx
        polished.append(x)
    unique: list[float] = []
    for x in sorted(polished):
        if not unique or abs(x - unique[-1]) > 1e-9 * max(1.0, abs(x)):
            unique.append(x)
    return unique


_GATE_SLACK = 1e-12


def cubic_analysis(a: float, d1: float, d2: float, d3: float) -> CubicAnalysis:
    """Second candidate for three coordinates, from the failure set {111, 011, 101, 110}."""
    den = 2.0 * d2 - d3
    A = (5.0 * d2 - 2.0 * d3) / den
    B = (4.0 * d2 - a) / den
    xs = _real_cubic_roots(-A, 0.0, B)
    r2 = d2 / d3
    gammas, thetas, gates, psis = [], [], [], []
    for x in xs:
        g = x - 1.0
        with np.errstate(all="ignore"):
            if abs(1.0 - g * g) < 1e-300 or abs(1.0 + g) < 1e-300:
                theta = math.nan
                psi = math.nan
            else:
                theta = 1.0 - a / (d3 * (1.0 - g * g)) + r2 * (1.0 - g) / (1.0 + g)
                psi = g * g * (2.0 * r2 - 1.0) - 2.0 * g * (3.0 * r2 - 1.0) + g / (1.0 + g) * (8.0 * r2 - 2.0 * a / d3)
        ok = (
            _GATE_SLACK < g < 1.0 - _GATE_SLACK
            and math.isfinite(theta)
            and _GATE_SLACK < theta < 1.0 - _GATE_SLACK
        )
        gammas.append(g)
        thetas.append(theta)
        gates.append(1 if ok else 0)
        psis.append(psi)
    return CubicAnalysis(A, B, tuple(gammas), tuple(thetas), tuple(gates), tuple(psis))


def _seams(d: Sequence[float]) -> list[float]:
    """Margins where the single-vertex formula switches branch, ascending."""
    out = []
    prefix = 0.0
    for k in range(1, len(d) + 1):
        prefix += d[k - 1]
        if k > 1:
            out.append(prefix - k * d[k - 1])
    out.append(sum(d))
    return out


def optimal_mcdiarmid(a: float, D, b: float = 0.0, oracle_grid: int = 64) -> OptimalBoundResult:
    """Sharpest bound on mu[f >= a] given E[f] <= b and sub-diameters D."""
    d_all = _diameters(D)
    margin = float(a) - float(b)
    if margin <= 0:
        return OptimalBoundResult(1.0, "nonpositive-margin", margin)
    d = [x for x in d_all.descending if x > 0]
    m = len(d)
    if m == 0:
        return OptimalBoundResult(0.0, "constant-response", margin)
    seams = tuple(float(b) + s for s in _seams(d))
    if m == 1:
        value, k = _one_axis(margin, d[0])
        return OptimalBoundResult(value, f"m1-F1-branch{k}", margin, F1=value, branch_boundaries=seams)
    if m == 2:
        value, k = _two_axes(margin, d[0], d[1])
        return OptimalBoundResult(value, f"m2-F1-branch{k}", margin, F1=value, branch_boundaries=seams)
    if m == 3:
        f1, k = _three_axis_F1(margin, *d)
        cubic = cubic_analysis(margin, *d)
        f2 = cubic.value
        if f2 > f1:
            g = cubic.admissible_root
            theta = cubic.thetas[cubic.roots.index(g)]
            return OptimalBoundResult(
                min(1.0, f2),
                "m3-F2",
                margin,
                F1=f1,
                F2=f2,
                cubic=cubic,
                vertex_set=((1, 1, 1), (0, 1, 1), (1, 0, 1), (1, 1, 0)),
                alpha=(g, g, theta),
                branch_boundaries=seams,
            )
        return OptimalBoundResult(f1, f"m3-F1-branch{k}", margin, F1=f1, F2=f2, cubic=cubic, branch_boundaries=seams)

    f1, k = single_vertex_bound(margin, d)
    if margin >= sum(d[: m - 2]) + d[m - 1]:
        return OptimalBoundResult(f1, f"m{m}-F1-branch{k}", margin, F1=f1, branch_boundaries=seams)
    nested = nested_family_search(margin, d)
    best = max(
        [(f1, "single", None, None), (nested.value, "nested", nested.vertex_set, nested.alpha)],
        key=lambda t: t[0],
    )
    flags = ["numerical", "conjectured-family"]
    if 2**m <= 16:
        full = hypercube_search(margin, d, grid=oracle_grid)
        flags.append("full-oracle")
        if full.value > best[0] + 1e-9:
            best = (full.value, "full", full.vertex_set, full.alpha)
    return OptimalBoundResult(
        min(1.0, best[0]),
        f"m{m}-numerical",
        margin,
        F1=f1,
        vertex_set=best[2],
        alpha=best[3],
        branch_boundaries=seams,
        flags=tuple(flags),
    )


def optimal_hoeffding(a: float, D, b: float = 0.0) -> OptimalBoundResult | StrictlyBelowMcDiarmid:
    """Bound for linear (sum-of-independent) responses with ranges D.

    Coincides with the oscillation bound for two coordinates, and for three
    when the single-corner candidate dominates.  Otherwise only strict
    domination is known and the oscillation value is returned as an upper bound.
    """
    d = _diameters(D)
    if d.m not in (2, 3):
        raise InequalityError(f"the Hoeffding-class result covers 2 or 3 coordinates, got {d.m}")
    res = optimal_mcdiarmid(a, d, b)
    if res.regime == "m3-F2":
        return StrictlyBelowMcDiarmid(res.value, res)
    return res


def log_pressure_deviation_bound(a: float, permeability_log_ratio: float, source_log_ratio: float) -> float:
    """Sharp bound on mu[log u >= E log u + a] for a 1-d elliptic problem.

    ``permeability_log_ratio`` and ``source_log_ratio`` are the log-widths of
    the pointwise bands allowed for the independent permeability and source.
    """
    return optimal_mcdiarmid(a, (permeability_log_ratio, source_log_ratio)).value


# discrete cube search


def hypercube_h(C: Iterable[Sequence[int]], t: Sequence[int], a: float, D) -> float:
    """a minus the smallest total diameter separating ``t`` from a vertex of ``C``."""
    d = np.asarray(_diameters(D).values)
    verts = [tuple(int(v) for v in s) for s in C]
    if not verts:
        raise InequalityError("the vertex set must be non-empty")
    tt = np.asarray(t, dtype=int)
    if any(len(s) != d.size for s in verts) or tt.size != d.size:
        raise InequalityError("vertices must have one coordinate per diameter")
    best = min(float(np.sum(d[np.asarray(s) != tt])) for s in verts)
    return float(a) - best


def _cube(m: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=m)), dtype=np.int8)


def _vertex_probabilities(alpha: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """P[t] for each vertex t under independent Bernoulli(alpha_i) coordinates; (N, V)."""
    al = alpha[:, None, :]
    factors = np.where(verts[None, :, :] == 1, al, 1.0 - al)
    return np.prod(factors, axis=2)


def _orbit_representatives(m: int) -> np.ndarray:
    """Non-empty vertex sets up to coordinate flips, as boolean masks (n, 2^m)."""
    V = 2**m
    verts = _cube(m)
    code = verts @ (1 << np.arange(m)[::-1])
    masks = np.array(list(itertools.product((False, True), repeat=V)), dtype=bool)[1:]
    index_of = np.empty(V, dtype=int)
    index_of[code] = np.arange(V)
    weights = 1 << np.arange(V, dtype=np.int64)
    keys = masks.astype(np.int64) @ weights
    canon = keys.copy()
    for flip in range(1, V):
        perm = index_of[code ^ flip]
        canon = np.minimum(canon, masks[:, perm].astype(np.int64) @ weights)
    _, first = np.unique(canon, return_index=True)
    return masks[np.sort(first)]


def _h_table(masks: np.ndarray, a: float, d: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """h^C(t) for every set C (rows) and vertex t (columns)."""
    sep = (verts[:, None, :] != verts[None, :, :]).astype(float) @ d  # (V, V)
    big = np.where(masks[:, :, None], sep[None, :, :], np.inf)
    return a - big.min(axis=1)


@dataclass(frozen=True)
class HypercubeOptimum:
    value: float
    vertex_set: tuple[tuple[int, ...], ...] | None
    alpha: tuple[float, ...] | None


def _polish(h: np.ndarray, fail: np.ndarray, verts: np.ndarray, start: np.ndarray, tol: float):
    """Local SLSQP ascent of the failure mass keeping E[h] <= 0; returns a feasible point."""
    m = verts.shape[1]

    def probs_and_grads(x):
        P = _vertex_probabilities(x[None, :], verts)[0]
        G = np.empty((verts.shape[0], m))
        for i in range(m):
            xi = x.copy()
            xi[i] = 1.0
            hi = _vertex_probabilities(xi[None, :], verts)[0]
            xi[i] = 0.0
            lo = _vertex_probabilities(xi[None, :], verts)[0]
            G[:, i] = hi - lo  # multilinear, so the slope in alpha_i is exact
        return P, G

    def neg_mass(x):
        P, G = probs_and_grads(x)
        return -float(P @ fail), -(fail @ G)

    def slack(x):
        P, _ = probs_and_grads(x)
        return -float(P @ h)

    def slack_grad(x):
        _, G = probs_and_grads(x)
        return -(h @ G)

    res = minimize(
        neg_mass,
        start,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * m,
        constraints=[{"type": "ineq", "fun": slack, "jac": slack_grad}],
        options={"maxiter": 200, "ftol": 1e-13},
    )
    x = np.clip(res.x, 0.0, 1.0)
    if slack(x) < -tol:
        lo_t, hi_t = 0.0, 1.0  # start is feasible; bisect along the segment
        for _ in range(60):
            mid = 0.5 * (lo_t + hi_t)
            if slack(start + mid * (x - start)) >= -tol:
                lo_t = mid
            else:
                hi_t = mid
        x = start + lo_t * (x - start)
    return x, float(_vertex_probabilities(x[None, :], verts)[0] @ fail)


def _search(
    a: float,
    d: np.ndarray,
    masks: np.ndarray,
    alphas: np.ndarray,
    polish_top: int,
    polish_band: float,
) -> HypercubeOptimum:
    m = d.size
    verts = _cube(m)
    scale = abs(a) + float(np.sum(d))
    tol = 1e-12 * max(scale, 1.0)
    H = _h_table(masks, a, d, verts)  # (nC, V)
    fail = (H >= a - tol).astype(float)
    best_val = np.full(masks.shape[0], -1.0)
    best_idx = np.zeros(masks.shape[0], dtype=int)
    chunk = max(1, int(4_000_000 // max(masks.shape[0], 1)))
    for start in range(0, alphas.shape[0], chunk):
        P = _vertex_probabilities(alphas[start : start + chunk], verts)  # (n, V)
        E = P @ H.T
        F = P @ fail.T
        F = np.where(E <= tol, F, -1.0)
        idx = F.argmax(axis=0)
        val = F[idx, np.arange(masks.shape[0])]
        better = val > best_val
        best_val[better] = val[better]
        best_idx[better] = idx[better] + start
    order = np.argsort(-best_val)
    top = best_val[order[0]]
    value, where = top, (order[0], alphas[best_idx[order[0]]])
    candidates = [c for c in order[:polish_top] if best_val[c] >= 0 and best_val[c] >= top - polish_band]
    for c in candidates:
        x, v = _polish(H[c], fail[c], verts, alphas[best_idx[c]].astype(float), tol)
        if v > value:
            value, where = v, (c, x)
    if value < 0:
        return HypercubeOptimum(0.0, None, None)
    c, x = where
    vset = tuple(tuple(int(t) for t in verts[j]) for j in np.flatnonzero(masks[c]))
    return HypercubeOptimum(float(min(1.0, max(0.0, value))), vset, tuple(float(t) for t in x))


def _grid_points(m: int, n: int) -> np.ndarray:
    axes = [np.linspace(0.0, 1.0, n)] * m
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(m, -1).T


def hypercube_search(a: float, D, grid: int = 64, budget: int = 2_000_000_000) -> HypercubeOptimum:
    """Exhaustive search over vertex sets (up to flips) and a product grid of cube measures."""
    d = np.asarray([x for x in _diameters(D).values], dtype=float)
    m = d.size
    if m > 4:
        raise InequalityError(f"exhaustive cube search supports m <= 4, got {m}")
    if grid < 2:
        raise InequalityError("grid needs at least 2 points per axis")
    masks = _orbit_representatives(m)
    n = grid
    # keep grid points x sets x vertices within budget; polishing recovers the lost resolution
    while n**m * masks.shape[0] * 2**m > budget and n > 8:
        n -= 1
    return _search(float(a), d, masks, _grid_points(m, n), polish_top=64, polish_band=0.05)


def hypercube_oracle(a: float, D, grid: int = 64) -> float:
    """Brute-force value of the cube problem: max over sets C and product measures alpha."""
    return hypercube_search(a, D, grid).value


def nested_family_search(a: float, D, samples: int = 1 << 14, seed: int = 0) -> HypercubeOptimum:
    """Cube search restricted to the nested sets {s : sum(s) >= q}, q = 1..m."""
    d = np.asarray(sorted(_diameters(D).values, reverse=True), dtype=float)
    m = d.size
    if m > 12:
        raise InequalityError(f"nested-family search supports m <= 12, got {m}")
    verts = _cube(m)
    weight = verts.sum(axis=1)
    masks = np.array([weight >= q for q in range(1, m + 1)])
    n = 2
    while (n + 1) ** m <= samples:
        n += 1
    pts = _grid_points(m, n) if n >= 4 else qmc.Sobol(m, seed=seed).random(samples)
    return _search(float(a), d, masks, pts, polish_top=m, polish_band=1.0)
