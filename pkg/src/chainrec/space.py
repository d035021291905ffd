"""Charts, sample grids and metrics on compact spaces.

Coordinates convention: a circle is [0, 1) with wraparound and circumference 1
(angles measured in turns, counterclockwise); the disk is the closed unit disk
in cartesian (x, y); a torus is the product of two circles.  Points are rows of
float arrays.  Union charts append the component index as a final column.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from chainrec.errors import (
    ArgumentError,
    DomainMismatchError,
    MetricInvalidError,
    ResolutionTooFineError,
)

__all__ = [
    "Chart",
    "SampleGrid",
    "MetricModel",
    "MetricReport",
    "build_grid",
    "distance",
    "verify_metric",
    "cantor_cell_mask",
    "in_cantor_set",
    "DEFAULT_GRID_CAP",
]

DEFAULT_GRID_CAP = 200_000
CANTOR_METRIC_DEPTH = 8
_TOL = 1e-12

CHART_KINDS = ("circle", "interval", "disk", "torus", "product", "union")


@dataclass(frozen=True)
class Chart:
    kind: str
    low: float = 0.0
    high: float = 1.0
    factors: tuple["Chart", ...] = ()

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise ArgumentError(f"unknown chart kind {self.kind!r}")
        if self.kind == "interval" and not self.high > self.low:
            raise ArgumentError("interval chart needs high > low")
        if self.kind in ("product", "union") and not self.factors:
            raise ArgumentError(f"{self.kind} chart needs factors")
        if self.kind == "union" and any(f.kind == "union" for f in self.factors):
            raise ArgumentError("nested unions are not supported")

    # constructors -------------------------------------------------------
    @classmethod
    def circle(cls) -> "Chart":
        return cls("circle")

    @classmethod
    def interval(cls, low: float = 0.0, high: float = 1.0) -> "Chart":
        return cls("interval", low=float(low), high=float(high))

    @classmethod
    def disk(cls) -> "Chart":
        return cls("disk")

    @classmethod
    def torus(cls) -> "Chart":
        return cls("torus", factors=(cls.circle(), cls.circle()))

    @classmethod
    def product(cls, *charts: "Chart") -> "Chart":
        return cls("product", factors=tuple(charts))

    @classmethod
    def union(cls, *charts: "Chart") -> "Chart":
        return cls("union", factors=tuple(charts))

    # geometry -----------------------------------------------------------
    @property
    def dim(self) -> int:
        if self.kind in ("circle", "interval"):
            return 1
        if self.kind == "disk":
            return 2
        if self.kind in ("torus", "product"):
            return sum(f.dim for f in self.factors)
        return max(f.dim for f in self.factors)

    @property
    def ncoords(self) -> int:
        """Number of float columns used to store one point."""
        if self.kind in ("circle", "interval"):
            return 1
        if self.kind == "disk":
            return 2
        if self.kind in ("torus", "product"):
            return sum(f.ncoords for f in self.factors)
        return max(f.ncoords for f in self.factors) + 1

    @property
    def components(self) -> tuple["Chart", ...]:
        return self.factors if self.kind == "union" else (self,)

    def diameter(self) -> float:
        """Diameter under the chart's default metric (arc / euclidean / sum)."""
        if self.kind == "circle":
            return 0.5
        if self.kind == "interval":
            return self.high - self.low
        if self.kind == "disk":
            return 2.0
        if self.kind in ("torus", "product"):
            return sum(f.diameter() for f in self.factors)
        return 2.0 * max(f.diameter() for f in self.factors)

    def factor_slices(self) -> list[slice]:
        out, start = [], 0
        for f in self.factors:
            out.append(slice(start, start + f.ncoords))
            start += f.ncoords
        return out

    def canonical(self, pts: np.ndarray) -> np.ndarray:
        """Wrap periodic coordinates into [0, 1)."""
        pts = np.array(pts, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.ncoords)
        if self.kind == "circle":
            pts[:, 0] = np.mod(pts[:, 0], 1.0)
        elif self.kind in ("torus", "product"):
            for f, sl in zip(self.factors, self.factor_slices()):
                pts[:, sl] = f.canonical(pts[:, sl])
        elif self.kind == "union":
            comp = np.rint(pts[:, -1]).astype(int)
            for c, f in enumerate(self.factors):
                sel = comp == c
                if sel.any():
                    pts[np.ix_(sel, np.arange(f.ncoords))] = f.canonical(pts[sel, : f.ncoords])
        return pts

    def contains(self, pts: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, self.ncoords)
        if pts.shape[1] != self.ncoords:
            return np.zeros(len(pts), dtype=bool)
        ok = np.all(np.isfinite(pts), axis=1)
        if self.kind == "circle":
            return ok  # every real is an angle
        if self.kind == "interval":
            return ok & (pts[:, 0] >= self.low - tol) & (pts[:, 0] <= self.high + tol)
        if self.kind == "disk":
            return ok & (np.hypot(pts[:, 0], pts[:, 1]) <= 1.0 + tol)
        if self.kind in ("torus", "product"):
            for f, sl in zip(self.factors, self.factor_slices()):
                ok &= f.contains(pts[:, sl], tol)
            return ok
        comp = pts[:, -1]
        ok &= (np.abs(comp - np.rint(comp)) < tol) & (comp >= 0) & (comp < len(self.factors))
        ci = np.where(ok, np.rint(comp), 0).astype(int)
        for c, f in enumerate(self.factors):
            sel = ok & (ci == c)
            if sel.any():
                ok[sel] = f.contains(pts[sel, : f.ncoords], tol)
        return ok

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "interval":
            d.update(low=self.low, high=self.high)
        if self.kind in ("product", "union"):
            d["factors"] = [f.to_dict() for f in self.factors]
        return d


@dataclass(frozen=True, eq=False)
class SampleGrid:
    chart: Chart
    eta: float
    points: np.ndarray
    raster_shape: tuple[int, ...] | None = None
    # per-point component index (all zero unless the chart is a union)
    component: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.points.setflags(write=False)
        if self.component is None:
            comp = (
                np.rint(self.points[:, -1]).astype(int)
                if self.chart.kind == "union"
                else np.zeros(len(self.points), dtype=int)
            )
            object.__setattr__(self, "component", comp)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n(self) -> int:
        return len(self.points)


# ---------------------------------------------------------------------------
# grids


def _circle_points(eta: float) -> np.ndarray:
    n = int(np.ceil(1.0 / eta - 1e-9))
    return (np.arange(n) / n).reshape(-1, 1)


def _interval_points(chart: Chart, eta: float) -> np.ndarray:
    length = chart.high - chart.low
    n = int(np.ceil(length / eta - 1e-9)) + 1
    return np.linspace(chart.low, chart.high, n).reshape(-1, 1)


def _disk_points(eta: float, angular_ratio: float = 1.0) -> np.ndarray:
    # centre + concentric rings at radial spacing h, arc spacing <= angular_ratio * h
    rings = int(np.ceil(1.0 / eta - 1e-9))
    pts = [np.zeros((1, 2))]
    for k in range(1, rings + 1):
        r = k / rings
        m = int(np.ceil(2 * np.pi * r * rings / angular_ratio - 1e-9))
        ang = np.arange(m) / m
        pts.append(np.column_stack([r * np.cos(2 * np.pi * ang), r * np.sin(2 * np.pi * ang)]))
    return np.vstack(pts)


def _estimate_count(chart: Chart, eta: float, angular_ratio: float = 1.0) -> float:
    if chart.kind == "circle":
        return 1.0 / eta
    if chart.kind == "interval":
        return (chart.high - chart.low) / eta + 1
    if chart.kind == "disk":
        return np.pi / eta**2 / angular_ratio
    if chart.kind in ("torus", "product"):
        return float(np.prod([_estimate_count(f, eta, angular_ratio) for f in chart.factors]))
    return float(sum(_estimate_count(f, eta, angular_ratio) for f in chart.factors))


def _grid_points(chart: Chart, eta: float, angular_ratio: float = 1.0) -> tuple[np.ndarray, tuple[int, ...] | None]:
    if chart.kind == "circle":
        p = _circle_points(eta)
        return p, (len(p),)
    if chart.kind == "interval":
        p = _interval_points(chart, eta)
        return p, (len(p),)
    if chart.kind == "disk":
        return _disk_points(eta, angular_ratio), None
    if chart.kind in ("torus", "product"):
        parts = [_grid_points(f, eta, angular_ratio) for f in chart.factors]
        arrays = [p for p, _ in parts]
        idx = np.meshgrid(*[np.arange(len(a)) for a in arrays], indexing="ij")
        cols = [a[i.ravel()] for a, i in zip(arrays, idx)]
        shape = tuple(len(a) for a in arrays)
        return np.hstack(cols), (shape if len(shape) <= 2 and all(s for _, s in parts) else None)
    width = chart.ncoords
    blocks = []
    for c, f in enumerate(chart.factors):
        p, _ = _grid_points(f, eta, angular_ratio)
        block = np.zeros((len(p), width))
        block[:, : f.ncoords] = p
        block[:, -1] = c
        blocks.append(block)
    return np.vstack(blocks), None


def build_grid(
    chart: Chart, eta: float, cap: int = DEFAULT_GRID_CAP, angular_ratio: float = 1.0
) -> SampleGrid:
    """Deterministic sample grid with spacing ``eta`` (row-major ordering).

    Circles get ``ceil(1/eta)`` equally spaced angles, intervals include both
    endpoints, the disk uses a centre point plus concentric rings whose radial
    and arc spacing are at most ``eta``.  Products are cartesian (first factor
    slowest), unions concatenate their components.  ``angular_ratio`` < 1
    makes disk rings denser along the angle than across rings.
    """
    eta = float(eta)
    if not eta > 0:
        raise ArgumentError("eta must be positive")
    diam = max(c.diameter() for c in chart.components)
    if not eta < diam:
        raise ArgumentError(f"eta={eta} must be below the chart diameter {diam}")
    if not 0 < angular_ratio <= 1:
        raise ArgumentError("angular_ratio must lie in (0, 1]")
    estimate = _estimate_count(chart, eta, angular_ratio)
    if estimate > cap:
        raise ResolutionTooFineError(f"eta={eta} gives ~{estimate:.0f} points, over the cap {cap}")
    pts, shape = _grid_points(chart, eta, angular_ratio)
    if len(pts) > cap:
        raise ResolutionTooFineError(f"{len(pts)} points exceed the cap {cap}")
    return SampleGrid(chart=chart, eta=eta, points=np.ascontiguousarray(pts), raster_shape=shape)


# ---------------------------------------------------------------------------
# Cantor helpers


def _ternary_digits(k: np.ndarray, depth: int) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    digits = np.empty(k.shape + (depth,), dtype=np.int8)
    for d in range(depth - 1, -1, -1):
        digits[..., d] = k % 3
        k = k // 3
    return digits


def cantor_cell_mask(depth: int) -> np.ndarray:
    """Boolean array over the 3**depth cells: True on middle-thirds Cantor cells."""
    digits = _ternary_digits(np.arange(3**depth), depth)
    return np.all(digits != 1, axis=1)


def in_cantor_set(k: np.ndarray, depth: int) -> np.ndarray:
    """Is the grid point ``k / 3**depth`` in the middle-thirds Cantor set?

    Exact integer test: the base-3 digits avoid 1, or the last nonzero digit
    is a 1 preceded only by 0/2 digits (0.w1 = 0.w0222...).
    """
    k = np.asarray(k, dtype=np.int64)
    n = 3**depth
    digits = _ternary_digits(np.mod(k, n), depth)
    ones = digits == 1
    nonzero = digits != 0
    # index of the last nonzero digit (depth if none)
    rev = nonzero[..., ::-1]
    last_nz = np.where(rev.any(axis=-1), depth - 1 - np.argmax(rev, axis=-1), -1)
    n_ones = ones.sum(axis=-1)
    last_is_one = np.take_along_axis(ones, np.clip(last_nz, 0, None)[..., None], axis=-1)[..., 0]
    ok = (n_ones == 0) | ((n_ones == 1) & last_is_one & (last_nz >= 0))
    return ok | (k == n)


class _CantorWarp:
    """Monotone h(x) = (1-beta) x + beta c(x), c the depth-d Cantor staircase.

    h is piecewise linear on 3**depth cells.  The Cantor cells carry a fraction
    beta of the total length in the depth -> infinity limit.
    """

    def __init__(self, beta: float, depth: int = CANTOR_METRIC_DEPTH):
        if not 0.0 <= beta < 1.0:
            raise ArgumentError("beta must lie in [0, 1)")
        self.beta = float(beta)
        self.depth = int(depth)
        cells = 3**depth
        rise = cantor_cell_mask(depth).astype(float) / 2**depth
        stair = np.concatenate([[0.0], np.cumsum(rise)])
        self.knots = np.linspace(0.0, 1.0, cells + 1)
        self.values = (1 - beta) * self.knots + beta * stair
        self.values[-1] = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        return np.interp(x, self.knots, self.values)


class _MinkowskiWarp:
    """Identity on the left semicircle, Minkowski ? on the right one.

    The right semicircle [0.75, 1.25) is rescaled to t in [0, 1] and mapped
    through ?(t), tabulated at the Stern-Brocot preimages of k / 2**levels.
    """

    def __init__(self, levels: int = 16):
        n = 2**levels
        stern = np.zeros(2 * n + 1, dtype=np.int64)
        stern[1] = 1
        for i in range(2, 2 * n + 1):
            stern[i] = stern[i // 2] if i % 2 == 0 else stern[i // 2] + stern[i // 2 + 1]
        k = np.arange(n + 1)
        self.t = stern[k] / stern[n + k]
        self.t[-1] = 1.0
        self.q = k / n

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        t = np.mod(x - 0.75, 1.0)
        right = t < 0.5
        out = x.copy()
        out[right] = np.mod(0.75 + 0.5 * np.interp(2 * t[right], self.t, self.q), 1.0)
        return out


def _arc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(np.mod(a - b, 1.0))
    return np.minimum(d, 1.0 - d)


# ---------------------------------------------------------------------------
# metrics

METRIC_KINDS = ("arc", "chord", "density-arc", "product-sum", "union", "lyapunov")


@dataclass(frozen=True, eq=False)
class MetricModel:
    """A metric on a chart.

    kinds:
      ``arc``          shorter arc on a circle (circumference 1)
      ``chord``        euclidean distance of the embedded points (circle radius
                       1/(2 pi), interval, disk)
      ``density-arc``  arc length after a monotone reparameterization: the
                       Cantor mix h_beta, or Minkowski ? on the right half
      ``product-sum``  sum of factor metrics (torus, products)
      ``union``        component metrics; distinct components sit at the
                       constant distance 2 * max component diameter
      ``lyapunov``     base(u, v) + lam * |theta(u) - theta(v)|, theta looked up
                       at the nearest grid sample
    """

    kind: str
    chart: Chart
    beta: float = 0.0
    warp_kind: str = "cantor"
    factors: tuple["MetricModel", ...] = ()
    base: "MetricModel | None" = None
    lam: float = 1.0
    theta_points: np.ndarray | None = None
    theta_values: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ArgumentError(f"unknown metric kind {self.kind!r}")
        ck = self.chart.kind
        if self.kind in ("arc", "density-arc") and ck != "circle":
            raise ArgumentError(f"{self.kind} metric needs a circle chart")
        if self.kind == "chord" and ck not in ("circle", "interval", "disk"):
            raise ArgumentError("chord metric needs a circle, interval or disk chart")
        if self.kind == "product-sum" and (ck not in ("torus", "product") or len(self.factors) != len(self.chart.factors)):
            raise ArgumentError("product-sum metric needs one factor metric per chart factor")
        if self.kind == "union" and (ck != "union" or len(self.factors) != len(self.chart.factors)):
            raise ArgumentError("union metric needs one metric per component")
        if self.kind == "lyapunov":
            if self.base is None or self.theta_values is None or self.theta_points is None:
                raise ArgumentError("lyapunov metric needs a base metric and theta samples")
            if not self.lam > 0:
                raise ArgumentError("lambda must be positive")
        if self.kind == "density-arc":
            if self.warp_kind == "cantor":
                self._cache["warp"] = _CantorWarp(self.beta)
            elif self.warp_kind == "minkowski":
                self._cache["warp"] = _MinkowskiWarp()
            else:
                raise ArgumentError(f"unknown warp {self.warp_kind!r}")

    # constructors -------------------------------------------------------
    @classmethod
    def default(cls, chart: Chart) -> "MetricModel":
        if chart.kind == "circle":
            return cls("arc", chart)
        if chart.kind in ("interval", "disk"):
            return cls("chord", chart)
        if chart.kind in ("torus", "product"):
            return cls("product-sum", chart, factors=tuple(cls.default(f) for f in chart.factors))
        return cls("union", chart, factors=tuple(cls.default(f) for f in chart.factors))

    @classmethod
    def density_arc(cls, beta: float) -> "MetricModel":
        return cls("density-arc", Chart.circle(), beta=float(beta))

    @classmethod
    def minkowski_arc(cls) -> "MetricModel":
        return cls("density-arc", Chart.circle(), warp_kind="minkowski")

    # evaluation ---------------------------------------------------------
    def diameter(self) -> float:
        if self.kind in ("arc", "density-arc"):
            return 0.5
        if self.kind == "chord":
            if self.chart.kind == "circle":
                return 1.0 / np.pi
            return self.chart.diameter()
        if self.kind == "product-sum":
            return sum(f.diameter() for f in self.factors)
        if self.kind == "union":
            return 2.0 * max(f.diameter() for f in self.factors)
        span = float(np.ptp(self.theta_values)) if len(self.theta_values) else 0.0
        return self.base.diameter() + self.lam * span

    def component_gap(self) -> float:
        return 2.0 * max(f.diameter() for f in self.factors)

    def warp(self, x: np.ndarray) -> np.ndarray:
        return self._cache["warp"](x)

    def pairwise(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Elementwise d(u[k], v[k]) for row arrays (broadcasting allowed)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        k = self.kind
        if k == "arc":
            return _arc(u[..., 0], v[..., 0])
        if k == "density-arc":
            return _arc(self.warp(u[..., 0]), self.warp(v[..., 0]))
        if k == "chord":
            if self.chart.kind == "circle":
                return np.sin(np.pi * _arc(u[..., 0], v[..., 0])) / np.pi
            return np.sqrt(np.sum((u - v) ** 2, axis=-1))
        if k == "product-sum":
            total = 0.0
            for f, sl in zip(self.factors, self.chart.factor_slices()):
                total = total + f.pairwise(u[..., sl], v[..., sl])
            return total
        if k == "union":
            u, v = np.broadcast_arrays(u, v)
            cu = np.rint(u[..., -1]).astype(int)
            cv = np.rint(v[..., -1]).astype(int)
            out = np.full(cu.shape, self.component_gap())
            for c, f in enumerate(self.factors):
                sel = (cu == c) & (cv == c)
                if sel.any():
                    w = f.chart.ncoords
                    out[sel] = f.pairwise(u[sel][:, :w], v[sel][:, :w])
            return out
        # lyapunov
        tu, tv = self.theta_at(u), self.theta_at(v)
        return self.base.pairwise(u, v) + self.lam * np.abs(tu - tv)

    def theta_at(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, pts.shape[-1])
        index = self._cache.get("theta_index")
        if index is None:
            index = NeighborIndex(self.base, self.theta_points)
            self._cache["theta_index"] = index
        return self.theta_values[index.nearest(flat)].reshape(shape)

    # neighbour search support -------------------------------------------
    def embed(self, pts: np.ndarray) -> tuple[np.ndarray, bool]:
        """Coordinates whose kd-distance never exceeds the metric distance.

        Returns (coords, periodic).  Periodic embeddings live in [0,1)^k and
        are searched with the L1 norm on the unit torus; the others with L2.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        k = self.kind
        if k == "arc":
            return np.mod(pts[:, :1], 1.0), True
        if k == "density-arc":
            return np.mod(self.warp(pts[:, 0]), 1.0).reshape(-1, 1), True
        if k == "chord":
            if self.chart.kind == "circle":
                a = 2 * np.pi * pts[:, 0]
                return np.column_stack([np.cos(a), np.sin(a)]) / (2 * np.pi), False
            return pts.copy(), False
        if k == "lyapunov":
            return self.base.embed(pts)
        if k == "product-sum":
            parts = [f.embed(pts[:, sl]) for f, sl in zip(self.factors, self.chart.factor_slices())]
            if all(p for _, p in parts):
                return np.hstack([c for c, _ in parts]), True
            cols = []
            for f, sl in zip(self.factors, self.chart.factor_slices()):
                c, periodic = f.embed(pts[:, sl])
                if periodic:  # chord of the unit-circumference circle <= arc
                    c = _periodic_to_chord(c)
                cols.append(c)
            return np.hstack(cols), False
        raise ArgumentError("union metrics are embedded per component")


def _periodic_to_chord(c: np.ndarray) -> np.ndarray:
    cols = []
    for j in range(c.shape[1]):
        a = 2 * np.pi * c[:, j]
        cols += [np.cos(a) / (2 * np.pi), np.sin(a) / (2 * np.pi)]
    return np.column_stack(cols)


class NeighborIndex:
    """Candidate search for metric balls; results are exact after filtering."""

    def __init__(self, metric: MetricModel, points: np.ndarray):
        self.metric = metric
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.parts = []  # (component id, metric, global indices, tree, periodic)
        inner = metric
        while inner.kind == "lyapunov":
            inner = inner.base
        if inner.kind == "union":
            um = inner
            comp = np.rint(self.points[:, -1]).astype(int)
            for c, f in enumerate(um.factors):
                idx = np.flatnonzero(comp == c)
                if len(idx):
                    self._add(c, f, idx, self.points[idx, : f.chart.ncoords])
        else:
            self._add(None, inner, np.arange(len(self.points)), self.points)

    def _add(self, comp, metric, idx, pts):
        coords, periodic = metric.embed(pts)
        tree = cKDTree(np.mod(coords, 1.0) if periodic else coords, boxsize=1.0 if periodic else None)
        self.parts.append((comp, metric, idx, tree, periodic))

    def _split(self, queries: np.ndarray):
        if self.parts[0][0] is None:
            yield self.parts[0], np.arange(len(queries)), queries
            return
        comp = np.rint(queries[:, -1]).astype(int)
        for part in self.parts:
            sel = np.flatnonzero(comp == part[0])
            if len(sel):
                yield part, sel, queries[sel, : part[1].chart.ncoords]

    def nearest(self, queries: np.ndarray) -> np.ndarray:
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        out = np.zeros(len(queries), dtype=np.int64)
        for (_, metric, idx, tree, periodic), sel, q in self._split(queries):
            coords, _ = metric.embed(q)
            if periodic:
                coords = np.mod(coords, 1.0)
            _, j = tree.query(coords, k=1, p=1 if periodic else 2)
            out[sel] = idx[j]
        return out

    def ball_pairs(self, queries: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All (query row, point index, exact distance) with distance <= radius."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        rows, cols = [], []
        for (_, metric, idx, tree, periodic), sel, q in self._split(queries):
            coords, _ = metric.embed(q)
            if periodic:
                coords = np.mod(coords, 1.0)
            # tiny inflation guards against round-off in the embedding
            lists = tree.query_ball_point(coords, r=radius * (1 + 1e-9) + 1e-15, p=1 if periodic else 2)
            counts = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
            if counts.sum() == 0:
                continue
            rows.append(np.repeat(sel, counts))
            cols.append(idx[np.concatenate([np.asarray(x, dtype=np.int64) for x in lists if len(x)])])
        if not rows:
            e = np.zeros(0, dtype=np.int64)
            return e, e, np.zeros(0)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        d = self.metric.pairwise(queries[r], self.points[c])
        keep = d <= radius
        return r[keep], c[keep], d[keep]


    def ball_pairs_fast(self, queries: np.ndarray, radius: float, k: int = 12):
        """Same result as ``ball_pairs``; vectorized when balls hold < k points."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        rows, cols, spill = [], [], []
        r_in = radius * (1 + 1e-9) + 1e-15
        for (_, metric, idx, tree, periodic), sel, q in self._split(queries):
            coords, _ = metric.embed(q)
            if periodic:
                coords = np.mod(coords, 1.0)
            kk = min(k, len(idx))
            d, j = tree.query(coords, k=kk, distance_upper_bound=r_in, p=1 if periodic else 2)
            d, j = d.reshape(len(q), kk), j.reshape(len(q), kk)
            full = np.isfinite(d[:, -1]) if kk < len(idx) else np.zeros(len(q), dtype=bool)
            spill.append(sel[full])
            ok = np.isfinite(d) & ~full[:, None]
            rr, cc = np.nonzero(ok)
            rows.append(sel[rr])
            cols.append(idx[j[rr, cc]])
        r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        dist = self.metric.pairwise(queries[r], self.points[c]) if len(r) else np.zeros(0)
        keep = dist <= radius
        r, c, dist = r[keep], c[keep], dist[keep]
        extra = np.concatenate(spill) if spill else np.zeros(0, dtype=np.int64)
        if len(extra):
            er, ec, ed = self.ball_pairs(queries[extra], radius)
            r = np.concatenate([r, extra[er]])
            c = np.concatenate([c, ec])
            dist = np.concatenate([dist, ed])
        return r, c, dist


def distance(metric: MetricModel, u, v) -> float:
    """d(u, v) for two single points of the metric's chart."""
    u = np.asarray(u, dtype=float).reshape(1, -1)
    v = np.asarray(v, dtype=float).reshape(1, -1)
    chart = metric.chart
    if not (chart.contains(u)[0] and chart.contains(v)[0]):
        raise DomainMismatchError(f"points {u.ravel()} / {v.ravel()} do not lie on a {chart.kind} chart")
    return float(metric.pairwise(u, v)[0])


@dataclass
class MetricReport:
    trials: int
    worst_slack: float
    max_asymmetry: float
    min_positive: float
    passed: bool = True


def verify_metric(metric, grid: SampleGrid, trials: int, seed: int = 0) -> MetricReport:
    """Sample random triples of grid points and check the metric axioms.

    Raises MetricInvalidError naming the first violating triple.
    """
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n = grid.n
    ia, ib, ic = (rng.integers(0, n, size=trials) for _ in range(3))
    a, b, c = grid.points[ia], grid.points[ib], grid.points[ic]
    dab = metric.pairwise(a, b)
    dba = metric.pairwise(b, a)
    dbc = metric.pairwise(b, c)
    dac = metric.pairwise(a, c)
    daa = metric.pairwise(a, a)

    def fail(msg, k):
        raise MetricInvalidError(msg, witness=(int(ia[k]), int(ib[k]), int(ic[k])))

    bad = np.flatnonzero(np.abs(daa) > _TOL)
    if len(bad):
        fail(f"d(u,u) = {daa[bad[0]]} != 0", bad[0])
    bad = np.flatnonzero(dab < 0)
    if len(bad):
        fail(f"negative distance {dab[bad[0]]}", bad[0])
    asym = np.abs(dab - dba)
    bad = np.flatnonzero(asym > _TOL)
    if len(bad):
        fail(f"asymmetry {asym[bad[0]]}", bad[0])
    distinct = ia != ib
    bad = np.flatnonzero(distinct & (dab <= 0))
    if len(bad):
        fail("zero distance between distinct samples", bad[0])
    slack = dab + dbc - dac
    bad = np.flatnonzero(slack < -_TOL)
    if len(bad):
        fail(f"triangle inequality violated by {-slack[bad[0]]:.3e}", bad[0])
    pos = dab[distinct]
    return MetricReport(
        trials=trials,
        worst_slack=float(slack.min()),
        max_asymmetry=float(asym.max()),
        min_positive=float(pos.min()) if len(pos) else float("inf"),
    )
