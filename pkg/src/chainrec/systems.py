"""Dynamical systems sampled on grids.

A system is a continuous map given in closed form on a chart, plus a metric.
Sampling evaluates the exact images of the grid points and snaps each image to
its nearest grid point (the combinatorial map f_hat).  Maps given only as a
table are "finite": their exact map is known at grid points only.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from chainrec.errors import ArgumentError, InvalidSystemError
from chainrec.space import (
    Chart,
    MetricModel,
    NeighborIndex,
    SampleGrid,
    build_grid,
)

__all__ = [
    "SystemSpec",
    "SampledSystem",
    "instantiate",
    "power",
    "restrict",
    "builtin_names",
    "GOLDEN",
    "EXACT_TOL",
]

GOLDEN = 0.6180339887
EXACT_TOL = 1e-12  # costs at or below this count as exact hits

MapFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SystemSpec:
    """Name of a built-in system plus its parameters.

    ``params`` may override the closed-form constants of the built-in (for
    example ``alpha`` for rotations, ``gamma`` for the Cantor map, ``path``
    for ``user_table``) and the per-system resolution defaults.
    """

    name: str
    params: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(sorted(self.params.items()))}


@dataclass(frozen=True, eq=False)
class SampledSystem:
    spec: SystemSpec
    grid: SampleGrid
    metric: MetricModel
    images: np.ndarray  # exact images of the grid points
    snap: np.ndarray  # f_hat as an index array
    snap_cost: np.ndarray  # d(f(p_i), p_snap(i))
    fmap: MapFn | None  # exact map on arbitrary chart points; None if finite
    defaults: dict
    k: int = 1  # power
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def eta(self) -> float:
        return self.grid.eta

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    @property
    def finite(self) -> bool:
        return self.fmap is None

    @property
    def chart(self) -> Chart:
        return self.grid.chart

    def index(self) -> NeighborIndex:
        idx = self._cache.get("index")
        if idx is None:
            idx = NeighborIndex(self.metric, np.asarray(self.points))
            self._cache["index"] = idx
        return idx

    def apply(self, pts: np.ndarray) -> np.ndarray:
        if self.fmap is None:
            raise ArgumentError("finite systems have no map off the grid")
        return self.chart.canonical(self.fmap(np.asarray(pts, dtype=float)))

    def param(self, key: str):
        return self.defaults[key]


# ---------------------------------------------------------------------------
# closed-form maps


def _half_circle_profile(u: np.ndarray) -> np.ndarray:
    """Clockwise image parameter on the moving arc, u in (0, 0.5).

    g(u) = 0.5 G(2u), G(t) = 0.1 t + 0.9 t^2: increasing, below the diagonal,
    slope 0.1 at the attracting end and 1.9 at the repelling end.
    """
    t = 2.0 * u
    return 0.5 * (0.1 * t + 0.9 * t * t)


def _f1(x: np.ndarray) -> np.ndarray:
    x = np.mod(x, 1.0)
    u = np.mod(x - 0.75, 1.0)
    moving = (u > 0) & (u < 0.5)
    out = x.copy()
    out[moving] = np.mod(0.75 + _half_circle_profile(u[moving]), 1.0)
    return out


def _f1_displacement(x: np.ndarray) -> np.ndarray:
    """Clockwise displacement (turns) of f1 at angle x; zero on C1."""
    u = np.mod(np.mod(x, 1.0) - 0.75, 1.0)
    return np.where((u > 0) & (u < 0.5), u - _half_circle_profile(np.clip(u, 0, 0.5)), 0.0)


def _cantor_map(gamma: float, depth: int) -> Callable[[np.ndarray], np.ndarray]:
    """Fixes the middle-thirds Cantor set; gap points slide toward the gap's
    clockwise (lower) endpoint a:  x -> x - gamma (x-a)(b-x)/(b-a)."""

    def fmap(x: np.ndarray) -> np.ndarray:
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        lo = np.zeros_like(x)
        scale = np.ones_like(x)
        a = np.full_like(x, np.nan)
        active = np.ones(x.shape, dtype=bool)
        for _ in range(depth):
            y = (x - lo) / scale * 3.0
            digit = np.clip(np.floor(y), 0, 2)
            gap = active & (digit == 1)
            a[gap] = lo[gap] + scale[gap] / 3.0
            active &= ~gap
            lo = np.where(active, lo + digit * scale / 3.0, lo)
            scale = np.where(active, scale / 3.0, scale)
        out = x.copy()
        g = ~np.isnan(a)
        if g.any():
            ag = a[g]
            width = scale[g] / 3.0
            bg = ag + width
            xg = x[g]
            out[g] = xg - gamma * (xg - ag) * (bg - xg) / width
        return out

    return fmap


@dataclass(frozen=True)
class _Spiral:
    """Disk homeomorphism used by f4 and f5.

    radius  r -> w(r) (1 - F(1 - r)),  F(u) = u / (1 + c u),
            w(r) = tanh(r / V) / tanh(1 / V)   (fixes the centre)
    angle   phi -> phi - min(dmax, A u) - b(u) P(phi)   (turns, clockwise)
    with b(u) = max(0, 1 - u / ub) blending in the boundary profile P.
    """

    c: float = 25.0
    A: float = 25.0
    dmax: float = 0.2
    V: float = 0.1
    ub: float = 1e-4
    boundary_moves: bool = True

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        x, y = pts[:, 0], pts[:, 1]
        r = np.minimum(np.hypot(x, y), 1.0)
        phi = np.mod(np.arctan2(y, x) / (2 * np.pi), 1.0)
        u = 1.0 - r
        r2 = np.tanh(r / self.V) / np.tanh(1.0 / self.V) * (1.0 - u / (1.0 + self.c * u))
        turn = np.minimum(self.dmax, self.A * u)
        if self.boundary_moves:
            turn = turn + np.maximum(0.0, 1.0 - u / self.ub) * _f1_displacement(phi)
        a = 2 * np.pi * (phi - turn)
        out = np.column_stack([r2 * np.cos(a), r2 * np.sin(a)])
        out[r == 0.0] = 0.0
        # keep boundary points exactly on the unit circle
        on_rim = r2 >= 1.0
        if on_rim.any():
            out[on_rim] /= np.hypot(out[on_rim, 0], out[on_rim, 1])[:, None]
        return out


def _swap(x: np.ndarray) -> np.ndarray:
    out = np.array(x, dtype=float, copy=True)
    out[:, 0] = _f1(out[:, 0])
    out[:, -1] = 1.0 - np.rint(out[:, -1])
    return out


def _union_map(maps: list[MapFn], widths: list[int]) -> MapFn:
    def fmap(pts: np.ndarray) -> np.ndarray:
        out = np.array(pts, dtype=float, copy=True)
        comp = np.rint(pts[:, -1]).astype(int)
        for c, (m, w) in enumerate(zip(maps, widths)):
            sel = comp == c
            if sel.any():
                out[np.ix_(sel, np.arange(w))] = m(pts[sel, :w])
        return out

    return fmap


def _on_col(fn: Callable[[np.ndarray], np.ndarray]) -> MapFn:
    return lambda pts: fn(pts[:, 0]).reshape(-1, 1)


# resolution defaults, in units of eta unless noted
_CIRCLE_DEFAULTS = dict(
    eps=2.0, tol=2.0, budget_floor=0.9, eps1=0.05, rho=0.5, m=12,
    horizon=256, angular_ratio=1.0, n_max=8, fix_tol=2.0, gr_floor_abs=False,
)


def _defaults(**over) -> dict:
    d = dict(_CIRCLE_DEFAULTS)
    d.update(over)
    return d


def _builtin(name: str, params: Mapping):
    """Return (chart, metric, fmap, defaults) for a built-in system."""
    p = dict(params)
    circle = Chart.circle()
    if name == "identity":
        chart = _chart_from_params(p)
        return chart, MetricModel.default(chart), (lambda pts: np.array(pts, dtype=float)), _defaults()
    if name == "rigid_rotation":
        alpha = float(p.get("alpha", 0.25))
        return circle, MetricModel.default(circle), _on_col(lambda x: np.mod(x + alpha, 1.0)), _defaults()
    if name == "f1":
        return circle, MetricModel.default(circle), _on_col(_f1), _defaults()
    if name in ("f2", "f3"):
        beta = float(p.get("beta", 0.0 if name == "f2" else 0.5))
        fmap = _on_col(_cantor_map(float(p.get("gamma", 0.9)), int(p.get("depth", 7))))
        # grid spacing of the warped metric near the Cantor set is ~ beta 2^-7
        if name == "f2":
            d = _defaults(eps=20.0, tol=0.1, tol_abs=True, fix_tol=1.0)
        else:
            d = _defaults(eps=0.04, eps_abs=True, tol=0.5, budget_floor=0.25)
        return circle, MetricModel.density_arc(beta), fmap, d
    if name in ("f4", "f5"):
        disk = Chart.disk()
        spiral = _Spiral(boundary_moves=(name == "f4"))
        d = _defaults(eps=0.3, tol=1.2, budget_floor=1.2, fix_tol=1.0, angular_ratio=0.25, horizon=400)
        return disk, MetricModel.default(disk), spiral, d
    if name == "torus_product":
        alpha = float(p.get("alpha", GOLDEN))
        chart = Chart.torus()

        def fmap(pts):
            return np.column_stack([_f1(pts[:, 0]), np.mod(pts[:, 1] + alpha, 1.0)])

        return chart, MetricModel.default(chart), fmap, _defaults(horizon=400)
    if name == "two_circle_swap":
        chart = Chart.union(circle, circle)
        metric = MetricModel("union", chart, factors=(MetricModel.default(circle), MetricModel.minkowski_arc()))
        # the ? warp packs cells far closer than eta near the moving arc's ends
        return chart, metric, _swap, _defaults(eps=6.0, budget_floor=1e-9, budget_floor_abs=True)
    if name == "cantor_union":
        # f1 | f2 | f3 on three circles, each with its own metric
        chart = Chart.union(circle, circle, circle)
        metric = MetricModel(
            "union",
            chart,
            factors=(MetricModel.default(circle), MetricModel.density_arc(0.0), MetricModel.density_arc(0.5)),
        )
        cm = _cantor_map(0.9, 7)
        fmap = _union_map([_on_col(_f1), _on_col(cm), _on_col(cm)], [1, 1, 1])
        return chart, metric, fmap, _defaults(eps=5.0)
    raise ArgumentError(f"unknown system {name!r}")


def _chart_from_params(p: Mapping) -> Chart:
    kind = p.get("chart", "circle")
    if kind == "circle":
        return Chart.circle()
    if kind == "interval":
        return Chart.interval(float(p.get("low", 0.0)), float(p.get("high", 1.0)))
    if kind == "disk":
        return Chart.disk()
    if kind == "torus":
        return Chart.torus()
    raise ArgumentError(f"unsupported chart {kind!r}")


BUILTINS = (
    "f1", "f2", "f3", "f4", "f5", "torus_product", "two_circle_swap",
    "identity", "rigid_rotation", "cantor_union", "user_table",
)


def builtin_names() -> tuple[str, ...]:
    return BUILTINS


# ---------------------------------------------------------------------------
# sampling


def _resolve_defaults(d: dict, eta: float, params: Mapping) -> dict:
    out = dict(d)
    for key in ("eps", "tol", "budget_floor", "fix_tol", "eps1", "rho", "m", "horizon", "n_max"):
        if key in params:
            out[key] = params[key]
            out[f"{key}_abs"] = True
    for key in ("eps", "tol", "budget_floor", "fix_tol"):
        if not out.get(f"{key}_abs", False):
            out[key] = float(out[key]) * eta
        out.pop(f"{key}_abs", None)
    out.pop("gr_floor_abs", None)
    out["eps"] = float(out["eps"])
    out["tol"] = float(out["tol"])
    out["budget_floor"] = float(out["budget_floor"])
    out["fix_tol"] = float(out["fix_tol"])
    out["eps1"] = float(out["eps1"])
    out["rho"] = float(out["rho"])
    out["m"] = int(out["m"])
    out["horizon"] = int(out["horizon"])
    out["n_max"] = int(out["n_max"])
    return out


def _snap(metric: MetricModel, index: NeighborIndex, grid_pts: np.ndarray, images: np.ndarray):
    snap = index.nearest(images)
    cost = metric.pairwise(images, grid_pts[snap])
    cost = np.where(cost <= EXACT_TOL, 0.0, cost)
    return snap.astype(np.int64), cost


def _make(spec, grid, metric, images, fmap, defaults, k=1) -> SampledSystem:
    pts = np.asarray(grid.points)
    sysm = SampledSystem(
        spec=spec, grid=grid, metric=metric, images=images, snap=np.empty(0, dtype=np.int64),
        snap_cost=np.empty(0), fmap=fmap, defaults=defaults, k=k,
    )
    snap, cost = _snap(metric, sysm.index(), pts, images)
    object.__setattr__(sysm, "snap", snap)
    object.__setattr__(sysm, "snap_cost", cost)
    images.setflags(write=False)
    snap.setflags(write=False)
    cost.setflags(write=False)
    return sysm


def _check_images(chart: Chart, images: np.ndarray) -> None:
    bad = ~chart.contains(images, tol=1e-9)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InvalidSystemError(f"image of grid point {i} leaves the chart", witness=i)


def instantiate(spec: SystemSpec, eta: float, cap: int | None = None) -> SampledSystem:
    """Sample ``spec`` on a grid of spacing ``eta`` and build f_hat."""
    if spec.name == "user_table":
        return _load_table(spec, eta)
    chart, metric, fmap, defaults = _builtin(spec.name, spec.params)
    kwargs = {} if cap is None else {"cap": cap}
    grid = build_grid(chart, eta, angular_ratio=float(spec.params.get("angular_ratio", defaults["angular_ratio"])), **kwargs)
    pts = np.asarray(grid.points)
    images = chart.canonical(fmap(pts))
    _check_images(chart, images)
    return _make(spec, grid, metric, images, fmap, _resolve_defaults(defaults, grid.eta, spec.params))


def _load_table(spec: SystemSpec, eta: float) -> SampledSystem:
    """CSV with header ``index,coord0[,coord1],img0[,img1]``."""
    path = spec.params.get("path")
    if not path:
        raise ArgumentError("user_table needs a 'path' parameter")
    chart = _chart_from_params(spec.params)
    w = chart.ncoords
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        want = ["index"] + [f"coord{j}" for j in range(w)] + [f"img{j}" for j in range(w)]
        missing = [c for c in want if c not in (reader.fieldnames or [])]
        if missing:
            raise ArgumentError(f"table is missing columns {missing}")
        rows = sorted(reader, key=lambda r: int(r["index"]))
    if [int(r["index"]) for r in rows] != list(range(len(rows))):
        raise ArgumentError("table indices must be 0..N-1")
    pts = np.array([[float(r[f"coord{j}"]) for j in range(w)] for r in rows], dtype=float)
    images = np.array([[float(r[f"img{j}"]) for j in range(w)] for r in rows], dtype=float)
    if not chart.contains(pts).all():
        raise ArgumentError("table coordinates leave the chart")
    _check_images(chart, images)
    pts = chart.canonical(pts)
    images = chart.canonical(images)
    grid = SampleGrid(chart=chart, eta=float(eta), points=pts)
    return _make(spec, grid, MetricModel.default(chart), images, None,
                 _resolve_defaults(_defaults(), float(eta), spec.params))


def power(system: SampledSystem, k: int) -> SampledSystem:
    """The k-fold iterate, sampled with one snap at the end.

    For finite systems the intermediate images are snapped (their map is only
    known on the grid).
    """
    if k < 1:
        raise ArgumentError("power needs k >= 1")
    if k == 1:
        return system
    pts = np.asarray(system.points)
    if system.fmap is None:
        idx = np.arange(system.n)
        for _ in range(k - 1):
            idx = system.snap[idx]
        images = np.array(system.images[idx], copy=True)
        fk = None
    else:
        f = system.fmap
        chart = system.chart

        def fk(q, f=f, k=k, chart=chart):
            for _ in range(k):
                q = chart.canonical(f(q))
            return q

        images = fk(pts)
    _check_images(system.chart, images)
    spec = SystemSpec(system.spec.name, {**system.spec.params, "power": k * system.k})
    return _make(spec, system.grid, system.metric, images, fk, dict(system.defaults), k=k * system.k)


def restrict(system: SampledSystem, mask: np.ndarray, leave_radius: float | None = None):
    """Finite subsystem on the masked grid points.

    Exact images are the ambient ones; f_hat snaps within the mask.  Nodes
    whose exact image is farther than ``leave_radius`` (default 2 eta) from
    every mask point are dropped, repeatedly, until none leave.  Returns
    (subsystem, kept ambient indices).
    """
    keep = np.flatnonzero(np.asarray(mask, dtype=bool))
    if leave_radius is None:
        leave_radius = 2.0 * system.eta
    pts = np.asarray(system.points)
    while len(keep):
        sub_index = NeighborIndex(system.metric, pts[keep])
        near = sub_index.nearest(system.images[keep])
        dist = system.metric.pairwise(system.images[keep], pts[keep][near])
        ok = dist <= leave_radius + EXACT_TOL
        if ok.all():
            break
        keep = keep[ok]
    if not len(keep):
        raise ArgumentError("restriction leaves no nodes")
    grid = SampleGrid(chart=system.chart, eta=system.eta, points=np.array(pts[keep]))
    images = np.array(system.images[keep])
    spec = SystemSpec(system.spec.name, {**system.spec.params, "restricted": True})
    return _make(spec, grid, system.metric, images, None, dict(system.defaults), k=system.k), keep
