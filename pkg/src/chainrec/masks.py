"""Region masks and equivalence decompositions over grid indices."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from chainrec.errors import ArgumentError

__all__ = ["RegionMask", "EquivalenceDecomposition", "dilate", "sym_diff", "pgm_raster"]


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in sorted(v.items())}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else repr(f)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


@dataclass(frozen=True, eq=False)
class RegionMask:
    """A set of grid indices of one sampled system."""

    system: Any
    members: np.ndarray  # boolean, length N
    label: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.members, dtype=bool)
        if m.ndim != 1 or len(m) != self.system.n:
            raise ArgumentError("mask length must equal the node count")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    @classmethod
    def from_indices(cls, system, idx: Iterable[int], label: str, params: dict | None = None):
        m = np.zeros(system.n, dtype=bool)
        m[np.asarray(list(idx), dtype=np.int64)] = True
        return cls(system, m, label, params or {})

    @property
    def eta(self) -> float:
        return self.system.eta

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.members)

    def __len__(self) -> int:
        return int(self.members.sum())

    def __contains__(self, i: int) -> bool:
        return bool(self.members[i])

    @property
    def boundary(self) -> np.ndarray:
        """Members within one cell of a non-member: membership there is a grid call."""
        if self.members.all() or not self.members.any():
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self.members & dilate(self.system, ~self.members))

    def record(self) -> dict:
        return _jsonable(
            {
                "kind": "mask",
                "label": self.label,
                "system": self.system.spec.to_dict(),
                "eta": self.eta,
                "n": self.system.n,
                "params": self.params,
                "size": len(self),
                "indices": self.indices.tolist(),
                "boundary": self.boundary.tolist(),
            }
        )

    def to_jsonl(self) -> str:
        return json.dumps(self.record(), sort_keys=True, separators=(",", ":"))

    def write_pgm(self, path: str | Path) -> bool:
        """Write a P2 image (0 out, 255 in); False if the chart has no raster."""
        img = pgm_raster(self.system, self.members)
        if img is None:
            return False
        h, w = img.shape
        lines = ["P2", f"{w} {h}", "255"]
        lines += [" ".join(str(int(v)) for v in row) for row in img]
        Path(path).write_text("\n".join(lines) + "\n")
        return True


def pgm_raster(system, members: np.ndarray) -> np.ndarray | None:
    chart = system.chart
    vals = np.where(members, 255, 0)
    if system.finite and chart.kind != "disk":
        return vals.reshape(1, -1)
    shape = system.grid.raster_shape
    if chart.kind in ("circle", "interval"):
        return vals.reshape(1, -1)
    if shape is not None and len(shape) == 2 and shape[0] * shape[1] == len(vals):
        return vals.reshape(shape)
    if chart.kind == "union" and all(f.dim == 1 for f in chart.factors):
        comp = system.grid.component
        sizes = np.bincount(comp)
        if len(set(sizes.tolist())) == 1:
            return vals.reshape(len(sizes), -1)
        return None
    if chart.kind == "disk":
        side = int(np.ceil(2.0 / system.eta)) + 1
        ax = np.linspace(-1.0, 1.0, side)
        xx, yy = np.meshgrid(ax, -ax)
        probe = np.column_stack([xx.ravel(), yy.ravel()])
        inside = np.hypot(probe[:, 0], probe[:, 1]) <= 1.0
        img = np.zeros(len(probe), dtype=int)
        near = system.index().nearest(probe[inside])
        img[inside] = vals[near]
        return img.reshape(side, side)
    return None


@dataclass(frozen=True, eq=False)
class EquivalenceDecomposition:
    """Disjoint classes of grid indices covering a mask."""

    system: Any
    classes: tuple  # tuple of sorted int arrays, ordered by smallest member
    relation: str
    params: dict = field(default_factory=dict)
    recurrent: tuple | None = None  # per-class flag when meaningful

    def __post_init__(self):
        cls = [np.unique(np.asarray(c, dtype=np.int64)) for c in self.classes]
        order = sorted(range(len(cls)), key=lambda k: int(cls[k][0]) if len(cls[k]) else -1)
        cls = [cls[k] for k in order]
        seen = np.zeros(self.system.n, dtype=bool)
        for c in cls:
            if len(c) == 0:
                raise ArgumentError("empty class")
            if seen[c].any():
                raise ArgumentError("classes overlap")
            seen[c] = True
        object.__setattr__(self, "classes", tuple(cls))
        if self.recurrent is not None:
            object.__setattr__(self, "recurrent", tuple(bool(self.recurrent[k]) for k in order))

    def __len__(self) -> int:
        return len(self.classes)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.system.n, dtype=bool)
        for c in self.classes:
            m[c] = True
        return m

    def labels(self) -> np.ndarray:
        """Class id per node, -1 outside the covered mask."""
        lab = np.full(self.system.n, -1, dtype=np.int64)
        for k, c in enumerate(self.classes):
            lab[c] = k
        return lab

    def record(self) -> dict:
        return _jsonable(
            {
                "kind": "classes",
                "relation": self.relation,
                "system": self.system.spec.to_dict(),
                "eta": self.system.eta,
                "params": self.params,
                "count": len(self.classes),
                "classes": [c.tolist() for c in self.classes],
            }
        )

    def to_jsonl(self) -> str:
        return json.dumps(self.record(), sort_keys=True, separators=(",", ":"))


def dilate(system, members: np.ndarray, cells: float = 1.0) -> np.ndarray:
    """Grid points within 1.5 * cells * eta of the mask (one-cell dilation)."""
    members = np.asarray(members, dtype=bool)
    if not members.any():
        return members.copy()
    pts = np.asarray(system.points)
    r = 1.5 * cells * system.eta
    from chainrec.space import NeighborIndex

    idx = NeighborIndex(system.metric, pts[members])
    rows, _, _ = idx.ball_pairs(pts, r)
    out = members.copy()
    out[np.unique(rows)] = True
    return out


def sym_diff(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.sum(np.asarray(a, dtype=bool) ^ np.asarray(b, dtype=bool)))
