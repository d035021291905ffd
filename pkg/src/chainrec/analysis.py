"""Studies built on the estimators: power invariance, depth, dimension,
chain-time scaling, quotients and Lyapunov images."""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from chainrec.errors import ArgumentError
from chainrec.generalized import LyapunovField, budget_schedule, gr_estimate
from chainrec.jumpgraph import JumpGraph, barrier, build_jump_graph
from chainrec.mane import mane_estimate
from chainrec.masks import EquivalenceDecomposition, RegionMask, _jsonable, dilate, sym_diff
from chainrec.recurrence import chain_recurrent_set, chain_time, strong_chain_recurrent_set
from chainrec.space import NeighborIndex
from chainrec.systems import SampledSystem, power, restrict

__all__ = [
    "recurrence_masks",
    "power_invariance_check",
    "depth_sequence",
    "box_dimension",
    "BoxFit",
    "scaling_exponent",
    "ScalingFit",
    "quotient_factor",
    "lyapunov_image_analysis",
    "agree_dilated",
    "fit_csv",
]


def agree_dilated(system, a: np.ndarray, b: np.ndarray, cells: float = 1.0) -> bool:
    """Each mask lies in the other's dilation."""
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    return not (a & ~dilate(system, b, cells)).any() and not (b & ~dilate(system, a, cells)).any()


def recurrence_masks(system: SampledSystem, eps=None, tol=None, schedule=None) -> dict[str, RegionMask]:
    """CR, SCR (free-orbit), Mañé and GR masks at the system's default scales."""
    d = system.defaults
    eps = float(d["eps"] if eps is None else eps)
    tol = float(d["tol"] if tol is None else tol)
    g = build_jump_graph(system, max(eps, tol))
    bm = barrier(g, "free-orbit", horizon=10 * tol, sources=np.zeros(0, dtype=np.int64))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mane = mane_estimate(system, eps=eps).mask
    return {
        "CR": chain_recurrent_set(g, eps),
        "SCR": strong_chain_recurrent_set(bm, tol),
        "Mane": mane,
        "GR": gr_estimate(system, schedule),
    }


def power_invariance_check(system: SampledSystem, k: int, eps=None, tol=None, schedule=None) -> dict:
    """Compare the four masks of f and f^k (same grid, same scales)."""
    if k < 2:
        raise ArgumentError("k must be >= 2")
    fk = power(system, k)
    a = recurrence_masks(system, eps, tol, schedule)
    b = recurrence_masks(fk, eps, tol, schedule)
    rows = {}
    for name in a:
        ma, mb = a[name].members, b[name].members
        rows[name] = {
            "size_f": int(ma.sum()),
            "size_fk": int(mb.sum()),
            "sym_diff": sym_diff(ma, mb),
            "agree_dilated": agree_dilated(system, ma, mb),
            "fk_subset_f": bool(not (mb & ~ma).any()),
        }
    return _jsonable({"kind": "power", "k": k, "system": system.spec.to_dict(), "masks": rows})


def depth_sequence(system: SampledSystem, max_depth: int = 6) -> tuple[list[RegionMask], int]:
    """GR^0 = all, GR^{t+1} = GR of the subsystem induced on GR^t.

    Masks are reported on the ambient grid.  Returns (masks, depth) where depth
    is the first t >= 1 with GR^{t+1} = GR^t (or the last step reached).
    """
    if max_depth < 1:
        raise ArgumentError("max_depth must be >= 1")
    masks = [RegionMask(system, np.ones(system.n, dtype=bool), "GR^0")]
    current = system
    keep = np.arange(system.n)
    for t in range(1, max_depth + 2):
        sub_mask = gr_estimate(current).members
        amb = np.zeros(system.n, dtype=bool)
        amb[keep[sub_mask]] = True
        masks.append(RegionMask(system, amb, f"GR^{t}", {"step": t}))
        if np.array_equal(amb, masks[-2].members) or not amb.any():
            break
        current, kept = restrict(current, sub_mask)
        keep = keep[kept]
        if len(masks) > max_depth + 1:
            break
    depth = max(1, len(masks) - 2)
    return masks, depth


# ---------------------------------------------------------------------------
# box dimension


@dataclass
class BoxFit:
    dimension: float
    residual: float
    scales: list
    counts: list

    def record(self) -> dict:
        return _jsonable({"kind": "box_dimension", "dimension": self.dimension, "residual": self.residual,
                          "scales": self.scales, "counts": self.counts})


def _cover_count(index: NeighborIndex, pts: np.ndarray, delta: float) -> int:
    covered = np.zeros(len(pts), dtype=bool)
    count = 0
    for i in range(len(pts)):
        if covered[i]:
            continue
        count += 1
        _, cols, _ = index.ball_pairs(pts[i : i + 1], delta * (1 - 1e-9))  # open balls: unbiased on lattices
        covered[cols] = True
    return count


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    a = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = float(np.sqrt(np.mean((a @ coef - y) ** 2)))
    return float(coef[0]), float(coef[1]), resid


def box_dimension(mask: RegionMask, scales) -> BoxFit:
    """Slope of log N(delta) against log(1/delta) over greedy delta-nets."""
    scales = sorted(float(s) for s in scales)
    s = mask.system
    if len(scales) < 4:
        raise ArgumentError("need at least 4 scales")
    if scales[-1] / scales[0] < 10 * (1 - 1e-9):
        raise ArgumentError("scales must span at least one decade")
    if scales[0] < 2 * s.eta * (1 - 1e-9):
        raise ArgumentError("scales must be at least 2 eta")
    pts = np.asarray(s.points)[mask.members]
    if len(pts) == 0:
        raise ArgumentError("empty mask")
    index = NeighborIndex(s.metric, pts)
    counts = [_cover_count(index, pts, d) for d in scales]
    slope, _, resid = _ols(np.log(1 / np.array(scales)), np.log(np.array(counts, dtype=float)))
    return BoxFit(slope, resid, scales, counts)


# ---------------------------------------------------------------------------
# chain-time scaling


@dataclass
class ScalingFit:
    dimension: float
    constant: float
    residual: float
    eps: list
    times: list  # mean chain time per eps
    cost_bound: list  # C eps^(1-D)
    cycle_cost: list  # measured (t(x,y) + t(y,x)) eps, mean over pairs; nan if one-way

    def record(self) -> dict:
        return _jsonable({"kind": "scaling", "dimension": self.dimension, "constant": self.constant,
                          "residual": self.residual, "eps": self.eps, "times": self.times,
                          "cost_bound": self.cost_bound, "cycle_cost": self.cycle_cost})


def scaling_exponent(graph: JumpGraph, pairs, eps_list) -> ScalingFit:
    """Fit t_eps(x, y) ~ C eps^-D by least squares on log-log data."""
    eps_list = sorted(float(e) for e in eps_list)
    if len(eps_list) < 2 or not pairs:
        raise ArgumentError("need two scales and at least one pair")
    if eps_list[-1] > graph.eps_max * (1 + 1e-12):
        raise ArgumentError("largest eps exceeds the graph cutoff")
    times, cycles = [], []
    for e in eps_list:
        t = [chain_time(graph, e, int(x), int(y)) for x, y in pairs]
        back = [chain_time(graph, e, int(y), int(x)) for x, y in pairs]
        if not np.all(np.isfinite(t)):
            raise ArgumentError(f"some pair is not chain-connected at eps={e}")
        times.append(float(np.mean(t)))
        cyc = [(a + b) * e for a, b in zip(t, back)]
        cycles.append(float(np.mean(cyc)) if np.all(np.isfinite(cyc)) else float("nan"))
    slope, icpt, resid = _ols(np.log(1 / np.array(eps_list)), np.log(np.array(times)))
    c = float(np.exp(icpt))
    bound = [c * e ** (1 - slope) for e in eps_list]
    return ScalingFit(slope, c, resid, eps_list, times, bound, cycles)


# ---------------------------------------------------------------------------
# quotient


def quotient_factor(system: SampledSystem, classes: EquivalenceDecomposition) -> dict:
    """Collapse each class to a node; check the induced map and its fixed nodes."""
    n = system.n
    qid = np.full(n, -1, dtype=np.int64)
    for k, c in enumerate(classes.classes):
        qid[c] = k
    rest = np.flatnonzero(qid < 0)
    qid[rest] = len(classes.classes) + np.arange(len(rest))
    nq = len(classes.classes) + len(rest)
    members = list(classes.classes) + [np.array([i]) for i in rest]
    # one-cell neighbourhood of every quotient node
    rows, cols, _ = system.index().ball_pairs(np.asarray(system.points), 1.5 * system.eta)
    near = sparse.csr_matrix((np.ones(len(rows), np.int8), (qid[rows], qid[cols])), shape=(nq, nq))
    near = near.tocsr()
    near.data[:] = 1
    image_q = qid[system.snap]
    well_defined = True
    fixed = np.zeros(nq, dtype=bool)
    target = np.full(nq, -1, dtype=np.int64)
    for q, mem in enumerate(members):
        imgs = np.unique(image_q[mem])
        # a target class whose one-cell neighbourhood holds every image
        cands = imgs if len(imgs) <= 8 else imgs[:8]
        chosen = -1
        for d in cands:
            nb = near.indices[near.indptr[d] : near.indptr[d + 1]]
            if np.isin(imgs, nb).all() or (len(imgs) == 1 and imgs[0] == d):
                chosen = int(d)
                break
        if chosen < 0:
            well_defined = False
            chosen = int(np.bincount(image_q[mem]).argmax())
        target[q] = chosen
        nb = near.indices[near.indptr[q] : near.indptr[q + 1]]
        fixed[q] = chosen == q or (q < len(classes.classes) and np.isin(imgs, np.r_[nb, q]).all())
    fixed_idx = np.flatnonzero(fixed)
    sub = near[fixed_idx][:, fixed_idx]
    ncomp, lab = csgraph.connected_components(sub, directed=False)
    runs = np.bincount(lab, minlength=ncomp) if len(fixed_idx) else np.zeros(0, dtype=np.int64)
    longest = int(runs.max()) if len(runs) else 0
    return _jsonable({
        "kind": "quotient",
        "nodes": nq,
        "classes": len(classes.classes),
        "well_defined": well_defined,
        "fixed_nodes": int(fixed.sum()),
        "fixed_classes": int(fixed[: len(classes.classes)].sum()),
        "longest_fixed_run": longest,
        "connected_run": longest >= 3,
    })


# ---------------------------------------------------------------------------
# Lyapunov image


def lyapunov_image_analysis(field_: LyapunovField, mask: RegionMask) -> dict:
    """Gaps and dense runs of theta over the mask."""
    vals = np.sort(field_.theta[mask.members])
    if len(vals) == 0:
        raise ArgumentError("empty mask")
    span = float(vals[-1] - vals[0])
    gaps = np.diff(vals)
    out = {"kind": "lyapunov_image", "size": int(len(vals)), "range": span,
           "distinct": int(len(np.unique(np.round(vals, 12)))),
           "largest_gap": float(gaps.max()) if len(gaps) else 0.0}
    if span <= 1e-12 or len(vals) < 3:
        out.update(runs=0, longest_run=0, interval_like=False)
        return _jsonable(out)
    thresh = 2.0 * span / len(vals)
    dense = gaps <= thresh
    runs, length = [], 0
    for d in dense:
        if d:
            length += 1
        elif length:
            runs.append(length + 1)
            length = 0
    if length:
        runs.append(length + 1)
    runs = [r for r in runs if r >= 3]
    out.update(runs=len(runs), longest_run=max(runs) if runs else 0, interval_like=bool(runs))
    return _jsonable(out)


def fit_csv(xs, ys, header=("scale", "value")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for x, y in zip(xs, ys):
        w.writerow([repr(float(x)), repr(float(y))])
    return buf.getvalue()
