"""Generalized recurrence: budgeted chains, Lyapunov fields and reweighting.

A budgeted chain may use each tolerance of a descending list
eps_1 >= ... >= eps_m at most once.  Stretches that follow the exact orbit
cost nothing and consume no budget (switch off with ``free_orbit=False``).
"""
from __future__ import annotations

import json
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from chainrec.errors import ArgumentError, StateOverflowError
from chainrec.jumpgraph import BarrierMatrix, barrier, build_jump_graph
from chainrec.masks import EquivalenceDecomposition, RegionMask
from chainrec.recurrence import strong_chain_recurrent_set
from chainrec.space import MetricModel
from chainrec.systems import EXACT_TOL, SampledSystem

__all__ = [
    "BudgetSequence",
    "SigmaGraph",
    "build_sigma_graph",
    "sigma_chain_feasible",
    "sigma_relation",
    "gr_estimate_sigma",
    "gr_estimate",
    "budget_schedule",
    "witness_jsonl",
    "with_metric",
    "default_anchors",
    "ReweightResult",
    "gr_classes",
    "LyapunovField",
    "synthesize_lyapunov",
    "neutral_set",
    "reweight_metric",
    "gr_estimate_reweight",
    "MAX_BUDGETS",
    "STATE_CAP",
]

MAX_BUDGETS = 24
STATE_CAP = 1_000_000


@dataclass(frozen=True)
class BudgetSequence:
    """Descending tolerances; ``eps[k]`` is the (k+1)-th budget."""

    eps: tuple
    floor: float = 0.0

    def __post_init__(self):
        e = tuple(float(x) for x in self.eps)
        if not e:
            raise ArgumentError("budget list is empty")
        if len(e) > MAX_BUDGETS:
            raise ArgumentError(f"at most {MAX_BUDGETS} budgets")
        if any(not x > 0 for x in e):
            raise ArgumentError("budgets must be positive")
        if any(a < b for a, b in zip(e, e[1:])):
            raise ArgumentError("budgets must be non-increasing")
        object.__setattr__(self, "eps", e)

    @classmethod
    def geometric(cls, eps1: float, rho: float = 0.5, m: int = MAX_BUDGETS, floor: float = 0.0):
        """eps1 * rho**k for k < m, dropping terms below ``floor``."""
        if not 0 < rho <= 1:
            raise ArgumentError("rho must lie in (0, 1]")
        if m < 1:
            raise ArgumentError("m must be >= 1")
        e = [eps1 * rho**k for k in range(min(m, MAX_BUDGETS))]
        e = [x for x in e if x >= floor * (1 - 1e-12)]
        return cls(tuple(e), floor)

    @property
    def m(self) -> int:
        return len(self.eps)

    @property
    def total(self) -> float:
        return float(sum(self.eps))

    def cost_class(self, c: np.ndarray) -> np.ndarray:
        """0 for free (exact) jumps, k for the tightest budget eps_k >= c, m+1 if none fits."""
        c = np.asarray(c, dtype=float)
        neg = -np.asarray(self.eps)  # ascending
        k = np.searchsorted(neg, -c * (1 - 1e-12), side="right")
        k = np.where(k == 0, self.m + 1, k)
        return np.where(c <= EXACT_TOL, 0, k).astype(np.int64)

    def to_dict(self) -> dict:
        return {"eps": list(self.eps), "floor": self.floor}


# ---------------------------------------------------------------------------
# launch graph


@dataclass(frozen=True, eq=False)
class SigmaGraph:
    """Edges i -> j with the cheapest cost d(f^t(p_i), p_j) over 1 <= t <= horizon.

    ``steps`` holds the argmin t.  With ``horizon == 1`` (finite systems, or
    free orbits switched off) this is the plain jump graph.
    """

    system: SampledSystem
    eps_max: float
    horizon: int
    cost: sparse.csr_matrix  # zero costs stored as exact 0 via the ``free`` mask
    steps: sparse.csr_matrix
    free: np.ndarray  # boolean per stored entry of ``cost`` (same order)

    @property
    def n(self) -> int:
        return self.system.n

    def triples(self):
        c = self.cost.tocoo()
        t = self.steps.tocoo()
        data = np.where(self.free, 0.0, c.data)
        return c.row.astype(np.int64), c.col.astype(np.int64), data, t.data.astype(np.int64)


def _reduce(rows, cols, cost, steps, n):
    """Keep the cheapest (earliest on ties) entry per (row, col)."""
    key = rows * n + cols
    order = np.argsort(key, kind="stable")
    key, cost, steps = key[order], cost[order], steps[order]
    if not len(key):
        return key, key, cost, steps
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    grp = np.repeat(np.arange(len(starts)), np.diff(np.r_[starts, len(key)]))
    hit = np.flatnonzero(cost == np.minimum.reduceat(cost, starts)[grp])
    g = grp[hit]
    pick = hit[np.r_[True, g[1:] != g[:-1]]]
    key, cost, steps = key[pick], cost[pick], steps[pick]
    return key // n, key % n, cost, steps


def build_sigma_graph(
    system: SampledSystem, eps_max: float, horizon: int | None = None, free_orbit: bool = True
) -> SigmaGraph:
    if not eps_max > 0:
        raise ArgumentError("eps_max must be positive")
    if horizon is None:
        horizon = int(system.defaults.get("horizon", 256))
    if system.finite or not free_orbit:
        horizon = 1
    n = system.n
    index = system.index()
    z = np.array(system.images, dtype=float)
    alive = np.arange(n)
    acc = [(np.zeros(0, np.int64),) * 2 + (np.zeros(0), np.zeros(0, np.int64))]
    pending = reduced = 0
    for t in range(1, horizon + 1):
        r, c, d = index.ball_pairs_fast(z, eps_max, k=24)
        acc.append((alive[r], c.astype(np.int64), d, np.full(len(r), t, dtype=np.int64)))
        pending += len(r)
        if pending > max(4_000_000, 2 * reduced):
            acc = [_reduce(*map(np.concatenate, zip(*acc)), n)]
            pending = reduced = len(acc[0][0])
        if t == horizon:
            break
        nz = system.apply(z)
        # orbits that stopped moving add nothing new
        moving = system.metric.pairwise(nz, z) > 1e-15
        z, alive = nz[moving], alive[moving]
        if not len(alive):
            break
    rows, cols, cost, steps = _reduce(*map(np.concatenate, zip(*acc)), n)
    free = cost <= EXACT_TOL
    stored = np.where(free, 1e-300, cost)
    cm = sparse.csr_matrix((stored, (rows, cols)), shape=(n, n))
    sm = sparse.csr_matrix((steps.astype(float), (rows, cols)), shape=(n, n))
    # csr construction from sorted unique (row, col) keeps the order
    free_sorted = cm.data <= 1e-300
    return SigmaGraph(system, float(eps_max), int(horizon), cm, sm, free_sorted)


def _graph_for(system, budgets, graph, free_orbit):
    if graph is None:
        graph = build_sigma_graph(system, budgets.eps[0], free_orbit=free_orbit)
    elif graph.eps_max < budgets.eps[0] * (1 - 1e-12):
        raise ArgumentError("graph cutoff is below the first budget")
    return graph


def _hall_push(prefix: tuple, k: int) -> tuple | None:
    """Prefix counts after one more jump of class k, or None if infeasible."""
    out = list(prefix)
    for t in range(k - 1, len(out)):
        out[t] += 1
        if out[t] > t + 1:
            return None
    return tuple(out)


def _assign_budgets(classes: list[int]) -> list[int]:
    """Budget index (1-based) per budgeted jump: rank in ascending class order."""
    order = sorted(range(len(classes)), key=lambda i: (classes[i], i))
    out = [0] * len(classes)
    for rank, i in enumerate(order, start=1):
        out[i] = rank
    return out


def sigma_chain_feasible(
    system: SampledSystem,
    budgets: BudgetSequence,
    x: int,
    y: int,
    graph: SigmaGraph | None = None,
    free_orbit: bool = True,
):
    """Is there a budgeted chain from x to y?  Returns (ok, witness).

    The witness is a list of steps ``{"node", "cost", "budget", "orbit_steps"}``
    where ``budget`` is the 1-based budget index or "free".
    """
    if not isinstance(budgets, BudgetSequence):
        budgets = BudgetSequence(tuple(budgets))
    n = system.n
    if not (0 <= x < n and 0 <= y < n):
        raise ArgumentError("index out of range")
    g = _graph_for(system, budgets, graph, free_orbit)
    rows, cols, cost, steps = g.triples()
    cls = budgets.cost_class(cost)
    indptr = np.searchsorted(rows, np.arange(n + 1))
    m = budgets.m
    start = (int(x), (0,) * m)
    parent: dict = {}
    front: dict[int, list[tuple]] = {}
    queue = deque([start])
    nstates = 0
    goal = None
    while queue and goal is None:
        u, pref = queue.popleft()
        for e in range(indptr[u], indptr[u + 1]):
            k = int(cls[e])
            if k > m:
                continue
            npref = pref if k == 0 else _hall_push(pref, k)
            if npref is None:
                continue
            v = int(cols[e])
            kept = front.setdefault(v, [])
            if any(all(a <= b for a, b in zip(old, npref)) for old in kept):
                continue
            kept[:] = [old for old in kept if not all(a <= b for a, b in zip(npref, old))]
            kept.append(npref)
            state = (v, npref)
            parent[state] = ((u, pref), e)
            nstates += 1
            if nstates > STATE_CAP:
                raise StateOverflowError(f"more than {STATE_CAP} search states")
            if v == y:
                goal = state
                break
            queue.append(state)
    if goal is None:
        return False, []
    path = []
    s = goal
    while True:
        prev, e = parent[s]
        path.append(e)
        if prev == start:
            break
        s = prev
    path.reverse()
    jump_cls = [int(cls[e]) for e in path if cls[e] > 0]
    assigned = iter(_assign_budgets(jump_cls))
    witness = [{"node": int(x), "cost": 0.0, "budget": "start", "orbit_steps": 0}]
    for e in path:
        witness.append(
            {
                "node": int(cols[e]),
                "cost": float(cost[e]),
                "budget": next(assigned) if cls[e] > 0 else "free",
                "orbit_steps": int(steps[e]),
            }
        )
    return True, witness


def witness_jsonl(witness: list[dict]) -> str:
    return "\n".join(json.dumps(w, sort_keys=True, separators=(",", ":")) for w in witness)


# ---------------------------------------------------------------------------
# all-pairs relation, one strongly connected piece at a time


def _closure(z: sparse.csr_matrix) -> sparse.csr_matrix:
    """Reflexive-transitive closure of a sparse boolean matrix."""
    n = z.shape[0]
    out = sparse.identity(n, dtype=np.float32, format="csr")
    if z.nnz == 0:
        return out
    d = csgraph.shortest_path(z, directed=True, unweighted=True,
                              indices=np.unique(z.tocoo().row))
    rows = np.unique(z.tocoo().row)
    rr, cc = np.nonzero(np.isfinite(d))
    reach = sparse.csr_matrix((np.ones(len(rr), np.float32), (rows[rr], cc)), shape=(n, n))
    return _bool(out + reach)


def _bool(a: sparse.spmatrix) -> sparse.csr_matrix:
    a = sparse.csr_matrix(a)
    a.data = np.ones_like(a.data, dtype=np.float32)
    a.eliminate_zeros()
    return a


def _piece_relation(idx, rows, cols, cls, m, n_total, sources=None, diag_only=False):
    """Budgeted-chain reachability (length >= 1) inside one piece.

    Rows are ``sources`` (local positions, default all).  With ``diag_only``
    only the source-to-itself entries are returned, as a boolean vector.
    """
    size = len(idx)
    local = np.full(n_total, -1, dtype=np.int64)
    local[idx] = np.arange(size)
    sel = (local[rows] >= 0) & (local[cols] >= 0) & (cls <= m)
    r, c, k = local[rows[sel]], local[cols[sel]], cls[sel]

    def mat(mask):
        return sparse.csr_matrix((np.ones(int(mask.sum()), np.float32), (r[mask], c[mask])), shape=(size, size))

    zero = mat(k == 0)
    zs = _closure(zero)
    steps = {j: _bool(mat(k == j) @ zs) for j in range(1, m + 1) if (k == j).any()}
    src = np.arange(size) if sources is None else np.asarray(sources, dtype=np.int64)
    pick = sparse.csr_matrix((np.ones(len(src), np.float32), (np.arange(len(src)), src)), shape=(len(src), size))
    start = _bool(pick @ zs)
    cols_src = {j: b[:, src].T.tocsr() for j, b in steps.items()}

    def diag_of(a: sparse.csr_matrix, b_t: sparse.csr_matrix) -> np.ndarray:
        return np.asarray(a.multiply(b_t).sum(axis=1)).ravel() > 0

    if diag_only:
        out = np.zeros(len(src), dtype=bool)
        if zero.nnz:
            out |= diag_of(_bool(pick @ zero), zs[:, src].T.tocsr())
    else:
        out = _bool(pick @ zero @ zs) if zero.nnz else sparse.csr_matrix((len(src), size), dtype=np.float32)
    level = {(0,) * m: start}
    states = 0
    while level:
        nxt: dict = {}
        for pref, reach in level.items():
            for j in steps:
                npref = _hall_push(pref, j)
                if npref is None:
                    continue
                final = all(_hall_push(npref, i) is None for i in steps)
                if diag_only:
                    out |= diag_of(reach, cols_src[j])
                    if final:
                        continue
                step = reach @ steps[j]
                if not diag_only:
                    out = out + step
                if not final:
                    nxt[npref] = step if npref not in nxt else nxt[npref] + step
        level = {}
        for pref, reach in nxt.items():
            reach = _bool(reach)
            if reach.nnz:
                level[pref] = reach
                states += int(np.count_nonzero(np.diff(reach.indptr)))
                if states > STATE_CAP:
                    raise StateOverflowError(f"more than {STATE_CAP} search states")
    return out if diag_only else _bool(out)


def _pieces(g: SigmaGraph, budgets: BudgetSequence):
    rows, cols, cost, _ = g.triples()
    cls = budgets.cost_class(cost)
    ok = cls <= budgets.m
    adj = sparse.csr_matrix((np.ones(int(ok.sum()), np.int8), (rows[ok], cols[ok])), shape=(g.n, g.n))
    ncomp, lab = csgraph.connected_components(adj, directed=True, connection="strong")
    sizes = np.bincount(lab, minlength=ncomp)
    loops = np.zeros(ncomp, dtype=bool)
    diag = rows[ok] == cols[ok]
    loops[lab[rows[ok][diag]]] = True
    out = []
    for comp in np.flatnonzero((sizes > 1) | loops):
        out.append(np.flatnonzero(lab == comp))
    return out, rows, cols, cls


def sigma_relation(
    system: SampledSystem, budgets: BudgetSequence, graph: SigmaGraph | None = None,
    free_orbit: bool = True, restrict_to: np.ndarray | None = None,
):
    """[(indices, relation)] per recurrent piece of the budget graph.

    ``relation`` is a dense boolean matrix over ``indices``; with
    ``restrict_to`` (a boolean node mask) only those nodes are kept.
    """
    g = _graph_for(system, budgets, graph, free_orbit)
    pieces, rows, cols, cls = _pieces(g, budgets)
    out = []
    for idx in pieces:
        keep = np.ones(len(idx), dtype=bool) if restrict_to is None else np.asarray(restrict_to)[idx]
        if not keep.any():
            continue
        loc = np.flatnonzero(keep)
        rel = _piece_relation(idx, rows, cols, cls, budgets.m, g.n, sources=loc)
        out.append((idx[loc], rel[:, loc].toarray() > 0))
    return out


def gr_estimate_sigma(
    system: SampledSystem, budgets: BudgetSequence, graph: SigmaGraph | None = None, free_orbit: bool = True
) -> RegionMask:
    """Nodes with a budgeted chain back to themselves."""
    g = _graph_for(system, budgets, graph, free_orbit)
    pieces, rows, cols, cls = _pieces(g, budgets)
    members = np.zeros(system.n, dtype=bool)
    for idx in pieces:
        members[idx[_piece_relation(idx, rows, cols, cls, budgets.m, g.n, diag_only=True)]] = True
    return RegionMask(system, members, "GR", {"budgets": budgets.to_dict(), "free_orbit": free_orbit})


def budget_schedule(system: SampledSystem, eps1: float | None = None, rho: float | None = None,
                    m: int | None = None, floor: float | None = None) -> list[BudgetSequence]:
    """Shrinking first budgets eps1, eps1*rho, ... down to the floor, floor last."""
    d = system.defaults
    eps1 = float(d["eps1"] if eps1 is None else eps1)
    rho = float(d["rho"] if rho is None else rho)
    m = int(d["m"] if m is None else m)
    floor = float(d["budget_floor"] if floor is None else floor)
    cut = min(system.eta / 2, floor)
    out = []
    e = eps1
    while e >= floor * (1 - 1e-12):
        out.append(BudgetSequence.geometric(e, rho, m, cut))
        e *= rho
    if not out or out[-1].eps[0] > floor * (1 + 1e-12):
        out.append(BudgetSequence.geometric(max(floor, cut), rho, m, cut))
    return out


def gr_estimate(system: SampledSystem, schedule: list[BudgetSequence] | None = None,
                free_orbit: bool = True, all_levels: bool = False) -> RegionMask:
    """Intersection of the budgeted estimates over a shrinking schedule.

    Shrinking every budget can only remove chains, so the last level decides;
    earlier levels are evaluated only when ``all_levels`` is set.
    """
    if schedule is None:
        schedule = budget_schedule(system)
    levels = schedule if all_levels else schedule[-1:]
    members = np.ones(system.n, dtype=bool)
    sizes = []
    for b in levels:
        mask = gr_estimate_sigma(system, b, free_orbit=free_orbit)
        members &= mask.members
        sizes.append(len(mask))
    params = {"schedule": [b.to_dict() for b in schedule], "level_sizes": sizes, "free_orbit": free_orbit}
    return RegionMask(system, members, "GR", params)


def gr_classes(system: SampledSystem, budgets: BudgetSequence | None, mask: RegionMask,
               graph: SigmaGraph | None = None, free_orbit: bool = True) -> EquivalenceDecomposition:
    """Strong components of the budgeted-chain relation among mask nodes.

    ``budgets=None`` uses the last level of the default schedule.
    """
    if budgets is None:
        budgets = budget_schedule(system)[-1]
    inside = np.asarray(mask.members, dtype=bool)
    covered = np.zeros(system.n, dtype=bool)
    classes = []
    for nodes, sub in sigma_relation(system, budgets, graph, free_orbit, restrict_to=inside):
        ncomp, lab = csgraph.connected_components(sparse.csr_matrix(sub.astype(np.int8)), directed=True,
                                                  connection="strong")
        for c in range(ncomp):
            classes.append(nodes[lab == c])
        covered[nodes] = True
    for i in np.flatnonzero(inside & ~covered):
        classes.append(np.array([i]))
    return EquivalenceDecomposition(system, tuple(classes), "sigma", {"budgets": budgets.to_dict()})


# ---------------------------------------------------------------------------
# Lyapunov fields and metric reweighting


@dataclass(frozen=True, eq=False)
class LyapunovField:
    system: SampledSystem
    theta: np.ndarray
    anchors: np.ndarray
    kappa: float
    metric_kind: str
    viol: float  # max_i theta(f_hat(i)) - theta(i)
    params: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {
            "kind": "lyapunov",
            "anchors": int(len(self.anchors)),
            "kappa": float(self.kappa),
            "metric": self.metric_kind,
            "viol": float(self.viol),
            "range": [float(self.theta.min()), float(self.theta.max())],
        }


def default_anchors(n: int, limit: int = 512) -> np.ndarray:
    stride = max(1, int(np.ceil(n / limit)))
    return np.arange(0, n, stride)


def synthesize_lyapunov(bm: BarrierMatrix, anchors=None, kappa: float = 0.25) -> LyapunovField:
    """theta(p) = mean over anchors z of min(L(z, p), kappa)."""
    if bm.mode != "free-orbit":
        raise ArgumentError("Lyapunov synthesis needs a free-orbit barrier")
    if not kappa > 0:
        raise ArgumentError("kappa must be positive")
    s = bm.system
    anchors = bm.sources if anchors is None else np.unique(np.asarray(anchors, dtype=np.int64))
    if len(anchors) == 0:
        raise ArgumentError("anchor set is empty")
    if anchors.min() < 0 or anchors.max() >= s.n:
        raise ArgumentError("anchor outside the grid")
    theta = np.zeros(s.n)
    for z in anchors:
        theta += np.minimum(bm.row(int(z)), kappa)
    theta /= len(anchors)
    viol = float(np.max(theta[s.snap] - theta))
    return LyapunovField(s, theta, anchors, float(kappa), s.metric.kind, max(viol, 0.0))


def neutral_set(system: SampledSystem, field_: LyapunovField, tol: float) -> RegionMask:
    if tol < field_.viol - 1e-15:
        raise ArgumentError("tol must be at least the field's violation")
    th = field_.theta
    members = th - th[system.snap] <= tol
    return RegionMask(system, members, "neutral", {"tol": float(tol)})


def reweight_metric(metric: MetricModel, field_: LyapunovField, lam: float = 1.0) -> MetricModel:
    """base + lam * |theta(u) - theta(v)|."""
    if not lam > 0:
        raise ArgumentError("lambda must be positive")
    pts = np.array(field_.system.points, dtype=float)
    return MetricModel(
        "lyapunov", metric.chart, base=metric, lam=float(lam),
        theta_points=pts, theta_values=np.array(field_.theta, dtype=float),
    )


def with_metric(system: SampledSystem, metric: MetricModel) -> SampledSystem:
    """Same grid and exact images, snapped under another metric."""
    from chainrec.systems import _make

    return _make(system.spec, system.grid, metric, np.array(system.images), system.fmap,
                 dict(system.defaults), k=system.k)


@dataclass
class ReweightResult:
    mask: RegionMask
    field: LyapunovField
    metrics: list
    sizes: list
    stable: bool


def gr_estimate_reweight(
    system: SampledSystem,
    iterations: int = 5,
    tol: float | None = None,
    kappa: float = 0.25,
    anchors=None,
    eps_max: float | None = None,
    lam: float = 1.0,
) -> ReweightResult:
    """Repeated SCR under metrics d_t = d_{t-1} + |theta_t(u) - theta_t(v)|.

    Returns the intersection of the per-round masks, the last field and every
    metric used (the original first).
    """
    if iterations < 1:
        raise ArgumentError("iterations must be >= 1")
    if tol is None:
        tol = float(system.defaults["tol"])
    if eps_max is None:
        eps_max = max(tol, 4 * system.eta)
    anchors = default_anchors(system.n) if anchors is None else np.asarray(anchors, dtype=np.int64)
    metric = system.metric
    metrics = [metric]
    inter = np.ones(system.n, dtype=bool)
    sizes = []
    prev = None
    fld = None
    stable = False
    for _ in range(iterations):
        cur = system if metric is system.metric else with_metric(system, metric)
        g = build_jump_graph(cur, eps_max)
        bm = barrier(g, "free-orbit", sources=anchors)
        s_t = strong_chain_recurrent_set(bm, tol).members
        inter &= s_t
        sizes.append(int(s_t.sum()))
        fld = synthesize_lyapunov(bm, anchors, kappa)
        if prev is not None and np.array_equal(prev, s_t):
            stable = True
            break
        prev = s_t
        metric = reweight_metric(metric, fld, lam)
        metrics.append(metric)
    mask = RegionMask(system, inter, "GR-reweight", {"tol": tol, "kappa": kappa, "sizes": sizes})
    return ReweightResult(mask, fld, metrics, sizes, stable)
