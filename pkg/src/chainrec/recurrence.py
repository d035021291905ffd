"""Chain recurrent and strong chain recurrent sets at grid scale."""
from __future__ import annotations

import numpy as np
from scipy.sparse import csgraph

from chainrec.errors import ArgumentError
from chainrec.jumpgraph import BarrierMatrix, JumpGraph, scc_decomposition
from chainrec.masks import EquivalenceDecomposition, RegionMask

__all__ = [
    "RegionMask",
    "EquivalenceDecomposition",
    "chain_recurrent_set",
    "strong_chain_recurrent_set",
    "chain_components",
    "mather_classes",
    "chain_time",
]


def chain_recurrent_set(graph: JumpGraph, eps: float) -> RegionMask:
    """Nodes on a cycle of the eps-subgraph."""
    dec = scc_decomposition(graph, eps)
    m = np.zeros(graph.n, dtype=bool)
    for c, rec in zip(dec.classes, dec.recurrent):
        if rec:
            m[c] = True
    return RegionMask(graph.system, m, "CR", {"eps": float(eps)})


def chain_components(graph: JumpGraph, eps: float) -> EquivalenceDecomposition:
    """Recurrent SCCs of the eps-subgraph."""
    dec = scc_decomposition(graph, eps)
    keep = [c for c, rec in zip(dec.classes, dec.recurrent) if rec]
    return EquivalenceDecomposition(graph.system, tuple(keep), "chain", {"eps": float(eps)})


def strong_chain_recurrent_set(bm: BarrierMatrix, tol: float) -> RegionMask:
    """Nodes whose self-return barrier is at most ``tol``."""
    if tol < 0:
        raise ArgumentError("tol must be non-negative")
    m = bm.diag <= tol
    return RegionMask(bm.system, m, "SCR", {"tol": float(tol), "mode": bm.mode})


def mather_classes(bm: BarrierMatrix, tol: float) -> EquivalenceDecomposition:
    """Split the SCR estimate into balls of the two-way barrier.

    rho(x, y) = max(L(x, y), L(y, x)) is symmetric and obeys the triangle
    inequality, so greedy balls of radius ``tol`` (in index order) have
    rho-diameter at most 2 tol.  Chaining ``rho <= tol`` transitively would
    glue a whole fixed arc into one class at any tol above the grid spacing.
    """
    scr = strong_chain_recurrent_set(bm, tol).indices
    if len(scr) == 0:
        return EquivalenceDecomposition(bm.system, (), "mather", {"tol": float(tol)})
    sub = bm.submatrix(scr)
    rho = np.maximum(sub, sub.T)
    free = np.ones(len(scr), dtype=bool)
    classes = []
    for i in range(len(scr)):
        if not free[i]:
            continue
        ball = free & (rho[i] <= tol)
        ball[i] = True
        free &= ~ball
        classes.append(scr[ball])
    return EquivalenceDecomposition(bm.system, tuple(classes), "mather", {"tol": float(tol)})


def chain_time(graph: JumpGraph, eps: float, x: int, y: int) -> float:
    """Fewest jumps of an eps-chain from x to y (length >= 1), inf if none."""
    n = graph.n
    if not (0 <= x < n and 0 <= y < n):
        raise ArgumentError("index out of range")
    adj = graph.subgraph(eps)
    # distances from the successors of x, plus the first step
    succ = adj.indices[adj.indptr[x] : adj.indptr[x + 1]]
    if len(succ) == 0:
        return float("inf")
    d = csgraph.shortest_path(adj, directed=True, unweighted=True, indices=succ)
    best = float(np.min(d[:, y]))
    return best + 1.0 if np.isfinite(best) else float("inf")
