"""The jump graph c(i, j) = d(f(p_i), p_j) and queries on it."""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from chainrec.errors import ArgumentError, CutoffTooLargeError
from chainrec.masks import EquivalenceDecomposition
from chainrec.systems import SampledSystem

__all__ = [
    "JumpGraph",
    "BarrierMatrix",
    "build_jump_graph",
    "scc_decomposition",
    "barrier",
    "free_reach",
    "write_barrier_cache",
    "read_barrier_cache",
    "barrier_cache_key",
    "EDGE_CAP",
]

EDGE_CAP = 50_000_000
# scipy's shortest-path routines drop stored zeros, so cost-0 edges carry this
_ZERO = 1e-300
_CACHE_MAGIC = b"RBAR1"
_MODES = {"exact": 0, "free-orbit": 1}


@dataclass(frozen=True, eq=False)
class JumpGraph:
    """Edges with c(i, j) <= eps_max plus every orbit edge i -> f_hat(i)."""

    system: SampledSystem
    eps_max: float
    matrix: sparse.csr_matrix  # jump costs, explicit entries only (zeros encoded)
    free: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.system.n

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, cost) of stored jump edges, sorted by (i, j)."""
        coo = self.matrix.tocoo()
        cost = np.where(coo.data <= _ZERO, 0.0, coo.data)
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order].astype(np.int64), coo.col[order].astype(np.int64), cost[order]

    def subgraph(self, eps: float) -> sparse.csr_matrix:
        """Boolean adjacency of jump edges with cost <= eps."""
        key = ("sub", float(eps))
        hit = self._cache.get(key)
        if hit is None:
            m = self.matrix.copy()
            m.data = (m.data <= eps).astype(np.int8)
            m.eliminate_zeros()
            hit = m.tocsr()
            self._cache[key] = hit
        return hit

    def weights(self, mode: str) -> sparse.csr_matrix:
        """Edge weights for barrier computation in ``mode``."""
        if mode not in _MODES:
            raise ArgumentError(f"unknown barrier mode {mode!r}")
        key = ("w", mode)
        hit = self._cache.get(key)
        if hit is None:
            s = self.system
            orbit_cost = np.zeros(s.n) if mode == "free-orbit" else np.asarray(s.snap_cost)
            orbit = sparse.csr_matrix(
                (np.maximum(orbit_cost, _ZERO), (np.arange(s.n), np.asarray(s.snap))), shape=(s.n, s.n)
            )
            m = _min_merge(self.matrix, orbit)
            self._cache[key] = m
            hit = m
        return hit


def _min_merge(a: sparse.csr_matrix, b: sparse.csr_matrix) -> sparse.csr_matrix:
    """Entrywise minimum over the union of stored entries."""
    ca, cb = a.tocoo(), b.tocoo()
    rows = np.concatenate([ca.row, cb.row])
    cols = np.concatenate([ca.col, cb.col])
    vals = np.concatenate([ca.data, cb.data])
    n = a.shape[0]
    key = rows.astype(np.int64) * n + cols
    order = np.lexsort((vals, key))
    key, vals = key[order], vals[order]
    first = np.ones(len(key), dtype=bool)
    first[1:] = key[1:] != key[:-1]
    key, vals = key[first], vals[first]
    return sparse.csr_matrix((vals, (key // n, key % n)), shape=(n, n))


def build_jump_graph(system: SampledSystem, eps_max: float, edge_cap: int = EDGE_CAP) -> JumpGraph:
    if not eps_max > 0:
        raise ArgumentError("eps_max must be positive")
    index = system.index()
    # cheap size estimate from a sample of rows
    n = system.n
    probe = np.linspace(0, n - 1, num=min(n, 64)).astype(np.int64)
    r, _, _ = index.ball_pairs(system.images[probe], eps_max)
    if len(r) / max(len(probe), 1) * n > edge_cap:
        raise CutoffTooLargeError(f"eps_max={eps_max} would store about {len(r) / len(probe) * n:.3g} edges")
    rows, cols, cost = index.ball_pairs(system.images, eps_max)
    if len(rows) > edge_cap:
        raise CutoffTooLargeError(f"eps_max={eps_max} stores {len(rows)} edges, over the cap")
    m = sparse.csr_matrix((np.maximum(cost, _ZERO), (rows, cols)), shape=(n, n))
    m.sum_duplicates()
    return JumpGraph(system=system, eps_max=float(eps_max), matrix=m)


# ---------------------------------------------------------------------------
# strongly connected components


def scc_decomposition(graph: JumpGraph, eps: float) -> EquivalenceDecomposition:
    """SCCs of the eps-subgraph; each flagged recurrent if it carries a cycle."""
    if not 0 < eps <= graph.eps_max * (1 + 1e-12):
        raise ArgumentError("need 0 < eps <= eps_max")
    adj = graph.subgraph(eps)
    ncomp, lab = csgraph.connected_components(adj, directed=True, connection="strong")
    classes = _group(lab, ncomp)
    sizes = np.bincount(lab, minlength=ncomp)
    self_loop = np.zeros(graph.n, dtype=bool)
    diag = adj.diagonal()
    self_loop[diag > 0] = True
    loop_comp = np.zeros(ncomp, dtype=bool)
    loop_comp[lab[self_loop]] = True
    recurrent = (sizes > 1) | loop_comp
    return EquivalenceDecomposition(
        graph.system, tuple(classes), "scc", {"eps": float(eps)}, recurrent=tuple(recurrent.tolist())
    )


def _group(lab: np.ndarray, ncomp: int) -> list[np.ndarray]:
    order = np.argsort(lab, kind="stable")
    bounds = np.searchsorted(lab[order], np.arange(ncomp + 1))
    return [order[bounds[k] : bounds[k + 1]] for k in range(ncomp)]


# ---------------------------------------------------------------------------
# barrier


@dataclass(frozen=True, eq=False)
class BarrierMatrix:
    """L_hat(i, j) for the listed source rows, plus the full diagonal.

    ``rows`` maps a source index to its row position in ``values``.  Entries
    above ``horizon`` are +inf.
    """

    system: SampledSystem
    mode: str
    horizon: float
    sources: np.ndarray
    values: np.ndarray  # len(sources) x N
    diag: np.ndarray  # length N

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def full(self) -> bool:
        return len(self.sources) == self.n and np.array_equal(self.sources, np.arange(self.n))

    def row(self, i: int) -> np.ndarray:
        pos = np.searchsorted(self.sources, i)
        if pos >= len(self.sources) or self.sources[pos] != i:
            raise ArgumentError(f"row {i} was not computed")
        r = self.values[pos].copy()
        r[i] = self.diag[i]
        return r

    def matrix(self) -> np.ndarray:
        if not self.full:
            raise ArgumentError("barrier holds only some rows")
        m = self.values.copy()
        m[np.arange(self.n), np.arange(self.n)] = self.diag
        return m

    def submatrix(self, idx: np.ndarray) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        pos = np.searchsorted(self.sources, idx)
        if np.any(pos >= len(self.sources)) or np.any(self.sources[np.minimum(pos, len(self.sources) - 1)] != idx):
            raise ArgumentError("barrier is missing some requested rows")
        m = self.values[np.ix_(pos, idx)].copy()
        m[np.arange(len(idx)), np.arange(len(idx))] = self.diag[idx]
        return m


def barrier(
    graph: JumpGraph,
    mode: str = "free-orbit",
    horizon: float | None = None,
    sources: np.ndarray | None = None,
    batch: int = 256,
) -> BarrierMatrix:
    """Min-sum chain costs over paths of length >= 1 (Dijkstra per source).

    Only edges stored in ``graph`` (cost <= eps_max) and orbit edges are used.
    The diagonal is always computed for every node; full rows only for
    ``sources`` (all nodes by default).
    """
    s = graph.system
    if horizon is None:
        horizon = 10.0 * s.metric.diameter()
    w = graph.weights(mode)
    wt = w.T.tocsr()  # row i of wt = in-edges of i
    n = s.n
    src = np.arange(n) if sources is None else np.unique(np.asarray(sources, dtype=np.int64))
    want_rows = np.zeros(n, dtype=bool)
    want_rows[src] = True
    values = np.full((len(src), n), np.inf)
    diag = np.full(n, np.inf)
    pos_of = np.full(n, -1, dtype=np.int64)
    pos_of[src] = np.arange(len(src))
    for start in range(0, n, batch):
        block = np.arange(start, min(n, start + batch))
        dist = csgraph.dijkstra(w, directed=True, indices=block, limit=horizon)
        dist = np.where(dist <= 1e-200, 0.0, dist)  # undo zero encoding
        for r, i in enumerate(block):
            lo, hi = wt.indptr[i], wt.indptr[i + 1]
            preds = wt.indices[lo:hi]
            if len(preds):
                c = np.where(wt.data[lo:hi] <= _ZERO, 0.0, wt.data[lo:hi])
                val = float(np.min(dist[r, preds] + c))
                diag[i] = val if val <= horizon else np.inf
            if want_rows[i]:
                values[pos_of[i]] = dist[r]
    values[values > horizon] = np.inf
    return BarrierMatrix(system=s, mode=mode, horizon=float(horizon), sources=src, values=values, diag=diag)


def free_reach(system: SampledSystem, i: int) -> list[int]:
    """Forward f_hat orbit f_hat(i), f_hat^2(i), ... (tail plus cycle)."""
    seen: dict[int, None] = {}
    j = int(system.snap[i])
    while j not in seen:
        seen[j] = None
        j = int(system.snap[j])
    return list(seen)


# ---------------------------------------------------------------------------
# cache


def barrier_cache_key(system: SampledSystem, mode: str, eps_max: float, horizon: float) -> str:
    payload = json.dumps(
        {
            "spec": system.spec.to_dict(),
            "eta": repr(system.eta),
            "n": system.n,
            "metric": repr((system.metric.kind, system.metric.beta, system.metric.warp_kind)),
            "mode": mode,
            "eps_max": repr(float(eps_max)),
            "horizon": repr(float(horizon)),
            "k": system.k,
        },
        sort_keys=True,
        default=str,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def write_barrier_cache(path: str | Path, bm: BarrierMatrix) -> None:
    m = bm.matrix()
    header = _CACHE_MAGIC + struct.pack("<IB", bm.n, _MODES[bm.mode])
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
    tmp.replace(path)


def read_barrier_cache(path: str | Path, system: SampledSystem, horizon: float) -> BarrierMatrix | None:
    """Load a cached barrier; None when missing, corrupt or mismatched."""
    try:
        raw = Path(path).read_bytes()
    except OSError:
        return None
    head = len(_CACHE_MAGIC) + 5
    if len(raw) < head or raw[: len(_CACHE_MAGIC)] != _CACHE_MAGIC:
        return None
    n, mode_code = struct.unpack("<IB", raw[len(_CACHE_MAGIC) : head])
    modes = {v: k for k, v in _MODES.items()}
    if n != system.n or mode_code not in modes or len(raw) != head + 8 * n * n:
        return None
    m = np.frombuffer(raw, dtype="<f8", offset=head).reshape(n, n).astype(float)
    if np.isnan(m).any() or (m < 0).any():
        return None
    return BarrierMatrix(
        system=system, mode=modes[mode_code], horizon=float(horizon), sources=np.arange(n),
        values=m.copy(), diag=m.diagonal().copy(),
    )
