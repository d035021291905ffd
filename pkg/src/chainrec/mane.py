"""Mañé set estimators: the fixed-set formula and the 3^n chain certificate."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from chainrec.errors import ArgumentError
from chainrec.jumpgraph import JumpGraph, build_jump_graph
from chainrec.masks import RegionMask, dilate
from chainrec.systems import SampledSystem

__all__ = [
    "fixed_points",
    "fix_interior",
    "mane_fix_formula",
    "mane_chain_certificate",
    "certificate_bits",
    "mane_estimate",
    "ManeEstimate",
    "injectivity",
]


def fixed_points(system: SampledSystem, tol: float | None = None) -> RegionMask:
    """Nodes moved by at most ``tol`` (default 2 eta)."""
    if tol is None:
        tol = float(system.defaults.get("fix_tol", 2.0 * system.eta))
    if tol < system.eta * (1 - 1e-12):
        raise ArgumentError("fixed-point tolerance must be at least eta")
    moved = system.metric.pairwise(system.images, system.points)
    return RegionMask(system, moved <= tol, "Fix", {"tol": float(tol)})


def fix_interior(system: SampledSystem, fixed: np.ndarray, radius: float | None = None) -> np.ndarray:
    """Fixed nodes all of whose neighbours within ``radius`` (2 eta) are fixed."""
    fixed = np.asarray(fixed, dtype=bool)
    if radius is None:
        radius = 2.0 * system.eta
    rows, cols, _ = system.index().ball_pairs(np.asarray(system.points), radius)
    bad = np.zeros(system.n, dtype=bool)
    np.logical_or.at(bad, rows, ~fixed[cols])
    return fixed & ~bad


def injectivity(system: SampledSystem) -> float:
    """Share of nodes whose exact image no other node shares (to 1e-12)."""
    key = np.round(np.asarray(system.images, dtype=float) / 1e-12).astype(np.int64)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return float(np.mean(counts[inv.ravel()] == 1))


def mane_fix_formula(
    system: SampledSystem,
    eps: float | None = None,
    tol: float | None = None,
    graph: JumpGraph | None = None,
) -> RegionMask:
    """Fix union the chain recurrent set of the map restricted off Int(Fix)."""
    if eps is None:
        eps = float(system.defaults["eps"])
    fix = fixed_points(system, tol)
    interior = fix_interior(system, fix.members)
    if graph is None or graph.eps_max < eps:
        graph = build_jump_graph(system, eps)
    keep = ~interior
    adj = graph.subgraph(eps)
    sub = adj[keep][:, keep]
    idx = np.flatnonzero(keep)
    ncomp, lab = csgraph.connected_components(sub, directed=True, connection="strong")
    sizes = np.bincount(lab, minlength=ncomp)
    loops = np.zeros(ncomp, dtype=bool)
    loops[lab[sub.diagonal() > 0]] = True
    cr = np.zeros(system.n, dtype=bool)
    cr[idx[((sizes > 1) | loops)[lab]]] = True
    share = injectivity(system)
    params = {"eps": float(eps), "fix_tol": fix.params["tol"], "injective_share": share,
              "fix_size": len(fix), "interior_size": int(interior.sum())}
    if share < 0.95:
        params["warning"] = "snapped map is far from injective; formula assumes a homeomorphism"
        warnings.warn(params["warning"], RuntimeWarning, stacklevel=2)
    return RegionMask(system, fix.members | cr, "Mane", params)


def _cert_levels(system: SampledSystem, eps: float, n_max: int) -> list[int]:
    return [n for n in range(1, n_max + 1) if eps * 3.0**-n >= system.eta / 2 * (1 - 1e-12)]


def _sub(system: SampledSystem, graph: JumpGraph | None, eps: float):
    if graph is None or graph.eps_max < eps:
        graph = build_jump_graph(system, eps)
    return graph, graph.subgraph(eps)


def mane_chain_certificate(
    system: SampledSystem, eps: float, n_max: int, x: int, graph: JumpGraph | None = None
) -> tuple[bool, int | None]:
    """A cycle through x of length exactly n in the eps/3^n subgraph, some n <= n_max."""
    if n_max < 1:
        raise ArgumentError("n_max must be >= 1")
    if not 0 <= x < system.n:
        raise ArgumentError("index out of range")
    levels = _cert_levels(system, eps, n_max)
    if not levels:
        return False, None
    graph, _ = _sub(system, graph, eps / 3.0)
    for n in levels:
        a = graph.subgraph(eps * 3.0**-n)
        v = np.zeros(system.n, dtype=bool)
        v[x] = True
        for _ in range(n):
            v = (a.T @ v.astype(np.int8)) > 0
            if not v.any():
                break
        if v[x]:
            return True, n
    return False, None


def certificate_bits(system: SampledSystem, eps: float, n_max: int, graph: JumpGraph | None = None):
    """Per node: smallest certifying n, or 0 when none."""
    if n_max < 1:
        raise ArgumentError("n_max must be >= 1")
    out = np.zeros(system.n, dtype=np.int64)
    levels = _cert_levels(system, eps, n_max)
    if not levels:
        return out
    graph, _ = _sub(system, graph, eps / 3.0)
    for n in levels:
        a = graph.subgraph(eps * 3.0**-n).astype(np.float32)
        p = sparse.identity(system.n, dtype=np.float32, format="csr")
        for _ in range(n - 1):
            p = p @ a
            p.data[:] = 1.0
        diag = np.asarray(p.multiply(a.T).sum(axis=1)).ravel() > 0
        out[(out == 0) & diag] = n
    return out


@dataclass
class ManeEstimate:
    mask: RegionMask
    certified: np.ndarray  # smallest certifying n per node, 0 if none
    inconsistent: np.ndarray  # certified nodes outside the dilated formula mask


def mane_estimate(
    system: SampledSystem,
    eps: float | None = None,
    n_max: int | None = None,
    tol: float | None = None,
    cert_eps: float | None = None,
) -> ManeEstimate:
    if n_max is None:
        n_max = int(system.defaults["n_max"])
    mask = mane_fix_formula(system, eps, tol)
    if cert_eps is None:
        cert_eps = max(float(system.defaults["eps1"]), 3.0 * system.eta)
    bits = certificate_bits(system, cert_eps, n_max)
    bad = np.flatnonzero((bits > 0) & ~dilate(system, mask.members))
    mask = RegionMask(system, mask.members, "Mane", {**mask.params, "cert_eps": cert_eps, "n_max": n_max,
                                                     "certified": int((bits > 0).sum()),
                                                     "inconsistent": int(len(bad))})
    return ManeEstimate(mask, bits, bad)
