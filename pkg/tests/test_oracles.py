"""Package results against brute-force references on small random systems."""
import numpy as np
import pytest

from chainrec.generalized import BudgetSequence, sigma_chain_feasible
from chainrec.jumpgraph import barrier, build_jump_graph, scc_decomposition
from oracles import barrier_oracle, random_table_system, scc_oracle, sigma_dfs_oracle, sigma_oracle

SEEDS = range(30)


def _sys(seed, tmp_path, chart="interval"):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 13))
    return rng, random_table_system(rng, n, tmp_path / f"t{seed}.csv", chart=chart)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("mode", ["free-orbit", "exact"])
def test_barrier_matches_enumeration(seed, mode, tmp_path):
    rng, s = _sys(seed, tmp_path, "circle" if seed % 3 == 0 else "interval")
    eps_max = float(rng.uniform(0.05, 0.6))
    bm = barrier(build_jump_graph(s, eps_max), mode, horizon=5.0)
    ref = barrier_oracle(s, eps_max, mode, horizon=5.0)
    got = bm.matrix()
    assert np.array_equal(np.isinf(got), np.isinf(ref))
    fin = np.isfinite(ref)
    assert np.allclose(got[fin], ref[fin], rtol=0, atol=1e-12)
    assert np.allclose(bm.diag[np.isfinite(bm.diag)], ref.diagonal()[np.isfinite(bm.diag)], atol=1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_scc_matches_closure(seed, tmp_path):
    rng, s = _sys(seed, tmp_path)
    eps = float(rng.uniform(0.02, 0.4))
    dec = scc_decomposition(build_jump_graph(s, eps), eps)
    classes, rec = scc_oracle(s, eps)
    assert {frozenset(c.tolist()) for c in dec.classes} == classes
    flags = np.zeros(s.n, dtype=bool)
    for c, r in zip(dec.classes, dec.recurrent):
        flags[c] = r
    assert np.array_equal(flags, rec)


@pytest.mark.parametrize("seed", SEEDS)
def test_sigma_matches_assignment_search(seed, tmp_path):
    rng, s = _sys(seed, tmp_path)
    m = int(rng.integers(1, 5))
    eps = sorted(rng.uniform(0.01, 0.3, size=m), reverse=True)
    budgets = BudgetSequence(tuple(eps))
    for x in range(s.n):
        for y in range(s.n):
            ok, wit = sigma_chain_feasible(s, budgets, x, y)
            assert ok == sigma_oracle(s, eps, x, y), (x, y)
            if ok:
                assert wit[0]["node"] == x and wit[-1]["node"] == y
                used = [w["budget"] for w in wit[1:] if w["budget"] != "free"]
                assert len(set(used)) == len(used)
                for w in wit[1:]:
                    if w["budget"] != "free":
                        assert w["cost"] <= eps[w["budget"] - 1] * (1 + 1e-12)


@pytest.mark.parametrize("seed", range(12))
def test_sigma_matches_path_enumeration(seed, tmp_path):
    rng = np.random.default_rng(1000 + seed)
    s = random_table_system(rng, int(rng.integers(3, 7)), tmp_path / "p.csv")
    m = int(rng.integers(1, 5))
    eps = sorted(rng.uniform(0.02, 0.4, size=m), reverse=True)
    budgets = BudgetSequence(tuple(eps))
    for x in range(s.n):
        for y in range(s.n):
            assert sigma_chain_feasible(s, budgets, x, y)[0] == sigma_dfs_oracle(s, eps, x, y, max_len=8)
