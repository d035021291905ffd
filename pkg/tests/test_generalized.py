import json

import numpy as np
import pytest

from chainrec.errors import ArgumentError
from chainrec.generalized import (
    BudgetSequence,
    budget_schedule,
    build_sigma_graph,
    gr_classes,
    gr_estimate,
    gr_estimate_reweight,
    gr_estimate_sigma,
    neutral_set,
    reweight_metric,
    sigma_chain_feasible,
    synthesize_lyapunov,
    witness_jsonl,
)
from chainrec.jumpgraph import barrier, build_jump_graph
from chainrec.masks import dilate
from chainrec.recurrence import chain_recurrent_set, strong_chain_recurrent_set
from chainrec.space import in_cantor_set
from chainrec.systems import SystemSpec, instantiate
from conftest import gr, system


def _c1(s):
    x = s.points[:, 0]
    return (x >= 0.25 - 1e-9) & (x <= 0.75 + 1e-9)


def test_budget_validation():
    with pytest.raises(ArgumentError):
        BudgetSequence(())
    with pytest.raises(ArgumentError):
        BudgetSequence((0.1, 0.2))
    with pytest.raises(ArgumentError):
        BudgetSequence((0.1,) * 25)
    b = BudgetSequence.geometric(0.05, 0.5, 4)
    assert b.eps == (0.05, 0.025, 0.0125, 0.00625)
    assert list(b.cost_class(np.array([0.0, 0.05, 0.02, 0.001, 0.06]))) == [0, 1, 2, 4, 5]


def test_fixed_cell_feasible_with_one_free_step():
    s = system("f1")
    ok, wit = sigma_chain_feasible(s, BudgetSequence((1e-6,)), 180, 180)
    assert ok and wit[-1]["budget"] == "free"
    assert all(json.loads(line) for line in witness_jsonl(wit).splitlines())


def test_f1_cannot_return_against_the_flow():
    s = system("f1")
    b = BudgetSequence.geometric(0.05, 0.5, 10)
    assert not sigma_chain_feasible(s, b, 300, 300)[0]


def test_torus_fiber_point_returns():
    s = system("torus_product", 1 / 36)
    x = int(np.flatnonzero(_c1(s))[40])
    ok, wit = sigma_chain_feasible(s, BudgetSequence.geometric(0.1, 0.5, 4), x, x)
    assert ok
    assert sum(w["budget"] not in ("free", "start") for w in wit) >= 1


def test_gr_f1_is_c1():
    s = system("f1")
    assert np.sum(gr("f1").members ^ _c1(s)) <= 4


def test_gr_f2_is_cantor_cells():
    s = system("f2")
    k = in_cantor_set(np.arange(s.n), 7)
    m = gr("f2").members
    assert not (m & ~dilate(s, k)).any()
    assert not (k & ~m).any()


def test_gr_torus_is_fixed_fibers():
    s = system("torus_product", 1 / 36)
    m = gr_estimate(s).members
    assert not (m & ~dilate(s, _c1(s))).any()
    assert not (_c1(s) & ~dilate(s, m)).any()


def test_schedule_last_level_decides():
    s = system("f1")
    sched = budget_schedule(s)
    full = gr_estimate(s, sched, all_levels=True).members
    assert np.array_equal(full, gr_estimate(s, sched).members)
    sizes = gr_estimate(s, sched, all_levels=True).params["level_sizes"]
    assert sizes == sorted(sizes, reverse=True)


def test_gr_inside_cr_and_scr():
    s = system("f1")
    b = BudgetSequence.geometric(0.05, 0.5, 6)
    g = gr_estimate_sigma(s, b).members
    cr = chain_recurrent_set(build_jump_graph(s, 0.05), 0.05).members
    bm = barrier(build_jump_graph(s, b.eps[0]), "free-orbit", sources=np.zeros(0, dtype=np.int64))
    scr = strong_chain_recurrent_set(bm, b.total).members
    assert not (g & ~cr).any()
    assert not (g & ~scr).any()


def test_budget_monotonicity():
    s = instantiate(SystemSpec("f1"), 1 / 72)
    small = BudgetSequence.geometric(0.04, 0.5, 3)
    big = BudgetSequence((0.05, 0.04, 0.02, 0.01, 0.005))
    a = gr_estimate_sigma(s, small).members
    b = gr_estimate_sigma(s, big).members
    assert not (a & ~b).any()


def test_identity_lyapunov():
    s = instantiate(SystemSpec("identity"), 1 / 32)
    bm = barrier(build_jump_graph(s, 0.6), "free-orbit")
    f = synthesize_lyapunov(bm, np.arange(s.n), 0.25)
    d = np.abs(s.points[:, None, 0] - s.points[None, :, 0])
    d = np.minimum(d, 1 - d)
    assert np.allclose(f.theta, np.minimum(d, 0.25).mean(axis=0))
    assert f.viol == 0
    assert len(neutral_set(s, f, 0.0)) == s.n


def test_rotation_lyapunov_constant():
    s = instantiate(SystemSpec("rigid_rotation", {"alpha": 0.25}), 1 / 8)
    f = synthesize_lyapunov(barrier(build_jump_graph(s, 0.01), "free-orbit"), np.arange(8), 0.25)
    assert np.ptp(f.theta) == 0 and f.viol == 0


def test_anchor_range_checked():
    s = instantiate(SystemSpec("identity"), 1 / 8)
    with pytest.raises(ArgumentError):
        synthesize_lyapunov(barrier(build_jump_graph(s, 0.2)), [99], 0.25)


@pytest.fixture(scope="module")
def f1_field():
    s = system("f1")
    bm = barrier(build_jump_graph(s, 0.26), "free-orbit")
    return s, synthesize_lyapunov(bm, np.arange(s.n), 0.25)


def test_f1_lyapunov_field(f1_field):
    s, f = f1_field
    assert f.viol <= 2 * s.eta
    assert np.all(f.theta[s.snap] <= f.theta + 2 * s.eta)
    assert f.theta[315] > f.theta[272]  # upper right arc above the sink at the bottom of C1


def test_f1_neutral_set(f1_field):
    s, f = f1_field
    ns = neutral_set(s, f, 4 * s.eta).members
    assert ns[_c1(s)].all()
    assert not ns[int(0.875 * s.n)]
    with pytest.raises(ArgumentError):
        neutral_set(s, f, f.viol - 1.0)


def test_reweight_metric(f1_field):
    s, f = f1_field
    m = reweight_metric(s.metric, f, 1.0)
    u, v = s.points[:, None, :], s.points[None, :, :]
    base = s.metric.pairwise(u, v)
    new = m.pairwise(u, v)
    assert np.all(new >= base - 1e-15)
    drop = np.abs(f.theta[:, None] - f.theta[None, :]) > 1e-9
    assert np.all(new[drop] > base[drop])
    with pytest.raises(ArgumentError):
        reweight_metric(s.metric, f, 0.0)


def test_constant_theta_keeps_metric():
    s = instantiate(SystemSpec("rigid_rotation", {"alpha": 0.25}), 1 / 8)
    f = synthesize_lyapunov(barrier(build_jump_graph(s, 0.01), "free-orbit"), np.arange(8), 0.25)
    m = reweight_metric(s.metric, f, 1.0)
    p = s.points
    assert np.allclose(m.pairwise(p[:, None], p[None, :]), s.metric.pairwise(p[:, None], p[None, :]))


def test_reweight_loop_identity_and_f1():
    s = instantiate(SystemSpec("identity"), 1 / 32)
    r = gr_estimate_reweight(s, 3)
    assert r.sizes[0] == s.n and r.stable
    f1 = system("f1")
    r = gr_estimate_reweight(f1, 4)
    assert r.stable
    assert np.array_equal(r.mask.members, gr("f1").members)


def test_reweight_loop_reports_gap_on_f2():
    s = system("f2", 1 / 729)
    r = gr_estimate_reweight(s, 2)
    assert r.sizes[0] == s.n
    assert len(r.mask) > len(gr_estimate(s))


def test_identity_tight_budgets_singletons():
    s = instantiate(SystemSpec("identity"), 1 / 16)
    cl = gr_classes(s, BudgetSequence((0.01,)), gr_estimate_sigma(s, BudgetSequence((0.01,))))
    assert sorted(len(c) for c in cl.classes) == [1] * 16


def test_torus_classes_match_pairwise_feasibility():
    s = system("torus_product", 1 / 36)
    b = budget_schedule(s)[-1]
    mask = gr_estimate_sigma(s, b)
    cl = gr_classes(s, b, mask)
    lab = cl.labels()
    g = build_sigma_graph(s, b.eps[0])
    rng = np.random.default_rng(0)
    pick = rng.choice(mask.indices, size=12, replace=False)
    for x in pick:
        for y in pick:
            same = sigma_chain_feasible(s, b, x, y, g)[0] and sigma_chain_feasible(s, b, y, x, g)[0]
            assert same == (lab[x] == lab[y])
    fibers = {round(float(s.points[c[0], 0]), 9) for c in cl.classes}
    assert len(fibers) == len(cl.classes)


def test_classes_transitive_and_invariant():
    s = system("torus_product", 1 / 36)
    b = budget_schedule(s)[-1]
    cl = gr_classes(s, b, gr_estimate_sigma(s, b))
    g = build_jump_graph(s, b.eps[0])
    from scipy.sparse import csgraph

    adj = g.subgraph(b.eps[0])
    for c in cl.classes:
        if len(c) == 1:
            continue
        near = np.flatnonzero(dilate(s, np.isin(np.arange(s.n), c)))
        sub = adj[near][:, near]
        _, lab = csgraph.connected_components(sub, directed=True, connection="strong")
        pos = np.searchsorted(near, c)
        assert len(set(lab[pos])) == 1
        inside = dilate(s, np.isin(np.arange(s.n), c))
        assert inside[s.snap[c]].all()
