import numpy as np
import pytest

from chainrec.jumpgraph import barrier, build_jump_graph
from chainrec.recurrence import (
    chain_components,
    chain_recurrent_set,
    chain_time,
    mather_classes,
    strong_chain_recurrent_set,
)
from chainrec.space import Chart, MetricModel
from chainrec.systems import SystemSpec, instantiate
from conftest import system
from oracles import scc_oracle


def _c1(s):
    x = s.points[:, 0]
    return (x >= 0.25 - 1e-9) & (x <= 0.75 + 1e-9)


def test_identity_all_recurrent():
    s = instantiate(SystemSpec("identity"), 1 / 32)
    g = build_jump_graph(s, 0.1)
    assert len(chain_recurrent_set(g, 1e-6)) == 32


def test_f1_chain_recurrent_everywhere():
    s = system("f1")
    assert len(chain_recurrent_set(build_jump_graph(s, 2 / 360), 2 / 360)) == 360


def test_f1_components_match_closure():
    s = instantiate(SystemSpec("f1"), 1 / 36)
    eps = 2 / 36
    dec = chain_components(build_jump_graph(s, eps), eps)
    classes, rec = scc_oracle(s, eps)
    assert {frozenset(c.tolist()) for c in dec.classes} == {c for c in classes if rec[next(iter(c))]}
    assert len(dec.classes) == 1


def test_identity_tight_eps_singletons():
    s = instantiate(SystemSpec("identity"), 1 / 16)
    assert len(chain_components(build_jump_graph(s, 0.01), 0.01).classes) == 16


def test_union_components_do_not_mix():
    s = system("two_circle_swap", 1 / 36)
    g = build_jump_graph(s, 0.05)
    # a jump across components costs more than the gap, so only orbit edges cross
    for c in chain_components(g, 0.05).classes:
        comp = s.points[c, -1]
        assert len(c) >= 1 and set(np.unique(comp)) <= {0.0, 1.0}


def test_f1_scr_is_c1():
    s = system("f1")
    bm = barrier(build_jump_graph(s, 4 * s.eta), "free-orbit")
    mask = strong_chain_recurrent_set(bm, 2 * s.eta).members
    assert np.sum(mask ^ _c1(s)) <= 4


def test_f1_mather_classes_small():
    s = system("f1")
    tol = 4 * s.eta
    bm = barrier(build_jump_graph(s, tol), "free-orbit")
    for c in mather_classes(bm, tol).classes:
        x = s.points[c, 0]
        assert x.max() - x.min() <= 2 * tol + 1e-9


def test_rotation_one_mather_class():
    s = instantiate(SystemSpec("rigid_rotation", {"alpha": 0.25}), 1 / 8)
    bm = barrier(build_jump_graph(s, 0.01), "free-orbit")
    assert [len(c) for c in mather_classes(bm, 1e-9).classes if len(c) > 1] == [4, 4]


def test_identity_mather_one_class_when_tol_large():
    s = instantiate(SystemSpec("identity"), 1 / 16)
    bm = barrier(build_jump_graph(s, 0.6), "free-orbit")
    assert len(mather_classes(bm, 0.6).classes) == 1


def test_chain_time_cases():
    s = instantiate(SystemSpec("identity"), 1 / 16)
    assert chain_time(build_jump_graph(s, 0.01), 0.01, 3, 3) == 1
    r = instantiate(SystemSpec("rigid_rotation", {"alpha": 0.25}), 1 / 8)
    assert chain_time(build_jump_graph(r, 0.01), 0.01, 0, 4) == 2
    assert chain_time(build_jump_graph(r, 0.01), 0.01, 0, 1) == float("inf")


def test_f1_crossing_time():
    s = system("f1")
    eps = 1 / 40
    t = chain_time(build_jump_graph(s, eps), eps, 270, 90)
    assert 0.5 / eps / 2 <= t <= 2 * 0.5 / eps
