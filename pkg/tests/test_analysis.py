import csv
import io

import numpy as np
import pytest

from chainrec.analysis import (
    agree_dilated,
    box_dimension,
    depth_sequence,
    fit_csv,
    lyapunov_image_analysis,
    power_invariance_check,
    quotient_factor,
    scaling_exponent,
)
from chainrec.errors import ArgumentError
from chainrec.generalized import LyapunovField, gr_classes, synthesize_lyapunov
from chainrec.jumpgraph import barrier, build_jump_graph
from chainrec.masks import EquivalenceDecomposition, RegionMask
from chainrec.space import in_cantor_set
from chainrec.systems import SystemSpec, instantiate
from conftest import gr, system


def test_power_identity_all_equal():
    rep = power_invariance_check(instantiate(SystemSpec("identity"), 1 / 32), 3)
    for row in rep["masks"].values():
        assert row["sym_diff"] == 0


def test_power_f1_gr_and_cr_invariant():
    rep = power_invariance_check(system("f1"), 2)
    assert rep["masks"]["GR"]["agree_dilated"] and rep["masks"]["CR"]["agree_dilated"]
    with pytest.raises(ArgumentError):
        power_invariance_check(system("f1"), 1)


def test_depth_identity_and_f1():
    masks, depth = depth_sequence(instantiate(SystemSpec("identity"), 1 / 32))
    assert [len(m) for m in masks] == [32, 32] and depth == 1
    masks, depth = depth_sequence(system("f1"))
    assert depth == 1 and len(masks) == 3
    assert np.array_equal(masks[1].members, masks[2].members)
    for a, b in zip(masks, masks[1:]):
        assert not (b.members & ~a.members).any()


def test_box_dimension_circle_and_point():
    s = instantiate(SystemSpec("identity"), 1 / 6561)
    sc = [3.0**-k for k in range(1, 7)]
    assert box_dimension(RegionMask(s, np.ones(s.n, bool), "all"), sc).dimension == pytest.approx(1.0, abs=0.1)
    assert box_dimension(RegionMask.from_indices(s, [7], "pt"), sc).dimension == pytest.approx(0.0, abs=0.05)


def test_box_dimension_preconditions():
    s = instantiate(SystemSpec("identity"), 1 / 64)
    full = RegionMask(s, np.ones(s.n, bool), "all")
    with pytest.raises(ArgumentError):
        box_dimension(full, [0.1, 0.2, 0.3])
    with pytest.raises(ArgumentError):
        box_dimension(full, [0.05, 0.1, 0.2, 0.3])
    with pytest.raises(ArgumentError):
        box_dimension(full, [0.01, 0.05, 0.1, 0.2])


def test_box_dimension_of_product_adds():
    eta = 1 / 243
    torus = instantiate(SystemSpec("identity", {"chart": "torus"}), eta)
    circle = instantiate(SystemSpec("identity"), eta)
    sc = [3.0**-k for k in range(1, 5)]
    kc = in_cantor_set(np.arange(circle.n), 5)
    kx = in_cantor_set(np.rint(torus.points[:, 0] * 243).astype(int) % 243, 5)
    d_k = box_dimension(RegionMask(circle, kc, "K"), sc).dimension
    d_c = box_dimension(RegionMask(circle, np.ones(circle.n, bool), "S"), sc).dimension
    d_p = box_dimension(RegionMask(torus, kx, "KxS"), sc).dimension
    assert d_p == pytest.approx(d_k + d_c, abs=0.15)


def test_scaling_zero_cost_pair():
    s = instantiate(SystemSpec("rigid_rotation", {"alpha": 0.25}), 1 / 64)
    g = build_jump_graph(s, 0.05)
    fit = scaling_exponent(g, [(0, 32)], [0.05, 0.025, 0.0125])
    assert fit.times == [2.0, 2.0, 2.0]
    assert fit.dimension == pytest.approx(0.0, abs=1e-9)


def test_scaling_disconnected_pair_rejected():
    s = instantiate(SystemSpec("identity"), 1 / 64)
    with pytest.raises(ArgumentError):
        scaling_exponent(build_jump_graph(s, 0.01), [(0, 32)], [0.01, 0.005])


def test_quotient_identity():
    s = instantiate(SystemSpec("identity"), 1 / 32)
    dec = EquivalenceDecomposition(s, tuple(np.array([i]) for i in range(s.n)), "id", {})
    rep = quotient_factor(s, dec)
    assert rep["nodes"] == s.n and rep["fixed_nodes"] == s.n and rep["well_defined"]


def test_quotient_f1_fixed_classes():
    s = system("f1")
    rep = quotient_factor(s, gr_classes(s, None, gr("f1")))
    assert rep["well_defined"] and rep["connected_run"]


def test_lyapunov_image_cases():
    s = instantiate(SystemSpec("identity"), 1 / 16)
    const = LyapunovField(s, np.full(s.n, 0.3), np.arange(s.n), 0.25, "arc", 0.0)
    rep = lyapunov_image_analysis(const, RegionMask(s, np.ones(s.n, bool), "all"))
    assert rep["runs"] == 0 and rep["distinct"] == 1
    two = RegionMask.from_indices(s, [1, 9], "two")
    field = LyapunovField(s, np.linspace(0, 1, s.n), np.arange(s.n), 0.25, "arc", 0.0)
    assert lyapunov_image_analysis(field, two)["interval_like"] is False


def test_lyapunov_image_f1_interval_like():
    s = system("f1")
    f = synthesize_lyapunov(barrier(build_jump_graph(s, 0.26), "free-orbit"), np.arange(s.n), 0.25)
    rep = lyapunov_image_analysis(f, gr("f1"))
    assert rep["interval_like"]


def test_fit_csv_roundtrip():
    text = fit_csv([0.1, 0.2], [3, 4], ("scale", "count"))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["scale", "count"] and float(rows[2][1]) == 4


def test_agree_dilated():
    s = system("f1")
    a = np.zeros(s.n, bool)
    a[100:200] = True
    b = a.copy()
    b[200] = True
    assert agree_dilated(s, a, b)
    b[250] = True
    assert not agree_dilated(s, a, b)


def test_mask_boundary_annotation():
    s = instantiate(SystemSpec("identity"), 1 / 32)
    m = RegionMask.from_indices(s, range(8, 16), "arc")
    assert m.boundary.tolist() == [8, 15]
    assert m.record()["boundary"] == [8, 15]
    assert len(RegionMask(s, np.ones(s.n, bool), "all").boundary) == 0
