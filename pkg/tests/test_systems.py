import numpy as np
import pytest

from chainrec.errors import ArgumentError, InvalidSystemError
from chainrec.systems import SystemSpec, instantiate, power, restrict
from conftest import system


def test_identity_snaps_to_itself():
    s = instantiate(SystemSpec("identity"), 1 / 8)
    assert np.array_equal(s.snap, np.arange(8))
    assert np.all(s.snap_cost == 0)


def test_f1_fixes_left_semicircle():
    s = system("f1")
    x = s.points[:, 0]
    left = (x >= 0.25 - 1e-12) & (x <= 0.75 + 1e-12)
    assert np.array_equal(s.snap[left], np.flatnonzero(left))
    assert np.all(s.snap_cost[left] == 0)
    assert np.all(s.snap[~left] != np.flatnonzero(~left))


def test_aligned_rotation_is_shift():
    s = instantiate(SystemSpec("rigid_rotation", {"alpha": 0.25}), 1 / 8)
    assert np.array_equal(s.snap, (np.arange(8) + 2) % 8)
    assert np.allclose(s.snap_cost, 0)


def test_power_of_identity():
    s = instantiate(SystemSpec("identity"), 1 / 16)
    p = power(s, 5)
    assert np.array_equal(p.snap, s.snap)


def test_full_turn_power():
    s = instantiate(SystemSpec("rigid_rotation", {"alpha": 0.125}), 1 / 8)
    assert np.array_equal(power(s, 8).snap, np.arange(8))


def test_power_uses_exact_iterates():
    s = system("f1")
    p = power(s, 3)
    exact = s.apply(s.apply(s.apply(s.points)))
    assert np.allclose(p.images, exact)


def test_swap_square_stays_in_component():
    s = system("two_circle_swap")
    p = power(s, 2)
    assert np.array_equal(p.images[:, -1], s.points[:, -1])
    f1 = system("f1")
    first = s.points[:, -1] == 0
    assert np.allclose(p.images[first, 0], f1.apply(f1.apply(s.points[first, :1]))[:, 0])


def test_power_rejects_k0():
    with pytest.raises(ArgumentError):
        power(system("f1"), 0)


def test_map_leaving_chart(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("index,coord0,img0\n0,0.1,0.2\n1,0.5,1.7\n")
    with pytest.raises(InvalidSystemError) as err:
        instantiate(SystemSpec("user_table", {"path": str(p), "chart": "interval"}), 0.5)
    assert err.value.witness == 1


def test_snap_cost_bounded_by_eta():
    for name in ("f1", "f4", "torus_product"):
        s = system(name)
        assert s.snap_cost.max() <= s.eta * (1 + 1e-9)


def test_restrict_drops_leavers():
    s = system("f1")
    keep = np.zeros(s.n, dtype=bool)
    keep[80:200] = True
    sub, kept = restrict(s, keep)
    assert set(kept.tolist()) <= set(range(80, 200))
    assert sub.n == len(kept)
    # fixed cells are kept
    assert 150 in kept
