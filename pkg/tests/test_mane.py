import warnings

import numpy as np
import pytest

from chainrec.errors import ArgumentError
from chainrec.jumpgraph import build_jump_graph
from chainrec.mane import (
    certificate_bits,
    fixed_points,
    injectivity,
    mane_chain_certificate,
    mane_estimate,
    mane_fix_formula,
)
from chainrec.masks import dilate
from chainrec.recurrence import chain_recurrent_set
from chainrec.systems import SystemSpec, instantiate
from conftest import system


def _c1(s):
    x = s.points[:, 0]
    return (x >= 0.25 - 1e-9) & (x <= 0.75 + 1e-9)


def test_fixed_points():
    s = instantiate(SystemSpec("identity"), 1 / 16)
    assert len(fixed_points(s)) == 16
    f1 = system("f1")
    fx = fixed_points(f1, 2 * f1.eta).members
    # two cells beyond each endpoint move by less than 2 eta
    assert fx[_c1(f1)].all() and np.sum(fx & ~_c1(f1)) <= 4
    assert len(fixed_points(system("two_circle_swap"), 2 / 360)) == 0
    with pytest.raises(ArgumentError):
        fixed_points(f1, f1.eta / 2)


def test_f1_formula_is_c1():
    s = system("f1")
    m = mane_fix_formula(s)
    assert np.sum(m.members ^ _c1(s)) <= 4
    assert m.params["injective_share"] == 1.0


def test_swap_formula_is_everything():
    s = system("two_circle_swap")
    assert len(mane_fix_formula(s)) == s.n


def test_non_injective_map_warns(tmp_path):
    p = tmp_path / "const.csv"
    p.write_text("index,coord0,img0\n" + "".join(f"{i},{i / 8},0.0\n" for i in range(8)))
    s = instantiate(SystemSpec("user_table", {"path": str(p), "chart": "interval"}), 1 / 8)
    assert injectivity(s) < 0.95
    with pytest.warns(RuntimeWarning):
        mane_fix_formula(s, eps=0.2)


def test_certificate_cases():
    s = system("f1")
    g = build_jump_graph(s, 0.1)
    assert mane_chain_certificate(s, 0.1, 12, 180, g) == (True, 1)
    assert mane_chain_certificate(s, 0.1, 12, 315, g)[0] is False
    # period 4; eps/3 is below the quarter-turn so shorter cycles cannot close
    r = instantiate(SystemSpec("rigid_rotation", {"alpha": 0.25}), 1 / 64)
    assert mane_chain_certificate(r, 0.65, 6, 0) == (True, 4)


def test_certificate_monotone():
    s = instantiate(SystemSpec("f1"), 1 / 120)
    a = certificate_bits(s, 0.05, 3) > 0
    b = certificate_bits(s, 0.1, 3) > 0
    c = certificate_bits(s, 0.05, 5) > 0
    assert not (a & ~b).any() and not (a & ~c).any()


def test_identity_all_certified():
    s = instantiate(SystemSpec("identity"), 1 / 16)
    est = mane_estimate(s)
    assert len(est.mask) == 16 and np.all(est.certified == 1)


def test_mane_inside_cr():
    s = system("f1")
    m = mane_estimate(s).mask.members
    cr = chain_recurrent_set(build_jump_graph(s, s.defaults["eps"]), s.defaults["eps"]).members
    assert not (m & ~dilate(s, cr)).any()


def test_disjoint_union_is_componentwise():
    """Masks of f1 | f2 | f3 equal the masks of the three systems at matched tolerances."""
    from chainrec.analysis import recurrence_masks

    eta = 1 / 243
    tols = {"eps": 5 * eta, "tol": 2 * eta, "fix_tol": 2 * eta, "budget_floor": 0.9 * eta}
    u = instantiate(SystemSpec("cantor_union", tols), eta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        whole = recurrence_masks(u)
        comp = u.points[:, -1].astype(int)
        for c, name in enumerate(("f1", "f2", "f3")):
            part = recurrence_masks(instantiate(SystemSpec(name, tols), eta))
            for k in ("CR", "SCR", "Mane", "GR"):
                assert np.array_equal(whole[k].members[comp == c], part[k].members), (name, k)
