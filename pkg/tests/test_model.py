import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bangbang.model import (
    INFINITE_CHAIN,
    AngleSchedule,
    ApConfig,
    Lattice,
    SiteResolvedSchedule,
    angle_periods,
    ap_schedule,
    dumps_schedule,
    dumps_site_schedule,
    end_ramp_profile,
    expand_uniform,
    fold_angles,
    fold_vector,
    loads_schedule,
    loads_site_schedule,
    parse_lattice,
    ramp,
    site_angles,
)


def test_ap_single_layer_is_ramp_midpoint():
    s = ap_schedule(ApConfig(1, 0.2))
    assert s.betas[0] == pytest.approx(0.1)
    assert s.alphas[0] == pytest.approx(0.2)


def test_ap_two_layers_closed_form():
    s = ap_schedule(ApConfig(2, 1.0))
    assert s.betas == pytest.approx([0.5 * (1 - math.sqrt(2) / 2), 0.5 * (1 + math.sqrt(2) / 2)])
    assert s.alphas == pytest.approx([1.0, 1.0])


def test_ramp_endpoints():
    assert ramp(0.0) == pytest.approx(0.0)
    assert ramp(0.5) == pytest.approx(0.5)
    assert ramp(1.0) == pytest.approx(1.0)


def test_ap_config_validation():
    assert ApConfig(4, 0.25).tau == 1.0
    with pytest.raises(ValueError):
        ApConfig(0, 0.1)
    with pytest.raises(ValueError):
        ApConfig(2, 0.0)


def test_fold_single_alpha():
    s = AngleSchedule([0.1, 0.2], [1.5, 0.3])
    f = fold_angles(s, 1.1)
    assert f.alphas[0] == pytest.approx(1.5 - math.pi / 2.2)
    assert f.alphas[1] == pytest.approx(0.3)  # last alpha has period pi/g


def test_fold_identity_and_edges():
    s = AngleSchedule([0.1, 0.2], [0.3, 0.4])
    assert fold_angles(s, 1.1) == s
    assert fold_angles(AngleSchedule([math.pi / 2], [0.0]), 1.1).betas[0] == 0.0
    with pytest.raises(ValueError):
        fold_angles(s, 0.0)


@given(st.lists(st.floats(-20, 20), min_size=4, max_size=4))
def test_fold_vector_lands_in_domain(x):
    per = angle_periods(1.3, 2)
    y = fold_vector(np.array(x), per)
    assert np.all(y >= 0) and np.all(y < per)
    # differences are whole periods
    k = (np.array(x) - y) / per
    assert np.allclose(k, np.round(k), atol=1e-9)


def test_periods():
    p = angle_periods(2.0, 3)
    assert p == pytest.approx([math.pi / 2] * 3 + [math.pi / 4, math.pi / 4, math.pi / 2])


def test_expand_uniform_shapes():
    s = AngleSchedule([0.1, 0.2], [0.3, 0.4])
    e = expand_uniform(s, Lattice.open_chain(5, 1.1))
    assert e.beta_layers.shape == (2, 4) and e.alpha_layers.shape == (2, 5)
    assert np.all(e.beta_layers == s.betas[:, None])
    sq = expand_uniform(s, Lattice.open_square(3, 3, 1.0))
    assert sq.beta_layers.shape == (2, 12) and sq.alpha_layers.shape == (2, 9)
    with pytest.raises(ValueError):
        expand_uniform(s, Lattice.infinite_chain(1.1))


def test_bond_counts_and_order():
    assert Lattice.open_chain(4).bonds == ((0, 1), (1, 2), (2, 3))
    assert Lattice.ring(4).bonds[-1] == (3, 0)
    sq = Lattice.open_square(3, 2)
    assert sq.bonds == ((0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5))
    assert Lattice.torus(4, 4).n_bonds == 32
    assert Lattice.open_square(4, 4).n_bonds == 2 * 16 - 8


def test_lattice_validation_and_fields():
    with pytest.raises(ValueError):
        Lattice("hexagonal", 3)
    with pytest.raises(ValueError):
        Lattice.open_chain(1)
    lat = Lattice.open_chain(3, [1.0, 2.0, 3.0])
    assert not lat.uniform
    with pytest.raises(ValueError):
        _ = lat.g
    with pytest.raises(ValueError):
        _ = Lattice.infinite_chain(1.1).n_sites
    assert Lattice.open_chain(3, 1.5).site_fields() == pytest.approx([1.5] * 3)


def test_site_angles_half_last_layer():
    th = site_angles(np.ones((3, 2)), np.array([1.0, 2.0]))
    assert th[:, 0] == pytest.approx([1, 1, 0.5])
    assert th[:, 1] == pytest.approx([2, 2, 1])


def test_schedule_validation():
    with pytest.raises(ValueError):
        AngleSchedule([0.1], [0.1, 0.2])
    with pytest.raises(ValueError):
        AngleSchedule([np.nan], [0.1])
    with pytest.raises(ValueError):
        SiteResolvedSchedule(np.zeros((2, 3)), np.zeros((3, 4)))
    s = SiteResolvedSchedule(np.zeros((1, 3)), np.zeros((1, 4)))
    with pytest.raises(ValueError):
        s.check_lattice(Lattice.open_chain(5))


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=12).filter(lambda v: len(v) % 2 == 0))
def test_schedule_record_roundtrip_exact(x):
    s = AngleSchedule.from_vector(x)
    back, rec = loads_schedule(dumps_schedule(s, g=1.1))
    assert back == s
    assert float(rec["g"]) == 1.1


def test_site_schedule_roundtrip(rng):
    lat = Lattice.open_chain(6, 1.1)
    s = SiteResolvedSchedule(rng.normal(size=(2, 5)), rng.normal(size=(2, 6)))
    back, rec = loads_site_schedule(dumps_site_schedule(s, lat))
    assert back == s
    assert parse_lattice(rec["lattice"], float(rec["g"])) == lat


def test_record_version_rejected():
    text = dumps_schedule(AngleSchedule([0.1], [0.2])).replace("version = 1", "version = 9")
    with pytest.raises(ValueError):
        loads_schedule(text)


def test_parse_lattice_kinds():
    for lat in (Lattice.open_chain(5, 1.1), Lattice.ring(6, 1.1), Lattice.open_square(3, 4, 1.1),
                Lattice.torus(4, 4, 1.1)):
        assert parse_lattice(lat.describe(), 1.1) == lat
    assert parse_lattice(INFINITE_CHAIN, 1.1).kind == INFINITE_CHAIN


def test_end_ramp_profile():
    p = end_ramp_profile(100, 1.1, 1.3)
    assert np.all(p[:10] == pytest.approx(1.1))
    assert p[49] == pytest.approx(1.3) and p[50] == pytest.approx(1.3)
    assert p == pytest.approx(p[::-1])
    assert np.all(np.diff(p[:50]) >= -1e-15)
    assert np.all(end_ramp_profile(60, 1.1, 1.1) == pytest.approx(1.1))
