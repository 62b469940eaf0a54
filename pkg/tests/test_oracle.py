import math

import numpy as np
import pytest

from bangbang import engine_sv, oracle
from bangbang.model import Lattice


def test_infinite_gs_energy_reference():
    assert oracle.infinite_gs_energy(1.1) == pytest.approx(-1.342864, abs=5e-7)


def test_infinite_gs_limits():
    assert oracle.infinite_gs_energy(0.0) == -1.0
    assert abs(oracle.infinite_gs_energy(100.0) / -100.0 - 1) < 1e-4
    # self-duality: E(g) = g E(1/g)
    assert oracle.infinite_gs_energy(2.0) == pytest.approx(2.0 * oracle.infinite_gs_energy(0.5), rel=1e-10)
    with pytest.raises(ValueError):
        oracle.infinite_gs_energy(-1.0)


def test_finite_two_sites_closed_form():
    sol = oracle.finite_gs_energy(2, 1.1)
    assert sol.energy == pytest.approx(-math.sqrt(1 + 4 * 1.21), abs=1e-12)
    e_sv, _ = engine_sv.exact_gs_sv(Lattice.open_chain(2, 1.1))
    assert sol.energy == pytest.approx(e_sv, abs=1e-12)


def test_finite_l100():
    assert oracle.finite_gs_energy(100, 1.1).energy_per_site == pytest.approx(-1.339989, abs=5e-7)


@pytest.mark.parametrize("fields", [1.1, [0.7, 1.3, 0.9, 1.8, 1.1, 0.4, 1.0, 2.0, 1.2, 0.6]])
def test_finite_matches_statevector(fields):
    lat = Lattice.open_chain(10, fields)
    sol = oracle.finite_gs(lat)
    e, psi = engine_sv.exact_gs_sv(lat)
    assert sol.energy == pytest.approx(e, abs=1e-9)
    obs = engine_sv.observables_sv(psi)
    assert np.allclose(sol.x, obs.x, atol=1e-8)
    assert np.allclose(sol.zz, obs.zz, atol=1e-8)


def test_profile_self_consistency():
    lat = Lattice.open_chain(30, 1.1)
    sol = oracle.finite_gs(lat)
    assert -1.1 * sol.x.sum() - sol.zz.sum() == pytest.approx(sol.energy, abs=1e-10)
    assert np.all(sol.spectrum >= 0) and np.all(np.diff(sol.spectrum) >= 0)
    assert sol.x.size == 30 and sol.zz.size == 29


def test_monotone_convergence_to_infinite():
    e_inf = oracle.infinite_gs_energy(1.1)
    gaps = [abs(oracle.finite_gs_energy(L, 1.1).energy_per_site - e_inf) for L in (10, 20, 50, 100, 200)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_tfim_xi():
    assert oracle.tfim_xi(1.1) == pytest.approx(10.49, abs=0.01)
    assert oracle.tfim_xi(math.e) == pytest.approx(1.0)
    assert oracle.tfim_xi(3.1) == pytest.approx(0.884, abs=1e-3)
    with pytest.raises(ValueError):
        oracle.tfim_xi(1.0)


def test_finite_rejects_bad_input():
    with pytest.raises(ValueError):
        oracle.finite_gs_energy(1, 1.1)
    with pytest.raises(ValueError):
        oracle.finite_gs(Lattice.ring(6, 1.1))


def test_reference_csv(tmp_path):
    from bangbang.engine_fmps import read_profile_csv

    sol = oracle.finite_gs_energy(6, 1.1)
    p = tmp_path / "ref.csv"
    oracle.write_reference_csv(p, sol)
    prof = read_profile_csv(p)
    assert np.array_equal(prof.x, sol.x) and np.array_equal(prof.zz, sol.zz)
