import math

import numpy as np
import pytest

from bangbang import engine_itebd as it
from bangbang import freefermion
from bangbang.model import AngleSchedule, uniform_thetas

G = 1.1


def random_schedule(rng, N):
    return AngleSchedule(rng.uniform(0, 1.5, N), rng.uniform(0, 1.4, N))


def test_init_plus_observables():
    s = it.init_plus()
    assert it.local_x(s) == (pytest.approx(1.0, abs=1e-15), pytest.approx(1.0, abs=1e-15))
    assert it.local_zz(s) == (0.0, 0.0)
    assert it.energy_per_site(s, G) == pytest.approx(-G)
    assert it.correlation_length(s) == 0.0


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_matches_exact_free_fermions(N, rng):
    s = random_schedule(rng, N)
    state = it.run_bb(s, G)
    assert state.discarded < 1e-20  # 2^N <= 40: no truncation
    assert it.energy_per_site(state, G) == pytest.approx(freefermion.infinite_energy_ff(s, G), abs=1e-10)


def test_truncated_run_close_to_exact(rng):
    s = random_schedule(rng, 8)
    state = it.run_bb(s, G, Dmax=40)
    assert abs(it.energy_per_site(state, G) - freefermion.infinite_energy_ff(s, G)) < 1e-4
    assert state.discarded > 0


def test_canonical_after_every_layer(rng):
    s = random_schedule(rng, 6)
    state = it.init_plus(8)
    for beta, theta in zip(s.betas, uniform_thetas(s, G)):
        state = it.apply_zz_layer(state, beta, 8)
        assert it.canonical_residual(state) < 1e-8
        for lam in (state.lambdaA, state.lambdaB):
            assert np.all(lam > 0) and np.all(np.diff(lam) <= 1e-15)
            assert np.linalg.norm(lam) == pytest.approx(1.0, abs=1e-12)
            assert lam.size <= 8
        state = it.apply_x_layer(state, theta)
    assert state.discarded > 0


def test_x_layer_is_exact_rotation():
    s = it.apply_x_layer(it.init_plus(), 0.3)
    # exp(i t X)|+> only adds a phase
    assert it.local_x(s)[0] == pytest.approx(1.0)
    s = it.apply_zz_layer(it.init_plus(), math.pi / 4)
    s = it.apply_x_layer(s, 0.2)
    assert it.canonical_residual(s) < 1e-12


def test_zz_period_and_sign(rng):
    s = random_schedule(rng, 3)
    e = it.energy_per_site(it.run_bb(s, G), G)
    shifted = AngleSchedule(s.betas + np.array([math.pi / 2, 0, 0]), s.alphas)
    assert it.energy_per_site(it.run_bb(shifted, G), G) == pytest.approx(e, abs=1e-10)
    assert it.energy_per_site(it.run_bb(-s, G), G) == pytest.approx(e, abs=1e-10)


def test_snapshot_roundtrip(rng):
    state = it.run_bb(random_schedule(rng, 3), G)
    back = it.from_bytes(it.to_bytes(state))
    assert back.D == state.D and back.discarded == state.discarded
    for a, b in ((state.gammaA, back.gammaA), (state.gammaB, back.gammaB),
                 (state.lambdaA, back.lambdaA), (state.lambdaB, back.lambdaB)):
        assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        it.from_bytes(b"XXXX" + it.to_bytes(state)[4:])


def _raw_xi(GA, lA, GB, lB):
    """Correlation length from the transfer matrix of the raw (non-canonical) unit cell."""
    A1 = lB[:, None, None] * GA
    A2 = lA[:, None, None] * GB
    T1 = np.einsum("asc,bsd->abcd", A1, A1.conj())
    T2 = np.einsum("asc,bsd->abcd", A2, A2.conj())
    D = A1.shape[0]
    T = np.einsum("abcd,cdef->abef", T1, T2).reshape(D * D, D * D)
    v = np.sort(np.abs(np.linalg.eigvals(T)))[::-1]
    return -2 / math.log(v[1] / v[0])


def test_correlation_length_is_gauge_invariant(rng):
    D = 3
    GA = rng.normal(size=(D, 2, D)) + 0.3j * rng.normal(size=(D, 2, D))
    GB = rng.normal(size=(D, 2, D)) + 0.3j * rng.normal(size=(D, 2, D))
    lam = np.ones(D)
    raw = it.ItebdState(GA, GB, lam, lam.copy(), 8)
    can = it.canonicalize(raw)
    assert it.canonical_residual(can) < 1e-8
    assert it.correlation_length(can) == pytest.approx(_raw_xi(GA, lam, GB, lam), rel=1e-6)


def test_correlation_length_closed_form():
    # A^0 = diag(sqrt p, sqrt(1-p)), A^1 = offdiag(sqrt(1-p), sqrt p): the
    # transfer matrix splits into blocks with eigenvalues {1, 0} and
    # {2 sqrt(p(1-p)), 0}, so xi = -1 / ln(2 sqrt(p(1-p))) per site
    p = 0.8
    A0 = np.array([[math.sqrt(p), 0], [0, math.sqrt(1 - p)]], dtype=complex)
    A1 = np.array([[0, math.sqrt(1 - p)], [math.sqrt(p), 0]], dtype=complex)
    G = np.stack([A0, A1], axis=1)  # (left, phys, right)
    raw = it.ItebdState(G, G.copy(), np.ones(2), np.ones(2), 4)
    can = it.canonicalize(raw)
    expected = -1 / math.log(2 * math.sqrt(p * (1 - p)))
    assert it.correlation_length(can) == pytest.approx(expected, rel=1e-8)
