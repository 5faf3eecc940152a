import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from rocspin.quantum import (KET0, KET1, SX, SY, SZ, NotHermitianError, as_density,
                             expectation_population, is_unitary, propagate, propagate_eigh,
                             random_hermitian, rotation, state_fidelity, su2_from_vector)

finite = st.floats(-1e8, 1e8, allow_nan=False)


def test_zero_generator_is_identity():
    assert np.allclose(propagate(np.zeros((2, 2)), 1.0), np.eye(2), atol=1e-15)


def test_resonant_pi_rotation(omega):
    u = propagate(omega * SX, 50e-9)
    assert np.allclose(u @ KET0, -1j * KET1, atol=1e-12)


def test_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        propagate(np.array([[0, 1], [0, 0]], dtype=complex), 1.0)


@pytest.mark.parametrize("dt", [0.0, -1.0])
def test_rejects_bad_dt(dt):
    with pytest.raises(ValueError):
        propagate(SZ, dt)


def test_matches_expm_both_dims(rng):
    for dim in (2, 4):
        for _ in range(50):
            h = random_hermitian(rng, dim, scale=3.0)
            dt = rng.uniform(0.01, 2.0)
            assert np.allclose(propagate(h, dt), expm(-1j * h * dt), atol=1e-12)


def test_block_diagonal_matches_blockwise(rng):
    a = random_hermitian(rng, 2)
    b = random_hermitian(rng, 2)
    h = np.zeros((4, 4), dtype=complex)
    h[:2, :2], h[2:, 2:] = a, b
    u = propagate(h, 0.7)
    assert np.allclose(u[:2, :2], propagate(a, 0.7), atol=1e-10)
    assert np.allclose(u[2:, 2:], propagate(b, 0.7), atol=1e-10)
    assert np.allclose(u[:2, 2:], 0, atol=1e-12)


def test_unitarity_over_ten_thousand_inputs(rng):
    worst = 0.0
    for k in range(10_000):
        dim = 2 if k % 2 else 4
        u = propagate(random_hermitian(rng, dim, scale=rng.uniform(0.1, 50)), rng.uniform(0.01, 1))
        worst = max(worst, np.max(np.abs(u.conj().T @ u - np.eye(dim))))
    assert worst <= 1e-10


def test_closed_form_matches_eigh(rng):
    for _ in range(500):
        h = random_hermitian(rng, 2, scale=rng.uniform(0.01, 100))
        dt = rng.uniform(0.001, 1)
        assert np.allclose(propagate(h, dt), propagate_eigh(h, dt), atol=1e-12)


def test_batched_closed_form(rng):
    hx, hy, hz = rng.normal(size=(3, 7, 5))
    us = su2_from_vector(hx, hy, hz, 0.3)
    assert us.shape == (7, 5, 2, 2)
    assert np.allclose(us[3, 2], expm(-1j * 0.3 * (hx[3, 2] * SX + hy[3, 2] * SY + hz[3, 2] * SZ)))


@given(finite, finite, finite, st.floats(1e-12, 1e-6), st.floats(1e-12, 1e-6))
def test_composition(hx, hy, hz, t1, t2):
    h = hx * SX + hy * SY + hz * SZ
    assert np.allclose(propagate(h, t1 + t2), propagate(h, t2) @ propagate(h, t1), atol=1e-10)


def test_fidelity_examples():
    plus = (KET0 + KET1) / np.sqrt(2)
    rho = as_density(plus)
    assert state_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-12)
    assert state_fidelity(KET0, KET1) == pytest.approx(0.0, abs=1e-15)
    assert state_fidelity(KET0, plus) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        state_fidelity(KET0, np.ones(4) / 2)


def _random_state(rng, mixed):
    if not mixed:
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        return v / np.linalg.norm(v)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_fidelity_symmetric_and_overlap(rng):
    for _ in range(300):
        a, b = _random_state(rng, True), _random_state(rng, True)
        assert state_fidelity(a, b) == pytest.approx(state_fidelity(b, a), abs=1e-12)
        psi, phi = _random_state(rng, False), _random_state(rng, False)
        overlap = abs(np.vdot(psi, phi)) ** 2
        assert state_fidelity(psi, phi) == pytest.approx(overlap, abs=1e-12)
        # density-matrix path agrees with the pure-state shortcut
        assert state_fidelity(as_density(psi), as_density(phi)) == pytest.approx(overlap, abs=1e-7)


def test_population():
    assert expectation_population(KET0, 0) == 1.0
    assert expectation_population((KET0 - 1j * KET1) / np.sqrt(2), 1) == pytest.approx(0.5)
    assert expectation_population(rotation(np.pi) @ KET0, 1) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(IndexError):
        expectation_population(KET0, 2)


def test_is_unitary():
    assert is_unitary(rotation(0.3, 1.1))
    assert not is_unitary(2 * np.eye(2))
