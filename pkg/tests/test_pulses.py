import numpy as np
import pytest
from hypothesis import given, strategies as st

from rocspin.pulses import (Delay, ErrorPoint, Pulse, PulseSequence, Waveform, bb1, bb1_phase,
                            corpse, corpse_angles, pulse_propagator, read_waveform, rotate_phase,
                            sequence_propagator, square_pulse, transfer_population,
                            write_waveform)
from rocspin.quantum import KET0, SX, SY, SZ, propagate, rotation


def rabi_p1(omega, delta, t):
    """|1> population of a constant drive, textbook formula."""
    w = np.hypot(omega, delta)
    return (omega / w) ** 2 * np.sin(w * t / 2) ** 2


def test_square_pi_shape(omega):
    w = square_pulse(np.pi, 0.0, omega, 1e-9)
    assert len(w) == 50 and w.duration == pytest.approx(50e-9)
    assert np.all(w.ux == 1) and np.all(w.uy == 0)


def test_square_half_pi_quadrature(omega):
    w = square_pulse(np.pi / 2, np.pi / 2, omega, 1e-9)
    assert w.duration == pytest.approx(25e-9)
    assert np.allclose(w.ux, 0, atol=1e-15) and np.allclose(w.uy, 1)


def test_full_turn_returns_minus_identity(omega):
    u = pulse_propagator(square_pulse(2 * np.pi, 0.0, omega))
    assert np.allclose(u, -np.eye(2), atol=1e-12)


def test_square_rejects_nonpositive():
    with pytest.raises(ValueError):
        square_pulse(0.0)
    with pytest.raises(ValueError):
        square_pulse(np.pi, omega=-1.0)


def test_partial_slice_keeps_angle_exact(omega):
    # 0.37 rad is not a whole number of 1 ns slices at 10 MHz
    w = square_pulse(0.37, 0.0, omega, 1e-9)
    assert np.sum(w.amplitude()) * omega * w.dt == pytest.approx(0.37, rel=1e-12)
    assert np.allclose(pulse_propagator(w), rotation(0.37), atol=1e-12)


def test_corpse_angles():
    t1, t2, t3 = corpse_angles(np.pi)
    assert (t1, t2, t3) == pytest.approx((2 * np.pi + np.pi / 3, 5 * np.pi / 3, np.pi / 3))


def test_corpse_duration(omega):
    w = corpse(np.pi, omega)
    ideal = 13 * np.pi / 3 / omega
    # each of the three segments may end in one partial-amplitude slice
    assert ideal <= w.duration < ideal + 3 * w.dt
    assert np.sum(w.amplitude()) * omega * w.dt == pytest.approx(13 * np.pi / 3, rel=1e-12)


def test_bb1_phase_and_angle(omega):
    assert bb1_phase(np.pi) == pytest.approx(1.82348, abs=1e-5)
    w = bb1(np.pi, omega)
    assert np.sum(w.amplitude()) * omega * w.dt == pytest.approx(5 * np.pi, rel=1e-12)


@pytest.mark.parametrize("make", [lambda o: square_pulse(np.pi, 0, o), lambda o: corpse(np.pi, o),
                                  lambda o: bb1(np.pi, o)])
def test_generators_invert_at_zero_error(make, omega):
    assert transfer_population(make(omega)) >= 1 - 1e-9


def test_corpse_beats_square_on_detuning(omega):
    err = ErrorPoint(0.1 * omega, 0.0)
    assert transfer_population(corpse(np.pi, omega), err) > transfer_population(square_pulse(np.pi, 0, omega), err)


def test_bb1_amplitude_robustness(omega):
    err = ErrorPoint(0.0, 0.1)
    assert transfer_population(bb1(np.pi, omega), err) >= 0.999
    # a square pi pulse over-rotated by 10% leaves sin^2(1.1 pi / 2)
    assert transfer_population(square_pulse(np.pi, 0, omega), err) == pytest.approx(
        np.sin(1.1 * np.pi / 2) ** 2, abs=1e-12)


def test_rotate_phase_examples():
    w = Waveform(1e-9, [1.0, 0.5], [0.0, -0.5])
    assert rotate_phase(w, 0.0) == w
    r = rotate_phase(Waveform(1e-9, [1.0], [0.0]), np.pi / 2)
    assert np.allclose([r.ux[0], r.uy[0]], [0, 1], atol=1e-15)


@given(st.lists(st.tuples(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7)), min_size=1, max_size=30),
       st.floats(-10, 10))
def test_rotate_phase_preserves_amplitude_and_inverts(pairs, phi):
    ux, uy = np.array(pairs).T
    w = Waveform(1e-9, ux, uy)
    r = rotate_phase(w, phi)
    assert np.allclose(r.amplitude(), w.amplitude(), atol=1e-15)
    back = rotate_phase(r, -phi)
    assert np.allclose(back.ux, w.ux, atol=1e-14) and np.allclose(back.uy, w.uy, atol=1e-14)


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform(1e-9, [1.2], [0.0])
    with pytest.raises(ValueError):
        Waveform(0.0, [1.0], [0.0])
    with pytest.raises(ValueError):
        Waveform(1e-9, [1.0, 0.0], [0.0])
    w = Waveform(1e-9, np.ones(7), np.zeros(7))
    assert w.duration == 7 * w.dt


def test_error_point_invariants():
    with pytest.raises(ValueError):
        ErrorPoint(0.0, -1.0)
    with pytest.raises(ValueError):
        ErrorPoint(np.inf)


def test_empty_sequence_identity():
    assert np.allclose(sequence_propagator(PulseSequence()), np.eye(2))


def test_square_at_detuning_equal_to_rabi(omega):
    w = square_pulse(np.pi, 0, omega)
    p = abs((sequence_propagator(PulseSequence([Pulse(w)]), ErrorPoint(omega)) @ KET0)[1]) ** 2
    assert p == pytest.approx(0.5 * np.sin(np.pi * np.sqrt(2) / 2) ** 2, abs=1e-12)
    assert p == pytest.approx(0.317, abs=1e-3)


def test_rabi_formula_grid(omega):
    w1 = Waveform(1e-9, [1.0], [0.0], omega)
    for delta in np.linspace(-omega, omega, 10):
        for n in range(1, 11):
            w = Waveform(w1.dt * n, [1.0], [0.0], omega)
            p = transfer_population(w, ErrorPoint(delta))
            assert p == pytest.approx(rabi_p1(omega, delta, n * 1e-9), abs=1e-9)


def test_sequence_against_direct_products(rng, omega):
    w = Waveform(2e-9, rng.uniform(-0.7, 0.7, 12), rng.uniform(-0.7, 0.7, 12), omega)
    err = ErrorPoint(0.05 * omega, -0.03, 0.02)
    seq = PulseSequence([Pulse(w, 0.4), Delay(13e-9), Pulse(w, -1.0)])
    expect = np.eye(2, dtype=complex)
    for phase, delay in ((0.4, 13e-9), (-1.0, None)):
        for x, y in zip(w.ux, w.uy):
            a = phase + err.delta_phi
            cx, cy = x * np.cos(a) - y * np.sin(a), x * np.sin(a) + y * np.cos(a)
            h = err.delta0 * SZ + omega * (1 + err.delta1) * (cx * SX + cy * SY)
            expect = propagate(h, w.dt) @ expect
        if delay:
            expect = propagate(err.delta0 * SZ, delay) @ expect
    assert np.allclose(sequence_propagator(seq, err), expect, atol=1e-12)


def test_batched_errors_match_pointwise(omega):
    w = bb1(np.pi, omega)
    d0 = np.array([0.0, 0.05, -0.1]) * omega
    d1 = np.array([0.0, 0.1, -0.05])
    seq = PulseSequence([Pulse(w), Delay(5e-9)])
    batch = sequence_propagator(seq, (d0, d1, np.zeros(3)))
    for k in range(3):
        assert np.allclose(batch[k], sequence_propagator(seq, ErrorPoint(d0[k], d1[k])), atol=1e-13)


def test_drift_dimension_check(omega):
    seq = PulseSequence([Pulse(square_pulse(np.pi, 0, omega))])
    with pytest.raises(ValueError):
        sequence_propagator(seq, ErrorPoint(), drift=np.eye(3))


def test_waveform_file_round_trip(tmp_path, rng):
    w = Waveform(1.7e-9, rng.uniform(-0.7, 0.7, 25), rng.uniform(-0.7, 0.7, 25), 1.234e8, "x")
    back = read_waveform(write_waveform(w, tmp_path / "w.txt"))
    assert back.dt == pytest.approx(w.dt, rel=1e-12)
    assert back.omega_max == pytest.approx(w.omega_max, rel=1e-12)
    assert np.allclose(back.ux, w.ux, rtol=1e-12) and np.allclose(back.uy, w.uy, rtol=1e-12)
    assert (tmp_path / "w.txt").read_text().startswith("# dt_ns=")


def test_waveform_file_header_required(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1 0\n")
    with pytest.raises(ValueError):
        read_waveform(p)
