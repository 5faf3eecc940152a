import numpy as np
import pytest
from scipy.linalg import block_diag, expm

from rocspin.dd import (NotIsolatedError, NuclearSpinParams, SensingConfig, Spectrum,
                        build_dd_sequence, deepest_in_window, detect_peaks,
                        effective_frequency, fit_hyperfine, hyperfine_drift, read_spectrum_csv,
                        response_amplitude, simulate_spectrum, square_family, write_peaks_json,
                        write_spectrum_csv, _single_spin_population)
from rocspin.pulses import Delay, ErrorPoint, Pulse
from rocspin.quantum import SX, SZ

OMEGA = 2 * np.pi * 10e6
KHZ = 2 * np.pi * 1e3
EXAMPLE = NuclearSpinParams.from_components(305 * KHZ, 136 * KHZ)
WEAK = NuclearSpinParams.from_components(305 * KHZ, 20 * KHZ)
# 50 ps pi pulses: effectively instantaneous on nuclear time scales
FAST = square_family(2 * np.pi * 10e9, 1e-12)


def test_spin_params():
    s = NuclearSpinParams.from_khz_deg(360, 56)
    assert s.a_par == pytest.approx(360 * KHZ * np.cos(np.deg2rad(56)))
    assert s.a_perp == pytest.approx(360 * KHZ * np.sin(np.deg2rad(56)))
    back = NuclearSpinParams.from_components(s.a_par, s.a_perp)
    assert back.omega_h == pytest.approx(s.omega_h) and back.theta == pytest.approx(s.theta)
    with pytest.raises(ValueError):
        NuclearSpinParams(-1.0, 0.0)


def test_build_sequence_shapes_and_duration():
    fam = square_family()
    seq = build_dd_sequence("XY4", 1, 400e-9, fam)
    pulses = [s for s in seq.segments if isinstance(s, Pulse)]
    assert [p.phase for p in pulses[1:-1]] == [0.0, np.pi / 2, 0.0, np.pi / 2]
    seq8 = build_dd_sequence("XY8", 2, 400e-9, fam)
    assert sum(isinstance(s, Pulse) for s in seq8.segments) == 16 + 2
    for reps, tau in ((1, 400e-9), (3, 250e-9)):
        seq = build_dd_sequence("XY4", reps, tau, fam)
        total = sum(s.duration for s in seq.segments)
        assert total == pytest.approx(2 * fam["pi2"].duration + reps * 8 * tau)
    with pytest.raises(ValueError):
        build_dd_sequence("XY4", 1, 10e-9, fam)


def test_config_validation():
    with pytest.raises(ValueError):
        SensingConfig(repeats=0)
    with pytest.raises(ValueError):
        SensingConfig(sequence="CPMG")
    with pytest.raises(ValueError):
        SensingConfig(family={"pi": FAST["pi"]})


def test_conditional_evolution_identity():
    wl = 2 * np.pi * 546e3
    t = 1.7e-6
    u = expm(-1j * hyperfine_drift(EXAMPLE, wl) * t)
    u0 = expm(-1j * wl * SZ * t)
    u1 = expm(-1j * ((wl + EXAMPLE.a_par) * SZ + EXAMPLE.a_perp * SX) * t)
    assert np.allclose(u, block_diag(u0, u1), atol=1e-10)


def test_no_spins_perfect_pulses_flat():
    spec = simulate_spectrum(SensingConfig(spins=(), family=FAST, points=61))
    assert np.allclose(spec.population, 1.0, atol=1e-9)
    assert detect_peaks(spec, 0.01) == []


def test_resonance_condition_odd_harmonics():
    cfg = SensingConfig(spins=(WEAK,), family=FAST, f_min=0.15e6, f_max=1.6e6, points=2901)
    spec = simulate_spectrum(cfg)
    f0 = effective_frequency(WEAK, cfg.omega_l) / (2 * np.pi)
    peaks = detect_peaks(spec, 0.02)
    bin_hz = spec.frequency_axis[1] - spec.frequency_axis[0]
    for k in (1, 3):
        # 2 tau = k pi / w0  <=>  f = 1/(4 tau) = f0 / k
        hit = deepest_in_window(peaks, f0 / k, 5 * bin_hz)
        assert hit is not None and abs(hit[0] - f0 / k) <= bin_hz
    # instantaneous perfect pulses leave no response at 2 f0
    assert deepest_in_window(peaks, 2 * f0, 0.05e6) is None


def test_spurious_response_needs_finite_pulses():
    kw = dict(spins=(EXAMPLE,), f_min=1.3e6, f_max=1.5e6, points=201)
    f2 = 2 * effective_frequency(EXAMPLE, SensingConfig().omega_l) / (2 * np.pi)
    amp = {}
    for name, fam in (("fast", FAST), ("square", square_family())):
        spec = simulate_spectrum(SensingConfig(family=fam, **kw))
        bg = simulate_spectrum(SensingConfig(family=fam, **{**kw, "spins": ()}))
        amp[name] = response_amplitude(spec, bg, f2, 0.03e6)
    assert amp["square"] > 0.05
    assert amp["fast"] < 0.02 * amp["square"]


def test_spurious_response_grows_with_repeats():
    err = ErrorPoint(0.08 * OMEGA, 0.08, 0.0)
    f2 = 2 * effective_frequency(EXAMPLE, SensingConfig().omega_l) / (2 * np.pi)
    amps = []
    for reps in (10, 20, 40):
        kw = dict(err=err, repeats=reps, f_min=1.3e6, f_max=1.5e6, points=201)
        spec = simulate_spectrum(SensingConfig(**kw))
        bg = simulate_spectrum(SensingConfig(spins=(), **kw))
        amps.append(response_amplitude(spec, bg, f2, 0.03e6))
    assert amps[0] < amps[1] < amps[2]


def test_population_bounded():
    spec = simulate_spectrum(SensingConfig(spins=(EXAMPLE, WEAK), err=ErrorPoint(0.05 * OMEGA, -0.05),
                                           points=101))
    assert np.all((spec.population >= 0) & (spec.population <= 1))


def test_vectorized_matches_sequence_propagator():
    from rocspin.pulses import segment_propagator
    cfg = SensingConfig(spins=(EXAMPLE,), repeats=2, err=ErrorPoint(0.03 * OMEGA, 0.02))
    taus = np.array([300e-9, 520e-9])
    fast = _single_spin_population(EXAMPLE, cfg, taus)
    drift = hyperfine_drift(EXAMPLE, cfg.omega_l)
    for tau, ref in zip(taus, fast):
        u = np.eye(4, dtype=complex)
        for seg in build_dd_sequence("XY4", 2, tau, cfg.family).segments:
            u = segment_propagator(seg, cfg.err, drift) @ u
        pop = 0.0
        for k in (0, 1):
            out = u[:, k]
            pop += 0.5 * (abs(out[2]) ** 2 + abs(out[3]) ** 2)
        assert pop == pytest.approx(ref, abs=1e-12)


def test_detect_peaks_synthetic():
    f = np.linspace(0.4e6, 1.6e6, 601)
    flat = Spectrum(f, np.ones_like(f))
    assert detect_peaks(flat, 0.05) == []
    dip = Spectrum(f, 1 - 0.6 * np.exp(-((f - 0.8123e6) / 5e3) ** 2))
    peaks = detect_peaks(dip, 0.05)
    assert len(peaks) == 1
    assert abs(peaks[0][0] - 0.8123e6) <= f[1] - f[0]
    assert peaks[0][1] == pytest.approx(0.6, abs=0.01)
    with pytest.raises(ValueError):
        detect_peaks(flat, 1.5)


def test_fit_round_trip_example_spin():
    truth = NuclearSpinParams.from_khz_deg(360, 56)
    cfg = SensingConfig(spins=(truth,))
    spec = simulate_spectrum(cfg)
    f0 = effective_frequency(truth, cfg.omega_l) / (2 * np.pi)
    peak = deepest_in_window(detect_peaks(spec, 0.01), f0, 30e3)
    fit = fit_hyperfine(spec, peak, cfg)
    assert abs(fit.omega_h - truth.omega_h) <= 9 * KHZ
    assert abs(np.rad2deg(fit.theta - truth.theta)) <= 2


def test_fit_rejects_overlapping_spins():
    a = NuclearSpinParams.from_components(60 * KHZ, 25 * KHZ)
    b = NuclearSpinParams.from_components(75 * KHZ, 25 * KHZ)
    cfg = SensingConfig(spins=(a, b), repeats=20, f_min=0.5e6, f_max=0.7e6, points=401)
    spec = simulate_spectrum(cfg)
    peak = max(detect_peaks(spec, 0.01), key=lambda pk: pk[1])
    with pytest.raises(NotIsolatedError):
        fit_hyperfine(spec, peak, cfg)


def test_fit_rejects_missing_dip():
    cfg = SensingConfig(spins=(), points=101)
    spec = simulate_spectrum(cfg)
    with pytest.raises(ValueError):
        fit_hyperfine(spec, (0.7e6, 0.0), cfg)


def test_csv_and_json_round_trip(tmp_path):
    spec = simulate_spectrum(SensingConfig(points=51, repeats=4))
    back = read_spectrum_csv(write_spectrum_csv(spec, tmp_path / "s.csv"))
    assert np.allclose(back.population, spec.population, atol=1e-9)
    assert np.allclose(back.tau_axis, spec.tau_axis, rtol=1e-11)
    import json
    p = write_peaks_json([(7e5, 0.3)], tmp_path / "p.json", {"note": 1})
    assert json.loads(p.read_text())["peaks"][0]["depth"] == 0.3
