import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rocspin.families import pulse
from rocspin.landscape import (FidelityLandscape, axis_extent, box_minimum, contour_area,
                               detuning_cut, read_landscape_csv, scan, write_cut_csv,
                               write_landscape_csv)
from rocspin.pulses import Waveform, square_pulse

OMEGA = 2 * np.pi * 10e6
SQUARE = square_pulse(np.pi, 0.0, OMEGA, 1e-9).with_label("square")


def rabi_formula(delta_frac, rabi_err):
    """Transfer probability of a resonant-length square pi pulse."""
    w1 = 1 + rabi_err
    weff = np.hypot(w1, delta_frac)
    return (w1 / weff) ** 2 * np.sin(np.pi / 2 * weff) ** 2


@pytest.fixture(scope="module")
def roc():
    return pulse("roc")


@pytest.fixture(scope="module")
def maps(roc):
    return {name: scan(w) for name, w in
            [("square", SQUARE), ("corpse", pulse("corpse")), ("bb1", pulse("bb1")), ("roc", roc)]}


def test_square_examples():
    m = scan(SQUARE, n=31)  # 0.1 omega lies on the grid
    assert m.value_at(0, 0) == pytest.approx(1.0, abs=1e-12)
    assert m.value_at(0.1 * OMEGA, 0) == pytest.approx(rabi_formula(0.1, 0), abs=1e-12)
    assert m.value_at(0.1 * OMEGA, 0) == pytest.approx(0.990, abs=1e-3)


def test_scan_matches_rabi_formula_everywhere():
    m = scan(SQUARE, n=25)
    d, r = np.meshgrid(m.detuning_axis / OMEGA, m.rabi_axis, indexing="ij")
    assert np.allclose(m.values, rabi_formula(d, r), atol=1e-12)


def test_cut_examples():
    cut = detuning_cut(SQUARE, 1.0, 201)
    assert cut[100, 1] == pytest.approx(1.0)
    assert cut[0, 1] == pytest.approx(0.317, abs=1e-3)
    assert cut[-1, 1] == pytest.approx(rabi_formula(1.0, 0), abs=1e-12)
    # symmetric pulse: fidelity(D) = fidelity(-D)
    assert np.allclose(cut[:, 1], cut[::-1, 1], atol=1e-10)


def test_contour_area_constant_maps():
    ax = np.linspace(-1, 1, 5)
    assert contour_area(FidelityLandscape(ax, ax, np.ones((5, 5))), 0.9) == 1.0
    assert contour_area(FidelityLandscape(ax, ax, np.full((5, 5), 0.5)), 0.9) == 0.0
    with pytest.raises(ValueError):
        contour_area(FidelityLandscape(ax, ax, np.ones((5, 5))), 1.5)


def test_grid_refinement():
    for n in (30, 40):
        a, b = contour_area(scan(SQUARE, n=n), 0.9), contour_area(scan(SQUARE, n=2 * n), 0.9)
        assert abs(a - b) < 2 / n


def test_roc_central_box_and_area(maps):
    assert box_minimum(maps["roc"], 0.1, 0.1) >= 0.99
    area = {k: contour_area(m, 0.9) for k, m in maps.items()}
    assert area["roc"] > max(area["square"], area["corpse"], area["bb1"])


def test_roc_cut_flatter(roc):
    c_roc = detuning_cut(roc, 0.3, 121)[:, 1]
    c_sq = detuning_cut(SQUARE, 0.3, 121)[:, 1]
    assert c_roc.min() > c_sq.min()


def test_center_of_maps(maps):
    for m in maps.values():
        assert m.value_at(0, 0) >= 0.9999
        assert np.all((m.values >= 0) & (m.values <= 1))


def test_axis_extent_and_box(maps):
    sq = maps["square"]
    assert 0 < axis_extent(sq, 0.9, "rabi") < 1
    assert axis_extent(sq, 0.9, "detuning") == 1.0
    assert box_minimum(sq, 0.0, 0.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        axis_extent(sq, 0.9, "phase")


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1))
def test_values_bounded_for_random_waveforms(seed):
    rng = np.random.default_rng(seed)
    w = Waveform(1e-9, rng.uniform(-1, 1, 40) / 1.5, rng.uniform(-1, 1, 40) / 1.5, OMEGA)
    m = scan(w, n=9)
    assert np.all((m.values >= 0) & (m.values <= 1))


def test_csv_round_trip(tmp_path):
    m = scan(SQUARE, n=11)
    p = write_landscape_csv(m, tmp_path / "map.csv")
    first = p.read_text().splitlines()[0]
    assert first.startswith("# pulse=square rows=detuning cols=rabi")
    back = read_landscape_csv(p)
    assert back.pulse_label == "square" and back.omega_max == pytest.approx(OMEGA)
    assert np.allclose(back.values, m.values, rtol=1e-8)
    assert np.allclose(back.detuning_axis, m.detuning_axis, rtol=1e-8)
    c = write_cut_csv(detuning_cut(SQUARE, 1.0, 11), tmp_path / "cut.csv", "square")
    data = np.loadtxt(c, delimiter=",", skiprows=2)
    assert data.shape == (11, 2)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        scan(SQUARE, n=1)
    with pytest.raises(ValueError):
        FidelityLandscape(np.zeros(3), np.zeros(2), np.zeros((2, 3)))
