"""State-transfer robustness maps of pi pulses over detuning x Rabi error."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pulses import Waveform, transfer_population


@dataclass(frozen=True)
class FidelityLandscape:
    detuning_axis: np.ndarray  # rad/s
    rabi_axis: np.ndarray  # fractional
    values: np.ndarray  # [detuning, rabi]
    pulse_label: str = ""
    omega_max: float = 1.0

    def __post_init__(self):
        shape = (len(self.detuning_axis), len(self.rabi_axis))
        if np.shape(self.values) != shape:
            raise ValueError(f"values shape {np.shape(self.values)} does not match axes {shape}")

    def value_at(self, detuning, rabi):
        i = int(np.argmin(np.abs(self.detuning_axis - detuning)))
        j = int(np.argmin(np.abs(self.rabi_axis - rabi)))
        return float(self.values[i, j])


def _axis(half_range, n):
    if n < 2:
        raise ValueError("need at least 2 grid points per axis")
    return np.linspace(-half_range, half_range, n)


def scan(w: Waveform, detuning_range=0.3, rabi_range=0.3, n=61, target_level=1):
    """Transfer fidelity |<target|U|0>|^2 on an n x n grid.

    ``detuning_range`` is a fraction of ``w.omega_max``; ``rabi_range`` is
    the fractional amplitude error.
    """
    det = _axis(detuning_range, n) * w.omega_max
    rabi = _axis(rabi_range, n)
    d0, d1 = np.meshgrid(det, rabi, indexing="ij")
    if target_level == 1:
        values = transfer_population(w, (d0, d1, np.zeros_like(d0)))
    else:
        values = 1 - transfer_population(w, (d0, d1, np.zeros_like(d0)))
    values = np.clip(values, 0.0, 1.0)
    return FidelityLandscape(det, rabi, values, w.label, w.omega_max)


def detuning_cut(w: Waveform, detuning_range=1.0, n=201):
    """Fidelity along delta1 = 0 for |detuning| <= detuning_range * omega_max."""
    det = _axis(detuning_range, n) * w.omega_max
    fid = transfer_population(w, (det, np.zeros_like(det), np.zeros_like(det)))
    return np.column_stack([det, np.clip(fid, 0.0, 1.0)])


def contour_area(landscape, level):
    """Fraction of grid cells with fidelity >= ``level``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return float(np.mean(np.asarray(landscape.values) >= level))


def axis_extent(landscape, level, axis="detuning"):
    """Fraction of the central cut (other error zero) with fidelity >= ``level``."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    v = np.asarray(landscape.values)
    if axis == "detuning":
        cut = v[:, int(np.argmin(np.abs(landscape.rabi_axis)))]
    elif axis == "rabi":
        cut = v[int(np.argmin(np.abs(landscape.detuning_axis))), :]
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return float(np.mean(cut >= level))


def box_minimum(landscape, detuning_half, rabi_half):
    """Minimum fidelity over |detuning| <= detuning_half*omega, |rabi| <= rabi_half."""
    rows = np.abs(landscape.detuning_axis) <= detuning_half * landscape.omega_max * (1 + 1e-12)
    cols = np.abs(landscape.rabi_axis) <= rabi_half * (1 + 1e-12)
    return float(np.asarray(landscape.values)[np.ix_(rows, cols)].min())


def curvature_at_zero(w: Waveform, half_width=0.02, n=21):
    """Second derivative of transfer fidelity w.r.t. detuning/omega at 0 (quadratic fit)."""
    x = np.linspace(-half_width, half_width, n)
    fid = transfer_population(w, (x * w.omega_max, np.zeros_like(x), np.zeros_like(x)))
    return float(2 * np.polyfit(x, fid, 2)[0])


def write_landscape_csv(landscape, path):
    """Row-major CSV; the first row holds the Rabi axis, the first column the
    detuning axis (rad/s), the corner the column count."""
    path = Path(path)
    lines = [f"# pulse={landscape.pulse_label} rows=detuning cols=rabi "
             f"omega_max_radps={landscape.omega_max!r}"]
    lines.append(",".join([str(len(landscape.rabi_axis))]
                          + [f"{v:.9g}" for v in landscape.rabi_axis]))
    for d, row in zip(landscape.detuning_axis, landscape.values):
        lines.append(",".join([f"{d:.9g}"] + [f"{v:.9g}" for v in row]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_landscape_csv(path):
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing landscape header")
    header = dict(item.split("=", 1) for item in text[0].lstrip("#").split() if "=" in item)
    rows = [np.array(line.split(","), dtype=float) for line in text[1:] if line.strip()]
    rabi = rows[0][1:]
    det = np.array([r[0] for r in rows[1:]])
    values = np.array([r[1:] for r in rows[1:]])
    return FidelityLandscape(det, rabi, values, header.get("pulse", ""),
                             float(header.get("omega_max_radps", 1.0)))


def write_cut_csv(cut, path, label=""):
    path = Path(path)
    lines = [f"# pulse={label}", "detuning_radps,fidelity"]
    lines.extend(f"{d:.9g},{f:.9g}" for d, f in cut)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
