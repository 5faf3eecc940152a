"""Named pulse families: square, CORPSE, BB1 and the shipped ROC pulses."""

from importlib import resources
from pathlib import Path

import numpy as np

from .pulses import DEFAULT_DT, DEFAULT_OMEGA, bb1, corpse, read_waveform, square_pulse

BUILTIN = ("square", "corpse", "bb1", "roc")
_ROC_FILES = {"pi": "roc_pi.txt", "pi2": "roc_pi2.txt"}


def shipped_roc(kind="pi"):
    """ROC waveform bundled with the package (Omega = 2pi x 10 MHz, dt = 1 ns)."""
    ref = resources.files("rocspin") / "data" / _ROC_FILES[kind]
    with resources.as_file(ref) as path:
        return read_waveform(path, label="roc")


def _check_roc(w, omega, dt):
    if not (np.isclose(w.omega_max, omega) and np.isclose(w.dt, dt)):
        raise ValueError("the shipped ROC pulses were synthesized for "
                         f"omega={w.omega_max:.6g} rad/s, dt={w.dt:.3g} s; "
                         "supply a waveform file for other settings")
    return w


def pulse(name, theta=np.pi, omega=DEFAULT_OMEGA, dt=DEFAULT_DT):
    """Waveform for ``(theta)_0`` by family name or waveform file path."""
    if name == "square":
        return square_pulse(theta, 0.0, omega, dt).with_label("square")
    if name == "corpse":
        return corpse(theta, omega, dt).with_label("corpse")
    if name == "bb1":
        return bb1(theta, omega, dt).with_label("bb1")
    if name == "roc":
        if np.isclose(theta, np.pi):
            return _check_roc(shipped_roc("pi"), omega, dt)
        if np.isclose(theta, np.pi / 2):
            return _check_roc(shipped_roc("pi2"), omega, dt)
        raise ValueError(f"no shipped ROC pulse for angle {theta}")
    path = Path(name)
    if path.exists():
        return read_waveform(path)
    raise ValueError(f"unknown pulse family or missing file: {name!r}")


def family(name, omega=DEFAULT_OMEGA, dt=DEFAULT_DT):
    """``{"pi": ..., "pi2": ...}`` for a named family.

    A path may be given as ``"pi_file,pi2_file"``.
    """
    if "," in name:
        pi_path, pi2_path = (s.strip() for s in name.split(",", 1))
        return {"pi": read_waveform(pi_path), "pi2": read_waveform(pi2_path)}
    return {"pi": pulse(name, np.pi, omega, dt), "pi2": pulse(name, np.pi / 2, omega, dt)}


def family_label(name):
    return Path(name.split(",")[0]).stem if name not in BUILTIN else name
