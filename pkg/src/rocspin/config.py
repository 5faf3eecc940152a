"""Run configuration: TOML file + ``section.key=value`` overrides.

Every physical quantity carries its unit in the key name. Frequencies in
``_mhz``/``_khz`` keys are cyclic (the angular value is 2*pi times larger).
"""

import copy
import os
import re
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; the message names the key or file line."""


DEFAULTS = {
    "global": {
        "seed": 0,
        "output_dir": "out",
        "threads": 0,  # 0 = available parallelism
        "plots": True,
    },
    "optimize": {
        "target_angle_deg": 180.0,
        "target_phase_deg": 0.0,
        "slice_count": 200,
        "dt_ns": 1.0,
        "omega_mhz": 10.0,
        "epsilon1_frac": 0.1,
        "epsilon2_frac": 0.1,
        "m_max": 3,
        "mu1": [[1.0, 0.0], [0.0, 1.0]],
        "mu2": 0.5,
        "mu3": 0.1,
        "mu4": 0.0,
        "max_iters": 1500,
        "fitness_goal": 0.996,
        "step_init": 1e-3,
        "stall_window": 200,
        "direction": "lbfgs",
        "smoothness": 0.0,
        "clamp_ends": False,
        "initial": "",
    },
    "scan": {
        "pulses": ["square", "corpse", "bb1", "roc"],
        "detuning_range_frac": 0.3,
        "rabi_range_frac": 0.3,
        "points": 61,
        "level": 0.9,
        "omega_mhz": 10.0,
        "dt_ns": 1.0,
        "cut_range_frac": 1.0,
        "cut_points": 201,
    },
    "rb": {
        "pulses": ["square", "bb1", "roc"],
        "detuning_frac": 0.1,
        "rabi_error_frac": 0.1,
        "lengths": [2, 4, 8, 16, 32, 64, 128],
        "n_groups": 10,
        "n_paulis": 4,
        "idle_identity": False,
        "omega_mhz": 10.0,
        "dt_ns": 1.0,
    },
    "fid": {
        "sigma_mhz": 0.226,
        "detuning_mhz": 2.0,
        "t_max_us": 3.0,
        "points": 151,
        "samples": 400000,
    },
    "rabi": {
        "t2prime_us": 50.01,
        "omega_mhz": 10.0,
        "t_max_us": 150.0,
        "points": 301,
        "samples": 300000,
    },
    "dd": {
        "sequence": "XY4",
        "repeats": 40,
        "b0_gauss": 510.0,
        "gamma_khz_per_gauss": 1.0705,
        "spins_khz": [[305.0, 136.0]],  # [a_par, a_perp] per spin
        "pulses": ["square", "roc"],
        "detuning_frac": 0.08,
        "rabi_error_frac": 0.08,
        "f_min_mhz": 0.4,
        "f_max_mhz": 1.6,
        "points": 721,
        "prominence": 0.02,
        "omega_mhz": 10.0,
        "dt_ns": 1.0,
    },
    "normalize": {
        "input": "",
        "c_min": "auto",
        "c_max": "auto",
    },
}

COMMANDS = tuple(k for k in DEFAULTS if k != "global")


def _type_ok(default, value):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        # "auto"-style defaults also accept numbers
        return isinstance(value, str) or (default == "auto" and isinstance(value, (int, float)))
    if isinstance(default, list):
        return isinstance(value, list)
    return True


def _coerce(default, value):
    if isinstance(default, float) and isinstance(value, int):
        return float(value)
    return value


def _line_of(text, section, key):
    """1-based line number of ``key`` inside ``[section]`` (best effort)."""
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"^\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"^{re.escape(key)}\s*=", stripped):
            return n
    return None


def merge(base, overrides, source="config", text=None):
    """Return ``base`` updated with ``overrides``; unknown keys are rejected."""
    out = copy.deepcopy(base)
    for section, values in overrides.items():
        if section not in out:
            raise ConfigError(f"{source}: unknown section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        for key, value in values.items():
            where = source
            if text is not None:
                line = _line_of(text, section, key)
                if line:
                    where = f"{source}:{line}"
            if key not in out[section]:
                raise ConfigError(f"{where}: unknown key '{section}.{key}'")
            default = DEFAULTS[section][key]
            if not _type_ok(default, value):
                raise ConfigError(f"{where}: '{section}.{key}' expects "
                                  f"{type(default).__name__}, got {value!r}")
            out[section][key] = _coerce(default, value)
    return out


def load(path=None, sets=()):
    """Resolve defaults <- file <- ``--set`` overrides (last wins)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        text = raw.decode("utf-8", errors="replace")
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = merge(cfg, data, str(path), text)
    for item in sets:
        cfg = merge(cfg, parse_set(item), f"--set {item}")
    return cfg


def parse_set(item):
    """``section.key=value`` with a TOML value; bare words are strings."""
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError(f"--set expects section.key=value, got {item!r}")
    lhs, rhs = item.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    try:
        value = tomllib.loads(f"v = {rhs.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = rhs.strip()
    return {section: {key: value}}


def thread_budget(cfg):
    n = int(cfg["global"]["threads"])
    if n < 0:
        raise ConfigError("global.threads must be >= 0")
    return n or (os.cpu_count() or 1)


def to_toml(cfg):
    """Serialize a resolved config (flat tables of scalars and lists)."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if isinstance(v, list):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        return repr(v)

    lines = []
    for section, values in cfg.items():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {fmt(v)}" for k, v in values.items())
        lines.append("")
    return "\n".join(lines)
