"""Command-line runner: ``rocspin <command> [--config FILE] [--set k=v ...]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(non-convergence, unidentifiable fit), 4 I/O error.
"""

import argparse
import datetime
import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod
from .config import ConfigError

log = logging.getLogger("rocspin")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
TWO_PI = 2 * np.pi


class NumericalFailure(RuntimeError):
    pass


class Outputs:
    """Tracks files written by one run so a failed run can remove them."""

    def __init__(self, root):
        self.root = Path(root)
        self.paths = []

    def path(self, name):
        p = self.root / name
        self.paths.append(p)
        return p

    def remove(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass

    def write_json(self, name, body):
        p = self.path(name)
        p.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p

    def write_csv(self, name, header, rows, fmt="{:.9g}"):
        p = self.path(name)
        lines = [",".join(header)]
        lines.extend(",".join(fmt.format(v) for v in row) for row in rows)
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return p


def _omega(section):
    return TWO_PI * section["omega_mhz"] * 1e6


def _dt(section):
    return section["dt_ns"] * 1e-9


def _map(cfg, fn, items):
    """Order-preserving parallel map bounded by the thread budget."""
    workers = min(cfgmod.thread_budget(cfg), max(len(items), 1))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _plot(cfg, fn, *args):
    if cfg["global"]["plots"]:
        fn(*args)


# -- commands ------------------------------------------------------------------

def cmd_optimize(cfg, out):
    from .pulses import read_waveform, write_waveform
    from .quantum import rotation
    from .roc import RocConfig, optimize
    from . import plotting

    s = cfg["optimize"]
    omega = _omega(s)
    mu = {}
    for order in range(1, 5):
        w = s[f"mu{order}"]
        if np.any(np.asarray(w, dtype=float) != 0):
            mu[order] = w
    try:
        rc = RocConfig(
            target=rotation(np.deg2rad(s["target_angle_deg"]), np.deg2rad(s["target_phase_deg"])),
            slice_count=s["slice_count"], dt=_dt(s), omega_max=omega,
            epsilon1=s["epsilon1_frac"] * omega, epsilon2=s["epsilon2_frac"],
            m_max=s["m_max"], mu=mu, max_iters=s["max_iters"],
            fitness_goal=s["fitness_goal"], step_init=s["step_init"],
            stall_window=s["stall_window"], direction=s["direction"],
            smoothness=s["smoothness"], clamp_ends=s["clamp_ends"],
            seed=cfg["global"]["seed"])
    except ValueError as exc:
        raise ConfigError(f"optimize: {exc}") from None
    initial = read_waveform(s["initial"]) if s["initial"] else None
    res = optimize(rc, initial)
    wpath = out.path("roc_waveform.txt")
    write_waveform(res.waveform, wpath)
    out.write_csv("fitness_trace.csv", ["iteration", "fitness"],
                  [(k, v) for k, v in enumerate(res.fitness_trace)], fmt="{:.12g}")
    out.write_json("optimize_result.json", {
        "final_fitness": res.final_fitness, "converged": res.converged,
        "iterations": res.iterations})
    _plot(cfg, plotting.waveform, res.waveform, out.path("roc_waveform.png"))
    _plot(cfg, plotting.trace, res.fitness_trace, out.path("fitness_trace.png"))
    log.info("final fitness %.6f after %d iterations", res.final_fitness, res.iterations)
    if not res.converged:
        raise NumericalFailure(f"fitness goal {rc.fitness_goal} not reached "
                               f"(best {res.final_fitness:.6f})")


def cmd_scan(cfg, out):
    from . import families, landscape, plotting

    s = cfg["scan"]
    omega, dt = _omega(s), _dt(s)
    try:
        waves = [(families.family_label(n), families.pulse(n, np.pi, omega, dt)) for n in s["pulses"]]
    except ValueError as exc:
        raise ConfigError(f"scan.pulses: {exc}") from None

    def work(item):
        name, w = item
        m = landscape.scan(w, s["detuning_range_frac"], s["rabi_range_frac"], s["points"])
        cut = landscape.detuning_cut(w, s["cut_range_frac"], s["cut_points"])
        return name, m, cut

    results = _map(cfg, work, waves)
    summary = {}
    for name, m, cut in results:
        landscape.write_landscape_csv(m, out.path(f"landscape_{name}.csv"))
        landscape.write_cut_csv(cut, out.path(f"cut_{name}.csv"), name)
        summary[name] = {
            "contour_area": landscape.contour_area(m, s["level"]),
            "detuning_extent": landscape.axis_extent(m, s["level"], "detuning"),
            "rabi_extent": landscape.axis_extent(m, s["level"], "rabi"),
            "center": m.value_at(0.0, 0.0),
        }
    out.write_json("scan_summary.json", {"level": s["level"], "pulses": summary})
    _plot(cfg, plotting.landscapes, {n: m for n, m, _ in results}, out.path("landscapes.png"), s["level"])
    _plot(cfg, plotting.cuts, {n: (c[:, 0] / omega, c[:, 1]) for n, _, c in results},
          out.path("cuts.png"))


def cmd_rb(cfg, out):
    from . import families, plotting
    from .pulses import ErrorPoint
    from .rb import generate_rb_suite, fit_rb, simulate_rb

    s = cfg["rb"]
    omega, dt = _omega(s), _dt(s)
    try:
        fams = [(families.family_label(n), families.family(n, omega, dt)) for n in s["pulses"]]
        suite = generate_rb_suite(s["lengths"], s["n_groups"], s["n_paulis"], cfg["global"]["seed"])
        err = ErrorPoint(s["detuning_frac"] * omega, s["rabi_error_frac"])
    except ValueError as exc:
        raise ConfigError(f"rb: {exc}") from None

    def work(item):
        name, fam = item
        curve = simulate_rb(suite, fam, err, idle_identity=s["idle_identity"])
        curve.fit = fit_rb(curve.lengths, curve.mean_fidelities)
        return name, curve

    curves = dict(_map(cfg, work, fams))
    bad = []
    for name, c in curves.items():
        out.write_csv(f"rb_{name}.csv", ["length", "mean_fidelity", "std_error"],
                      zip(c.lengths, c.mean_fidelities, c.std_errors))
        out.write_json(f"rb_{name}_fit.json", c.fit.as_dict())
        if not c.fit.identifiable:
            bad.append(name)
        log.info("%s: F_a = %.6f +- %.2g", name, c.fit.F_a, c.fit.F_a_err)
    _plot(cfg, plotting.rb_curves, curves, out.path("rb.png"))
    if bad:
        raise NumericalFailure(f"RB fit unidentifiable for {bad}")


def cmd_fid(cfg, out):
    from . import noise, plotting

    s = cfg["fid"]
    sigma = noise.sigma_from_mhz(s["sigma_mhz"])
    delta = TWO_PI * s["detuning_mhz"] * 1e6
    t = np.linspace(0, s["t_max_us"] * 1e-6, s["points"])
    ens = noise.NoiseEnsemble(noise.GaussianDetuning(sigma), sample_count=s["samples"],
                              seed=cfg["global"]["seed"])
    mc = noise.fid_monte_carlo(t, delta, ens)
    model = noise.fid_probability(t, delta, sigma)
    try:
        t2, t2_err, d_fit = noise.fit_t2star(t, mc, delta)
    except RuntimeError as exc:
        raise NumericalFailure(f"T2* fit failed: {exc}") from None
    out.write_csv("fid.csv", ["t_s", "population_mc", "population_model"], zip(t, mc, model))
    out.write_json("fid_fit.json", {
        "t2star_s": t2, "t2star_err_s": t2_err, "detuning_fit_radps": d_fit,
        "sigma_fit_radps": float(noise.sigma_from_t2star(t2)),
        "t2star_expected_s": float(np.sqrt(2) / sigma) if sigma > 0 else None})
    _plot(cfg, plotting.decay, t * 1e6, mc, model, out.path("fid.png"))
    log.info("T2* = %.4f us", t2 * 1e6)


def cmd_rabi(cfg, out):
    from . import noise, plotting

    s = cfg["rabi"]
    omega = _omega(s)
    gamma = noise.gamma_from_t2prime(s["t2prime_us"] * 1e-6)
    t = np.linspace(0, s["t_max_us"] * 1e-6, s["points"])
    ens = noise.NoiseEnsemble(rabi=noise.LorentzianRabi(gamma), sample_count=s["samples"],
                              seed=cfg["global"]["seed"])
    mc = noise.rabi_monte_carlo(t, omega, ens)
    model = noise.rabi_probability(t, omega, gamma)
    try:
        t2p, t2p_err = noise.fit_t2prime(t, mc, omega)
    except RuntimeError as exc:
        raise NumericalFailure(f"T2' fit failed: {exc}") from None
    out.write_csv("rabi.csv", ["t_s", "population_mc", "population_model"], zip(t, mc, model))
    out.write_json("rabi_fit.json", {
        "t2prime_s": t2p, "t2prime_err_s": t2p_err,
        "gamma_fit_radps": float(noise.gamma_from_t2prime(t2p)),
        "t2prime_expected_s": s["t2prime_us"] * 1e-6})
    _plot(cfg, plotting.decay, t * 1e6, mc, model, out.path("rabi.png"))
    log.info("T2' = %.3f us", t2p * 1e6)


def cmd_dd(cfg, out):
    from . import dd, families, plotting
    from .pulses import ErrorPoint

    s = cfg["dd"]
    omega, dt = _omega(s), _dt(s)
    try:
        spins = tuple(dd.NuclearSpinParams.from_components(TWO_PI * a * 1e3, TWO_PI * b * 1e3)
                      for a, b in s["spins_khz"])
        fams = [(families.family_label(n), families.family(n, omega, dt)) for n in s["pulses"]]
        base = dict(spins=spins, b0_gauss=s["b0_gauss"],
                    gamma_n=TWO_PI * s["gamma_khz_per_gauss"] * 1e3,
                    sequence=s["sequence"], repeats=s["repeats"],
                    err=ErrorPoint(s["detuning_frac"] * omega, s["rabi_error_frac"]),
                    f_min=s["f_min_mhz"] * 1e6, f_max=s["f_max_mhz"] * 1e6, points=s["points"])
        cfgs = [(name, dd.SensingConfig(family=fam, **base)) for name, fam in fams]
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"dd: {exc}") from None

    def work(item):
        name, sc = item
        spec = dd.simulate_spectrum(sc)
        spec.peaks = dd.detect_peaks(spec, s["prominence"])
        background = dd.simulate_spectrum(replace(sc, spins=()))
        return name, (spec, background)

    results = dict(_map(cfg, work, cfgs))
    specs = {name: spec for name, (spec, _) in results.items()}
    marks = []
    if spins:
        w0 = dd.effective_frequency(spins[0], cfgs[0][1].omega_l) / TWO_PI
        marks = [w0, 2 * w0]
    for name, (spec, background) in results.items():
        dd.write_spectrum_csv(spec, out.path(f"dd_{name}.csv"))
        extra = {"expected_resonance_hz": marks[0] if marks else None,
                 "expected_second_harmonic_hz": marks[1] if marks else None}
        if marks:
            # spin imprint relative to the electron-only signal, +-3 linewidths
            half = 3 * dd.linewidth(cfgs[0][1], marks[1])
            extra["resonance_response"] = dd.response_amplitude(spec, background, marks[0], half)
            extra["second_harmonic_response"] = dd.response_amplitude(
                spec, background, marks[1], half)
        dd.write_peaks_json(spec.peaks, out.path(f"dd_{name}_peaks.json"), extra)
    _plot(cfg, plotting.spectra, specs, out.path("dd.png"), marks)


def cmd_normalize(cfg, out):
    from . import plotting, readout

    s = cfg["normalize"]
    if not s["input"]:
        raise ConfigError("normalize.input: a count-record CSV path is required")
    try:
        xs, recs = readout.read_count_records(s["input"])
    except FileNotFoundError:
        raise OSError(f"cannot read {s['input']}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cs, dcs = np.array([readout.contrast(r) for r in recs]).T
    c_min = float(cs.min()) if s["c_min"] == "auto" else float(s["c_min"])
    c_max = float(cs.max()) if s["c_max"] == "auto" else float(s["c_max"])
    try:
        ps, in_range = readout.normalize_population(cs, c_min, c_max)
    except ValueError as exc:
        raise ConfigError(f"normalize: {exc}") from None
    readout.write_normalized_csv(out.path("normalized.csv"), xs, cs, dcs, ps)
    out.write_json("normalize_calibration.json",
                   {"c_min": c_min, "c_max": c_max, "in_range": in_range})
    _plot(cfg, plotting.normalized, xs, ps, out.path("normalized.png"))


COMMANDS = {
    "optimize": cmd_optimize, "scan": cmd_scan, "rb": cmd_rb, "fid": cmd_fid,
    "rabi": cmd_rabi, "dd": cmd_dd, "normalize": cmd_normalize,
}


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out, command, cfg, status, message=""):
    artifacts = {p.name: _sha256(p) for p in out.paths if p.exists()}
    body = {
        "command": command,
        "version": __version__,
        "seed": cfg["global"]["seed"],
        "status": status,
        "message": message,
        "config": cfg,
        "artifacts": artifacts,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    path = out.root / f"manifest_{command}.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="TOML configuration file")
    common.add_argument("-s", "--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable; wins over the file)")
    common.add_argument("-o", "--out", help="output directory (global.output_dir)")
    common.add_argument("--seed", type=int, help="random seed (global.seed)")
    common.add_argument("--threads", type=int, help="thread budget (global.threads)")
    common.add_argument("--no-plots", action="store_true", help="skip PNG rendering")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="rocspin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "optimize": "synthesize a robust pulse", "scan": "robustness landscapes",
        "rb": "randomized benchmarking", "fid": "free-induction decay calibration",
        "rabi": "Rabi decay calibration", "dd": "dynamical-decoupling spectra",
        "normalize": "photon counts to populations",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    sub.add_parser("defaults", help="print the default configuration as TOML")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "defaults":
        sys.stdout.write(cfgmod.to_toml(cfgmod.DEFAULTS))
        return EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    sets = list(args.set)
    for key, flag in (("output_dir", args.out), ("seed", args.seed), ("threads", args.threads)):
        if flag is not None:
            sets.append(f"global.{key}={json.dumps(flag)}")
    if args.no_plots:
        sets.append("global.plots=false")
    try:
        cfg = cfgmod.load(args.config, sets)
        cfgmod.thread_budget(cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    root = Path(cfg["global"]["output_dir"])
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create %s: %s", root, exc)
        return EXIT_IO
    out = Outputs(root)
    status, code, message = "ok", EXIT_OK, ""
    try:
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        out.remove()
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        status, code, message = "numerical_failure", EXIT_NUMERIC, str(exc)
        log.error("%s", exc)
    except OSError as exc:
        out.remove()
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except Exception:
        out.remove()
        raise
    try:
        write_manifest(out, args.command, cfg, status, message)
    except OSError as exc:
        out.remove()
        log.error("I/O error writing manifest: %s", exc)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
