"""Static figures written next to the CSV outputs (matplotlib, Agg backend)."""

import numpy as np


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    _plt().close(fig)
    return path


def landscapes(maps, path, level=0.9):
    plt = _plt()
    fig, axes = plt.subplots(1, len(maps), figsize=(3.2 * len(maps), 3.2), squeeze=False)
    for ax, (name, m) in zip(axes[0], maps.items()):
        det = m.detuning_axis / m.omega_max
        im = ax.pcolormesh(m.rabi_axis, det, m.values, vmin=0, vmax=1, shading="auto")
        ax.contour(m.rabi_axis, det, m.values, levels=[level], colors="w", linewidths=1)
        ax.set_title(name)
        ax.set_xlabel("Rabi error")
        ax.set_ylabel("detuning / Omega")
    fig.colorbar(im, ax=axes[0].tolist(), shrink=0.8)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def cuts(curves, path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, (x, y) in curves.items():
        ax.plot(x, y, label=name)
    ax.set_xlabel("detuning / Omega")
    ax.set_ylabel("transfer fidelity")
    ax.legend()
    return _save(fig, path)


def waveform(w, path):
    plt = _plt()
    t = np.arange(len(w)) * w.dt * 1e9
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.step(t, w.ux, where="post", label="ux")
    ax.step(t, w.uy, where="post", label="uy")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("amplitude")
    ax.legend()
    return _save(fig, path)


def trace(values, path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3))
    v = np.asarray(values)
    ax.semilogy(np.arange(len(v)), np.clip(1 - v, 1e-12, None))
    ax.set_xlabel("iteration")
    ax.set_ylabel("1 - fitness")
    return _save(fig, path)


def rb_curves(curves, path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    from .rb import rb_model
    for name, c in curves.items():
        ax.errorbar(c.lengths, c.mean_fidelities, yerr=c.std_errors, fmt="o", ms=3, label=name)
        if c.fit is not None:
            x = np.linspace(0, max(c.lengths), 200)
            ax.plot(x, rb_model(x, c.fit.F_a, c.fit.d_if), lw=1)
    ax.set_xlabel("sequence length")
    ax.set_ylabel("mean fidelity")
    ax.legend()
    return _save(fig, path)


def decay(t, data, model, path, xlabel="time (us)"):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(t, data, ".", ms=2, label="Monte Carlo")
    ax.plot(t, model, lw=1, label="closed form")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("population")
    ax.legend()
    return _save(fig, path)


def spectra(specs, path, marks=()):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, s in specs.items():
        ax.plot(s.frequency_axis / 1e6, s.population, lw=1, label=name)
    for f in marks:
        ax.axvline(f / 1e6, color="k", lw=0.5, ls=":")
    ax.set_xlabel("f = 1/(4 tau) (MHz)")
    ax.set_ylabel("|1> population")
    ax.legend()
    return _save(fig, path)


def normalized(x, p, path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(x, p, "o-", ms=3)
    ax.set_xlabel("x")
    ax.set_ylabel("population")
    return _save(fig, path)
