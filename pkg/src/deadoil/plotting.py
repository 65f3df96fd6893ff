"""Static figures for run directories (Agg backend, PNG without timestamps)."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# drop the version string so figures hash identically across runs
_META = {"Software": None}


def _save(fig, path):
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_field(path, grid, w, title=""):
    fig, ax = plt.subplots(figsize=(4.5, 3.8))
    im = ax.imshow(np.asarray(w).T, origin="lower", extent=(0, grid.Lx, 0, grid.Ly),
                   cmap="viridis", aspect="auto")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_history(path, histories):
    """Objective value per iteration; ``histories`` maps a label to a list of J."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, values in histories.items():
        ax.semilogy(range(len(values)), values, marker=".", label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("J")
    if len(histories) > 1:
        ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_convergence(path, spatial, temporal):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
    h = [r["h"] for r in spatial]
    a1.loglog(h, [r["err_u"] for r in spatial], "o-", label="u")
    a1.loglog(h, [r["err_p"] for r in spatial], "s-", label="p")
    a1.loglog(h, [spatial[0]["err_u"] * (x / h[0]) ** 2 for x in h], "k--", label="h^2")
    a1.set_xlabel("h")
    a1.set_ylabel("L2 error")
    a1.legend()
    dt = [r["dt"] for r in temporal]
    a2.loglog(dt, [r["diff_u"] for r in temporal], "o-", label="u")
    a2.loglog(dt, [r["diff_p"] for r in temporal], "s-", label="p")
    a2.loglog(dt, [temporal[0]["diff_u"] * x / dt[0] for x in dt], "k--", label="dt")
    a2.set_xlabel("dt")
    a2.set_ylabel("successive difference")
    a2.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_audit(path, rows):
    """Each audited quantity normalised by its finest-level value, against h."""
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(dict.fromkeys(r["quantity"] for r in rows))
    for name in names:
        sel = [r for r in rows if r["quantity"] == name]
        ref = sel[-1]["value"] or 1.0
        ax.plot([r["h"] for r in sel], [r["value"] / ref for r in sel], marker="o", lw=0.8)
    ax.axhspan(1 / 1.25, 1.25, color="0.9", zorder=0)
    ax.set_xscale("log")
    ax.set_xlabel("h")
    ax.set_ylabel("value / finest value")
    fig.tight_layout()
    return _save(fig, path)
