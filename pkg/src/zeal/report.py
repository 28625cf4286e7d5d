"""Figure rendering for the sweep reports.

Each sweep writes a delimited table; these helpers render the matching
figure next to it. Rendering is optional (the CLI's --no-figures keeps runs
table-only) and deterministic: fixed backend, fixed style, no timestamps.
"""

from __future__ import annotations


def _axes():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=120)
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path)
    import matplotlib.pyplot as plt
    plt.close(fig)


def render_error_sweep(rows: list[dict], path: str) -> None:
    """|relative error| per trial, grouped by privacy budget and bias."""
    fig, ax = _axes()
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        if row["rel_delta_avg"] == "":
            continue
        key = (float(row["epsilon"]), float(row["abar"]))
        groups.setdefault(key, []).append(abs(float(row["rel_delta_avg"])))
    keys = sorted(groups)
    positions = range(1, len(keys) + 1)
    ax.boxplot([groups[k] for k in keys], positions=list(positions), widths=0.6)
    ax.set_xticks(list(positions))
    ax.set_xticklabels([f"{eps:g}\n{abar:.3g}" for eps, abar in keys], fontsize=7)
    ax.set_xlabel("privacy budget / bias")
    ax.set_ylabel("|relative average error|")
    ax.set_yscale("log")
    _save(fig, path)


def render_bound_check(rows: list[dict], path: str) -> None:
    """Empirical exceedance frequency against the analytic bounds."""
    fig, ax = _axes()
    lam = [float(r["lambda"]) for r in rows]
    ax.plot(lam, [float(r["empirical_p"]) for r in rows], "o-",
            label="empirical", markersize=3)
    ax.plot(lam, [float(r["bound_abs"]) for r in rows], "s--",
            label="bound (absolute)", markersize=3)
    rel = [(x, float(r["bound_rel"])) for x, r in zip(lam, rows) if r["bound_rel"]]
    if rel:
        ax.plot([x for x, _ in rel], [y for _, y in rel], "^:",
                label="bound (relative)", markersize=3)
    ax.set_xscale("log")
    ax.set_yscale("symlog", linthresh=1e-12)
    ax.set_xlabel("error threshold")
    ax.set_ylabel("P(|average error| >= threshold)")
    ax.legend()
    _save(fig, path)


def render_trcr_sweep(rows: list[dict], path: str) -> None:
    """Transmission/compression ratios and error against the bias magnitude."""
    fig, ax = _axes()
    planned = [r for r in rows if r["tr"] != ""]
    with_err = [r for r in rows if r["rel_delta_avg"] != ""]
    ax.plot([abs(float(r["abar"])) or 1.0 for r in planned],
            [float(r["tr"]) for r in planned], "o-", label="TR", markersize=3)
    ax.plot([abs(float(r["abar"])) or 1.0 for r in planned],
            [float(r["cr_priv"]) for r in planned], "s-", label="CR", markersize=3)
    ax.plot([abs(float(r["abar"])) or 1.0 for r in with_err],
            [min(abs(float(r["rel_delta_avg"])), 10.0) for r in with_err], "^:",
            label="|relative error|", markersize=3)
    ax.plot([abs(float(r["abar"])) or 1.0 for r in rows],
            [min(abs(float(r["f_estimate"])), 10.0) for r in rows], "x--",
            label="|precision estimate|", markersize=3)
    ax.set_xscale("log")
    ax.set_yscale("symlog", linthresh=1e-12)
    ax.set_xlabel("|bias|")
    ax.legend(fontsize=8)
    _save(fig, path)


def figure_path(csv_path: str) -> str:
    """PNG path next to a CSV output."""
    if csv_path.endswith(".csv"):
        return csv_path[:-4] + ".png"
    return csv_path + ".png"
