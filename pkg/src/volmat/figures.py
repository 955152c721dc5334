"""Figure rendering for benchmark reports.

Uses matplotlib's object API directly (no pyplot, no global state), so
rendering works headless and never touches an interactive backend.
"""

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .simulate import BenchmarkReport

__all__ = ["render_benchmark_figure"]

_MARKERS = ("o", "s", "^", "v", "D", "P", "X", "*")


def render_benchmark_figure(report: BenchmarkReport, path: str, dpi: int = 150) -> None:
    """Plot mean relative error against noise level, one line per estimator.

    Error bars show one Monte Carlo standard error.  The figure is written
    to ``path`` (format inferred from the extension).
    """
    fig = Figure(figsize=(7.0, 4.5))
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(111)

    by_estimator: dict[str, list] = {}
    for row in report.rows:
        by_estimator.setdefault(row.estimator, []).append(row)

    for idx, (name, rows) in enumerate(by_estimator.items()):
        rows = sorted(rows, key=lambda r: r.theta)
        thetas = [r.theta for r in rows]
        means = [r.mre_mean for r in rows]
        errs = [r.mre_se for r in rows]
        ax.errorbar(
            thetas, means, yerr=errs,
            marker=_MARKERS[idx % len(_MARKERS)],
            markersize=4, capsize=2, linewidth=1.2, label=name,
        )

    cfg = report.config
    ax.set_xlabel(r"relative noise level $\theta$")
    ax.set_ylabel("mean relative spectral-norm error")
    ax.set_title(f"n = {cfg.n}, p = {cfg.p}, {cfg.reps} repetitions")
    ax.legend(frameon=False)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
