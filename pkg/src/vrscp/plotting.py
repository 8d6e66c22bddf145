"""LCI curve figures written straight to image files."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_reports(reports, path, title=None):
    """One line per report (LCI against probes), mean shown dashed."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=100)
    for rep in reports:
        (line,) = ax.plot(rep.probes, rep.lci, label=f"{rep.algorithm} (PR={rep.pr:.4g})")
        if rep.mean is not None and len(rep.mean) and rep.mean[0] == rep.mean[0]:
            ax.plot(rep.probes, rep.mean, linestyle="--", color=line.get_color(), alpha=0.5)
    ax.set_xlabel("system probes")
    ax.set_ylabel("return (lower confidence bound)")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path
