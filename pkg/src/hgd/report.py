"""Evaluation reports: ranked-retrieval metrics as text, CSV, and figures.

One call evaluates a distance matrix under a protocol and renders the
results four ways: a human-readable text table, a one-row CSV whose
parse round-trips the values, a CMC curve plot, and a histogram of
genuine against impostor distances. The figure files are rendered
headlessly so the command-line path works without a display.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .evaluation import CmcProtocol, DistanceMatrix, cmc, mean_ap, pur

__all__ = [
    "REPORT_RANKS",
    "EvalReport",
    "evaluate",
    "format_text",
    "format_csv",
    "parse_csv",
    "write_report",
]

REPORT_RANKS = (1, 5, 10, 20)


@dataclass(frozen=True)
class EvalReport:
    """Summary metrics of one evaluation run."""

    rank_scores: tuple[float, ...]
    pur_score: float
    map_score: float
    curve: np.ndarray
    valid_probes: int
    excluded_probes: int
    gallery_identities: int
    protocol: CmcProtocol


def evaluate(
    dm: DistanceMatrix, protocol: CmcProtocol | None = None
) -> EvalReport:
    """CMC at the report ranks, PUR, and mean average precision."""
    protocol = protocol or CmcProtocol()
    result = cmc(dm, protocol)
    identities = len(set(dm.gallery_ids))
    return EvalReport(
        rank_scores=tuple(result.at(r) for r in REPORT_RANKS),
        pur_score=pur(result.curve, identities),
        map_score=mean_ap(dm),
        curve=result.curve,
        valid_probes=result.valid_probes,
        excluded_probes=result.excluded_probes,
        gallery_identities=identities,
        protocol=protocol,
    )


def format_text(report: EvalReport) -> str:
    """The report as an aligned text table."""
    head = "  ".join(f"r={r}" .rjust(7) for r in REPORT_RANKS)
    row = "  ".join(f"{100.0 * s:6.2f}%" for s in report.rank_scores)
    lines = [
        f"protocol: {report.protocol.shot}-shot"
        + (
            f" (collapse={report.protocol.collapse})"
            if report.protocol.shot == "multi"
            else ""
        ),
        f"probes: {report.valid_probes} scored, {report.excluded_probes} excluded",
        f"gallery identities: {report.gallery_identities}",
        "",
        head,
        row,
        "",
        f"PUR: {report.pur_score:.4f}",
        f"mAP: {report.map_score:.4f}",
    ]
    return "\n".join(lines) + "\n"


def format_csv(report: EvalReport) -> str:
    """One header row and one value row; full float precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"r={r}" for r in REPORT_RANKS] + ["PUR", "mAP"])
    writer.writerow(
        [repr(float(s)) for s in report.rank_scores]
        + [repr(float(report.pur_score)), repr(float(report.map_score))]
    )
    return buf.getvalue()


def parse_csv(text: str) -> dict[str, float]:
    """Read back a report CSV into a column -> value mapping."""
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) != 2 or len(rows[0]) != len(rows[1]):
        raise FormatError("report CSV must hold one header and one value row")
    try:
        return {key: float(val) for key, val in zip(rows[0], rows[1])}
    except ValueError as exc:
        raise FormatError(f"bad report CSV value: {exc}")


def _render_figures(report: EvalReport, dm: DistanceMatrix, out_dir: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cmc_path = out_dir / "cmc.png"
    fig, ax = plt.subplots(figsize=(6, 4))
    ranks = np.arange(1, report.curve.shape[0] + 1)
    ax.step(ranks, 100.0 * report.curve, where="post")
    for r, s in zip(REPORT_RANKS, report.rank_scores):
        if r <= ranks[-1]:
            ax.plot([r], [100.0 * s], "o", color="tab:orange")
    ax.set_xlabel("rank")
    ax.set_ylabel("matching rate (%)")
    ax.set_title("cumulative matching characteristic")
    ax.set_ylim(0.0, 105.0)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(cmc_path, dpi=120)
    plt.close(fig)

    hist_path = out_dir / "distance_hist.png"
    same = np.equal.outer(dm.probe_ids, dm.gallery_ids)
    genuine = dm.values[same]
    impostor = dm.values[~same]
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = np.histogram_bin_edges(dm.values.ravel(), bins=40)
    if genuine.size:
        ax.hist(genuine, bins=bins, alpha=0.6, density=True, label="genuine")
    if impostor.size:
        ax.hist(impostor, bins=bins, alpha=0.6, density=True, label="impostor")
    ax.set_xlabel("distance")
    ax.set_ylabel("density")
    ax.set_title("genuine vs impostor distances")
    ax.legend()
    fig.tight_layout()
    fig.savefig(hist_path, dpi=120)
    plt.close(fig)
    return cmc_path, hist_path


def write_report(
    report: EvalReport, dm: DistanceMatrix, out_dir: str | Path
) -> dict[str, Path]:
    """Write report.txt, report.csv, cmc.png, and distance_hist.png."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    text_path = out_dir / "report.txt"
    text_path.write_text(format_text(report))
    csv_path = out_dir / "report.csv"
    csv_path.write_text(format_csv(report))
    cmc_path, hist_path = _render_figures(report, dm, out_dir)
    return {
        "text": text_path,
        "csv": csv_path,
        "cmc": cmc_path,
        "hist": hist_path,
    }
