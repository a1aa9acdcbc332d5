from __future__ import annotations

import os
import csv
import logging

from typing import Dict, List, Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import (  # noqa: E402
    CONVENTIONS,
    SUCCESS_THRESHOLDS,
    PRECISION_THRESHOLDS,
    MetricReport,
)

log = logging.getLogger(__name__)

PER_FRAME_FILENAME = "per_frame.csv"
SUMMARY_FILENAME = "summary.csv"

SUMMARY_COLUMNS = ("name", "frames", "precision20", "norm_precision", "success_auc", "mean_iou")


def write_per_frame(path: str, report: MetricReport) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("frame", "cle", "iou"))

        for index, (cle, iou) in enumerate(zip(report.cle, report.iou)):
            writer.writerow((index, f"{cle:.4f}", f"{iou:.6f}"))


def write_summary(path: str, reports: Mapping[str, MetricReport]) -> None:
    """One row per named report, preceded by # lines stating the threshold conventions."""

    with open(path, "w", newline="") as f:
        for line in CONVENTIONS:
            f.write(f"# {line}\n")

        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)

        for name, report in reports.items():
            summary = report.summary()
            writer.writerow(
                [name, int(summary["frames"])]
                + [f"{summary[key]:.6f}" for key in SUMMARY_COLUMNS[2:]]
            )


def read_summary(path: str) -> Dict[str, Dict[str, float]]:
    with open(path, "r") as f:
        rows = list(csv.DictReader(line for line in f if not line.startswith("#")))

    return {row["name"]: {k: float(v) for k, v in row.items() if k != "name"} for row in rows}


def plot_curves(out_dir: str, reports: Mapping[str, MetricReport]) -> List[str]:
    """precision.svg and success.svg with one line per report."""

    paths = []

    for filename, title, xlabel, thresholds, curve, score in (
        (
            "precision.svg",
            "Precision plot",
            "Location error threshold (px)",
            PRECISION_THRESHOLDS,
            lambda r: r.precision_curve,
            lambda r: r.precision20,
        ),
        (
            "success.svg",
            "Success plot",
            "Overlap threshold",
            SUCCESS_THRESHOLDS,
            lambda r: r.success_curve,
            lambda r: r.success_auc,
        ),
    ):
        fig, ax = plt.subplots()

        for name, report in reports.items():
            ax.plot(thresholds, curve(report), label=f"{name} [{score(report):.3f}]")

        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("Rate")
        ax.set_ylim(0.0, 1.05)
        ax.grid(True)
        ax.legend(loc="best")

        path = os.path.join(out_dir, filename)
        fig.savefig(path, format="svg")
        plt.close(fig)

        paths.append(path)

    log.debug(f"saved plots {paths}")

    return paths


def write_report(out_dir: str, name: str, report: MetricReport, plots: bool = True) -> None:
    os.makedirs(out_dir, exist_ok=True)

    write_per_frame(os.path.join(out_dir, PER_FRAME_FILENAME), report)
    write_summary(os.path.join(out_dir, SUMMARY_FILENAME), {name: report})

    if plots:
        plot_curves(out_dir, {name: report})

    log.info(
        f"{name}: precision20 {report.precision20:.3f}, norm precision "
        f"{report.norm_precision:.3f}, success auc {report.success_auc:.3f}"
    )
