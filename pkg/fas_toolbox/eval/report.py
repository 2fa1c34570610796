"""CSV and table output of metric reports; table cells are percentages with two decimals."""

from __future__ import annotations

import csv
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from fas_toolbox.errors import OutputError
from fas_toolbox.eval.metrics import MetricReport

CSV_COLUMNS = ("protocol", "mode", "apcer", "bpcer", "acer", "auc", "threshold", "stability_gap")


def percent(value: float) -> str:
    return f"{value * 100:.2f}"


def format_cell(acer: float, auc: float, gap: float | None = None) -> str:
    """"ACER / AUC", or "ACER(gap) / AUC" when a stability gap is given."""
    head = percent(acer) if gap is None else f"{percent(acer)}({percent(gap)})"
    return f"{head} / {percent(auc)}"


def format_row(report: MetricReport) -> str:
    return format_cell(report.acer, report.auc, report.stability_gap if report.mode == "last_k" else None)


def mode_label(report: MetricReport) -> str:
    return f"last_{report.k}" if report.mode == "last_k" else report.mode


def write_csv(reports: Sequence[MetricReport], path: str | Path, header: str | None = None) -> Path:
    csv_path = Path(path)
    try:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with csv_path.open("w", newline="", encoding="utf-8") as f:
            if header:
                f.write(header + "\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for report in reports:
                writer.writerow([
                    report.protocol,
                    mode_label(report),
                    f"{report.apcer:.6f}",
                    f"{report.bpcer:.6f}",
                    f"{report.acer:.6f}",
                    f"{report.auc:.6f}",
                    f"{report.threshold:.6f}",
                    "" if report.stability_gap is None else f"{report.stability_gap:.6f}",
                ])
    except OSError as e:
        raise OutputError(f"Failed to write report {csv_path.as_posix()}: {e}") from e
    return csv_path


def render_table(reports: Sequence[MetricReport]) -> str:
    """Markdown table with one row per reporting mode, one column per protocol and an Average column."""
    protocols = list(dict.fromkeys(report.protocol for report in reports))
    modes = list(dict.fromkeys(mode_label(report) for report in reports))
    by_key = {(mode_label(report), report.protocol): report for report in reports}

    lines = [
        "| Mode | " + " | ".join(protocols) + " | Average |",
        "|---" * (len(protocols) + 2) + "|",
    ]
    for mode in modes:
        row = [by_key.get((mode, protocol)) for protocol in protocols]
        present = [report for report in row if report is not None]
        cells = [format_row(report) if report is not None else "-" for report in row]
        gaps = [report.stability_gap for report in present if report.mode == "last_k" and report.stability_gap is not None]
        average = format_cell(
            float(np.mean([report.acer for report in present])),
            float(np.mean([report.auc for report in present])),
            float(np.mean(gaps)) if gaps else None,
        )
        lines.append(f"| {mode} | " + " | ".join(cells) + f" | {average} |")
    return "\n".join(lines) + "\n"


def write_table(reports: Sequence[MetricReport], path: str | Path, header: str | None = None) -> Path:
    table_path = Path(path)
    text = (f"<!-- {header.lstrip('# ')} -->\n" if header else "") + render_table(reports)
    try:
        table_path.parent.mkdir(parents=True, exist_ok=True)
        table_path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise OutputError(f"Failed to write table {table_path.as_posix()}: {e}") from e
    return table_path
