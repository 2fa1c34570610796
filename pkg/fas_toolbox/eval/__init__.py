"""Biometric metrics, cross-domain protocols, last-k averaging and report tables."""

from fas_toolbox.eval.metrics import MetricReport, acer, apcer_bpcer, auc, select_threshold
from fas_toolbox.eval.protocol import PROTOCOLS, ProtocolSpec, last_k_average, run_protocol, run_protocol_reports
from fas_toolbox.eval.report import format_row, render_table, write_csv
from fas_toolbox.eval.scores import ScoreSet, read_scores, write_scores

__all__ = [
    "PROTOCOLS",
    "MetricReport",
    "ProtocolSpec",
    "ScoreSet",
    "acer",
    "apcer_bpcer",
    "auc",
    "format_row",
    "last_k_average",
    "read_scores",
    "render_table",
    "run_protocol",
    "run_protocol_reports",
    "select_threshold",
    "write_csv",
    "write_scores",
]
