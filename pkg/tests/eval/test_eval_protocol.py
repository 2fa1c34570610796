"""Tests for cross-domain protocols, epoch averaging and report output."""

import csv

import numpy as np
import pytest

from fas_toolbox.errors import ProtocolError, UsageError
from fas_toolbox.eval.metrics import EpochMetrics, MetricReport
from fas_toolbox.eval.protocol import (
    ProtocolSpec,
    best_epoch,
    last_k_average,
    run_protocol,
    run_protocol_reports,
    score_file_name,
    summarize,
)
from fas_toolbox.eval.report import format_cell, format_row, render_table, write_csv, write_table
from fas_toolbox.eval.scores import ScoreSet, write_scores


def _series(acers: list[float]) -> list[EpochMetrics]:
    return [
        EpochMetrics(epoch=epoch, apcer=value, bpcer=value, acer=value, auc=0.97, threshold=0.5)
        for epoch, value in enumerate(acers, start=1)
    ]


def _write_epoch(directory, epoch: int, attack_scores: list[float], live_scores: list[float]) -> None:
    scores = ScoreSet.from_arrays([*attack_scores, *live_scores], [1] * len(attack_scores) + [0] * len(live_scores))
    n = len(scores)
    scores = scores.model_copy(update={"paths": [f"C/{i:03d}.png" for i in range(n)], "domains": ["C"] * n})
    write_scores(scores, directory / score_file_name(epoch))


def test_parse_protocol_names():
    """Test arrow spellings, catalogue protocols and multi-letter domains."""
    spec = ProtocolSpec.parse("AB->C")
    assert spec.name == "AB→C"
    assert spec.train_domains == frozenset({"A", "B"})
    assert spec.test_domain == "C"
    assert spec.benchmark is None

    catalogue = ProtocolSpec.parse("OCI→M")
    assert catalogue.benchmark == "omic"
    assert catalogue.dataset_names["M"] == "MSU-MFSD"

    assert ProtocolSpec.parse("cefa,surf→wmca").train_domains == frozenset({"cefa", "surf"})


def test_parse_protocol_errors():
    """Test malformed names, leaked test domains and oversize k."""
    for name in ["ABC", "→C", "AB→", "A→B→C", "AB→A"]:
        with pytest.raises(UsageError):
            ProtocolSpec.parse(name)
    with pytest.raises(UsageError):
        ProtocolSpec.parse("AB→C", epochs=5, k=10)


def test_best_epoch_earliest_on_ties():
    """Test the minimum-ACER epoch wins and ties go to the earlier epoch."""
    assert best_epoch(_series([0.3, 0.1, 0.2, 0.1])).epoch == 2
    with pytest.raises(UsageError):
        best_epoch([])


def test_last_k_window():
    """Test last-10 over 11 epochs averages epochs 2 to 11."""
    series = _series([epoch / 100 for epoch in range(1, 12)])
    mean, gap = last_k_average(series, 10)
    assert mean.acer == pytest.approx(np.mean(range(2, 12)) / 100)
    assert mean.epoch == 11
    assert gap == pytest.approx(mean.acer - 0.01)
    with pytest.raises(UsageError):
        last_k_average(series, 12)


def test_stability_gap_cell():
    """Test a twelve-epoch run whose last ten epochs sit 5.71 points above its best epoch."""
    series = _series([0.10, 0.025, *[0.0821] * 10])
    spec = ProtocolSpec.parse("AB→C", epochs=12, k=10)
    report = summarize(spec, series, "last_k")
    assert report.stability_gap == pytest.approx(0.0571)
    assert report.best_epoch == 2
    assert format_row(report) == "8.21(5.71) / 97.00"

    best = summarize(spec, series, "best_epoch")
    assert best.stability_gap is None
    assert format_row(best) == "2.50 / 97.00"


def test_format_cell():
    """Test percentage formatting with and without the gap."""
    assert format_cell(0.025, 0.9935) == "2.50 / 99.35"
    assert format_cell(0.0821, 0.9710, 0.0571) == "8.21(5.71) / 97.10"


def test_run_protocol_from_files(tmp_path):
    """Test metrics over per-epoch score files."""
    _write_epoch(tmp_path, 1, [0.9, 0.4], [0.6, 0.1])
    _write_epoch(tmp_path, 2, [0.9, 0.8], [0.2, 0.1])
    _write_epoch(tmp_path, 3, [0.9, 0.3], [0.2, 0.1])
    spec = ProtocolSpec.parse("AB→C", epochs=3, k=2)

    best, last = run_protocol_reports(spec, tmp_path, rule="fixed", fixed_threshold=0.5)
    assert best.mode == "best_epoch" and best.best_epoch == 2 and best.acer == 0.0
    assert last.mode == "last_k" and last.k == 2
    assert last.acer == pytest.approx(0.125)
    assert last.stability_gap == pytest.approx(0.125)
    assert [item.epoch for item in last.per_epoch] == [1, 2, 3]

    assert run_protocol(spec, tmp_path, rule="fixed").acer == pytest.approx(0.125)


def test_run_protocol_ignores_other_domains(tmp_path):
    """Test only test-domain records enter the metrics."""
    scores = ScoreSet.from_arrays([0.9, 0.1, 0.1, 0.9], [1, 0, 1, 0])
    scores = scores.model_copy(update={"paths": ["c1", "c2", "a1", "a2"], "domains": ["C", "C", "A", "A"]})
    write_scores(scores, tmp_path / score_file_name(1))
    report = run_protocol(ProtocolSpec.parse("AB→C", epochs=1, k=1), tmp_path, rule="fixed")
    assert report.acer == 0.0 and report.auc == 1.0


def test_missing_epoch_file(tmp_path):
    """Test a gap in the epoch files is a protocol error naming the epoch."""
    _write_epoch(tmp_path, 1, [0.9], [0.1])
    _write_epoch(tmp_path, 3, [0.9], [0.1])
    with pytest.raises(ProtocolError) as excinfo:
        run_protocol(ProtocolSpec.parse("AB→C", epochs=3, k=1), tmp_path)
    assert excinfo.value.detail == {"epoch": 2}


def test_missing_test_domain(tmp_path):
    """Test an epoch file without test-domain records is refused."""
    _write_epoch(tmp_path, 1, [0.9], [0.1])
    with pytest.raises(ProtocolError, match="test domain D"):
        run_protocol(ProtocolSpec.parse("AB→D", epochs=1, k=1), tmp_path)


def test_report_outputs(tmp_path):
    """Test CSV and markdown report files."""
    reports = [
        MetricReport(protocol="AB→C", mode="best_epoch", apcer=0.0, bpcer=0.05, acer=0.025, auc=0.9935, threshold=0.5),
        MetricReport(
            protocol="AB→C",
            mode="last_k",
            k=10,
            apcer=0.1,
            bpcer=0.0642,
            acer=0.0821,
            auc=0.971,
            threshold=0.5,
            stability_gap=0.0571,
        ),
        MetricReport(protocol="AC→B", mode="best_epoch", apcer=0.0, bpcer=0.0, acer=0.0, auc=0.9965, threshold=0.4),
    ]
    csv_path = write_csv(reports, tmp_path / "report.csv", header="# fas-toolbox seed=0")
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# fas-toolbox seed=0"
    rows = list(csv.reader(lines[1:]))
    assert rows[0][:3] == ["protocol", "mode", "apcer"]
    assert rows[2][1] == "last_10"
    assert rows[2][-1] == "0.057100"
    assert rows[1][-1] == ""

    table = render_table(reports)
    assert table.splitlines()[0] == "| Mode | AB→C | AC→B | Average |"
    assert "| best_epoch | 2.50 / 99.35 | 0.00 / 99.65 | 1.25 / 99.50 |" in table
    assert "| last_10 | 8.21(5.71) / 97.10 | - | 8.21(5.71) / 97.10 |" in table

    table_path = write_table(reports, tmp_path / "report.md", header="# fas-toolbox seed=0")
    assert table_path.read_text(encoding="utf-8").startswith("<!-- fas-toolbox seed=0 -->\n")


def test_reports_ignore_record_order(tmp_path):
    """Test shuffled score files give identical best-epoch and last-k reports."""
    rng = np.random.default_rng(4)
    ordered, shuffled = tmp_path / "ordered", tmp_path / "shuffled"
    ordered.mkdir()
    shuffled.mkdir()
    for epoch in range(1, 5):
        n = 30
        labels = np.array([1, 0] * (n // 2))
        values = np.round(rng.random(n), 2)
        domains = ["C"] * 20 + ["A"] * 10
        scores = ScoreSet.from_arrays(values, labels).model_copy(
            update={"paths": [f"{domains[i]}/{i:03d}.png" for i in range(n)], "domains": domains}
        )
        write_scores(scores, ordered / score_file_name(epoch))
        order = rng.permutation(n)
        permuted = ScoreSet(
            scores=[scores.scores[i] for i in order],
            labels=[scores.labels[i] for i in order],
            paths=[scores.paths[i] for i in order],
            domains=[scores.domains[i] for i in order],
        )
        write_scores(permuted, shuffled / score_file_name(epoch))

    spec = ProtocolSpec.parse("AB→C", epochs=4, k=3)
    for rule in ("eer", "fixed"):
        assert run_protocol_reports(spec, shuffled, rule) == run_protocol_reports(spec, ordered, rule)
        assert run_protocol(spec, shuffled, rule) == run_protocol(spec, ordered, rule)
