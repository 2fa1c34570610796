"""Desk-scale end-to-end runs of the detector with and without synthesized samples."""

import json
import statistics

import pytest
from typer.testing import CliRunner

from fas_toolbox.cli import app

runner = CliRunner()


def _run(*args: str) -> dict:
    result = runner.invoke(app, list(args))
    assert result.exit_code == 0, result.output
    return json.loads([line for line in result.stdout.splitlines() if line.startswith("{")][-1])


def _test_auc(out: str, seed: int, manifest: str, synthetic: bool) -> float:
    flag = "--synthetic" if synthetic else "--no-synthetic"
    common = ["--seed", str(seed), "--out", out]
    trained = _run(*common, "train-pmn", "--manifest", manifest, "--protocol", "A→B", flag)
    report = _run(*common, "evaluate", "--score-dir", trained["score_dir"], "--protocol", "A→B", "--mode", "last10")
    return report["reports"][0]["auc"]


@pytest.mark.slow
def test_synthesized_samples_help_unseen_domain(tmp_path):
    """Test training on A with converted samples generalizes better to B than without them."""
    base = (tmp_path / "seed0").as_posix()
    _run("--out", base, "synth-data")
    pcgan = _run("--out", base, "train-pcgan", "--protocol", "A→B")
    converted = _run("--out", base, "convert", "--checkpoint", pcgan["checkpoint"], "--protocol", "A→B")

    with_syn, without_syn = [], []
    for seed in (0, 1, 2):
        out = (tmp_path / f"pmn{seed}").as_posix()
        with_syn.append(_test_auc(out, seed, converted["merged"], synthetic=True))
        without_syn.append(_test_auc(out, seed, converted["merged"], synthetic=False))

    assert statistics.median(without_syn) > 0.80
    assert statistics.median(with_syn) > 0.80
    assert statistics.median(with_syn) - statistics.median(without_syn) >= 0.03
