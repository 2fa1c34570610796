from __future__ import annotations

import functools
import json
import re
import sys
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import click
import typer

from fas_toolbox.app import RunContext
from fas_toolbox.artifactviz.figure import write_artifact_figures
from fas_toolbox.config import Config
from fas_toolbox.cost import cost_report
from fas_toolbox.datapipe.crop import prepare_face
from fas_toolbox.datapipe.manifest import load_manifest, load_sample, write_manifest
from fas_toolbox.datapipe.merge import merge_sets, replace_live
from fas_toolbox.datapipe.synthetic import MANIFEST_NAME, make_synthetic_benchmark
from fas_toolbox.datapipe.types import DatasetManifest, Provenance
from fas_toolbox.errors import FasToolboxError, ProtocolError, UsageError
from fas_toolbox.eval.protocol import ProtocolSpec, epoch_metrics, summarize
from fas_toolbox.eval.report import format_row, mode_label, write_csv, write_table
from fas_toolbox.log import logger
from fas_toolbox.pcgan.convert import convert_manifest, inject_artifact, plan_pairs, remove_artifact
from fas_toolbox.pcgan.trainer import load_pcgan, train_pcgan
from fas_toolbox.pmn.trainer import train_pmn

MERGED_MANIFEST = "merged.tsv"

app = typer.Typer(no_args_is_help=True, help="Face anti-spoofing with artifact pattern conversion.")


@dataclass
class GlobalOptions:
    config_file: Path | None = None
    seed: int | None = None
    profile: str | None = None
    out: Path | None = None


def _config(ctx: typer.Context, **sections: dict[str, Any]) -> Config:
    """Load the config with the global flags and per-command section overrides; None values are left out."""
    options: GlobalOptions = ctx.obj or GlobalOptions()
    overrides: dict[str, Any] = {}
    for name, values in sections.items():
        kept = {key: value for key, value in values.items() if value is not None}
        if kept:
            overrides[name] = kept
    return Config.load(
        options.config_file,
        options.profile,
        seed=options.seed,
        output_root=options.out.as_posix() if options.out else None,
        **overrides,
    )


def _protocol(config: Config, name: str | None) -> ProtocolSpec:
    epochs = config.pmn.epochs
    return ProtocolSpec.parse(
        name or config.eval.protocol,
        epochs=epochs,
        averaging=config.eval.averaging,
        k=min(config.eval.k, epochs),
    )


def _slug(spec: ProtocolSpec) -> str:
    return spec.name.replace("→", "-").replace(",", "")


def _benchmark_manifest(context: RunContext, path: Path | None, prefer_merged: bool = False) -> DatasetManifest:
    if path is not None:
        return load_manifest(path)
    root = context.output_dir / "benchmark"
    merged = root / MERGED_MANIFEST
    return load_manifest(merged if prefer_merged and merged.is_file() else root / MANIFEST_NAME)


@contextmanager
def _run_log(directory: Path) -> Iterator[None]:
    directory.mkdir(parents=True, exist_ok=True)
    handler = logger.add(directory / "run.log", level="INFO")
    try:
        yield
    finally:
        logger.remove(handler)


def _reported(func: Callable[..., dict[str, Any]]) -> Callable[..., None]:
    """Print the command result, or the error, as one JSON line; errors exit with their code."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            result = func(*args, **kwargs)
        except FasToolboxError as e:
            logger.error(f"{type(e).__name__}: {e}")
            typer.echo(json.dumps(e.to_dict(), default=str))
            raise typer.Exit(e.exit_code) from e
        typer.echo(json.dumps({"success": True, **result}, default=str))

    return wrapper


@app.callback()
def options(
    ctx: typer.Context,
    config: Path | None = typer.Option(None, "--config", help="TOML file with per-module sections"),
    seed: int | None = typer.Option(None, "--seed", help="Seed of every stochastic operation"),
    profile: str | None = typer.Option(None, "--profile", help="desk_scale or paper_scale"),
    out: Path | None = typer.Option(None, "--out", help="Output root, defaults to FAS_TOOLBOX_OUTPUT_ROOT or ./runs"),
):
    ctx.obj = GlobalOptions(config_file=config, seed=seed, profile=profile, out=out)


@app.command("synth-data")
@_reported
def synth_data(
    ctx: typer.Context,
    dest: Path | None = typer.Option(None, help="Benchmark directory, defaults to <out>/benchmark"),
) -> dict[str, Any]:
    """Render the synthetic moiré benchmark and its manifest."""
    context = RunContext.create(_config(ctx))
    root = dest or context.output_dir / "benchmark"
    manifest = make_synthetic_benchmark(context.config.synth, context.seed, root, header=context.header())
    return {"manifest": (manifest.root / MANIFEST_NAME).as_posix(), **manifest.metadata}


@app.command("train-pcgan")
@_reported
def train_pcgan_command(
    ctx: typer.Context,
    manifest: Path | None = typer.Option(None, help="Benchmark manifest, defaults to <out>/benchmark/manifest.tsv"),
    protocol: str | None = typer.Option(None, help="Train on this protocol's source domains"),
    iterations: int | None = typer.Option(None, help="Override pcgan.iterations"),
    resume: Path | None = typer.Option(None, help="Checkpoint to continue from"),
    force: bool = typer.Option(False, help="Resume even if the config hash differs"),
) -> dict[str, Any]:
    """Train the pattern conversion GAN on the source domains."""
    context = RunContext.create(_config(ctx, pcgan={"iterations": iterations}))
    spec = _protocol(context.config, protocol)
    source = _benchmark_manifest(context, manifest).filter(
        domains=set(spec.train_domains), provenance=Provenance.original
    )
    out_dir = context.output_dir / "pcgan"
    with _run_log(out_dir):
        state, final_path = train_pcgan(source, context, out_dir, resume=resume, force=force)
    return {
        "checkpoint": final_path.as_posix(),
        "iterations": state.iteration,
        "losses": (out_dir / "pcgan_losses.csv").as_posix(),
        **context.provenance(),
    }


@app.command()
@_reported
def convert(
    ctx: typer.Context,
    checkpoint: Path | None = typer.Option(None, help="PCGAN checkpoint, defaults to <out>/pcgan/checkpoints/pcgan_final.pt"),
    manifest: Path | None = typer.Option(None, help="Benchmark manifest"),
    protocol: str | None = typer.Option(None, help="Convert this protocol's source domains"),
    direction: str | None = typer.Option(None, help="both, spoof_to_live or live_to_spoof"),
    replace_live_data: bool | None = typer.Option(None, "--replace-live/--keep-live", help="Drop real lives from training"),
    force: bool = typer.Option(False, help="Load the checkpoint even if its config hash differs"),
) -> dict[str, Any]:
    """Synthesize attacks and lives by swapping artifact patterns, then write the merged manifest."""
    config = _config(ctx, convert={"direction": direction, "replace_live": replace_live_data})
    context = RunContext.create(config)
    spec = _protocol(config, protocol)
    model = load_pcgan(
        checkpoint or context.output_dir / "pcgan" / "checkpoints" / "pcgan_final.pt",
        config.pcgan,
        config_hash=context.config_hash,
        force=force,
    )
    original = _benchmark_manifest(context, manifest)
    source = original.filter(domains=set(spec.train_domains), provenance=Provenance.original)
    synthetic = convert_manifest(source, model, config, context.output_dir / "synthetic", header=context.header())

    combine = replace_live if config.convert.replace_live else merge_sets
    training = combine(source, synthetic)
    held_out = original.filter(domains=set(original.domain_histogram) - set(spec.train_domains))
    merged = DatasetManifest(name="merged", root=original.root, entries=[*training.entries, *held_out.entries])
    merged_path = write_manifest(merged, original.root / MERGED_MANIFEST, header=context.header())
    return {
        "synthetic": (synthetic.root / "synthetic.tsv").as_posix(),
        "merged": merged_path.as_posix(),
        "synthetic_labels": synthetic.label_histogram,
        "merged_labels": merged.label_histogram,
    }


@app.command("train-pmn")
@_reported
def train_pmn_command(
    ctx: typer.Context,
    manifest: Path | None = typer.Option(None, help="Merged manifest, defaults to <out>/benchmark/merged.tsv"),
    protocol: str | None = typer.Option(None, help="Leave-one-out protocol, e.g. 'AB→C' or 'AB->C'"),
    alpha: float | None = typer.Option(None, help="Weight of the center loss"),
    beta: float | None = typer.Option(None, help="Weight of the l2 penalty"),
    epochs: int | None = typer.Option(None, help="Override pmn.epochs"),
    synthetic: bool | None = typer.Option(None, "--synthetic/--no-synthetic", help="Train with synthesized samples"),
    resume: Path | None = typer.Option(None, help="Checkpoint to continue from"),
    force: bool = typer.Option(False, help="Resume even if the config hash differs"),
) -> dict[str, Any]:
    """Train the detector and score the held-out domain after every epoch."""
    config = _config(ctx, pmn={"alpha": alpha, "beta": beta, "epochs": epochs, "use_synthetic": synthetic})
    context = RunContext.create(config)
    spec = _protocol(config, protocol)
    data = _benchmark_manifest(context, manifest, prefer_merged=True)
    out_dir = context.output_dir / "pmn" / (_slug(spec) + ("" if config.pmn.use_synthetic else "_nosyn"))
    with _run_log(out_dir):
        state, final_path = train_pmn(data, spec, context, out_dir, resume=resume, force=force)
    return {
        "checkpoint": final_path.as_posix(),
        "score_dir": (out_dir / "scores").as_posix(),
        "epochs": state.epoch,
        "alpha": config.pmn.alpha,
        "beta": config.pmn.beta,
        "use_synthetic": config.pmn.use_synthetic,
        **context.provenance(),
    }


def _parse_mode(mode: str, default_k: int) -> tuple[list[str], int]:
    """"both", "best" or "last<k>" to the averaging modes to report and the window size."""
    if mode == "both":
        return ["best_epoch", "last_k"], default_k
    if mode == "best":
        return ["best_epoch"], default_k
    match = re.fullmatch(r"last(\d+)", mode)
    if match is None or int(match.group(1)) < 1:
        raise UsageError(f"--mode must be 'both', 'best' or 'last<k>', got {mode!r}")
    return ["last_k"], int(match.group(1))


def _score_epochs(score_dir: Path) -> int:
    numbers = [int(match.group(1)) for path in score_dir.glob("epoch_*.scores") if (match := re.fullmatch(r"epoch_(\d+)\.scores", path.name))]
    if not numbers:
        raise ProtocolError(f"no epoch score files in {score_dir.as_posix()}")
    return max(numbers)


@app.command()
@_reported
def evaluate(
    ctx: typer.Context,
    score_dir: Path | None = typer.Option(None, help="Directory of epoch_<n>.scores files"),
    protocol: str | None = typer.Option(None, help="Protocol the scores belong to"),
    mode: str = typer.Option("both", help="both, best or last<k> (e.g. last10)"),
    threshold_rule: str | None = typer.Option(None, help="eer or fixed"),
) -> dict[str, Any]:
    """Best-epoch and last-k reports with the stability gap."""
    config = _config(ctx, eval={"threshold_rule": threshold_rule})
    context = RunContext.create(config)
    name = protocol or config.eval.protocol
    directory = score_dir or context.output_dir / "pmn" / _slug(ProtocolSpec.parse(name, k=1)) / "scores"
    epochs = _score_epochs(directory)
    modes, k = _parse_mode(mode, config.eval.k)
    if mode == "both" and k > epochs:
        logger.warning(f"Only {epochs} epochs available, averaging the last {epochs} instead of {k}")
        k = epochs
    spec = ProtocolSpec.parse(name, epochs=epochs, averaging=modes[-1], k=k)

    rule = config.eval.threshold_rule
    series = epoch_metrics(spec, directory, rule, config.eval.fixed_threshold, workers=config.data.workers)
    reports = [summarize(spec, series, averaging, rule) for averaging in modes]
    report_dir = context.output_dir / "reports"
    csv_path = write_csv(reports, report_dir / f"{_slug(spec)}.csv", header=context.header())
    table_path = write_table(reports, report_dir / f"{_slug(spec)}.md", header=context.header())
    return {
        "protocol": spec.name,
        "epochs": epochs,
        "rows": {mode_label(report): format_row(report) for report in reports},
        "reports": [report.model_dump(exclude={"per_epoch"}) for report in reports],
        "csv": csv_path.as_posix(),
        "table": table_path.as_posix(),
    }


@app.command()
@_reported
def viz(
    ctx: typer.Context,
    checkpoint: Path | None = typer.Option(None, help="PCGAN checkpoint"),
    manifest: Path | None = typer.Option(None, help="Benchmark manifest"),
    pairs: int = typer.Option(4, min=1, help="Number of (live, attack) pairs to render"),
    domain: str | None = typer.Option(None, help="Only pairs from this domain"),
    force: bool = typer.Option(False, help="Load the checkpoint even if its config hash differs"),
) -> dict[str, Any]:
    """Conversion figures with Hough line overlays and Sobel panels."""
    config = _config(ctx)
    context = RunContext.create(config)
    model = load_pcgan(
        checkpoint or context.output_dir / "pcgan" / "checkpoints" / "pcgan_final.pt",
        config.pcgan,
        config_hash=context.config_hash,
        force=force,
    )
    source = _benchmark_manifest(context, manifest)
    source = source.filter(domains={domain} if domain else None, provenance=Provenance.original)
    inject, _ = plan_pairs(source, config.convert.model_copy(update={"direction": "live_to_spoof"}), config.seed)
    if not inject:
        raise UsageError("no (live, attack) pairs to visualize")

    out_dir = context.output_dir / "viz"
    figures = []
    for index, (live_entry, attack_entry) in enumerate(inject[:pairs]):
        live, attack = (
            prepare_face(load_sample(source, entry), config.data.padding, model.image_size)
            for entry in (live_entry, attack_entry)
        )
        images = {
            "live": live.image,
            "attack": attack.image,
            "injected": inject_artifact(live, attack, model).image,
            "removed": remove_artifact(attack, live, model).image,
        }
        figures.append(write_artifact_figures(images, config.viz, out_dir / f"pair_{index:03d}"))
    return {"figures": figures}


@app.command()
@_reported
def cost(ctx: typer.Context) -> dict[str, Any]:
    """Parameter and multiply-accumulate counts for the configured profile."""
    config = _config(ctx)
    return {"profile": config.profile, "models": cost_report(config)}


def main() -> None:
    try:
        code = app(standalone_mode=False)
    except click.ClickException as e:
        typer.echo(json.dumps({"success": False, "kind": "usage", "error": e.format_message()}))
        sys.exit(UsageError.exit_code)
    except click.Abort:
        sys.exit(UsageError.exit_code)
    sys.exit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
