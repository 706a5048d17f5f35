"""Command-line entry point: ``rotwin analyze|simulate|rotations|validate``.

Exit codes: 0 success, 1 analysis error, 2 configuration or parse error.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .config import load_config
from .dataset_io import read_dataset, write_dataset
from .errors import ConfigurationError, RotwinError
from .hierarchy import build_rotation_set, format_order, validate_hierarchy
from .report import analyze
from .rng import make_rng
from .simgen import simulate_arms
from .study import emit_results, run_study


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    code = getattr(exc, "exit_code", 1)
    sys.exit(code)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Rotation win ratio, net benefit and win odds."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the JSON report here (text report still goes to stdout).")
@click.option("--seed", type=int, default=None, help="Bootstrap seed.")
@click.option("--bootstrap", "B", type=int, default=None, help="Bootstrap resamples.")
@click.option("--stratified/--unstratified", default=None)
@click.option("--exclude-undersized", is_flag=True,
              help="Drop strata with fewer than 2 subjects in an arm.")
def analyze_cmd(config_path, data_path, out_path, seed, B, stratified, exclude_undersized):
    """Analyze a dataset under the configured hierarchy."""
    try:
        cfg = load_config(config_path)
        if cfg.hierarchy is None:
            raise ConfigurationError(f"{config_path}: no [[endpoints]] defined")
        if exclude_undersized:
            cfg.exclude_undersized = True
        ds = read_dataset(data_path, cfg.specs)
        rep = analyze(ds, cfg, stratified=stratified, bootstrap=B, seed=seed)
    except RotwinError as exc:
        _fail(exc)
    if out_path:
        Path(out_path).write_text(rep.to_json())
    click.echo(rep.to_text(), nl=False)


main.add_command(analyze_cmd, "analyze")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output directory (results.csv, manifest.json).")
@click.option("--seed", type=int, default=None)
@click.option("--replicates", type=int, default=None)
@click.option("--paper-scale", is_flag=True, help="N=1200 (600 per arm), 5000 replicates.")
@click.option("--export-dataset", type=click.Path(), default=None,
              help="Write one simulated dataset of the first grid cell as CSV and exit.")
@click.option("--workers", type=int, default=None)
def simulate(config_path, out_path, seed, replicates, paper_scale, export_dataset, workers):
    """Run the configured Monte Carlo study."""
    try:
        cfg = load_config(config_path)
        study = cfg.simulation
        if study is None:
            raise ConfigurationError(f"{config_path}: no [simulation] table")
        if paper_scale:
            study = study.at_paper_scale()
        if seed is not None:
            study.seed = seed
        if replicates is not None:
            study.replicates = replicates
        if workers is not None:
            study.workers = workers
        if export_dataset:
            scenario = study.scenario(study.cells()[0])
            ds = simulate_arms(scenario, make_rng(study.seed, "data", 0, 0))
            write_dataset(ds, export_dataset)
            click.echo(f"wrote {export_dataset}")
            return
        result = run_study(study, progress=lambda i, c: logging.getLogger(__name__)
                           .info("cell %d done: %s", i, c))
        files = emit_results(result, out_path)
    except RotwinError as exc:
        _fail(exc)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for f in files:
        click.echo(f"wrote {f}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
def rotations(config_path):
    """Print the rotation set implied by the configured hierarchy."""
    try:
        cfg = load_config(config_path)
        if cfg.hierarchy is None:
            raise ConfigurationError(f"{config_path}: no [[endpoints]] defined")
        rs = build_rotation_set(cfg.hierarchy, cfg.rotation_cap)
    except RotwinError as exc:
        _fail(exc)
    labels = [s.id for s in cfg.specs]
    click.echo(f"{rs.p} rotation(s)")
    for k, order in enumerate(rs.orders, start=1):
        click.echo(f"{k}: {format_order(order, cfg.hierarchy, labels)}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--data", "data_path", type=click.Path(), default=None)
def validate(config_path, data_path):
    """Check a config (and optionally a dataset) without analyzing."""
    try:
        cfg = load_config(config_path)
        problems = []
        if cfg.hierarchy is not None:
            problems = validate_hierarchy(cfg.hierarchy, cfg.specs, cfg.rotation_cap)
        if problems:
            for p in problems:
                click.echo(f"invalid: {p}", err=True)
            sys.exit(2)
        if data_path:
            ds = read_dataset(data_path, cfg.specs)
            click.echo(f"data ok: {int(ds.treated.sum())} treated, "
                       f"{int((~ds.treated).sum())} control, "
                       f"{len(ds.stratum_labels())} stratum/strata")
    except RotwinError as exc:
        _fail(exc)
    click.echo("config ok")


if __name__ == "__main__":
    main()
