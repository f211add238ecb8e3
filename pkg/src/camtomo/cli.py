#!/usr/bin/env python3
"""Command-line interface for camtomo."""

import json
import logging
import os
import sys
from typing import Any, Dict, Optional

import click
import yaml

from camtomo.conditions.condition_checker import validate
from camtomo.harness.experiment import ExperimentConfig, run_convergence, run_roundtrip
from camtomo.harness.plot_data import emit_plot_data
from camtomo.harness.selftest import run_selftest
from camtomo.inversion.reconstruction import reconstruct_grid
from camtomo.transform.forward import project
from camtomo.transform.sinogram import Sinogram
from camtomo.utils.config import Config
from camtomo.utils.errors import ConditionViolation, StageError
from camtomo.utils.presets import PresetManager

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

logger = logging.getLogger("camtomo")


def _configure_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False


def exit_code(error: BaseException) -> int:
    """Process exit code for an exception raised by a command."""
    cause = error.cause if isinstance(error, StageError) else error
    if isinstance(error, StageError) and error.stage == "validate":
        return EXIT_VALIDATION
    if isinstance(cause, ConditionViolation):
        return EXIT_VALIDATION
    if isinstance(cause, OSError):
        return EXIT_IO
    return EXIT_ERROR


def _fail(action: str, error: Exception) -> None:
    click.echo(f"Error {action}: {str(error)}", err=True)
    sys.exit(exit_code(error))


def _overrides(
    eps0: Optional[float],
    levels: Optional[int],
    grid: Optional[int],
    points: Optional[int],
    seed: Optional[int],
    workers: Optional[int],
    output: Optional[str],
) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if eps0 is not None:
        overrides.setdefault("schedule", {})["eps0"] = eps0
    if levels is not None:
        overrides.setdefault("schedule", {})["levels"] = levels
    if grid is not None:
        overrides.setdefault("grids", {})["surface"] = grid
    if points is not None:
        overrides.setdefault("evaluation", {})["points"] = points
    if seed is not None:
        overrides["seed"] = seed
    if workers is not None:
        overrides["workers"] = workers
    if output is not None:
        overrides["output"] = {"directory": output}
    return overrides


def load_experiment(source: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Experiment from a YAML file, or from a preset name when no such file exists."""
    if os.path.isfile(source):
        cfg = ExperimentConfig.from_file(source)
    else:
        cfg = ExperimentConfig.from_mapping(PresetManager(Config()).apply_preset(source))
    return cfg.with_overrides(overrides) if overrides else cfg


def experiment_options(command: Any) -> Any:
    """Shared overrides of the experiment file."""
    options = [
        click.option("--eps0", type=float, help="Largest regularization eps in units of h"),
        click.option("--levels", type=int, help="Number of eps levels"),
        click.option("--grid", type=int, help="Surface grid cells per axis"),
        click.option("--points", type=int, help="Evaluation points per axis"),
        click.option("--seed", type=int, help="Sampling seed"),
        click.option("--workers", "-w", type=int, help="Worker threads"),
        click.option("--output", "-o", help="Output directory"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def main(verbose):
    """camtomo: tangent-section Funk-Radon transforms of a cam, and their inversion.

    CONFIG arguments are experiment YAML files or preset names.
    """
    _configure_logging(verbose)


@main.command("validate")
@click.argument("config")
@click.option("--format", "-f", type=click.Choice(["text", "json"]), default="text", help="Output format")
@experiment_options
def validate_command(config, format, eps0, levels, grid, points, seed, workers, output):
    """Check conditions (E), (I), (II) and (III) for a configuration."""
    try:
        cfg = load_experiment(config, _overrides(eps0, levels, grid, points, seed, workers, output))
        summary = validate(cfg.build_geometry(), cfg.sampling, cfg.schedule)
    except Exception as e:
        _fail("validating configuration", e)

    if format == "json":
        click.echo(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    else:
        click.echo(summary.table())
    if not summary.passed:
        sys.exit(EXIT_VALIDATION)


@main.command("project")
@click.argument("config")
@click.argument("sinogram_path")
@click.option("--csv", "csv_path", help="Also export the sinogram as CSV")
@experiment_options
def project_command(config, sinogram_path, csv_path, eps0, levels, grid, points, seed, workers, output):
    """Forward-project the configured phantom and write the sinogram."""
    try:
        cfg = load_experiment(config, _overrides(eps0, levels, grid, points, seed, workers, output))
        geometry = cfg.build_geometry()
        field = cfg.build_phantom(geometry).as_field()
        sinogram = project(field, geometry, cfg.cam_grid(geometry.dimension), int(cfg.grids["surface"]), cfg.workers)
        sinogram.save_json(sinogram_path)
        if csv_path:
            sinogram.export_csv(csv_path)
    except Exception as e:
        _fail("projecting", e)

    click.echo(f"Sinogram with {len(sinogram.values)} values written to: {sinogram_path}")


@main.command("invert")
@click.argument("config")
@click.argument("sinogram_path")
@click.argument("report_path")
@click.option("--csv", "csv_path", help="Also write the field dump as CSV")
@click.option("--no-truth", is_flag=True, help="Do not compare against the configured phantom")
@experiment_options
def invert_command(
    config, sinogram_path, report_path, csv_path, no_truth, eps0, levels, grid, points, seed, workers, output
):
    """Reconstruct the field from a sinogram at the evaluation points."""
    try:
        cfg = load_experiment(config, _overrides(eps0, levels, grid, points, seed, workers, output))
        geometry = cfg.build_geometry()
        phantom = cfg.build_phantom(geometry)
        sinogram = Sinogram.load_json(sinogram_path)
        report = reconstruct_grid(
            sinogram,
            geometry,
            cfg.evaluation_points(geometry, phantom),
            truth=None if no_truth else phantom.as_field(),
            schedule=cfg.schedule,
            cam_slice_resolution=int(cfg.grids["cam_slice"]),
            workers=cfg.workers,
        )
        report.save_json(report_path)
        if csv_path:
            report.write_csv(csv_path)
    except Exception as e:
        _fail("inverting", e)

    _echo_metrics(report.metrics)
    click.echo(f"Report written to: {report_path}")
    if report.diverged:
        sys.exit(EXIT_DIVERGENCE)


def _echo_metrics(metrics: Optional[Dict[str, Any]]) -> None:
    if not metrics:
        return
    click.echo(f"L-inf relative error: {metrics['linf']:.4e}")
    click.echo(f"L2 relative error:    {metrics['l2']:.4e}")
    if metrics.get("calibration") is not None:
        click.echo(f"Calibration constant: {metrics['calibration']:.6f}")


@main.command("roundtrip")
@click.argument("config")
@click.option("--force", is_flag=True, help="Run even when validation fails")
@click.option("--plot-data", "plot_dir", help="Directory for CSV/JSON plot series")
@experiment_options
def roundtrip_command(config, force, plot_dir, eps0, levels, grid, points, seed, workers, output):
    """Validate, project, reconstruct and score a configuration."""
    try:
        cfg = load_experiment(config, _overrides(eps0, levels, grid, points, seed, workers, output))
        report = run_roundtrip(cfg, force=force)
        if plot_dir:
            emit_plot_data(report, plot_dir, geometry=cfg.build_geometry())
    except Exception as e:
        _fail("running round trip", e)

    _echo_metrics(report.metrics)
    if cfg.output_directory:
        click.echo(f"Artifacts written to: {cfg.output_directory}")
    if report.diverged:
        sys.exit(EXIT_DIVERGENCE)


@main.command("converge")
@click.argument("config")
@click.option("--refinements", "-r", type=int, default=3, help="Number of refinement levels")
@click.option("--force", is_flag=True, help="Run even when validation fails")
@experiment_options
def converge_command(config, refinements, force, eps0, levels, grid, points, seed, workers, output):
    """Round trips across grid refinements with the observed order."""
    try:
        cfg = load_experiment(config, _overrides(eps0, levels, grid, points, seed, workers, output))
        table = run_convergence(cfg, refinements, force=force)
    except Exception as e:
        _fail("running convergence study", e)

    click.echo(f"{'h':>12} {'L-inf':>12} {'L2':>12}")
    for row in table.rows:
        click.echo(f"{row['h']:>12.4e} {row['linf']:>12.4e} {row['l2']:>12.4e}")
    order = table.observed_order
    click.echo(f"Observed order: {order:.3f}" if order is not None else "Observed order: n/a")
    if any(row["diverged"] for row in table.rows):
        sys.exit(EXIT_DIVERGENCE)


@main.command("selftest")
def selftest_command():
    """Run fast internal consistency checks."""
    results = run_selftest()
    for result in results:
        mark = "ok  " if result.passed else "FAIL"
        click.echo(f"[{mark}] {result.name}: {result.detail}")
    if not all(result.passed for result in results):
        sys.exit(EXIT_ERROR)


@main.group()
def presets():
    """Manage experiment presets."""
    pass


@presets.command("list")
@click.option("--format", "-f", type=click.Choice(["text", "json"]), default="text", help="Output format")
def list_presets(format):
    """List available presets."""
    preset_manager = PresetManager(Config())
    available = preset_manager.list_presets("experiment")

    if format == "json":
        click.echo(json.dumps(available, indent=2))
    else:
        if not available:
            click.echo("No presets found.")
            return

        for preset_type, names in available.items():
            click.echo(f"\n{preset_type.upper()} PRESETS:")
            for name in names:
                click.echo(f"  - {name}")


@presets.command("show")
@click.argument("name")
@click.option("--format", "-f", type=click.Choice(["yaml", "json"]), default="yaml", help="Output format")
def show_preset(name, format):
    """Show a preset."""
    preset = PresetManager(Config()).get_preset(name)

    if not preset:
        click.echo(f"Preset '{name}' not found.")
        sys.exit(EXIT_ERROR)

    if format == "json":
        click.echo(json.dumps(preset, indent=2))
    else:
        click.echo(yaml.safe_dump(preset, default_flow_style=False))


@presets.command("export")
@click.argument("name")
@click.argument("output_path")
def export_preset(name, output_path):
    """Export a preset to a YAML or JSON file."""
    try:
        PresetManager(Config()).export_preset(name, output_path)
        click.echo(f"Preset exported to: {output_path}")
    except Exception as e:
        _fail("exporting preset", e)


@main.command("version")
def version():
    """Show the camtomo version."""
    from camtomo import __version__

    click.echo(f"camtomo version {__version__}")


if __name__ == "__main__":
    main()
