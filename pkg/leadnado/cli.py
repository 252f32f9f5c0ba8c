import json
import os
import pathlib
import subprocess
import sys

import click
from loguru import logger

FILE = os.path.abspath(__file__)
PACKAGE_DIR = os.path.dirname(FILE)


def _setup_logging(verbose: bool):
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")


def _abort(error: Exception):
    logger.error(str(error))
    sys.exit(1)


def _write_timeline_outputs(timeline, out: pathlib.Path):
    from leadnado.factions import size_ratio_trace

    out.mkdir(parents=True, exist_ok=True)
    timeline.to_json(out / "timeline.json")
    size_ratio_trace(timeline).to_csv(out / "size_ratios.csv", index=False)


@click.group(context_settings=dict(help_option_names=["-h", "--help"]))
@click.option("-v", "--verbose", is_flag=True, help="Increase logging verbosity")
@click.version_option(package_name="leadnado", message="Leadnado version %(version)s")
def cli(verbose=False):
    """
    Infer factions, initiators and coordination intervals from time series.
    """
    _setup_logging(verbose)


@cli.command()
@click.option("--model", type=click.Choice(["DM", "HM", "IC", "CM"]), required=True)
@click.option(
    "--event-type",
    type=click.Choice(["linear", "merge_split"]),
    default="linear",
    show_default=True,
)
@click.option("--seed", type=int, default=None, help="Random seed")
@click.option("--n", type=int, default=30, show_default=True, help="Number of individuals")
@click.option("--t-star", type=int, default=4000, show_default=True, help="Time steps")
@click.option("--events", type=int, default=5, show_default=True, help="Coordination events")
@click.option("--event-length", type=int, default=800, show_default=True)
@click.option("--ic-k", type=click.Choice(["3", "5", "10"]), default=None)
@click.option("--ic-rho", type=click.Choice(["0.25", "0.5", "0.75"]), default=None)
@click.option("--cm-informed", type=int, default=3, show_default=True)
@click.option("--noise-std", type=float, default=None)
@click.option("-o", "--out", type=click.Path(file_okay=False), required=True)
def simulate(model, event_type, seed, n, t_star, events, event_length, ic_k, ic_rho, cm_informed, noise_std, out):
    """
    Simulate a labelled dataset: trajectories.csv, truth.json and manifest.yml.
    """
    from pydantic import ValidationError

    from leadnado.sim import SimConfig, save_simulation, simulate as run_simulation

    try:
        config = SimConfig(
            model=model,
            event_type=event_type,
            n=n,
            t_star=t_star,
            events=events,
            event_length=event_length,
            ic_k=int(ic_k) if ic_k else None,
            ic_rho=float(ic_rho) if ic_rho else None,
            cm_informed=cm_informed,
            noise_std=noise_std,
            seed=seed,
        )
    except ValidationError as e:
        _abort(e)

    dataset, truth = run_simulation(config)
    save_simulation(dataset, truth, config, out)


@cli.command()
@click.option("-i", "--in", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--sigma", type=float, default=0.5, show_default=True, help="Following threshold")
@click.option("--omega", type=int, default=None, help="Time window length")
@click.option("--auto-omega", is_flag=True, help="Choose omega by maximising the median coordination measure")
@click.option("--candidates", type=str, default=None, help="Comma separated omega candidates for --auto-omega")
@click.option("--delta", type=int, default=None, help="Time shift (default: 10% of omega)")
@click.option("--band", type=int, default=None, help="DTW band (default: delta)")
@click.option("--damping", type=float, default=0.9, show_default=True, help="PageRank damping factor")
@click.option("--raw", is_flag=True, help="Align raw values instead of displacements")
@click.option("-t", "--threads", type=int, default=1, show_default=True)
@click.option("-o", "--out", type=click.Path(file_okay=False), required=True)
def infer(input_path, sigma, omega, auto_omega, candidates, delta, band, damping, raw, threads, out):
    """
    Infer the faction timeline of a trajectory CSV.

    Writes timeline.json, size_ratios.csv and network.json to OUT.
    """
    from pydantic import ValidationError

    from leadnado.config import InferenceConfig
    from leadnado.coordination import infer_window
    from leadnado.core import load_dataset
    from leadnado.factions import ConvergenceError, find_factions_and_initiators
    from leadnado.helpers import parse_int_list
    from leadnado.network import create_dynamic_network

    if (omega is None) == (not auto_omega):
        _abort(click.UsageError("Provide exactly one of --omega or --auto-omega"))

    try:
        params = InferenceConfig(
            sigma=sigma,
            omega=omega,
            delta=delta,
            band=band,
            candidates=parse_int_list(candidates) if candidates else None,
            use_displacement=not raw,
            damping=damping,
            threads=threads,
        )
    except (ValidationError, ValueError) as e:
        _abort(e)

    logger.debug(f"Inference parameters: {params.model_dump()}")

    out = pathlib.Path(out)
    try:
        dataset = load_dataset(input_path)
        omega = params.omega
        if omega is None:
            sweep = infer_window(
                dataset,
                candidates=params.candidates,
                sigma=params.sigma,
                band=params.band,
                use_displacement=params.use_displacement,
                threads=params.threads,
            )
            sweep.to_json(out / "sweep.json")
            omega = sweep.chosen

        dyn = create_dynamic_network(
            dataset,
            omega=omega,
            delta=params.resolved_delta(omega),
            sigma=params.sigma,
            band=params.band,
            use_displacement=params.use_displacement,
            threads=params.threads,
        )
        timeline = find_factions_and_initiators(dyn, damping=params.damping)
    except (ValueError, ConvergenceError) as e:
        _abort(e)

    _write_timeline_outputs(timeline, out)
    dyn.to_json(out / "network.json")
    logger.info(f"Timeline written to {out}")


@cli.command()
@click.option("--pred", type=click.Path(exists=True, dir_okay=False), required=True, help="timeline.json")
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), required=True, help="truth.json")
@click.option("--name", type=str, default=None, help="Dataset name in the report")
@click.option("--method", type=str, default="leadnado", show_default=True)
@click.option("-k", "--top-k", type=int, default=3, show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False), required=True)
def evaluate(pred, truth, name, method, top_k, out):
    """
    Score a predicted timeline against simulator ground truth.
    """
    from leadnado.evaluation import EvalReport, evaluate_dataset
    from leadnado.factions import FactionTimeline
    from leadnado.sim import GroundTruth

    try:
        report = evaluate_dataset(
            FactionTimeline.from_json(pred),
            GroundTruth.from_json(truth),
            name=name or pathlib.Path(pred).parent.name,
            method=method,
            k=top_k,
        )
    except ValueError as e:
        _abort(e)

    EvalReport(datasets=[report]).to_json(out)


@cli.command("sweep-window")
@click.option("-i", "--in", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--candidates", type=str, default=None, help="Comma separated omega candidates")
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--raw", is_flag=True, help="Align raw values instead of displacements")
@click.option("-t", "--threads", type=int, default=1, show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None, help="Defaults to stdout")
def sweep_window(input_path, candidates, sigma, raw, threads, out):
    """
    Median coordination measure for each candidate window length.
    """
    from leadnado.coordination import infer_window
    from leadnado.core import load_dataset
    from leadnado.helpers import parse_int_list

    try:
        result = infer_window(
            load_dataset(input_path),
            candidates=parse_int_list(candidates) if candidates else None,
            sigma=sigma,
            use_displacement=not raw,
            threads=threads,
        )
    except ValueError as e:
        _abort(e)

    if out:
        result.to_json(out)
    else:
        click.echo(json.dumps(result.model_dump(), indent=2))


@cli.command("baseline-flock")
@click.option("-i", "--in", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--beta", type=float, default=None, help="Angle threshold in radians (default pi/6)")
@click.option("--gamma", type=float, default=None, help="Distance threshold (default 5x median step)")
@click.option("--grid", is_flag=True, help="Tune beta and gamma by leadership F1 (needs --truth)")
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("-o", "--out", type=click.Path(file_okay=False), required=True)
def baseline_flock(input_path, beta, gamma, grid, truth, out):
    """
    Faction timeline from geometric FLOCK following networks.
    """
    import numpy as np

    from leadnado.core import load_dataset
    from leadnado.factions import ConvergenceError
    from leadnado.flock import FlockParams, flock_grid_search, flock_timeline, median_step_length
    from leadnado.sim import GroundTruth

    if grid and truth is None:
        _abort(click.UsageError("--grid requires --truth"))

    out = pathlib.Path(out)
    try:
        dataset = load_dataset(input_path)
        if grid:
            params, f1 = flock_grid_search(dataset, GroundTruth.from_json(truth))
        else:
            params = FlockParams(
                beta=np.pi / 6 if beta is None else beta,
                gamma=5 * median_step_length(dataset) if gamma is None else gamma,
            )
        timeline = flock_timeline(dataset, params)
    except (ValueError, ConvergenceError) as e:
        _abort(e)

    _write_timeline_outputs(timeline, out)
    with open(out / "flock_params.json", "w") as f:
        json.dump(params.model_dump(), f, indent=2)


@cli.command()
@click.option("-i", "--in", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False), default=None, help="Defaults to stdout")
def centrality(input_path, truth, sigma, out):
    """
    Jaccard similarity between each centrality's top 4 and the true initiators.
    """
    from leadnado.core import load_dataset
    from leadnado.evaluation import centrality_comparison
    from leadnado.factions import ConvergenceError
    from leadnado.sim import GroundTruth

    try:
        result = centrality_comparison(
            load_dataset(input_path), GroundTruth.from_json(truth), sigma=sigma
        )
    except (ValueError, ConvergenceError) as e:
        _abort(e)

    text = json.dumps(result.model_dump(), indent=2)
    if out:
        pathlib.Path(out).write_text(text)
    else:
        click.echo(text)


# Config
@click.command(context_settings=dict(ignore_unknown_options=True))
@click.option("-r", "--rerun", is_flag=True, help="Re-run the config")
def cli_config(rerun=False):
    """
    Creates the configuration for a benchmark run.
    """
    from importlib.metadata import version

    import leadnado.config as config

    config.create_config(rerun, leadnado_version=version("leadnado"))


# Benchmark
@click.command(context_settings=dict(ignore_unknown_options=True))
@click.option(
    "--preset",
    default="lc",
    help="""Pre-set snakemake job profile to use for the benchmark run:
            lc: local environment
            lt: local test profile
            """,
    type=click.Choice(choices=["lc", "lt"]),
)
@click.option("-v", "--verbose", is_flag=True, help="Increase logging verbosity")
@click.argument("pipeline_options", nargs=-1, type=click.UNPROCESSED)
def cli_benchmark(pipeline_options, preset="lc", verbose=False):
    """Runs the simulation benchmark workflow"""

    from leadnado.helpers import extract_cores_from_options

    _setup_logging(verbose)

    pipeline_options, cores = extract_cores_from_options(pipeline_options)

    cmd = [
        "snakemake",
        "-c",
        str(cores),
        "--snakefile",
        os.path.join(PACKAGE_DIR, "workflow", "snakefile_benchmark"),
    ]

    if pipeline_options:
        cmd.extend(pipeline_options)

    if preset == "lt":
        cmd.extend(
            [
                "--profile",
                os.path.abspath(os.path.join(PACKAGE_DIR, "workflow/envs/profiles/profile_test")),
            ]
        )

    cmd.extend(["--show-failed-logs"])

    with open(f"{PACKAGE_DIR}/data/logo.txt", "r") as f:
        logo = f.read()

    print(logo)

    cwd = str(pathlib.Path(".").resolve())
    completed = subprocess.run(cmd, cwd=cwd)
    sys.exit(completed.returncode)
