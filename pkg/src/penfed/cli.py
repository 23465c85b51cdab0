"""Command-line runner for penalized decentralized experiments.

Exit codes: 0 success, 1 configuration error, 2 solver nonconvergence.
"""

from __future__ import annotations

from pathlib import Path

import click

from .config import ConfigError, ExperimentConfig, load_config, reproduce_fig1_config
from .diagnostics import constraint_gap, exact_solve_quadratic, fit_complexity_scaling
from .runner import (
    EXIT_CONFIG_ERROR,
    EXIT_NONCONVERGENCE,
    EXIT_OK,
    format_lambda,
    run_experiment,
    solver_config_from,
)
from .simnet import SimNetwork
from .solver import NonconvergenceError, run_ram
from .topology import Topology, build_gossip


def _load(config_path: str | None, preset: str | None) -> ExperimentConfig:
    if preset is not None:
        if preset != "reproduce-fig1":
            raise ConfigError(f"unknown preset {preset!r}")
        return reproduce_fig1_config()
    if config_path is None:
        raise ConfigError("either --config or --preset is required")
    return load_config(config_path)


def _apply_overrides(config: ExperimentConfig, out, seed, lambdas, no_plot) -> ExperimentConfig:
    if out is not None:
        config.output_dir = out
    if seed is not None:
        config.loss_seed = seed
    if lambdas:
        config.lambda_list = list(lambdas)
    if no_plot:
        config.output_plot = False
    config.validate()
    return config


_shared_options = [
    click.option("--config", "config_path", type=click.Path(), default=None, help="Config file."),
    click.option("--preset", type=str, default=None, help="Named preset (reproduce-fig1)."),
    click.option("--out", type=click.Path(), default=None, help="Output directory override."),
    click.option("--seed", type=int, default=None, help="Data-generation seed override."),
    click.option(
        "--lambda", "lambdas", type=float, multiple=True, help="Penalty weight (repeatable)."
    ),
    click.option("--no-plot", is_flag=True, default=False, help="Skip the convergence plot."),
]


def shared_options(fn):
    for opt in reversed(_shared_options):
        fn = opt(fn)
    return fn


@click.group()
def main() -> None:
    """Penalized decentralized personalized federated learning solver."""


@main.command()
@shared_options
@click.option("--timing", is_flag=True, default=False, help="Record wall time in trace CSVs.")
def sweep_lambda(config_path, preset, out, seed, lambdas, no_plot, timing) -> None:
    """Run the solver for every configured lambda and write all artifacts."""
    try:
        config = _apply_overrides(_load(config_path, preset), out, seed, lambdas, no_plot)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_CONFIG_ERROR)
    result = run_experiment(config, include_timing=timing)
    click.echo(f"wrote {len(result.traces)} trace(s) to {result.out_dir}")
    raise SystemExit(result.exit_code)


@main.command()
@shared_options
def solve(config_path, preset, out, seed, lambdas, no_plot) -> None:
    """Run a single lambda (the flag value, or the config's only entry)."""
    try:
        config = _apply_overrides(_load(config_path, preset), out, seed, lambdas, no_plot)
        if len(config.lambda_list) != 1:
            raise ConfigError(
                f"solve needs exactly one lambda, got {len(config.lambda_list)}; "
                "pass --lambda or use sweep-lambda"
            )
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_CONFIG_ERROR)
    result = run_experiment(config)
    lam, trace = result.traces[0]
    if trace.rows:
        final = trace.final_row()
        click.echo(
            f"lambda={format_lambda(lam)}: comm_rounds={final.comm_rounds} "
            f"local_grad_calls={final.local_grad_calls} residual={final.consensus_residual:.3e}"
        )
    raise SystemExit(result.exit_code)


@main.command()
@click.option("--kind", type=str, default="path", help="Graph kind.")
@click.option("--n", "n_nodes", type=int, required=True, help="Node count.")
@click.option("--normalize", is_flag=True, default=False, help="Scale to lambda_max = 1.")
def spectra(kind, n_nodes, normalize) -> None:
    """Print the spectral bounds of a graph's gossip matrix."""
    try:
        W = build_gossip(Topology.of_kind(kind, n_nodes), normalize=normalize)
        bounds = W.spectral
    except ValueError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_CONFIG_ERROR)
    click.echo(
        f"kind={kind} n={n_nodes} lambda_max={bounds.lambda_max!r} "
        f"lambda_min_plus={bounds.lambda_min_plus!r} chi={bounds.chi!r}"
    )
    raise SystemExit(EXIT_OK)


@main.command(name="verify-theorem1")
@shared_options
def verify_theorem1(config_path, preset, out, seed, lambdas, no_plot) -> None:
    """Solve a quadratic instance and report the consensus-residual bound."""
    try:
        config = _apply_overrides(_load(config_path, preset), out, seed, lambdas, no_plot)
        if config.loss_kind != "quadratic" and config.loss_data_file is None:
            raise ConfigError("verify-theorem1 requires quadratic losses")
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_CONFIG_ERROR)

    W = config.build_gossip()
    solver_config = solver_config_from(config)
    violations = 0
    for lam in config.lambda_list:
        if lam == 0.0:
            click.echo("lambda=0: residual bound undefined, skipped")
            continue
        problem = config.build_problem(W, lam)
        reference = exact_solve_quadratic(problem)
        net = SimNetwork(config.build_topology(), W)
        try:
            solution, _ = run_ram(problem, solver_config, net, reference=reference)
        except NonconvergenceError as exc:
            click.echo(f"lambda={format_lambda(lam)}: nonconvergence: {exc}", err=True)
            raise SystemExit(EXIT_NONCONVERGENCE)
        f_gap, residual, bound = constraint_gap(solution, reference, problem)
        ok = residual <= bound + 1e-12
        violations += 0 if ok else 1
        click.echo(
            f"lambda={format_lambda(lam)}: R_y={reference.R_y:.6g} f_gap={f_gap:.3e} "
            f"residual={residual:.6e} bound={bound:.6e} {'ok' if ok else 'VIOLATED'}"
        )
    raise SystemExit(EXIT_OK if violations == 0 else EXIT_NONCONVERGENCE)


@main.command()
@shared_options
@click.option("--epsilon", type=float, default=None, help="Accuracy for rounds-to-accuracy.")
def scaling(config_path, preset, out, seed, lambdas, no_plot, epsilon) -> None:
    """Fit communication rounds against lambda over a sweep and report the slope."""
    try:
        config = _apply_overrides(_load(config_path, preset), out, seed, lambdas, no_plot)
        if len(config.lambda_list) < 3:
            raise ConfigError("scaling needs at least 3 lambda values")
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_CONFIG_ERROR)
    config.output_plot = False
    result = run_experiment(config)
    if result.exit_code != EXIT_OK:
        raise SystemExit(result.exit_code)
    report = fit_complexity_scaling(result.traces, epsilon=epsilon)
    click.echo(report.to_text(), nl=False)
    report_path = Path(result.out_dir) / "scaling.csv"
    report_path.write_text(report.to_csv())
    click.echo(f"wrote {report_path}")
    raise SystemExit(EXIT_OK)


if __name__ == "__main__":
    main()
