"""Experiment orchestration: solver runs, CSV export, and convergence plots."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig
from .diagnostics import ConvergenceTrace, exact_solve_quadratic
from .objectives import QuadraticLoss
from .simnet import SimNetwork
from .solver import NonconvergenceError, SolverConfig, run_ram

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NONCONVERGENCE = 2

SUMMARY_COLUMNS = ("lambda", "final_F_gap", "final_residual", "comm_rounds", "local_grad_calls", "status")


def format_lambda(lam: float) -> str:
    return f"{lam:g}"


def solver_config_from(config: ExperimentConfig) -> SolverConfig:
    return SolverConfig(
        epsilon=config.solver_epsilon,
        R0=config.solver_R0,
        s=config.solver_s,
        delta_rule=config.solver_delta_rule,
        delta_fixed=config.solver_delta_fixed,
        max_inner_iters=config.solver_max_inner_iters,
        case_override=config.solver_case_override,
    )


@dataclass
class ExperimentResult:
    out_dir: Path
    traces: list = field(default_factory=list)  # (lambda, ConvergenceTrace)
    statuses: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK


def run_experiment(config: ExperimentConfig, include_timing: bool = False) -> ExperimentResult:
    """Run the solver for every lambda in the config and write all artifacts.

    Writes trace_lambda_<lambda>.csv per run, a combined summary.csv, and
    (when enabled) convergence.svg with the objective gap on a log scale
    against communication rounds.  A nonconverged run keeps its partial
    trace, is flagged in the summary, and turns the exit status nonzero.
    """
    config.validate()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    W = config.build_gossip()
    solver_config = solver_config_from(config)

    result = ExperimentResult(out_dir=out_dir)
    for lam in config.lambda_list:
        problem = config.build_problem(W, lam)
        reference = None
        if all(isinstance(loss, QuadraticLoss) for loss in problem.losses):
            reference = exact_solve_quadratic(problem)
        net = SimNetwork(config.build_topology(), W)
        status = "ok"
        try:
            _, trace = run_ram(problem, solver_config, net, reference=reference)
        except NonconvergenceError as exc:
            print(f"lambda={format_lambda(lam)}: nonconvergence: {exc}", file=sys.stderr)
            status = "nonconverged"
            trace = exc.trace if exc.trace is not None else _empty_trace(lam, solver_config)
            result.exit_code = EXIT_NONCONVERGENCE
        result.traces.append((lam, trace))
        result.statuses[lam] = status
        trace_path = out_dir / f"trace_lambda_{format_lambda(lam)}.csv"
        trace_path.write_text(trace.to_csv(include_timing=include_timing))

    (out_dir / "summary.csv").write_text(render_summary(result))
    if config.output_plot:
        write_convergence_plot(result.traces, out_dir / "convergence.svg")
    return result


def _empty_trace(lam: float, solver_config: SolverConfig) -> ConvergenceTrace:
    return ConvergenceTrace(lam=lam, case_id="failed", target_epsilon=solver_config.epsilon)


def render_summary(result: ExperimentResult) -> str:
    lines = [",".join(SUMMARY_COLUMNS)]
    for lam, trace in result.traces:
        status = result.statuses[lam]
        if trace.rows:
            final = trace.final_row()
            gaps = trace.F_gaps()
            lines.append(
                ",".join(
                    (
                        repr(float(lam)),
                        repr(float(gaps[-1])),
                        repr(float(final.consensus_residual)),
                        str(final.comm_rounds),
                        str(final.local_grad_calls),
                        status,
                    )
                )
            )
        else:
            lines.append(f"{float(lam)!r},nan,nan,0,0,{status}")
    return "\n".join(lines) + "\n"


def parse_summary_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = tuple(lines[0].split(","))
    if header != SUMMARY_COLUMNS:
        raise ValueError(f"unexpected summary columns: {header}")
    out = []
    for ln in lines[1:]:
        cells = ln.split(",")
        out.append(
            {
                "lambda": float(cells[0]),
                "final_F_gap": float(cells[1]),
                "final_residual": float(cells[2]),
                "comm_rounds": int(cells[3]),
                "local_grad_calls": int(cells[4]),
                "status": cells[5],
            }
        )
    return out


def write_convergence_plot(traces: list, path: Path) -> None:
    """Objective gap (log scale) against communication rounds, one curve per lambda.

    Communication rounds are the x-axis because the communication count is
    the headline complexity quantity; the sliding structure is invisible
    against plain iteration counts.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    floor = 1e-300
    for lam, trace in traces:
        if not trace.rows:
            continue
        gaps = [max(g, floor) for g in trace.F_gaps()]
        rounds = [row.comm_rounds for row in trace.rows]
        ax.semilogy(rounds, gaps, label=f"lambda = {format_lambda(lam)}")
    ax.set_xlabel("communication rounds")
    ax.set_ylabel("objective gap")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
