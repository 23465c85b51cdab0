"""Experiment configuration: a flat, line-oriented ``key = value`` format.

Schema (all keys optional unless noted; see the README for defaults):

    graph.kind       path | cycle | complete | star | custom
    graph.n          node count (positive integer)
    graph.normalize  true | false  (scale the Laplacian to lambda_max = 1)
    graph.edges      comma-separated 0-based pairs "i-j" (custom kind only)
    loss.kind        logistic_ridge | quadratic
    loss.d           block dimension (positive integer)
    loss.seed        RNG seed for generated data
    loss.mu_ridge    ridge weight for logistic losses
    loss.data_file   CSV of explicit quadratic data (overrides generation)
    loss.data        the same rows inline, separated by ';'
    lambda           comma-separated positive reals (required, nonempty)
    solver.epsilon   target accuracy on the penalized objective
    solver.R0        initial distance bound
    solver.s         restart count (omit to derive from epsilon)
    solver.delta_rule      theorem2 | fixed:<value>
    solver.case_override   auto | case1 | case2
    solver.max_inner_iters iteration cap per auxiliary solve
    output.dir       output directory
    output.plot      true | false

Values are decimal numbers, booleans are ``true``/``false``, ``#`` starts
a comment.  Parse errors carry the offending line number.

The quadratic data file holds, for each node k in order, d rows of d
comma-separated numbers (the matrix A_k) followed by one row of d numbers
(the vector b_k): n (d + 1) rows in total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .objectives import (
    PenalizedProblem,
    QuadraticLoss,
    random_logistic_problem,
    random_quadratic_problem,
)
from .topology import GRAPH_KINDS, GossipMatrix, Topology, build_gossip


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the line number."""


@dataclass
class ExperimentConfig:
    graph_kind: str = "path"
    graph_n: int = 20
    graph_normalize: bool = False
    graph_edges: list = field(default_factory=list)
    loss_kind: str = "logistic_ridge"
    loss_d: int = 10
    loss_seed: int = 42
    loss_mu_ridge: float = 1e-2
    loss_data_file: str | None = None
    loss_data: str | None = None
    lambda_list: list = field(default_factory=lambda: [0.01, 0.1, 1.0, 10.0])
    solver_epsilon: float = 1e-6
    solver_R0: float = 10.0
    solver_s: int | None = None
    solver_delta_rule: str = "theorem2"
    solver_delta_fixed: float | None = None
    solver_case_override: str = "auto"
    solver_max_inner_iters: int = 200_000
    output_dir: str = "results"
    output_plot: bool = True

    def validate(self) -> None:
        if self.graph_kind not in GRAPH_KINDS:
            raise ConfigError(f"unknown graph kind {self.graph_kind!r}")
        if self.graph_n < 1:
            raise ConfigError("graph.n must be >= 1")
        if self.graph_kind == "custom" and not self.graph_edges:
            raise ConfigError("custom graph requires graph.edges")
        if self.loss_kind not in ("logistic_ridge", "quadratic"):
            raise ConfigError(f"unknown loss kind {self.loss_kind!r}")
        if self.loss_d < 1:
            raise ConfigError("loss.d must be >= 1")
        if self.loss_mu_ridge < 0:
            raise ConfigError("loss.mu_ridge must be nonnegative")
        if not self.lambda_list:
            raise ConfigError("lambda list must be nonempty")
        if any(lam < 0 for lam in self.lambda_list):
            raise ConfigError("lambda values must be nonnegative")
        if self.solver_epsilon <= 0 or self.solver_R0 <= 0:
            raise ConfigError("solver.epsilon and solver.R0 must be positive")
        if self.solver_s is not None and self.solver_s < 1:
            raise ConfigError("solver.s must be >= 1")
        if self.solver_case_override not in ("auto", "case1", "case2"):
            raise ConfigError(f"unknown case override {self.solver_case_override!r}")
        if self.loss_data_file is not None and not Path(self.loss_data_file).exists():
            raise ConfigError(f"referenced data file {self.loss_data_file!r} does not exist")

    def build_topology(self) -> Topology:
        return Topology.of_kind(self.graph_kind, self.graph_n, self.graph_edges or None)

    def build_gossip(self) -> GossipMatrix:
        return build_gossip(self.build_topology(), normalize=self.graph_normalize)

    def build_problem(self, W: GossipMatrix, lam: float) -> PenalizedProblem:
        if self.loss_data is not None:
            rows = self.loss_data.replace(";", "\n")
            losses = parse_quadratic_rows(rows.splitlines(), self.graph_n, self.loss_d, "loss.data")
            return PenalizedProblem(losses, W, lam)
        if self.loss_data_file is not None:
            losses = load_quadratic_losses(self.loss_data_file, self.graph_n, self.loss_d)
            return PenalizedProblem(losses, W, lam)
        if self.loss_kind == "logistic_ridge":
            return random_logistic_problem(
                W, self.loss_d, self.loss_seed, mu_ridge=self.loss_mu_ridge, lam=lam
            )
        return random_quadratic_problem(W, self.loss_d, self.loss_seed, lam=lam)


def parse_quadratic_rows(lines, n: int, d: int, origin: str) -> list[QuadraticLoss]:
    """Build n quadratic losses from rows: per node, d rows of A then one row of b."""
    rows = []
    for raw in lines:
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        rows.append([float(c) for c in raw.split(",")])
    expected = n * (d + 1)
    if len(rows) != expected:
        raise ConfigError(
            f"{origin} has {len(rows)} rows, expected {expected} "
            f"(n={n} blocks of d={d} matrix rows plus one b row)"
        )
    losses = []
    for k in range(n):
        block = rows[k * (d + 1) : (k + 1) * (d + 1)]
        if any(len(r) != d for r in block):
            raise ConfigError(f"{origin}: node {k} rows must have {d} numbers")
        A = np.array(block[:d])
        b = np.array(block[d])
        losses.append(QuadraticLoss(A, b))
    return losses


def load_quadratic_losses(path: str, n: int, d: int) -> list[QuadraticLoss]:
    """Read n quadratic losses from a CSV file (see :func:`parse_quadratic_rows`)."""
    return parse_quadratic_rows(
        Path(path).read_text().splitlines(), n, d, f"quadratic data file {path!r}"
    )


_BOOLEANS = {"true": True, "false": False}

_KEY_PARSERS = {
    "graph.kind": ("graph_kind", str),
    "graph.n": ("graph_n", int),
    "graph.normalize": ("graph_normalize", "bool"),
    "graph.edges": ("graph_edges", "edges"),
    "loss.kind": ("loss_kind", str),
    "loss.d": ("loss_d", int),
    "loss.seed": ("loss_seed", int),
    "loss.mu_ridge": ("loss_mu_ridge", float),
    "loss.data_file": ("loss_data_file", str),
    "loss.data": ("loss_data", str),
    "lambda": ("lambda_list", "floats"),
    "solver.epsilon": ("solver_epsilon", float),
    "solver.R0": ("solver_R0", float),
    "solver.s": ("solver_s", int),
    "solver.delta_rule": ("solver_delta_rule", "delta_rule"),
    "solver.case_override": ("solver_case_override", str),
    "solver.max_inner_iters": ("solver_max_inner_iters", int),
    "output.dir": ("output_dir", str),
    "output.plot": ("output_plot", "bool"),
}


def _parse_edges(value: str) -> list[tuple[int, int]]:
    edges = []
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split("-")
        if len(parts) != 2:
            raise ValueError(f"edge {item!r} is not of the form i-j")
        edges.append((int(parts[0]), int(parts[1])))
    return edges


def parse_config(text: str, base_dir: str | Path = ".") -> ExperimentConfig:
    """Parse the flat schema; raises :class:`ConfigError` with a line number."""
    config = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _KEY_PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        attr, parser = _KEY_PARSERS[key]
        try:
            if parser == "bool":
                if value.lower() not in _BOOLEANS:
                    raise ValueError(f"expected true/false, got {value!r}")
                parsed = _BOOLEANS[value.lower()]
            elif parser == "floats":
                parsed = [float(v) for v in value.split(",") if v.strip()]
            elif parser == "edges":
                parsed = _parse_edges(value)
            elif parser == "delta_rule":
                if value == "theorem2":
                    parsed = "theorem2"
                elif value.startswith("fixed:"):
                    config.solver_delta_fixed = float(value.split(":", 1)[1])
                    parsed = "fixed"
                else:
                    raise ValueError(f"expected theorem2 or fixed:<value>, got {value!r}")
            else:
                parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: invalid value for {key!r}: {exc}") from exc
        if attr == "loss_data_file":
            parsed = str((Path(base_dir) / parsed).resolve())
        setattr(config, attr, parsed)
    try:
        config.validate()
    except ConfigError as exc:
        raise ConfigError(f"line 0: {exc}") from exc
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def reproduce_fig1_config() -> ExperimentConfig:
    """Baseline lambda-sweep protocol.

    Path Laplacian on 20 nodes (unit corner entries), one logistic sample
    per node plus a ridge term making the losses strongly convex, and four
    penalty weights spanning both sliding cases.  There is no numeric
    reference curve to match; the preset pins the protocol and the
    qualitative behavior of the sweep.
    """
    return ExperimentConfig(
        graph_kind="path",
        graph_n=20,
        graph_normalize=False,
        loss_kind="logistic_ridge",
        loss_d=10,
        loss_seed=42,
        loss_mu_ridge=1e-2,
        lambda_list=[0.01, 0.1, 1.0, 10.0],
        solver_epsilon=1e-6,
        solver_R0=10.0,
        output_dir="results-fig1",
        output_plot=True,
    )
