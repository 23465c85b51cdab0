"""Local losses, the penalized objective, and metered gradient oracles.

The problem solved is

    F(x) = (1/n) sum_k f_k(x_k) + (lambda/2) <x, Wx>,

where each f_k is smooth and strongly convex and W is a gossip matrix.
Smoothness / strong-convexity constants follow the averaged-sum
convention: the solver-facing constants of the sum part are
L = max_k L_k / n and mu = min_k mu_k / n, i.e. the constants of
(1/n) sum_k f_k(x_k) as a function of the stacked variable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stacked import StackedPoint
from .topology import GossipMatrix


@dataclass
class OracleCounters:
    """Exact operation counts for one solver run.

    local_grad_calls counts single-node gradient evaluations (a full sweep
    over n nodes costs n units); parallel_local_calls counts synchronized
    sweeps (the same full sweep costs 1).  comm_rounds counts gossip-matrix
    applications.  Counters only ever increase.
    """

    local_grad_calls: int = 0
    parallel_local_calls: int = 0
    comm_rounds: int = 0

    def snapshot(self) -> tuple[int, int, int]:
        return (self.local_grad_calls, self.parallel_local_calls, self.comm_rounds)


def _sigmoid(t: np.ndarray | float) -> np.ndarray | float:
    # two-branch form: never exponentiates a positive argument
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


@dataclass
class LogisticLoss:
    """Single-sample logistic loss with a ridge term.

    f(v) = log(1 + exp(-y <a, v>)) + (mu_ridge/2) |v|^2, with label y in
    {-1, +1}.  Smoothness L = |a|^2/4 + mu_ridge, strong convexity
    mu = mu_ridge.  The plain logistic loss (mu_ridge = 0) is smooth but
    not strongly convex; a positive ridge is required by problems that
    assume strong convexity.
    """

    a: np.ndarray
    y: int
    mu_ridge: float = 0.0

    kind = "logistic_ridge"

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=float).ravel()
        if self.y not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.y}")
        if self.mu_ridge < 0:
            raise ValueError("mu_ridge must be nonnegative")
        self.L = float(np.dot(self.a, self.a)) / 4.0 + self.mu_ridge
        self.mu = float(self.mu_ridge)

    @property
    def d(self) -> int:
        return self.a.size

    def value(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float).ravel()
        t = self.y * float(np.dot(self.a, v))
        # log(1 + exp(-t)) = log1p(exp(-|t|)) + max(0, -t): safe for |t| > 700
        logistic = float(np.log1p(np.exp(-abs(t))) + max(0.0, -t))
        return logistic + 0.5 * self.mu_ridge * float(np.dot(v, v))

    def grad(self, v: np.ndarray, counters: OracleCounters | None = None) -> np.ndarray:
        v = np.asarray(v, dtype=float).ravel()
        t = self.y * float(np.dot(self.a, v))
        g = -self.y * _sigmoid(-t) * self.a + self.mu_ridge * v
        if counters is not None:
            counters.local_grad_calls += 1
        return g


@dataclass
class QuadraticLoss:
    """Quadratic loss f(v) = (1/2) v^T A v - b^T v + c with A symmetric PD.

    L = lambda_max(A), mu = lambda_min(A) > 0.  The constant c lets
    shifted forms like (1/2)|v - t|^2 be represented exactly; it moves
    values, never gradients or minimizers.
    """

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    kind = "quadratic"

    def __post_init__(self) -> None:
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape != (self.b.size, self.b.size):
            raise ValueError(f"A shape {self.A.shape} does not match b of size {self.b.size}")
        if not np.allclose(self.A, self.A.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        self.A = (self.A + self.A.T) / 2.0
        eigs = np.linalg.eigvalsh(self.A)
        self.L = float(eigs[-1])
        self.mu = float(eigs[0])

    @property
    def d(self) -> int:
        return self.b.size

    def value(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float).ravel()
        return 0.5 * float(v @ self.A @ v) - float(self.b @ v) + self.c

    def grad(self, v: np.ndarray, counters: OracleCounters | None = None) -> np.ndarray:
        v = np.asarray(v, dtype=float).ravel()
        if counters is not None:
            counters.local_grad_calls += 1
        return self.A @ v - self.b


LocalLoss = LogisticLoss | QuadraticLoss


def local_value(loss: LocalLoss, v: np.ndarray) -> float:
    return loss.value(v)


def local_grad(loss: LocalLoss, v: np.ndarray, counters: OracleCounters | None = None) -> np.ndarray:
    return loss.grad(v, counters)


@dataclass
class PenalizedProblem:
    """n local losses, a gossip matrix, and a penalty weight lambda >= 0.

    Requires min_k mu_k > 0 (every local loss strongly convex).
    """

    losses: list
    W: GossipMatrix
    lam: float

    def __post_init__(self) -> None:
        if len(self.losses) != self.W.n:
            raise ValueError(f"{len(self.losses)} losses for a {self.W.n}-node gossip matrix")
        dims = {loss.d for loss in self.losses}
        if len(dims) != 1:
            raise ValueError(f"losses disagree on dimension: {sorted(dims)}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.L_f = max(loss.L for loss in self.losses)
        self.mu_f = min(loss.mu for loss in self.losses)
        if self.mu_f <= 0:
            raise ValueError("every local loss must be strongly convex (mu > 0)")

    @property
    def n(self) -> int:
        return self.W.n

    @property
    def d(self) -> int:
        return self.losses[0].d

    @property
    def smoothness(self) -> float:
        """L of the averaged sum (1/n) sum_k f_k(x_k)."""
        return self.L_f / self.n

    @property
    def strong_convexity(self) -> float:
        """mu of the averaged sum (1/n) sum_k f_k(x_k)."""
        return self.mu_f / self.n

    def sum_value(self, x: StackedPoint) -> float:
        """(1/n) sum_k f_k(x_k)."""
        return sum(loss.value(x.blocks[k]) for k, loss in enumerate(self.losses)) / self.n

    def sum_grad(self, x: StackedPoint, counters: OracleCounters | None = None) -> StackedPoint:
        """Blockwise gradient of the averaged sum: block k is (1/n) grad f_k(x_k).

        Charges n local gradient calls and one parallel call.
        """
        g = np.empty_like(x.blocks)
        for k, loss in enumerate(self.losses):
            g[k] = loss.grad(x.blocks[k], counters)
        if counters is not None:
            counters.parallel_local_calls += 1
        return StackedPoint(g / self.n)

    def penalty_value(self, x: StackedPoint, counters: OracleCounters | None = None) -> float:
        """(lambda/2) <x, Wx>; charges one comm round unless lambda = 0."""
        if self.lam == 0.0:
            return 0.0
        if counters is not None:
            counters.comm_rounds += 1
        return 0.5 * self.lam * self.W.quadratic_form(x)

    def penalty_grad(self, x: StackedPoint, counters: OracleCounters | None = None) -> StackedPoint:
        """lambda * W x; charges one comm round unless lambda = 0."""
        if self.lam == 0.0:
            return StackedPoint.zeros(x.n, x.d)
        if counters is not None:
            counters.comm_rounds += 1
        return self.lam * self.W.apply(x)

    def F_value(self, x: StackedPoint, counters: OracleCounters | None = None) -> float:
        """Full penalized objective; the lambda = 0 short circuit skips the W apply."""
        return self.sum_value(x) + self.penalty_value(x, counters)

    def F_grad(self, x: StackedPoint, counters: OracleCounters | None = None) -> StackedPoint:
        return self.sum_grad(x, counters) + self.penalty_grad(x, counters)


def random_quadratic_problem(
    W: GossipMatrix,
    d: int,
    seed: int,
    mu_min: float = 1.0,
    L_max: float = 3.0,
    lam: float = 1.0,
) -> PenalizedProblem:
    """Random per-node quadratics with eigenvalues in [mu_min, L_max].

    Draw order per node: an orthogonal factor from a standard normal
    matrix, then d eigenvalues uniform on [mu_min, L_max] (endpoints
    forced so the certified constants are tight), then b standard normal.
    """
    rng = np.random.default_rng(seed)
    losses = []
    for _ in range(W.n):
        Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eigs = rng.uniform(mu_min, L_max, size=d)
        if d >= 2:
            eigs[0], eigs[-1] = mu_min, L_max
        else:
            eigs[0] = L_max
        A = Q @ np.diag(eigs) @ Q.T
        A = (A + A.T) / 2.0
        b = rng.standard_normal(d)
        losses.append(QuadraticLoss(A, b))
    return PenalizedProblem(losses, W, lam)


def random_logistic_problem(
    W: GossipMatrix,
    d: int,
    seed: int,
    mu_ridge: float = 1e-2,
    lam: float = 1.0,
) -> PenalizedProblem:
    """One logistic sample per node: a_k is column k of a random normal matrix.

    Draw order: the d x n feature matrix A (standard normal), then n
    labels uniform on {-1, +1}.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, W.n))
    labels = rng.integers(0, 2, size=W.n) * 2 - 1
    losses = [LogisticLoss(A[:, k], int(labels[k]), mu_ridge) for k in range(W.n)]
    return PenalizedProblem(losses, W, lam)
