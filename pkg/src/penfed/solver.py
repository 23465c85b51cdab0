"""Restarted accelerated meta-algorithm with two-case gradient/communication sliding.

The outer loop is the p = 1 accelerated meta-algorithm: at each step it
linearizes one component of the objective at an extrapolated point w_k,
solves the model-regularized auxiliary problem

    min_y  <grad of linearized part at w_k, y> + (kept part)(y) + (H/2)|y - w_k|^2

to accuracy delta, and takes a dual-averaging style z-update with the full
gradient at the new point.  Restarts halve the distance bound every
sweep, giving linear convergence under strong convexity.

Sliding is the assignment of the two components to the two tiers:

* case 1 (lambda * lambda_max(W) >= L): the averaged sum is linearized, so
  local gradients are only evaluated at outer points, and the penalty
  quadratic is minimized by an accelerated iteration whose every step is
  one communication round, with H = L;
* case 2 (lambda * lambda_max(W) < L): the penalty is linearized (one
  round per linearization), and the auxiliary problem separates across
  nodes, solved by per-node accelerated gradient with zero communication,
  with H = lambda * lambda_max(W).

With lambda = 0 (or a single node) the problem decouples entirely and
each node minimizes its own loss without any communication.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .diagnostics import ConvergenceTrace, ReferenceSolution, TraceRow
from .objectives import PenalizedProblem
from .simnet import SimNetwork
from .stacked import StackedPoint
from .topology import split_consensus

MAX_TOTAL_OUTER_ITERS = 1_000_000
# attainable gradient-norm floor: safety factor on machine roundoff of the
# gradient evaluation; below this scale the theoretical inner tolerance is
# unreachable in float64 and iterating further cannot help
FLOOR_SAFETY = 64.0 * np.finfo(float).eps


class NonconvergenceError(RuntimeError):
    """An inner solve hit its iteration cap before reaching its tolerance.

    When raised out of :func:`run_ram`, carries the partial convergence
    trace accumulated up to the failure on ``trace``.
    """

    def __init__(self, message: str, achieved: float, tolerance: float, iterations: int):
        super().__init__(message)
        self.achieved = achieved
        self.tolerance = tolerance
        self.iterations = iterations
        self.trace = None


class SolverConfigError(ValueError):
    """The configuration is inconsistent or exceeds hard resource caps."""


@dataclass
class SolverConfig:
    """Parameters of the restarted accelerated meta-algorithm.

    s is the restart count; leave it None to derive the smallest count
    whose guaranteed gap bound mu R0^2 4^{-s} / 2 meets epsilon.  R0 must
    upper-bound the distance |z0 - x*|.  The inner accuracy delta follows
    the theorem2 rule by default; delta_rule="fixed" pins it to
    delta_fixed instead.
    """

    epsilon: float = 1e-6
    R0: float = 10.0
    s: int | None = None
    delta_rule: str = "theorem2"
    delta_fixed: float | None = None
    max_inner_iters: int = 200_000
    case_override: str = "auto"
    H_override: float | None = None
    p: int = 1

    def __post_init__(self) -> None:
        if self.p != 1:
            raise SolverConfigError("only the p = 1 instantiation is implemented")
        if self.epsilon <= 0 or self.R0 <= 0:
            raise SolverConfigError("epsilon and R0 must be positive")
        if self.s is not None and self.s < 1:
            raise SolverConfigError("restart count must be >= 1")
        if self.delta_rule not in ("theorem2", "fixed"):
            raise SolverConfigError(f"unknown delta rule {self.delta_rule!r}")
        if self.delta_rule == "fixed" and (self.delta_fixed is None or self.delta_fixed <= 0):
            raise SolverConfigError("fixed delta rule requires a positive delta_fixed")
        if self.case_override not in ("auto", "case1", "case2"):
            raise SolverConfigError(f"unknown case override {self.case_override!r}")
        if self.max_inner_iters < 1:
            raise SolverConfigError("max_inner_iters must be >= 1")


@dataclass(frozen=True)
class CaseSplit:
    """Which component is linearized and which is kept in the auxiliary problem."""

    case_id: str  # "case1" | "case2" | "decoupled"
    f_part: str  # linearized component
    g_part: str  # component kept exact
    H: float


@dataclass
class AmState:
    """Iterate state of the outer accelerated loop."""

    k: int
    A: float
    y: StackedPoint
    z: StackedPoint
    w: StackedPoint | None
    lambda_step: float
    a_last: float = 0.0
    inner_iters_last: int = 0


def select_case(problem: PenalizedProblem, override: str = "auto") -> CaseSplit:
    """Pick the sliding case from the threshold lambda * lambda_max(W) vs L.

    Ties go to case 1.  With lambda = 0 (or one node) there is nothing to
    communicate and the decoupled mode is returned; H is then only used by
    nothing and set to the sum smoothness for completeness.
    """
    L = problem.smoothness
    if problem.lam == 0.0 or problem.n == 1:
        return CaseSplit("decoupled", f_part="average_loss", g_part="none", H=L)
    lam_lmax = problem.lam * problem.W.lambda_max
    if override == "case1" or (override == "auto" and lam_lmax >= L):
        return CaseSplit("case1", f_part="average_loss", g_part="penalty", H=L)
    return CaseSplit("case2", f_part="penalty", g_part="average_loss", H=lam_lmax)


def inner_tolerance(
    epsilon: float, mu: float, L: float, lam: float, lambda_max: float, H: float
) -> float:
    """Auxiliary-problem accuracy delta = eps mu / (864^2 (L + lambda lambda_max + H)^2)."""
    if epsilon <= 0 or mu <= 0 or H <= 0:
        raise ValueError("epsilon, mu and H must be positive")
    total = L + lam * lambda_max + H
    return epsilon * mu / (864.0**2 * total * total)


def default_restart_count(epsilon: float, mu: float, R0: float) -> int:
    """Smallest s with the guaranteed gap bound mu R0^2 4^{-s} / 2 <= epsilon."""
    target = mu * R0 * R0 / (2.0 * epsilon)
    if target <= 1.0:
        return 1
    return max(1, math.ceil(math.log(target) / math.log(4.0)))


def restart_schedule(config: SolverConfig, mu: float, H: float) -> list[tuple[float, int]]:
    """Halving radii R_k = R0 2^{-k} and per-restart iteration counts N_k.

    At p = 1 the general formula
    N_k = max(ceil((p+1) (8 H 2^{p-1} R_k^{p-1} / (mu p!))^(2/(3p+1))), 1)
    loses its R_k dependence and reduces to the constant
    max(ceil(2 sqrt(8 H / mu)), 1).
    """
    if mu <= 0 or H <= 0:
        raise ValueError("mu and H must be positive")
    s = config.s if config.s is not None else default_restart_count(config.epsilon, mu, config.R0)
    N = max(math.ceil(2.0 * math.sqrt(8.0 * H / mu)), 1)
    return [(config.R0 * 2.0**-k, N) for k in range(s)]


def _agd_momentum(curvature_hi: float, curvature_lo: float) -> float:
    root_hi, root_lo = math.sqrt(curvature_hi), math.sqrt(curvature_lo)
    return (root_hi - root_lo) / (root_hi + root_lo)


def solve_aux_case1(
    w: StackedPoint,
    grad_f_w: StackedPoint,
    problem: PenalizedProblem,
    H: float,
    delta: float,
    net: SimNetwork,
    max_iters: int,
) -> tuple[StackedPoint, int]:
    """Minimize <grad_f_w, y> + (lambda/2) <y, Wy> + (H/2) |y - w|^2.

    The Ker W component is closed form at zero communication cost; on its
    orthogonal complement an accelerated iteration runs on the quadratic
    with curvature inside [max(H, lambda lambda_min_plus), H + lambda
    lambda_max], each step costing exactly one gossip round.  Iteration
    stops once the subproblem gradient norm is at most
    sqrt(2 max(H, lambda lambda_min_plus) delta), which implies
    delta-accuracy in function value by strong convexity.  Returns the
    solution and the number of accelerated updates taken.
    """
    lam = problem.lam
    spectral = problem.W.spectral
    curvature_hi = H + lam * spectral.lambda_max
    curvature_lo = max(H, lam * spectral.lambda_min_plus)
    tol = math.sqrt(2.0 * curvature_lo * delta)
    beta = _agd_momentum(curvature_hi, curvature_lo)

    mean_w, dev_w = split_consensus(w)
    mean_c, dev_c = split_consensus(grad_f_w)
    mean_y = mean_w - mean_c / H

    v = dev_w
    u = v
    steps = 0
    while True:
        g = dev_c + lam * net.gossip_round(u) + H * (u - dev_w)
        gnorm = g.norm()
        floor = FLOOR_SAFETY * (
            grad_f_w.norm() + curvature_hi * (u.norm() + dev_w.norm())
        )
        if gnorm <= max(tol, floor):
            y = StackedPoint(u.blocks + mean_y)
            return y, steps
        if steps >= max_iters:
            break
        v_new = u - (1.0 / curvature_hi) * g
        u = v_new + beta * (v_new - v)
        v = v_new
        steps += 1
    raise NonconvergenceError(
        f"case-1 auxiliary solve stalled at gradient norm {gnorm:.3e} "
        f"(tolerance {tol:.3e}) after {steps} iterations",
        achieved=gnorm,
        tolerance=tol,
        iterations=steps,
    )


def solve_aux_case2(
    w: StackedPoint,
    penalty_grad_w: StackedPoint,
    problem: PenalizedProblem,
    H: float,
    delta: float,
    net: SimNetwork,
    max_iters: int,
) -> tuple[StackedPoint, int]:
    """Minimize <penalty_grad_w, y> + (1/n) sum_k f_k(y_k) + (H/2) |y - w|^2.

    Fully separable across nodes: each node runs accelerated gradient on
    its d-dimensional strongly convex subproblem (curvature inside
    [mu_f/n + H, L_f/n + H]) with zero communication, stopping at the
    per-node gradient threshold sqrt(2 (mu_f/n + H) delta / n) so the
    summed function gaps stay below delta.  The caller must already have
    paid the one round for penalty_grad_w = lambda W w.  Returns the
    solution and the number of lockstep sweeps that updated any node.
    """
    n = problem.n
    curvature_hi = problem.smoothness + H
    curvature_lo = problem.strong_convexity + H
    tol = math.sqrt(2.0 * curvature_lo * delta / n)
    beta = _agd_momentum(curvature_hi, curvature_lo)
    inv_n = 1.0 / n

    net.reset_scratch()
    for k in range(n):
        net.scratch[k].update(
            u=w.block(k), v=w.block(k), done=False, pg=penalty_grad_w.block(k), w=w.block(k)
        )

    x = w
    sweeps = 0
    while True:
        if sweeps >= max_iters:
            worst = max(
                net.scratch[k].get("residual", math.inf)
                for k in range(n)
                if not net.scratch[k]["done"]
            )
            raise NonconvergenceError(
                f"case-2 auxiliary solve stalled at per-node gradient norm {worst:.3e} "
                f"(tolerance {tol:.3e}) after {sweeps} sweeps",
                achieved=worst,
                tolerance=tol,
                iterations=sweeps,
            )
        updated = [False]

        def step(k: int, _block: np.ndarray) -> np.ndarray:
            s = net.scratch[k]
            if s["done"]:
                return s["v"]
            g = s["pg"] + problem.losses[k].grad(s["u"], net.counters) * inv_n + H * (
                s["u"] - s["w"]
            )
            gnorm = float(np.linalg.norm(g))
            floor = FLOOR_SAFETY * (
                float(np.linalg.norm(s["pg"])) + curvature_hi * (
                    float(np.linalg.norm(s["u"])) + float(np.linalg.norm(s["w"]))
                )
            )
            if gnorm <= max(tol, floor):
                s["done"] = True
                s["v"] = s["u"]
                s["residual"] = gnorm
                return s["v"]
            v_new = s["u"] - g / curvature_hi
            s["u"] = v_new + beta * (v_new - s["v"])
            s["v"] = v_new
            s["residual"] = gnorm
            updated[0] = True
            return v_new

        x = net.local_round(x, step)
        if updated[0]:
            sweeps += 1
        if all(net.scratch[k]["done"] for k in range(n)):
            return x, sweeps


def _metered_sum_grad(problem: PenalizedProblem, x: StackedPoint, net: SimNetwork) -> StackedPoint:
    """Averaged-sum gradient computed as one synchronized local round."""
    inv_n = 1.0 / problem.n
    return net.local_round(x, lambda k, blk: problem.losses[k].grad(blk, net.counters) * inv_n)


def am_step(
    state: AmState,
    split: CaseSplit,
    problem: PenalizedProblem,
    config: SolverConfig,
    net: SimNetwork,
    delta: float,
) -> AmState:
    """One outer iteration of the accelerated meta-algorithm at p = 1.

    The step-size condition pins lambda_step = 1/(2H) with no search;
    a_{k+1} solves a^2 = lambda_step (A_k + a), giving the extrapolation
    w_k = (A_k y_k + a_{k+1} z_k) / A_{k+1}.  The auxiliary problem is
    solved to delta, then z is updated with the full gradient at the new
    point: one parallel local call plus one comm round, in both cases.
    """
    H = split.H
    lam_step = 0.5 / H
    a = (lam_step + math.sqrt(lam_step * lam_step + 4.0 * lam_step * state.A)) / 2.0
    A_next = state.A + a
    # algebraic identity of the quadratic formula; guards fp degradation
    if not math.isclose(a * a, lam_step * A_next, rel_tol=1e-10):
        raise AssertionError(f"weight identity violated: a^2={a * a!r} vs {lam_step * A_next!r}")
    w = (state.A / A_next) * state.y + (a / A_next) * state.z

    if split.case_id == "case1":
        grad_f_w = _metered_sum_grad(problem, w, net)
        y_next, inner = solve_aux_case1(
            w, grad_f_w, problem, H, delta, net, config.max_inner_iters
        )
        grad_sum = _metered_sum_grad(problem, y_next, net)
        grad_pen = problem.lam * net.gossip_round(y_next)
    elif split.case_id == "case2":
        pen_grad_w = problem.lam * net.gossip_round(w)
        y_next, inner = solve_aux_case2(
            w, pen_grad_w, problem, H, delta, net, config.max_inner_iters
        )
        grad_pen = problem.lam * net.gossip_round(y_next)
        grad_sum = _metered_sum_grad(problem, y_next, net)
    else:
        raise ValueError(f"am_step does not run in mode {split.case_id!r}")

    z_next = state.z - a * (grad_sum + grad_pen)
    return AmState(
        k=state.k + 1,
        A=A_next,
        y=y_next,
        z=z_next,
        w=w,
        lambda_step=lam_step,
        a_last=a,
        inner_iters_last=inner,
    )


def _trace_row(
    problem: PenalizedProblem,
    x: StackedPoint,
    restart_index: int,
    outer_iter: int,
    inner_iters: int,
    net: SimNetwork,
    t0: float,
) -> TraceRow:
    # diagnostic evaluation is out of band: no counters are charged
    return TraceRow(
        restart_index=restart_index,
        outer_iter=outer_iter,
        inner_iters=inner_iters,
        F_value=problem.F_value(x),
        f_value=problem.sum_value(x),
        consensus_residual=problem.W.consensus_residual(x),
        local_grad_calls=net.counters.local_grad_calls,
        comm_rounds=net.counters.comm_rounds,
        elapsed_seconds=time.perf_counter() - t0,
    )


def _run_decoupled(
    problem: PenalizedProblem,
    config: SolverConfig,
    net: SimNetwork,
    x0: StackedPoint,
    trace: ConvergenceTrace,
    t0: float,
) -> StackedPoint:
    """lambda = 0: accelerated gradient per node, zero communication.

    Each node targets function gap epsilon on its own loss (so the
    averaged objective meets epsilon too), stopping at gradient norm
    sqrt(2 mu_k epsilon).
    """
    n = problem.n
    net.reset_scratch()
    for k, loss in enumerate(problem.losses):
        net.scratch[k].update(
            u=x0.block(k),
            v=x0.block(k),
            done=False,
            beta=_agd_momentum(loss.L, loss.mu),
            step=1.0 / loss.L,
            tol=math.sqrt(2.0 * loss.mu * config.epsilon),
        )

    x = x0
    sweeps = 0
    while sweeps <= config.max_inner_iters:
        updated = [False]

        def step(k: int, _block: np.ndarray) -> np.ndarray:
            s = net.scratch[k]
            if s["done"]:
                return s["v"]
            g = problem.losses[k].grad(s["u"], net.counters)
            gnorm = float(np.linalg.norm(g))
            floor = FLOOR_SAFETY * problem.losses[k].L * (float(np.linalg.norm(s["u"])) + 1.0)
            if gnorm <= max(s["tol"], floor):
                s["done"] = True
                s["v"] = s["u"]
                s["residual"] = gnorm
                return s["v"]
            v_new = s["u"] - s["step"] * g
            s["u"] = v_new + s["beta"] * (v_new - s["v"])
            s["v"] = v_new
            s["residual"] = gnorm
            updated[0] = True
            return v_new

        x = net.local_round(x, step)
        if updated[0]:
            sweeps += 1
        trace.append(_trace_row(problem, x, 0, sweeps, 1, net, t0))
        if all(net.scratch[k]["done"] for k in range(n)):
            return x
    worst = max(net.scratch[k]["residual"] for k in range(n) if not net.scratch[k]["done"])
    raise NonconvergenceError(
        f"decoupled solve stalled at gradient norm {worst:.3e} after {sweeps} sweeps",
        achieved=worst,
        tolerance=min(net.scratch[k]["tol"] for k in range(n)),
        iterations=sweeps,
    )


def run_ram(
    problem: PenalizedProblem,
    config: SolverConfig,
    net: SimNetwork,
    x0: StackedPoint | None = None,
    reference: ReferenceSolution | None = None,
) -> tuple[StackedPoint, ConvergenceTrace]:
    """Run the restarted accelerated meta-algorithm on the penalized problem.

    Every restart k runs the outer loop for N_k iterations from the
    previous output with the halved radius bound R_k.  The trace records
    one row per outer iteration (diagnostic objective evaluations are not
    metered); gaps are measured against the attached reference when given.
    """
    if x0 is None:
        x0 = StackedPoint.zeros(problem.n, problem.d)
    if x0.n != problem.n or x0.d != problem.d:
        raise ValueError("starting point does not match problem dimensions")
    if reference is not None:
        actual = (x0 - reference.x_star_penalized).norm()
        if actual > config.R0:
            warnings.warn(
                f"R0 = {config.R0:g} does not bound the starting distance "
                f"{actual:g}; the restart schedule's guarantee is void",
                stacklevel=2,
            )

    split = select_case(problem, config.case_override)
    H = config.H_override if config.H_override is not None else split.H
    mu = problem.strong_convexity
    L = problem.smoothness

    t0 = time.perf_counter()
    trace = ConvergenceTrace(
        lam=problem.lam,
        case_id=split.case_id,
        target_epsilon=config.epsilon,
        H=H,
        lambda_max=problem.W.lambda_max if split.case_id != "decoupled" else 0.0,
        lambda_min_plus=problem.W.lambda_min_plus if split.case_id != "decoupled" else 0.0,
        F_star=reference.F_star if reference is not None else None,
        f_star=reference.f_star if reference is not None else None,
    )
    trace.append(_trace_row(problem, x0, -1, 0, 0, net, t0))

    if split.case_id == "decoupled":
        try:
            solution = _run_decoupled(problem, config, net, x0, trace, t0)
        except NonconvergenceError as exc:
            exc.trace = trace
            raise
        return solution, trace

    split = replace(split, H=H)
    if config.delta_rule == "fixed":
        delta = float(config.delta_fixed)
    else:
        delta = inner_tolerance(
            config.epsilon, mu, L, problem.lam, problem.W.lambda_max, H
        )
    schedule = restart_schedule(config, mu, H)
    total = sum(N for _, N in schedule)
    if total > MAX_TOTAL_OUTER_ITERS:
        raise SolverConfigError(
            f"schedule of {len(schedule)} restarts x {schedule[0][1]} iterations "
            f"exceeds the hard cap of {MAX_TOTAL_OUTER_ITERS} outer iterations"
        )

    z = x0
    y_out = x0
    try:
        for restart_index, (_R_k, N_k) in enumerate(schedule):
            state = AmState(k=0, A=0.0, y=z, z=z, w=None, lambda_step=0.5 / H)
            for _ in range(N_k):
                state = am_step(state, split, problem, config, net, delta)
                trace.append(
                    _trace_row(
                        problem, state.y, restart_index, state.k, state.inner_iters_last, net, t0
                    )
                )
            z = state.y
            y_out = state.y
    except NonconvergenceError as exc:
        exc.trace = trace
        raise
    return y_out, trace
