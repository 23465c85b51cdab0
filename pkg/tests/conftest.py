"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from penfed import (
    PenalizedProblem,
    QuadraticLoss,
    SimNetwork,
    Topology,
    build_gossip,
    random_quadratic_problem,
)


def two_node_problem(lam: float) -> PenalizedProblem:
    """Path graph on two nodes with f1(v) = (v-1)^2/2, f2(v) = (v+1)^2/2.

    Stationarity gives the closed form x* = (1/(1+4 lam), -1/(1+4 lam)).
    """
    W = build_gossip(Topology.path(2))
    losses = [
        QuadraticLoss(np.array([[1.0]]), np.array([1.0]), c=0.5),
        QuadraticLoss(np.array([[1.0]]), np.array([-1.0]), c=0.5),
    ]
    return PenalizedProblem(losses, W, lam)


def two_node_network() -> SimNetwork:
    topo = Topology.path(2)
    return SimNetwork(topo, build_gossip(topo))


def central_difference(f, v: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient oracle."""
    v = np.asarray(v, dtype=float)
    g = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        g[i] = (f(v + e) - f(v - e)) / (2.0 * h)
    return g


def dense_kron_matrix(W_hat: np.ndarray, d: int) -> np.ndarray:
    """The explicit nd x nd operator (independent of the blockwise apply)."""
    return np.kron(W_hat, np.eye(d))


def make_network_and_problem(kind: str, n: int, d: int, lam: float, seed: int):
    topo = Topology.of_kind(kind, n)
    W = build_gossip(topo)
    problem = random_quadratic_problem(W, d, seed=seed, lam=lam)
    return SimNetwork(topo, W), problem


@pytest.fixture
def rng():
    return np.random.default_rng(20250808)
