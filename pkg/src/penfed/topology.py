"""Communication graphs and gossip matrices.

The gossip matrix W-hat is a symmetric positive semi-definite n x n matrix
whose kernel is spanned by the all-ones vector and whose off-diagonal
sparsity follows the communication graph.  The canonical choice is the
graph Laplacian D - A.  The full operator on stacked points is the
Kronecker product W-hat (x) I_d, applied blockwise so the nd x nd matrix
is never materialized: multiplying by it is one round of neighbor
communication.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Tuple

import numpy as np

from .stacked import StackedPoint

KERNEL_TOL = 1e-12
PSD_TOL = 1e-10
ZERO_EIG_REL_THRESHOLD = 1e-9

GRAPH_KINDS = ("path", "cycle", "complete", "star", "custom")


class DisconnectedGraphError(ValueError):
    """Raised when a topology does not connect all nodes."""


class PSDViolationError(ValueError):
    """Raised when a quadratic form <x, Wx> is negative beyond tolerance."""


def _connected_components(n: int, edges) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    components: list[list[int]] = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        components.append(sorted(comp))
    return components


@dataclass(frozen=True)
class Topology:
    """Undirected communication graph on nodes 0..n-1.

    Construction validates: no self-loops, no duplicate or out-of-range
    edges, and connectivity (single component).  For n = 1 the edge set
    is empty.
    """

    n: int
    edges: FrozenSet[Tuple[int, int]]
    kind: str = "custom"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"node count must be >= 1, got {self.n}")
        if self.kind not in GRAPH_KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}, expected one of {GRAPH_KINDS}")
        norm = set()
        for e in self.edges:
            i, j = e
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {e} out of range for n={self.n}")
            key = (min(i, j), max(i, j))
            if key in norm:
                raise ValueError(f"duplicate edge {key}")
            norm.add(key)
        object.__setattr__(self, "edges", frozenset(norm))
        components = _connected_components(self.n, norm)
        if len(components) > 1:
            listed = "; ".join(str(c) for c in components)
            raise DisconnectedGraphError(
                f"graph is disconnected into {len(components)} components: {listed}"
            )

    @staticmethod
    def path(n: int) -> "Topology":
        return Topology(n, frozenset((i, i + 1) for i in range(n - 1)), kind="path")

    @staticmethod
    def cycle(n: int) -> "Topology":
        edges = {(i, i + 1) for i in range(n - 1)}
        if n >= 3:
            edges.add((0, n - 1))
        return Topology(n, frozenset(edges), kind="cycle")

    @staticmethod
    def complete(n: int) -> "Topology":
        return Topology(
            n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)), kind="complete"
        )

    @staticmethod
    def star(n: int) -> "Topology":
        return Topology(n, frozenset((0, i) for i in range(1, n)), kind="star")

    @staticmethod
    def custom(n: int, edges) -> "Topology":
        return Topology(n, frozenset(tuple(e) for e in edges), kind="custom")

    @staticmethod
    def of_kind(kind: str, n: int, edges=None) -> "Topology":
        """Build by kind name; `custom` requires an explicit edge list."""
        if kind == "custom":
            if edges is None:
                raise ValueError("custom topology requires an edge list")
            return Topology.custom(n, edges)
        factory = {
            "path": Topology.path,
            "cycle": Topology.cycle,
            "complete": Topology.complete,
            "star": Topology.star,
        }.get(kind)
        if factory is None:
            raise ValueError(f"unknown graph kind {kind!r}")
        return factory(n)

    def neighbors(self, i: int) -> list[int]:
        return sorted(j for e in self.edges for j in e if i in e and j != i)

    def adjacent(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges


@dataclass(frozen=True)
class SpectralBounds:
    """Extreme spectrum of a gossip matrix.

    lambda_max is the largest eigenvalue, lambda_min_plus the smallest
    eigenvalue above the zero threshold, and chi their ratio (the spectral
    condition number governing communication complexity).
    """

    lambda_max: float
    lambda_min_plus: float
    chi: float


class GossipMatrix:
    """Symmetric PSD matrix on the communication graph, with cached spectrum.

    Invariants checked at construction: exact symmetry, kernel containing
    the all-ones vector (|W 1| <= 1e-12 per component), eigenvalues
    >= -1e-10, and zero entries off the graph pattern.  Immutable after
    construction and safe to share between threads; the lazy spectral
    cache is idempotent.
    """

    def __init__(self, entries: np.ndarray, topology: Topology):
        entries = np.asarray(entries, dtype=float)
        n = topology.n
        if entries.shape != (n, n):
            raise ValueError(f"matrix shape {entries.shape} does not match n={n}")
        if not np.array_equal(entries, entries.T):
            raise ValueError("gossip matrix must be exactly symmetric")
        ones_residual = np.abs(entries.sum(axis=1))
        if ones_residual.max(initial=0.0) > KERNEL_TOL:
            raise ValueError(
                f"kernel violation: |W 1| component up to {ones_residual.max():.3e} > {KERNEL_TOL}"
            )
        for i in range(n):
            for j in range(n):
                if i != j and entries[i, j] != 0.0 and not topology.adjacent(i, j):
                    raise ValueError(f"nonzero entry at non-edge ({i}, {j})")
        if n > 1:
            min_eig = float(np.linalg.eigvalsh(entries)[0])
            if min_eig < -PSD_TOL:
                raise ValueError(f"matrix is not PSD: min eigenvalue {min_eig:.3e}")
        self.n = n
        self.entries = entries
        self.topology = topology
        self._spectral: SpectralBounds | None = None

    @property
    def spectral(self) -> SpectralBounds:
        """Spectral bounds, computed lazily by a dense symmetric eigensolver.

        Dense eigendecomposition is exact at desk scale (n <= 512); a power
        iteration would replace it for large n.
        """
        if self._spectral is None:
            self._spectral = self._compute_spectral()
        return self._spectral

    def _compute_spectral(self) -> SpectralBounds:
        eigs = np.linalg.eigvalsh(self.entries)
        lam_max = float(eigs[-1])
        threshold = ZERO_EIG_REL_THRESHOLD * lam_max
        nonzero = eigs[eigs > threshold]
        if lam_max <= 0.0 or nonzero.size == 0:
            raise ValueError("no nonzero spectrum (zero matrix or single node)")
        lam_min_plus = float(nonzero[0])
        return SpectralBounds(lam_max, lam_min_plus, lam_max / lam_min_plus)

    @property
    def lambda_max(self) -> float:
        return self.spectral.lambda_max

    @property
    def lambda_min_plus(self) -> float:
        return self.spectral.lambda_min_plus

    @property
    def chi(self) -> float:
        return self.spectral.chi

    def apply(self, x: StackedPoint) -> StackedPoint:
        """Blockwise Kronecker product (W-hat (x) I_d) x.

        Output block i is sum_j w_ij x_j; the nd x nd matrix is never
        formed.  One call corresponds to one communication round when
        routed through the network harness.
        """
        if x.n != self.n:
            raise ValueError(f"point has {x.n} blocks, matrix expects {self.n}")
        return StackedPoint(self.entries @ x.blocks)

    def quadratic_form(self, x: StackedPoint) -> float:
        """<x, Wx>, clamping tiny negative roundoff (>= -1e-12 |x|^2) to zero."""
        if x.n != self.n:
            raise ValueError(f"point has {x.n} blocks, matrix expects {self.n}")
        s = float(np.vdot(x.blocks, self.entries @ x.blocks))
        scale = float(np.vdot(x.blocks, x.blocks))
        if s < -KERNEL_TOL * max(scale, 1.0):
            raise PSDViolationError(
                f"<x, Wx> = {s:.3e} below -{KERNEL_TOL:.0e}: corrupted gossip matrix"
            )
        return max(s, 0.0)

    def consensus_residual(self, x: StackedPoint) -> float:
        """||sqrt(W) x||_2 = sqrt(<x, Wx>), without forming a matrix root."""
        return float(np.sqrt(self.quadratic_form(x)))


def build_gossip(topology: Topology, normalize: bool = False) -> GossipMatrix:
    """Graph Laplacian D - A of the topology, optionally scaled to lambda_max = 1.

    Normalization divides every entry by lambda_max, matching the
    totally-connected convention chi = 1, lambda_max = 1 when applied to
    the complete graph.  It is a no-op for the single-node zero matrix.
    """
    n = topology.n
    W = np.zeros((n, n))
    for i, j in topology.edges:
        W[i, j] = -1.0
        W[j, i] = -1.0
        W[i, i] += 1.0
        W[j, j] += 1.0
    matrix = GossipMatrix(W, topology)
    if normalize and n > 1:
        lam_max = matrix.lambda_max
        matrix = GossipMatrix(W / lam_max, topology)
    return matrix


def mean_field_gossip(n: int) -> GossipMatrix:
    """Centralized quadratic penalty (1/n)(I - 11^T/n) as a gossip matrix.

    The mean-deviation penalty (1/n) sum_k |x_k - xbar|^2 equals
    <x, Wx> for this scaled complete-graph Laplacian, so it needs no
    separate code path.
    """
    topo = Topology.complete(n) if n > 1 else Topology.path(1)
    W = (np.eye(n) - np.full((n, n), 1.0 / n)) / n
    W = (W + W.T) / 2.0
    return GossipMatrix(W, topo)


def split_consensus(x: StackedPoint) -> tuple[np.ndarray, StackedPoint]:
    """Split x into its Ker W part and the orthogonal deviation.

    Returns (mean_block, deviation) with x = 1 (x) mean_block + deviation
    exact to roundoff; the deviation's blocks sum to zero, making it
    orthogonal to every consensual point.
    """
    mean = x.blocks.mean(axis=0)
    deviation = StackedPoint(x.blocks - mean)
    return mean, deviation
