"""Deterministic round-based execution harness for decentralized runs.

The harness realizes the synchronous (bulk-synchronous) execution model:
one gossip-matrix application is one communication round, and everything
else is node-local work.  Rounds are the only points where data moves
between nodes; local rounds hand each node a copy of its own block only,
so cross-node reads are impossible by construction.

Solver-level scalar reductions (step sizes, norms for stopping tests) are
orchestration arithmetic and are not metered, matching complexity
accounting that counts only gradient evaluations and W-multiplications.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .objectives import OracleCounters
from .stacked import StackedPoint
from .topology import GossipMatrix, Topology


@dataclass(frozen=True)
class RoundRecord:
    """One harness round: identity, kind, and cumulative counters after it."""

    round_index: int
    tag: str  # "gossip" | "local"
    comm_rounds: int
    local_grad_calls: int


class SimNetwork:
    """Owns the node states, counters, and the append-only round log of a run."""

    def __init__(self, topology: Topology, W: GossipMatrix):
        if W.n != topology.n:
            raise ValueError("gossip matrix and topology disagree on node count")
        self.topology = topology
        self.W = W
        self.counters = OracleCounters()
        self.round_log: list[RoundRecord] = []
        # per-node scratch for inner solvers (momentum state etc.); never
        # read across nodes
        self.scratch: list[dict] = [dict() for _ in range(topology.n)]

    @property
    def n(self) -> int:
        return self.topology.n

    def _log(self, tag: str) -> None:
        self.round_log.append(
            RoundRecord(
                round_index=len(self.round_log),
                tag=tag,
                comm_rounds=self.counters.comm_rounds,
                local_grad_calls=self.counters.local_grad_calls,
            )
        )

    def gossip_round(self, x: StackedPoint) -> StackedPoint:
        """One synchronized neighbor exchange: returns (W-hat (x) I_d) x.

        Each node sends its block to its neighbors and combines what it
        receives with its gossip weights.  Always charges one comm round,
        consensual input included.
        """
        out = self.W.apply(x)
        self.counters.comm_rounds += 1
        self._log("gossip")
        return out

    def local_round(
        self, x: StackedPoint, per_node_fn: Callable[[int, np.ndarray], np.ndarray]
    ) -> StackedPoint:
        """Apply per_node_fn(k, block_k) independently at every node.

        The function receives a copy of the node's own block only.  No
        comm round is charged; gradient evaluations made inside (through
        the loss oracles with these counters) account for themselves, and
        a sweep that evaluated any gradient counts as one parallel call.
        Results merge in fixed node order.
        """
        before = self.counters.local_grad_calls
        blocks = np.empty_like(x.blocks)
        for k in range(self.n):
            new_block = np.asarray(per_node_fn(k, x.block(k)), dtype=float).ravel()
            if new_block.size != x.d:
                raise ValueError(f"node {k} returned a block of size {new_block.size}, expected {x.d}")
            blocks[k] = new_block
        if self.counters.local_grad_calls > before:
            self.counters.parallel_local_calls += 1
            self._log("local")
        return StackedPoint(blocks)

    def reset_scratch(self) -> None:
        for s in self.scratch:
            s.clear()

    def export_round_log(self) -> str:
        """Round log as CSV: round_index, tag, cumulative counters."""
        buf = io.StringIO()
        buf.write("round_index,tag,comm_rounds,local_grad_calls\n")
        for rec in self.round_log:
            buf.write(f"{rec.round_index},{rec.tag},{rec.comm_rounds},{rec.local_grad_calls}\n")
        return buf.getvalue()


def gossip_round(net: SimNetwork, x: StackedPoint) -> StackedPoint:
    return net.gossip_round(x)


def local_round(net: SimNetwork, x: StackedPoint, per_node_fn) -> StackedPoint:
    return net.local_round(x, per_node_fn)
