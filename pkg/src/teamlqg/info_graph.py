"""Information graph for one-step-delayed sharing with sparsity.

Each agent's observation of agent j's state arrives after ``delays[i][j]``
steps (0, 1, or never).  Knowledge propagates along links, so the effective
delay between agents is the shortest-path delay.  The graph nodes are the
knowledge sets s_k^j = {i : effective delay from j to i <= k}; each node has a
unique successor (the set reachable in one more step), and every chain
s_0^j -> s_1^j -> ... terminates in a self-loop node within N steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Blocked, ValidationReport

INF = math.inf


class UnsupportedStructureError(ValueError):
    """Delay pattern outside the one-step-delayed sharing class."""


def effective_delays(delays):
    """All-pairs shortest-path delays over the link graph (Floyd-Warshall).

    Entry (i, j) is the earliest lag at which agent i can know agent j's
    state; direct links have weight delays[i][j] and knowledge relays
    through intermediaries.  Zero-delay links relay at zero cost, which is
    why hop counting alone is not enough.
    """
    D = np.asarray(delays, dtype=float)
    N = D.shape[0]
    if D.shape != (N, N):
        raise ValueError("delays must be square")
    for i in range(N):
        if D[i, i] != 0.0:
            raise UnsupportedStructureError("self-delays must be zero")
    finite = D[np.isfinite(D)]
    if np.any((finite != 0.0) & (finite != 1.0)):
        raise UnsupportedStructureError(
            "finite delays must be 0 or 1 (one-step-delayed sharing)"
        )
    E = D.copy()
    for k in range(N):
        E = np.minimum(E, E[:, k:k + 1] + E[k:k + 1, :])
    return E


@dataclass(frozen=True)
class InfoGraph:
    """Knowledge-set graph: nodes are sorted DM-index tuples, each node has a
    unique successor, and noise/initial-state i enters the graph at the node
    of agents that observe agent i with zero effective delay."""

    n_dm: int
    nodes: tuple          # tuple of sorted tuples of DM indices
    edges: tuple          # (r, s) node pairs with successor(r) = s
    root_map: dict        # DM i -> node s_0^i
    successor_map: dict   # node -> node
    injection_map: dict   # DM i -> node receiving x_0^i and w_t^i

    def self_loop_nodes(self):
        return tuple(s for s in self.nodes if self.successor_map[s] == s)

    def chain(self, node):
        """Successor chain from ``node`` up to and including its fixed point."""
        out = [node]
        while self.successor_map[out[-1]] != out[-1]:
            out.append(self.successor_map[out[-1]])
        return out

    def adjacency_listing(self):
        fmt = lambda s: "{" + ",".join(str(i + 1) for i in s) + "}"
        return "\n".join(
            f"{fmt(r)} -> {fmt(self.successor_map[r])}" for r in self.nodes
        )


def build_info_graph(delays) -> InfoGraph:
    """Assemble the knowledge-set graph from an N x N delay matrix."""
    E = effective_delays(delays)
    N = E.shape[0]

    def knows_within(j, k):
        return tuple(int(i) for i in range(N) if E[i, j] <= k)

    def successor(s):
        return tuple(
            int(i) for i in range(N) if min(E[i, l] for l in s) <= 1.0
        )

    nodes = set()
    root_map = {}
    for j in range(N):
        k = 0
        s = knows_within(j, 0)
        root_map[j] = s
        while True:
            nodes.add(s)
            k += 1
            nxt = knows_within(j, k)
            if nxt == s:
                break
            s = nxt

    node_list = tuple(sorted(nodes, key=lambda s: (len(s), s)))
    successor_map = {s: successor(s) for s in node_list}
    for s, nxt in successor_map.items():
        if nxt not in nodes:
            # The one-more-step set of any s_k^j is s_{k+1}^j, already a node.
            raise AssertionError(f"successor of {s} escaped the node set")
    edges = tuple((s, successor_map[s]) for s in node_list)
    injection_map = {j: root_map[j] for j in range(N)}
    return InfoGraph(
        n_dm=N,
        nodes=node_list,
        edges=edges,
        root_map=root_map,
        successor_map=successor_map,
        injection_map=injection_map,
    )


def validate_sparsity(delays, dynamics: Blocked) -> ValidationReport:
    """Check that the dynamics respect the delay pattern.

    Agent j's state may enter agent i's dynamics only if i learns it within
    one step (effective delay <= 1); otherwise the block must vanish.  A
    directed cycle of total delay zero would make the knowledge sets
    circular and is rejected.
    """
    rep = ValidationReport()
    E = effective_delays(delays)
    N = E.shape[0]

    cycle_free = True
    for i in range(N):
        for j in range(N):
            if i != j and E[i, j] == 0.0 and E[j, i] == 0.0:
                cycle_free = False
    rep.add(
        "no zero-delay cycles",
        cycle_free,
        "" if cycle_free else "zero-delay cycle: mutual zero-delay links found",
    )

    for i in range(N):
        for j in range(N):
            if i == j or E[i, j] <= 1.0:
                continue
            for name, blocks in (("A", dynamics.A_blocks), ("B", dynamics.B_blocks)):
                ok = not np.any(blocks[i][j] != 0.0)
                rep.add(
                    f"sparsity: {name}^{{{i + 1}{j + 1}}} must be zero",
                    ok,
                    f"effective delay {E[i, j]}",
                )
    if rep.ok:
        rep.add("sparsity pattern consistent", True)
    return rep


def partition(M_full, row_subset, col_subset, n_dm, row_block, col_block):
    """Block submatrix of an (n_dm*row_block) x (n_dm*col_block) matrix.

    Stacks blocks whose agent row index is in ``row_subset`` and agent
    column index is in ``col_subset``, both in sorted order.
    """
    M = np.asarray(M_full, dtype=float)
    if M.shape != (n_dm * row_block, n_dm * col_block):
        raise ValueError(
            f"expected shape {(n_dm * row_block, n_dm * col_block)}, got {M.shape}"
        )
    rows = sorted(row_subset)
    cols = sorted(col_subset)
    if any(i < 0 or i >= n_dm for i in rows + cols):
        raise IndexError("DM index out of range")
    ridx = np.concatenate(
        [np.arange(i * row_block, (i + 1) * row_block) for i in rows]
    )
    cidx = np.concatenate(
        [np.arange(j * col_block, (j + 1) * col_block) for j in cols]
    )
    return M[np.ix_(ridx, cidx)]
