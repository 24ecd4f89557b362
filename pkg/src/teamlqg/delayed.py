"""Synthesis for one-step-delayed sharing with sparsity.

The team problem decomposes along the information graph: each node r carries
an estimator state zeta_t^r (the part of the plant state driven by noise
currently known exactly by the agents in r) with its own Riccati recursion
against the node's unique successor.  Finite-horizon gains come from the
backward recursion with X_T^r = Q^{rr}; the recursion's terminal condition
corresponds to charging a terminal state cost x_T^T Q x_T, and every cost in
this module (predicted, moment-propagated, simulated) uses that convention:

    J_T = (1/T) E[ sum_{t<T} (x_t^T Q x_t + 2 x_t^T S u_t + u_t^T R u_t)
                   + x_T^T Q x_T ].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .info_graph import InfoGraph, build_info_graph, partition, validate_sparsity
from .linalg import is_psd, numerical_rank, psd_factor, spectral_radius, sym
from .model import Blocked, Delayed, Homogeneous, TeamSpec
from .riccati import RiccatiError, dare_solve, is_stabilizable


class NodeRecursionError(RiccatiError):
    """Inner matrix R^{rr} + B^T X B not positive definite at some node/stage."""


class RankConditionError(RiccatiError):
    """Unit-circle full-column-rank condition failed at a self-loop node."""


# ---------------------------------------------------------------------------
# stacked data


@dataclass(frozen=True)
class _Stacked:
    """Full stacked matrices of the N-agent problem plus block sizes."""

    N: int
    n: int
    m: int
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray

    def part(self, M, rows, cols, row_block, col_block):
        return partition(M, rows, cols, self.N, row_block, col_block)

    def A_sr(self, s, r):
        return self.part(self.A, s, r, self.n, self.n)

    def B_sr(self, s, r):
        return self.part(self.B, s, r, self.n, self.m)

    def Q_rr(self, r):
        return self.part(self.Q, r, r, self.n, self.n)

    def R_rr(self, r):
        return self.part(self.R, r, r, self.m, self.m)

    def S_rr(self, r):
        return self.part(self.S, r, r, self.n, self.m)


def stacked_data(spec: TeamSpec) -> _Stacked:
    N, n, m = spec.n_dm, spec.n, spec.m
    if isinstance(spec.dynamics, Blocked):
        A, B = spec.dynamics.full_A(), spec.dynamics.full_B()
    elif isinstance(spec.dynamics, Homogeneous):
        A = np.kron(np.eye(N), spec.dynamics.A)
        B = np.kron(np.eye(N), spec.dynamics.B)
    else:
        raise TypeError("unsupported dynamics type")
    eye, off = np.eye(N), np.ones((N, N)) - np.eye(N)
    Q = np.kron(eye, sym(spec.cost.Q)) + np.kron(off, spec.cost.q_tilde_or_zero(n))
    R = np.kron(eye, sym(spec.cost.R)) + np.kron(off, spec.cost.r_tilde_or_zero(m))
    S = np.kron(eye, spec.cost.s_or_zero(n, m))
    return _Stacked(N=N, n=n, m=m, A=A, B=B, Q=Q, R=R, S=S)


def _graph_for(spec: TeamSpec) -> InfoGraph:
    if not isinstance(spec.info, Delayed):
        raise ValueError("delayed solver needs Delayed information")
    return build_info_graph(spec.info.delays)


def check_preconditions(spec: TeamSpec):
    """Sparsity validation; raises on failure so solve calls fail loudly."""
    graph = _graph_for(spec)
    if isinstance(spec.dynamics, Blocked):
        rep = validate_sparsity(spec.info.delays, spec.dynamics)
        if not rep.ok:
            names = ", ".join(c.name for c in rep.failed())
            raise ValueError(f"delay/sparsity validation failed: {names}")
    return graph


# ---------------------------------------------------------------------------
# finite horizon


@dataclass(frozen=True)
class GraphPolicy:
    """Per-node gain schedules for u_t^i = sum_{r containing i} I^{{i},r} K_t^r zeta_t^r.

    ``gains[r]`` is a list over t of (|r|m x |r|n) matrices; ``values[r]``
    the corresponding X_t^r, t = 0..T (or single matrices when stationary).
    """

    graph: InfoGraph
    horizon: int | None           # None for the stationary policy
    gains: dict
    values: dict

    def gain(self, node, t):
        g = self.gains[node]
        return g if self.horizon is None else g[t]

    def as_dict(self):
        key = lambda s: ",".join(str(i + 1) for i in s)
        if self.horizon is None:
            gains = {key(r): g.tolist() for r, g in self.gains.items()}
            values = {key(r): x.tolist() for r, x in self.values.items()}
        else:
            gains = {key(r): [g.tolist() for g in gs] for r, gs in self.gains.items()}
            values = {key(r): [x.tolist() for x in xs] for r, xs in self.values.items()}
        return {
            "kind": "delayed",
            "horizon": self.horizon,
            "nodes": [list(s) for s in self.graph.nodes],
            "edges": [[list(r), list(s)] for r, s in self.graph.edges],
            "injection": {str(i + 1): list(s)
                          for i, s in self.graph.injection_map.items()},
            "gains": gains,
            "values": values,
        }


def _node_step(d: _Stacked, r, s, X_next):
    """One backward Riccati step at node r against successor value X_next."""
    A, B = d.A_sr(s, r), d.B_sr(s, r)
    Q, R, S = d.Q_rr(r), d.R_rr(r), d.S_rr(r)
    G = R + B.T @ X_next @ B
    w = np.linalg.eigvalsh(sym(G))
    if w[0] <= 1e-12 * (1.0 + abs(w[-1])):
        raise NodeRecursionError(
            f"inner matrix not positive definite at node {set(i + 1 for i in r)}"
        )
    K = -np.linalg.solve(sym(G), S.T + B.T @ X_next @ A)
    X = Q + A.T @ X_next @ A - K.T @ G @ K
    return sym(X), K


def solve_delayed_finite(spec: TeamSpec, T: int | None = None):
    """Finite-horizon node gains and the trace form of the optimal cost."""
    T = spec.horizon if T is None else T
    graph = check_preconditions(spec)
    d = stacked_data(spec)
    values = {r: [None] * (T + 1) for r in graph.nodes}
    gains = {r: [None] * T for r in graph.nodes}
    for r in graph.nodes:
        values[r][T] = sym(d.Q_rr(r))
    for t in range(T - 1, -1, -1):
        for r in graph.nodes:
            s = graph.successor_map[r]
            try:
                X, K = _node_step(d, r, s, values[s][t + 1])
            except NodeRecursionError as exc:
                raise NodeRecursionError(f"{exc} at stage {t}") from exc
            values[r][t] = X
            gains[r][t] = K
    policy = GraphPolicy(graph=graph, horizon=T, gains=gains, values=values)
    cost = _trace_cost(spec, graph, values, T)
    return policy, cost


def _node_block(graph, node, i, M, blk):
    """Diagonal block of a node matrix M for agent i (block size blk)."""
    pos = sorted(node).index(i)
    return M[pos * blk:(pos + 1) * blk, pos * blk:(pos + 1) * blk]


def _trace_cost(spec, graph, values, T):
    n = spec.n
    Sd, W = sym(spec.noise.init_diag), sym(spec.noise.sigma_w)
    total = 0.0
    for i in range(spec.n_dm):
        s = graph.injection_map[i]
        total += float(np.trace(_node_block(graph, s, i, values[s][0], n) @ Sd))
        for t in range(T):
            total += float(
                np.trace(_node_block(graph, s, i, values[s][t + 1], n) @ W)
            )
    return total / T


# ---------------------------------------------------------------------------
# estimator propagation and closed-loop evaluation


def _embeddings(graph, d: _Stacked):
    """Selection matrices: state/control embeddings of each node's agents and
    the per-agent noise loading into its injection node."""
    N, n, m = d.N, d.n, d.m
    Ex = {}   # node -> (N*n) x (|r|*n): adds zeta^r agent blocks into x slots
    Eu = {}   # node -> (N*m) x (|r|*m)
    for r in graph.nodes:
        ex = np.zeros((N * n, len(r) * n))
        eu = np.zeros((N * m, len(r) * m))
        for pos, i in enumerate(sorted(r)):
            ex[i * n:(i + 1) * n, pos * n:(pos + 1) * n] = np.eye(n)
            eu[i * m:(i + 1) * m, pos * m:(pos + 1) * m] = np.eye(m)
        Ex[r], Eu[r] = ex, eu
    Wload = {}  # agent i -> (|inj(i)|*n) x n loading of w^i into its node
    for i in range(N):
        s = graph.injection_map[i]
        load = np.zeros((len(s) * n, n))
        pos = sorted(s).index(i)
        load[pos * n:(pos + 1) * n, :] = np.eye(n)
        Wload[i] = load
    return Ex, Eu, Wload


def simulate_estimator(graph: InfoGraph, policy: GraphPolicy, spec: TeamSpec,
                       x0, w):
    """Closed-loop rollout of the estimator states and controls.

    x0: (batch, N*n) initial stacked states; w: (batch, T, N*n) noises.
    Returns (x, zeta, u): x is (batch, T+1, N*n), u is (batch, T, N*m), and
    zeta maps each node to its (batch, T+1, |r|*n) trajectory.
    """
    d = stacked_data(spec)
    Ex, Eu, Wload = _embeddings(graph, d)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    w = np.asarray(w, dtype=float)
    if w.ndim == 2:
        w = w[None]
    batch, T = w.shape[0], w.shape[1]
    N, n, m = d.N, d.n, d.m

    zeta = {r: np.zeros((batch, T + 1, len(r) * n)) for r in graph.nodes}
    for i in range(N):
        s = graph.injection_map[i]
        zeta[s][:, 0] += x0[:, i * n:(i + 1) * n] @ Wload[i].T
    x = np.zeros((batch, T + 1, N * n))
    u = np.zeros((batch, T, N * m))
    x[:, 0] = x0
    for t in range(T):
        ut = np.zeros((batch, N * m))
        for r in graph.nodes:
            ut += zeta[r][:, t] @ (Eu[r] @ policy.gain(r, t)).T
        u[:, t] = ut
        x[:, t + 1] = x[:, t] @ d.A.T + ut @ d.B.T + w[:, t]
        for r in graph.nodes:
            s = graph.successor_map[r]
            M = d.A_sr(s, r) + d.B_sr(s, r) @ policy.gain(r, t)
            zeta[s][:, t + 1] += zeta[r][:, t] @ M.T
        for i in range(N):
            s = graph.injection_map[i]
            zeta[s][:, t + 1] += w[:, t, i * n:(i + 1) * n] @ Wload[i].T
    return x, zeta, u


def closed_loop_cost(spec: TeamSpec, policy: GraphPolicy, T: int | None = None):
    """Exact expected cost of the assembled controller by propagating the
    joint covariance of (x, all zeta) — independent of the trace formula."""
    T = policy.horizon if T is None else T
    if T is None:
        raise ValueError("finite horizon required")
    graph = policy.graph
    d = stacked_data(spec)
    Ex, Eu, Wload = _embeddings(graph, d)
    N, n, m = d.N, d.n, d.m
    nodes = list(graph.nodes)
    offs = {}
    pos = N * n
    for r in nodes:
        offs[r] = pos
        pos += len(r) * n
    dim = pos

    # z_0 = H x_0 with x_0 block-diagonal covariance (independent agents).
    H = np.zeros((dim, N * n))
    H[: N * n] = np.eye(N * n)
    for i in range(N):
        s = graph.injection_map[i]
        H[offs[s]:offs[s] + len(s) * n, i * n:(i + 1) * n] += Wload[i]
    Sig0 = np.kron(np.eye(N), sym(spec.noise.init_diag))
    Z = H @ Sig0 @ H.T
    Gw = np.zeros((dim, N * n))
    Gw[: N * n] = np.eye(N * n)
    for i in range(N):
        s = graph.injection_map[i]
        Gw[offs[s]:offs[s] + len(s) * n, i * n:(i + 1) * n] += Wload[i]
    Wfull = np.kron(np.eye(N), sym(spec.noise.sigma_w))

    total = 0.0
    for t in range(T):
        M = np.zeros((N * m, dim))
        for r in nodes:
            M[:, offs[r]:offs[r] + len(r) * n] += Eu[r] @ policy.gain(r, t)
        Cx = np.zeros((N * n, dim))
        Cx[:, : N * n] = np.eye(N * n)
        stage = (Cx.T @ d.Q @ Cx + Cx.T @ d.S @ M + M.T @ d.S.T @ Cx
                 + M.T @ d.R @ M)
        total += float(np.trace(stage @ Z))
        F = np.zeros((dim, dim))
        F[: N * n, : N * n] = d.A
        F[: N * n] += d.B @ M
        for r in nodes:
            s = graph.successor_map[r]
            blk = d.A_sr(s, r) + d.B_sr(s, r) @ policy.gain(r, t)
            F[offs[s]:offs[s] + len(s) * n, offs[r]:offs[r] + len(r) * n] += blk
        Z = F @ Z @ F.T + Gw @ Wfull @ Gw.T
    total += float(np.trace(d.Q @ Z[: N * n, : N * n]))
    return total / T


# ---------------------------------------------------------------------------
# infinite horizon


def _rank_condition(d: _Stacked, node, grid=720):
    """Full-column-rank test of [A - e^{i theta} I, B; C, D] on a theta grid,
    with [C D] a factor of the stacked cost block of the node."""
    A, B = d.A_sr(node, node), d.B_sr(node, node)
    Q, R, S = d.Q_rr(node), d.R_rr(node), d.S_rr(node)
    nn, mm = A.shape[0], B.shape[1]
    stacked = np.block([[Q, S], [S.T, R]])
    CD = psd_factor(stacked).T          # CD^T CD = stacked
    marginal = []
    for k in range(grid):
        theta = 2.0 * np.pi * k / grid
        top = np.hstack([A - np.exp(1j * theta) * np.eye(nn), B])
        M = np.vstack([top, CD.astype(complex)])
        if numerical_rank(M) < nn + mm:
            marginal.append(theta)
    return marginal


def solve_delayed_infinite(spec: TeamSpec, tol: float = 1e-10,
                           theta_grid: int = 720) -> GraphPolicy:
    """Stationary node gains for the average-cost problem.

    Self-loop nodes solve an algebraic Riccati equation on their partitioned
    data (the cross term S^{ss} absorbed by the change of variables
    u -> u - R^{-1} S^T x); the remaining nodes take one backward step from
    their successor's limit, walking chains from the self-loops inward.  The
    closed-loop estimator dynamics must be stable.
    """
    graph = check_preconditions(spec)
    d = stacked_data(spec)

    values, gains = {}, {}
    for s in graph.self_loop_nodes():
        A, B = d.A_sr(s, s), d.B_sr(s, s)
        Q, R, S = d.Q_rr(s), d.R_rr(s), d.S_rr(s)
        label = set(i + 1 for i in s)
        if not is_stabilizable(A, B):
            raise RiccatiError(f"(A, B) not stabilizable at self-loop node {label}")
        bad = _rank_condition(d, s, theta_grid)
        if bad:
            raise RankConditionError(
                f"rank condition failed at node {label}, theta = {bad[0]:.4f}"
                + (f" (+{len(bad) - 1} more grid points)" if len(bad) > 1 else "")
            )
        Rinv_St = np.linalg.solve(sym(R), S.T)
        Abar = A - B @ Rinv_St
        Qbar = sym(Q - S @ Rinv_St)
        sol = dare_solve(Abar, B, Qbar, R, tol=tol)
        values[s] = sol.P
        gains[s] = sol.K - Rinv_St

    # Remaining nodes: one Riccati step from the successor's limit, resolved
    # in an order that walks each chain backward from its fixed point.
    pending = [r for r in graph.nodes if r not in values]
    while pending:
        progressed = False
        for r in list(pending):
            s = graph.successor_map[r]
            if s in values:
                X, K = _node_step(d, r, s, values[s])
                values[r], gains[r] = X, K
                pending.remove(r)
                progressed = True
        if not progressed:
            raise AssertionError("information graph has a chain without a fixed point")

    policy = GraphPolicy(graph=graph, horizon=None, gains=gains, values=values)
    radius = closed_loop_radius(spec, policy)
    assert radius < 1.0, f"closed-loop estimator dynamics unstable (radius {radius})"
    return policy


def closed_loop_radius(spec: TeamSpec, policy: GraphPolicy) -> float:
    """Spectral radius of the stationary estimator dynamics over all nodes."""
    graph = policy.graph
    d = stacked_data(spec)
    nodes = list(graph.nodes)
    offs, pos = {}, 0
    for r in nodes:
        offs[r] = pos
        pos += len(r) * d.n
    F = np.zeros((pos, pos))
    for r in nodes:
        s = graph.successor_map[r]
        K = policy.gains[r] if policy.horizon is None else policy.gains[r][0]
        blk = d.A_sr(s, r) + d.B_sr(s, r) @ K
        F[offs[s]:offs[s] + len(s) * d.n, offs[r]:offs[r] + len(r) * d.n] += blk
    return spectral_radius(F)


def average_cost(spec: TeamSpec, policy: GraphPolicy) -> float:
    """Steady noise-trace value of the stationary policy."""
    if policy.horizon is not None:
        raise ValueError("average cost applies to the stationary policy")
    W = sym(spec.noise.sigma_w)
    total = 0.0
    for i in range(spec.n_dm):
        s = policy.graph.injection_map[i]
        total += float(
            np.trace(_node_block(policy.graph, s, i, policy.values[s], spec.n) @ W)
        )
    return total


def values_psd(policy: GraphPolicy) -> bool:
    vals = []
    for r, v in policy.values.items():
        vals.extend(v if policy.horizon is not None else [v])
    return all(is_psd(X) for X in vals)
