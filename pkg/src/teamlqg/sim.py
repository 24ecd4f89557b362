"""Monte Carlo closed-loop engine and structural property checks.

Policies are affine and information-measurable by construction: a tree-class
policy maps each agent's own state and own initial-state statistic to its
control; a graph-class policy reads only the shared estimator states.  The
engine provides independent cost estimates (per-rollout streams keyed by the
seed, hence bitwise deterministic) next to the solvers' exact formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import delayed as _delayed
from .model import Delayed, NoiseSpec, TeamSpec, conditional_gain
from .rng import PrimitiveSampler
from .tree import (
    Population,
    TreePolicy,
    cost_weights,
    mean_field,
    solve_tree,
    meanfield_limit_policy,
)


def _coupling_coeffs(mode: Population, N: int):
    """Off-diagonal stage-cost coefficients (control, state) such that the
    coupling equals c * (sum_i u_i)^T M (sum_j u_j) minus the diagonal."""
    if mode.kind == "two_dm":
        return 1.0, 0.0
    if mode.kind == "n_dm":
        return 2.0, 0.0
    return 2.0 / (N - 1), 2.0 / (N - 1)


# ---------------------------------------------------------------------------
# policy sets


@dataclass(frozen=True)
class TreePolicySet:
    """Per-agent affine schedules u_t^i = K[i][t] x_t^i + L[i][t] c^i with
    c^i = alpha * Sigma * x_0^i; agents need not share schedules."""

    mode: Population
    K: tuple     # K[i][t], (m x n)
    L: tuple     # L[i][t], (m x n)

    @property
    def n_dm(self):
        return len(self.K)

    @property
    def horizon(self):
        return len(self.K[0])

    @classmethod
    def from_policy(cls, policy: TreePolicy, n_dm: int):
        K = tuple(tuple(policy.K) for _ in range(n_dm))
        L = tuple(tuple(policy.L) for _ in range(n_dm))
        return cls(mode=policy.mode, K=K, L=L)

    def stacked(self):
        """(N, T, m, n) gain arrays."""
        return (np.array([[k for k in row] for row in self.K]),
                np.array([[l for l in row] for row in self.L]))

    def permuted(self, perm):
        """Policy profile where agent i runs agent perm[i]'s schedule."""
        return TreePolicySet(
            mode=self.mode,
            K=tuple(self.K[perm[i]] for i in range(self.n_dm)),
            L=tuple(self.L[perm[i]] for i in range(self.n_dm)),
        )


@dataclass(frozen=True)
class GraphPolicySet:
    """Delayed-sharing controller: the per-node gain schedules."""

    policy: _delayed.GraphPolicy


@dataclass(frozen=True)
class SimReport:
    mean_cost: float
    std_error: float
    n_rollouts: int
    seed: int
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "mean_cost": self.mean_cost,
            "std_error": self.std_error,
            "n_rollouts": self.n_rollouts,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
        }


# ---------------------------------------------------------------------------
# Monte Carlo rollouts


def _tree_mc(spec: TeamSpec, pset: TreePolicySet, T, n_rollouts, seed,
             want_traj=False):
    N = pset.n_dm
    A, B = spec.dynamics.A, spec.dynamics.B
    Q, R = spec.cost.Q, spec.cost.R
    Rt = spec.cost.r_tilde_or_zero(spec.m)
    Qt = spec.cost.q_tilde_or_zero(spec.n)
    cR, cQ = _coupling_coeffs(pset.mode, N)
    _, _, _, alpha = cost_weights(pset.mode)
    Sigma = conditional_gain(spec.noise)
    Ks, Ls = pset.stacked()

    sampler = PrimitiveSampler(spec.noise, N)
    x0, w = sampler.draw(T, n_rollouts, seed)
    c = alpha * (x0 @ Sigma.T)
    x = x0
    costs = np.zeros(n_rollouts)
    traj = {"u": [], "x": []} if want_traj else None
    for t in range(T):
        u = (np.einsum("aij,raj->rai", Ks[:, t], x)
             + np.einsum("aij,raj->rai", Ls[:, t], c))
        stage = (np.einsum("rai,ij,raj->r", x, Q, x)
                 + np.einsum("rai,ij,raj->r", u, R, u))
        if cR and np.any(Rt):
            su = u.sum(axis=1)
            stage += cR * (np.einsum("ri,ij,rj->r", su, Rt, su)
                           - np.einsum("rai,ij,raj->r", u, Rt, u))
        if cQ and np.any(Qt):
            sx = x.sum(axis=1)
            stage += cQ * (np.einsum("ri,ij,rj->r", sx, Qt, sx)
                           - np.einsum("rai,ij,raj->r", x, Qt, x))
        costs += stage
        if want_traj:
            traj["u"].append(u)
            traj["x"].append(x)
        x = x @ A.T + u @ B.T + w[:, t]
    costs /= T
    return (costs, traj) if want_traj else (costs, None)


def _graph_mc(spec: TeamSpec, pset: GraphPolicySet, T, n_rollouts, seed):
    N, n = spec.n_dm, spec.n
    d = _delayed.stacked_data(spec)
    sampler = PrimitiveSampler(spec.noise, N)
    x0, w = sampler.draw(T, n_rollouts, seed)
    x0 = x0.reshape(n_rollouts, N * n)
    w = w.reshape(n_rollouts, T, N * n)
    x, _, u = _delayed.simulate_estimator(pset.policy.graph, pset.policy, spec,
                                          x0, w)
    costs = np.zeros(n_rollouts)
    for t in range(T):
        xt, ut = x[:, t], u[:, t]
        costs += (np.einsum("ri,ij,rj->r", xt, d.Q, xt)
                  + 2.0 * np.einsum("ri,ij,rj->r", xt, d.S, ut)
                  + np.einsum("ri,ij,rj->r", ut, d.R, ut))
    costs += np.einsum("ri,ij,rj->r", x[:, T], d.Q, x[:, T])
    return costs / T


def rollout_costs(spec, policies, T, n_rollouts, seed):
    if isinstance(policies, TreePolicySet):
        costs, _ = _tree_mc(spec, policies, T, n_rollouts, seed)
        return costs
    if isinstance(policies, GraphPolicySet):
        if not isinstance(spec.info, Delayed):
            raise ValueError("graph policies require delayed information")
        return _graph_mc(spec, policies, T, n_rollouts, seed)
    raise TypeError(f"unsupported policy set type {type(policies).__name__}")


def simulate(spec: TeamSpec, policies, T: int, n_rollouts: int,
             seed: int) -> SimReport:
    costs = rollout_costs(spec, policies, T, n_rollouts, seed)
    se = float(np.std(costs, ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return SimReport(mean_cost=float(np.mean(costs)), std_error=se,
                     n_rollouts=n_rollouts, seed=int(seed))


# ---------------------------------------------------------------------------
# exact (moment-based) evaluation of asymmetric tree profiles


def exact_cost_general(spec: TeamSpec, policies, T: int) -> float:
    """Exact expected cost for any policy set, by covariance propagation of
    the full stacked closed loop (no Monte Carlo error)."""
    if isinstance(policies, GraphPolicySet):
        return _delayed.closed_loop_cost(spec, policies.policy, T)
    pset = policies
    N, n, m = pset.n_dm, spec.n, spec.m
    A, B = spec.dynamics.A, spec.dynamics.B
    cR, cQ = _coupling_coeffs(pset.mode, N)
    _, _, _, alpha = cost_weights(pset.mode)
    Sigma = conditional_gain(spec.noise)
    eye, off = np.eye(N), np.ones((N, N)) - np.eye(N)
    Qfull = np.kron(eye, spec.cost.Q) + cQ * np.kron(off, spec.cost.q_tilde_or_zero(n))
    Rfull = np.kron(eye, spec.cost.R) + cR * np.kron(off, spec.cost.r_tilde_or_zero(m))
    Wfull = np.kron(eye, spec.noise.sigma_w)
    Sig0 = (np.kron(eye, spec.noise.init_diag)
            + np.kron(off, spec.noise.init_offdiag))

    # Augmented state z = (x_t, x_0); controls read own x_t and own x_0.
    dim = 2 * N * n
    Z = np.block([[Sig0, Sig0], [Sig0, Sig0]])
    total = 0.0
    for t in range(T):
        M = np.zeros((N * m, dim))
        F = np.zeros((dim, dim))
        F[N * n:, N * n:] = np.eye(N * n)
        for i in range(N):
            Ki, Li = pset.K[i][t], pset.L[i][t]
            M[i * m:(i + 1) * m, i * n:(i + 1) * n] = Ki
            M[i * m:(i + 1) * m, N * n + i * n:N * n + (i + 1) * n] = \
                alpha * Li @ Sigma
            F[i * n:(i + 1) * n, i * n:(i + 1) * n] = A + B @ Ki
            F[i * n:(i + 1) * n, N * n + i * n:N * n + (i + 1) * n] = \
                alpha * B @ Li @ Sigma
        Cq = np.zeros((dim, dim))
        Cq[: N * n, : N * n] = Qfull
        stage = Cq + M.T @ Rfull @ M
        total += float(np.trace(stage @ Z))
        Znew = F @ Z @ F.T
        Znew[: N * n, : N * n] += Wfull
        Z = Znew
    return total / T


# ---------------------------------------------------------------------------
# structural checks


def exchangeability_check(spec: TeamSpec, policies: TreePolicySet, permutation,
                          n_rollouts: int, seed: int):
    """Estimates J(permuted profile) - J(profile) with common random numbers.

    For exchangeable specs the true difference is zero for any permutation.
    Returns (delta_mean, 3-standard-error half width).
    """
    T = policies.horizon
    base = rollout_costs(spec, policies, T, n_rollouts, seed)
    perm = rollout_costs(spec, policies.permuted(list(permutation)), T,
                         n_rollouts, seed)
    diff = perm - base
    se = float(np.std(diff, ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return float(np.mean(diff)), 3.0 * se


def symmetrize(policies: TreePolicySet) -> TreePolicySet:
    """Equal-weight average of the profile over all agent relabelings.

    Averaging the profile over every permutation assigns each agent the
    uniform average of all agents' schedules, so the average is computed in
    closed form rather than by enumerating permutations.
    """
    Ks, Ls = policies.stacked()
    Kbar, Lbar = Ks.mean(axis=0), Ls.mean(axis=0)
    N, T = policies.n_dm, policies.horizon
    K = tuple(tuple(Kbar[t] for t in range(T)) for _ in range(N))
    L = tuple(tuple(Lbar[t] for t in range(T)) for _ in range(N))
    return TreePolicySet(mode=policies.mode, K=K, L=L)


def symmetrization_check(spec: TeamSpec, policies: TreePolicySet,
                         n_rollouts: int, seed: int):
    """cost(symmetrized) vs cost(original) under common random numbers.

    Convexity plus exchangeability implies the symmetrized profile does at
    least as well; returns (cost_sym, cost_orig, 3-SE half width of the
    difference).
    """
    T = policies.horizon
    orig = rollout_costs(spec, policies, T, n_rollouts, seed)
    symm = rollout_costs(spec, symmetrize(policies), T, n_rollouts, seed)
    diff = symm - orig
    se = float(np.std(diff, ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return float(np.mean(symm)), float(np.mean(orig)), 3.0 * se


def combine(p1: TreePolicySet, p2: TreePolicySet, a: float) -> TreePolicySet:
    """Pointwise convex combination a*p1 + (1-a)*p2 of affine profiles."""
    if p1.mode != p2.mode or p1.n_dm != p2.n_dm or p1.horizon != p2.horizon:
        raise ValueError("profiles must share mode, size, and horizon")
    N, T = p1.n_dm, p1.horizon
    K = tuple(tuple(a * p1.K[i][t] + (1 - a) * p2.K[i][t] for t in range(T))
              for i in range(N))
    L = tuple(tuple(a * p1.L[i][t] + (1 - a) * p2.L[i][t] for t in range(T))
              for i in range(N))
    return TreePolicySet(mode=p1.mode, K=K, L=L)


def convex_combination_check(spec: TeamSpec, p1: TreePolicySet,
                             p2: TreePolicySet, a: float,
                             n_rollouts: int, seed: int):
    """J(a p1 + (1-a) p2) <= a J(p1) + (1-a) J(p2) under common random
    numbers; returns (lhs, rhs, 3-SE half width of lhs - rhs)."""
    T = p1.horizon
    c1 = rollout_costs(spec, p1, T, n_rollouts, seed)
    c2 = rollout_costs(spec, p2, T, n_rollouts, seed)
    cm = rollout_costs(spec, combine(p1, p2, a), T, n_rollouts, seed)
    gap = cm - (a * c1 + (1 - a) * c2)
    se = float(np.std(gap, ddof=1) / np.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return float(np.mean(cm)), float(np.mean(a * c1 + (1 - a) * c2)), 3.0 * se


def pbp_check(spec: TeamSpec, policies, T: int, step: float = 1e-4):
    """Max unilateral cost decrease over single-entry gain perturbations.

    Each agent's (or node's) gain entries are perturbed by +/-step and the
    cost re-evaluated exactly (moment propagation).  At an optimum the
    largest decrease is bounded by the second-order step**2 term; a clearly
    positive value flags a non-optimal policy.
    """
    if isinstance(policies, GraphPolicySet):
        return _pbp_graph(spec, policies, T, step)
    base = exact_cost_general(spec, policies, T)
    best = -np.inf
    Ks, Ls = policies.stacked()
    N = policies.n_dm
    for which, G in (("K", Ks), ("L", Ls)):
        for idx in np.ndindex(G.shape):
            for s in (step, -step):
                Gp = G.copy()
                Gp[idx] += s
                K = Ks if which == "L" else Gp
                L = Ls if which == "K" else Gp
                pset = TreePolicySet(
                    mode=policies.mode,
                    K=tuple(tuple(K[i]) for i in range(N)),
                    L=tuple(tuple(L[i]) for i in range(N)),
                )
                best = max(best, base - exact_cost_general(spec, pset, T))
    return best


def _pbp_graph(spec, policies, T, step):
    pol = policies.policy
    if pol.horizon is None:
        raise ValueError("finite-horizon graph policy required")
    base = _delayed.closed_loop_cost(spec, pol, T)
    best = -np.inf
    for r in pol.graph.nodes:
        for t in range(T):
            G = pol.gains[r][t]
            for idx in np.ndindex(G.shape):
                for s in (step, -step):
                    gains = {k: list(v) for k, v in pol.gains.items()}
                    Gp = G.copy()
                    Gp[idx] += s
                    gains[r][t] = Gp
                    pert = _delayed.GraphPolicy(graph=pol.graph, horizon=T,
                                                gains=gains, values=pol.values)
                    best = max(best, base - _delayed.closed_loop_cost(spec, pert, T))
    return best


def certainty_equivalence_check(spec: TeamSpec, n_rollouts: int, seed: int):
    """The solved gains must depend on the noise only through its moments.

    Solves the same instance under the gaussian and uniform families
    (identical covariances), asserts gain equality exactly, and checks the
    uniform-noise Monte Carlo cost against the exact moment cost.
    """
    from .tree import default_mode, exact_policy_cost

    uniform_noise = NoiseSpec(sigma_w=spec.noise.sigma_w,
                              init_diag=spec.noise.init_diag,
                              init_offdiag=spec.noise.init_offdiag,
                              family="uniform")
    uni_spec = replace(spec, noise=uniform_noise)
    T = spec.horizon
    pol_g = solve_tree(spec, T)
    pol_u = solve_tree(uni_spec, T)
    gains_equal = (
        all(np.array_equal(a, b) for a, b in zip(pol_g.K, pol_u.K))
        and all(np.array_equal(a, b) for a, b in zip(pol_g.L, pol_u.L))
    )
    mode = default_mode(spec)
    exact = exact_policy_cost(spec, T, pol_g.K, pol_g.L, mode)
    pset = TreePolicySet.from_policy(pol_g, spec.n_dm)
    rep = simulate(uni_spec, pset, T, n_rollouts, seed)
    mc_ok = abs(rep.mean_cost - exact) <= 3.0 * rep.std_error
    defect = pbp_check(spec, pset, T)
    return {
        "gains_identical": bool(gains_equal),
        "exact_cost": exact,
        "uniform_mc_cost": rep.mean_cost,
        "uniform_mc_3se": 3.0 * rep.std_error,
        "uniform_mc_within_3se": bool(mc_ok),
        "stationarity_defect": float(defect),
    }


# ---------------------------------------------------------------------------
# mean-field sweep


def mft_sweep(spec: TeamSpec, T: int, schedule, n_rollouts: int, seed: int):
    """Convergence table of the N-agent mean-field optima toward the limit.

    For each N in the schedule: the N-optimal coupling gains, exact and
    Monte Carlo costs, the cost of the frozen limit policy on the N-agent
    problem, empirical-measure moment diagnostics comparing the two
    policies' (control, state) samples, and a uniform-integrability
    surrogate E|u^N - u^inf|^2.
    """
    from .tree import exact_policy_cost

    schedule = sorted(int(N) for N in schedule)
    if len(schedule) < 3:
        raise ValueError("schedule needs at least 3 population sizes")
    limit = meanfield_limit_policy(spec, T).policy

    rows = []
    prev_L = None
    for N in schedule:
        nspec = replace(spec, n_dm=N)
        pol = solve_tree(nspec, T, mode=mean_field(N))
        Larr = np.stack(pol.L)
        l_diff = (None if prev_L is None
                  else float(np.max([np.linalg.norm(Larr[t] - prev_L[t])
                                     for t in range(T)])))
        prev_L = Larr

        pset_n = TreePolicySet.from_policy(pol, N)
        lim_pol = TreePolicy(horizon=T, mode=mean_field(N), K=limit.K,
                             L=limit.L, P=limit.P, G=limit.G)
        pset_lim = TreePolicySet.from_policy(lim_pol, N)

        costs_n, traj_n = _tree_mc(nspec, pset_n, T, n_rollouts, seed,
                                   want_traj=True)
        costs_l, traj_l = _tree_mc(nspec, pset_lim, T, n_rollouts, seed,
                                   want_traj=True)
        se_n = float(np.std(costs_n, ddof=1) / np.sqrt(n_rollouts))
        se_gap = float(np.std(costs_n - costs_l, ddof=1) / np.sqrt(n_rollouts))

        u_n = np.stack(traj_n["u"], axis=1)   # (R, T, N, m)
        u_l = np.stack(traj_l["u"], axis=1)
        x_n = np.stack(traj_n["x"], axis=1)
        x_l = np.stack(traj_l["x"], axis=1)
        # Empirical measures: across-agent first/second moments per rollout,
        # then averaged over rollouts, for both policies.
        m1 = float(np.linalg.norm(u_n.mean(axis=(0, 2)) - u_l.mean(axis=(0, 2)))
                   + np.linalg.norm(x_n.mean(axis=(0, 2)) - x_l.mean(axis=(0, 2))))
        m2 = float(
            np.linalg.norm(np.einsum("rtai,rtaj->tij", u_n, u_n)
                           - np.einsum("rtai,rtaj->tij", u_l, u_l))
            / (n_rollouts * N)
            + np.linalg.norm(np.einsum("rtai,rtaj->tij", x_n, x_n)
                             - np.einsum("rtai,rtaj->tij", x_l, x_l))
            / (n_rollouts * N)
        )
        ui = float(np.mean(np.sum((u_n - u_l) ** 2, axis=-1)))

        rows.append({
            "N": N,
            "L_diff_prev": l_diff,
            "predicted_cost": exact_policy_cost(nspec, T, pol.K, pol.L,
                                                mean_field(N)),
            "mc_cost": float(np.mean(costs_n)),
            "mc_3se": 3.0 * se_n,
            "limit_policy_cost": float(np.mean(costs_l)),
            "cost_gap": float(np.mean(costs_l - costs_n)),
            "cost_gap_3se": 3.0 * se_gap,
            "moment_dist_first": m1,
            "moment_dist_second": m2,
            "ui_surrogate": ui,
        })
    return rows
