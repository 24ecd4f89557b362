"""Delayed-sharing synthesis: centralized oracle, estimator identities,
cost agreement, and the stationary policy."""

import math

import numpy as np
import pytest

from teamlqg.delayed import (
    GraphPolicy,
    average_cost,
    closed_loop_cost,
    closed_loop_radius,
    simulate_estimator,
    solve_delayed_finite,
    solve_delayed_infinite,
    values_psd,
)
from teamlqg.model import (
    Blocked,
    CostSpec,
    Delayed,
    Homogeneous,
    NoiseSpec,
    TeamSpec,
)

from conftest import coupled_delayed_spec_2dm, single_dm_delayed_spec

INF = math.inf
PHI = (1.0 + np.sqrt(5.0)) / 2.0


def dp_oracle(A, B, Q, R, S, T):
    """Textbook finite-horizon LQR with cross term and terminal cost Q."""
    Ks, Xs = [None] * T, [None] * (T + 1)
    X = 0.5 * (Q + Q.T)
    Xs[T] = X
    for t in range(T - 1, -1, -1):
        G = R + B.T @ X @ B
        K = -np.linalg.solve(G, S.T + B.T @ X @ A)
        X = Q + A.T @ X @ A + (S + A.T @ X @ B) @ K
        X = 0.5 * (X + X.T)
        Ks[t], Xs[t] = K, X
    return Ks, Xs


def decoupled_2dm_spec(T=3):
    return TeamSpec(
        n_dm=2, horizon=T,
        dynamics=Blocked(
            A_blocks=((np.array([[0.8]]), np.array([[0.0]])),
                      (np.array([[0.0]]), np.array([[0.6]]))),
            B_blocks=((np.array([[1.0]]), np.array([[0.0]])),
                      (np.array([[0.0]]), np.array([[1.0]]))),
        ),
        cost=CostSpec(Q=[[1.0]], R=[[1.0]]),
        noise=NoiseSpec(sigma_w=[[0.5]], init_diag=[[1.0]],
                        init_offdiag=[[0.0]]),
        info=Delayed(delays=((0.0, INF), (INF, 0.0))),
    )


class TestFiniteHorizon:
    def test_single_dm_matches_dp_oracle(self, rng):
        """20 random scalar and 2-state instances against a brute-force
        dynamic-programming recursion, gains and cost to 1e-10."""
        for trial in range(20):
            spec = single_dm_delayed_spec(rng, n=1 + trial % 2)
            T = spec.horizon
            pol, cost = solve_delayed_finite(spec, T)
            A, B = spec.dynamics.A, spec.dynamics.B
            S = spec.cost.s_or_zero(spec.n, spec.m)
            Ks, Xs = dp_oracle(A, B, spec.cost.Q, spec.cost.R, S, T)
            node = pol.graph.nodes[0]
            for t in range(T):
                assert np.abs(pol.gains[node][t] - Ks[t]).max() < 1e-10
            Sd = 0.5 * (spec.noise.init_diag + spec.noise.init_diag.T)
            W = 0.5 * (spec.noise.sigma_w + spec.noise.sigma_w.T)
            oracle = (np.trace(Xs[0] @ Sd)
                      + sum(np.trace(Xs[t + 1] @ W) for t in range(T))) / T
            assert abs(cost - oracle) < 1e-10 * (1 + abs(oracle))

    def test_decoupled_two_dm_equals_standalone_lqr(self):
        spec = decoupled_2dm_spec(T=4)
        pol, _ = solve_delayed_finite(spec, 4)
        for i, a in enumerate((0.8, 0.6)):
            Ks, _ = dp_oracle(np.array([[a]]), np.array([[1.0]]),
                              np.array([[1.0]]), np.array([[1.0]]),
                              np.zeros((1, 1)), 4)
            node = (i,)
            for t in range(4):
                assert np.abs(pol.gains[node][t] - Ks[t]).max() < 1e-12

    def test_trace_cost_equals_closed_loop_moments(self):
        spec = coupled_delayed_spec_2dm(T=4)
        pol, cost = solve_delayed_finite(spec, 4)
        assert abs(cost - closed_loop_cost(spec, pol)) < 1e-8 * (1 + abs(cost))

    def test_values_psd_and_terminal_condition(self):
        spec = coupled_delayed_spec_2dm(T=3)
        pol, _ = solve_delayed_finite(spec, 3)
        assert values_psd(pol)
        for r in pol.graph.nodes:
            XT = pol.values[r][3]
            assert XT.shape == (len(r), len(r))
            assert np.allclose(XT, np.eye(len(r)))  # Q = I blocks, Q_tilde = 0

    def test_diagonal_constant_value_array(self):
        """X_{t+1}^{r,(T+1)} equals X_t^{r,(T)} for every node."""
        spec = coupled_delayed_spec_2dm(T=5)
        p5, _ = solve_delayed_finite(spec, 5)
        p6, _ = solve_delayed_finite(spec, 6)
        for r in p5.graph.nodes:
            for t in range(6):
                assert np.abs(p6.values[r][t + 1] - p5.values[r][t]).max() < 1e-12

    def test_gain_equivariance_at_symmetric_nodes(self):
        """Exchangeable blocked spec: the singleton nodes' gains coincide."""
        Ablk = ((np.array([[0.8]]), np.array([[0.3]])),
                (np.array([[0.3]]), np.array([[0.8]])))
        Bblk = ((np.array([[1.0]]), np.array([[0.2]])),
                (np.array([[0.2]]), np.array([[1.0]])))
        spec = TeamSpec(
            n_dm=2, horizon=4,
            dynamics=Blocked(A_blocks=Ablk, B_blocks=Bblk),
            cost=CostSpec(Q=[[1.0]], R=[[1.0]]),
            noise=NoiseSpec(sigma_w=[[0.5]], init_diag=[[1.0]],
                            init_offdiag=[[0.0]]),
            info=Delayed(delays=((0.0, 1.0), (1.0, 0.0))),
        )
        pol, _ = solve_delayed_finite(spec, 4)
        for t in range(4):
            assert np.allclose(pol.gains[(0,)][t], pol.gains[(1,)][t])
            # joint node invariant under swapping the two agents
            Kj = pol.gains[(0, 1)][t]
            Pswap = np.array([[0.0, 1.0], [1.0, 0.0]])
            assert np.allclose(Pswap @ Kj @ Pswap, Kj, atol=1e-12)


class TestEstimator:
    def test_zero_primitives_zero_everything(self):
        spec = coupled_delayed_spec_2dm(T=3)
        pol, _ = solve_delayed_finite(spec, 3)
        x0 = np.zeros((2, 2))
        w = np.zeros((2, 3, 2))
        x, zeta, u = simulate_estimator(pol.graph, pol, spec, x0, w)
        assert np.all(x == 0.0) and np.all(u == 0.0)
        assert all(np.all(z == 0.0) for z in zeta.values())

    def test_single_dm_estimator_is_state(self, rng):
        spec = single_dm_delayed_spec(rng, T=4, n=2)
        pol, _ = solve_delayed_finite(spec, 4)
        x0 = rng.normal(size=(5, 2))
        w = rng.normal(size=(5, 4, 2))
        x, zeta, _ = simulate_estimator(pol.graph, pol, spec, x0, w)
        assert np.abs(zeta[(0,)] - x).max() < 1e-12

    def test_decoupled_estimators_reproduce_own_states(self, rng):
        spec = decoupled_2dm_spec(T=3)
        pol, _ = solve_delayed_finite(spec, 3)
        x0 = rng.normal(size=(4, 2))
        w = rng.normal(size=(4, 3, 2))
        x, zeta, _ = simulate_estimator(pol.graph, pol, spec, x0, w)
        assert np.abs(zeta[(0,)] - x[:, :, 0:1]).max() < 1e-12
        assert np.abs(zeta[(1,)] - x[:, :, 1:2]).max() < 1e-12

    def test_estimator_states_sum_to_state(self, rng):
        """The zeta decomposition is exact: summing each agent's blocks over
        all nodes containing it recovers the plant state."""
        spec = coupled_delayed_spec_2dm(T=4)
        pol, _ = solve_delayed_finite(spec, 4)
        x0 = rng.normal(size=(3, 2))
        w = rng.normal(size=(3, 4, 2))
        x, zeta, _ = simulate_estimator(pol.graph, pol, spec, x0, w)
        recon = np.zeros_like(x)
        for r, z in zeta.items():
            for pos, i in enumerate(sorted(r)):
                recon[:, :, i] += z[:, :, pos]
        assert np.abs(recon - x).max() < 1e-10


class TestInfiniteHorizon:
    def test_single_dm_golden_ratio(self):
        spec = TeamSpec(
            n_dm=1, horizon=2,
            dynamics=Homogeneous(A=[[1.0]], B=[[1.0]]),
            cost=CostSpec(Q=[[1.0]], R=[[1.0]]),
            noise=NoiseSpec(sigma_w=[[1.0]], init_diag=[[1.0]],
                            init_offdiag=[[0.0]]),
            info=Delayed(delays=((0.0,),)),
        )
        pol = solve_delayed_infinite(spec)
        assert abs(pol.gains[(0,)][0, 0] + 0.6180339887) < 1e-8
        assert abs(pol.values[(0,)][0, 0] - PHI) < 1e-8
        assert average_cost(spec, pol) == pytest.approx(PHI, abs=1e-8)

    def test_decoupled_two_independent_dares(self):
        from teamlqg.riccati import dare_solve

        spec = decoupled_2dm_spec()
        pol = solve_delayed_infinite(spec)
        for i, a in enumerate((0.8, 0.6)):
            sol = dare_solve([[a]], [[1.0]], [[1.0]], [[1.0]])
            assert np.abs(pol.gains[(i,)] - sol.K).max() < 1e-8
            assert np.abs(pol.values[(i,)] - sol.P).max() < 1e-8

    def test_finite_gains_converge_to_stationary(self):
        spec = coupled_delayed_spec_2dm()
        stat = solve_delayed_infinite(spec)
        diffs = []
        for T in (32, 64, 128):
            polT, _ = solve_delayed_finite(spec, T)
            diffs.append(max(np.abs(polT.gains[r][0] - stat.gains[r]).max()
                             for r in stat.gains))
        assert diffs[-1] < 1e-8
        assert diffs[0] >= diffs[-1]

    def test_closed_loop_stable(self):
        spec = coupled_delayed_spec_2dm()
        pol = solve_delayed_infinite(spec)
        assert closed_loop_radius(spec, pol) < 1.0

    def test_average_cost_is_horizon_limit(self):
        """(1/T)-normalized finite optimal costs approach the stationary
        noise-trace value as T doubles."""
        spec = coupled_delayed_spec_2dm()
        stat = solve_delayed_infinite(spec)
        target = average_cost(spec, stat)
        gaps = []
        for T in (16, 64, 256):
            _, cost = solve_delayed_finite(spec, T)
            gaps.append(abs(cost - target))
        assert gaps[2] < gaps[1] < gaps[0]
        assert gaps[2] < 1e-2

    def test_stationary_policy_average_cost_requires_stationary(self):
        spec = coupled_delayed_spec_2dm(T=3)
        pol, _ = solve_delayed_finite(spec, 3)
        with pytest.raises(ValueError):
            average_cost(spec, pol)

    def test_rank_condition_failure_raises(self):
        """Zero cost on an undetectable unstable mode trips the unit-circle
        rank condition."""
        from teamlqg.riccati import RiccatiError

        spec = TeamSpec(
            n_dm=1, horizon=2,
            dynamics=Homogeneous(A=[[1.0]], B=[[1.0]]),
            cost=CostSpec(Q=[[0.0]], R=[[1.0]]),
            noise=NoiseSpec(sigma_w=[[1.0]], init_diag=[[1.0]],
                            init_offdiag=[[0.0]]),
            info=Delayed(delays=((0.0,),)),
        )
        with pytest.raises(RiccatiError):
            solve_delayed_infinite(spec)

    def test_sparsity_violation_rejected(self):
        spec = TeamSpec(
            n_dm=2, horizon=2,
            dynamics=Blocked(
                A_blocks=((np.array([[0.5]]), np.array([[0.3]])),
                          (np.array([[0.0]]), np.array([[0.5]]))),
                B_blocks=((np.array([[1.0]]), np.array([[0.0]])),
                          (np.array([[0.0]]), np.array([[1.0]]))),
            ),
            cost=CostSpec(Q=[[1.0]], R=[[1.0]]),
            noise=NoiseSpec(sigma_w=[[0.5]], init_diag=[[1.0]],
                            init_offdiag=[[0.0]]),
            info=Delayed(delays=((0.0, INF), (INF, 0.0))),
        )
        with pytest.raises(ValueError, match="sparsity"):
            solve_delayed_finite(spec, 2)
