"""Riccati step, DARE fixed point, and PBH stabilizability tests."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from teamlqg.linalg import is_psd, spectral_radius
from teamlqg.riccati import (
    RiccatiError,
    dare_solve,
    is_detectable,
    is_stabilizable,
    riccati_step,
)

from conftest import rand_pd, rand_psd

PHI = (1.0 + np.sqrt(5.0)) / 2.0


class TestRiccatiStep:
    def test_terminal_stage_zero_gain(self):
        P, K = riccati_step([[1.0]], [[1.0]], [[1.0]], [[1.0]], [[0.0]])
        assert np.array_equal(K, [[0.0]])
        assert np.array_equal(P, [[1.0]])

    def test_scalar_hand_evaluation(self):
        P, K = riccati_step([[1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])
        assert np.allclose(K, [[-0.5]])
        assert np.allclose(P, [[1.5]])

    def test_zero_a_gives_q(self, rng):
        n = 2
        Q, R, Pn = rand_psd(rng, n), rand_pd(rng, n), rand_psd(rng, n)
        P, K = riccati_step(np.zeros((n, n)), np.eye(n), Q, R, Pn)
        assert np.allclose(P, 0.5 * (Q + Q.T))
        assert np.allclose(K, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_preserves_symmetry_and_psd(self, seed):
        g = np.random.default_rng(seed)
        n = int(g.integers(1, 4))
        m = int(g.integers(1, 4))
        A = g.normal(size=(n, n))
        B = g.normal(size=(n, m))
        P, _ = riccati_step(A, B, rand_psd(g, n), rand_pd(g, m), rand_psd(g, n))
        assert np.array_equal(P, P.T)
        assert is_psd(P)

    def test_monotone_from_zero(self, rng):
        """Iterating from P=0 is nondecreasing in the PSD order."""
        n, m = 2, 1
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        Q, R = rand_psd(rng, n), rand_pd(rng, m)
        P = np.zeros((n, n))
        for _ in range(30):
            P_next, _ = riccati_step(A, B, Q, R, P)
            assert np.linalg.eigvalsh(P_next - P)[0] >= -1e-9
            P = P_next


class TestDare:
    def test_zero_a_fixed_point_is_q(self):
        sol = dare_solve([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        assert abs(sol.P[0, 0] - 1.0) < 1e-9

    def test_golden_ratio(self):
        sol = dare_solve([[1.0]], [[1.0]], [[1.0]], [[1.0]])
        assert abs(sol.P[0, 0] - PHI) < 1e-8
        assert abs(sol.K[0, 0] - (-PHI / (1.0 + PHI))) < 1e-8

    def test_zero_cost_stable_a(self):
        sol = dare_solve([[0.5]], [[1.0]], [[0.0]], [[1.0]])
        assert abs(sol.P[0, 0]) < 1e-9

    def test_unstabilizable_rejected(self):
        with pytest.raises(RiccatiError, match="stabilizable"):
            dare_solve([[2.0]], [[0.0]], [[1.0]], [[1.0]])

    def test_fixed_point_and_stability(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 4))
            m = int(rng.integers(1, 4))
            A = rng.normal(size=(n, n))
            B = rng.normal(size=(n, m))
            Q = rand_pd(rng, n)
            R = rand_pd(rng, m)
            sol = dare_solve(A, B, Q, R)
            P_step, _ = riccati_step(A, B, Q, R, sol.P)
            assert np.linalg.norm(P_step - sol.P) < 1e-8
            assert spectral_radius(A + B @ sol.K) < 1.0
            assert is_psd(sol.P)
            # independent oracle
            P_ref = scipy.linalg.solve_discrete_are(A, B, 0.5 * (Q + Q.T),
                                                    0.5 * (R + R.T))
            assert np.linalg.norm(sol.P - P_ref) < 1e-6 * (1 + np.linalg.norm(P_ref))

    def test_cesaro_mean_of_value_norms(self):
        """(1/T) sum_t ||P_t^{(T)}|| converges to ||P_dare|| on the scalar
        golden-ratio instance."""
        A = B = Q = R = np.array([[1.0]])
        target = dare_solve(A, B, Q, R).P[0, 0]
        T = 20000
        P = np.zeros((1, 1))
        norms = []
        for _ in range(T):
            P, _ = riccati_step(A, B, Q, R, P)
            norms.append(abs(P[0, 0]))
        cesaro = np.mean(norms)
        assert abs(cesaro - target) < 1e-4


class TestPBH:
    def test_unstable_uncontrollable(self):
        assert is_stabilizable([[2.0]], [[0.0]]) is False

    def test_scalar_with_input(self):
        assert is_stabilizable([[2.0]], [[1.0]]) is True

    def test_already_stable(self):
        assert is_stabilizable([[0.5]], [[0.0]]) is True

    def test_detectable_dual(self):
        assert is_detectable([[2.0]], [[1.0]]) is True
        assert is_detectable([[2.0]], [[0.0]]) is False

    def test_unstable_mode_outside_input_range(self):
        A = np.diag([2.0, 0.5])
        B = np.array([[0.0], [1.0]])
        assert is_stabilizable(A, B) is False
        B2 = np.array([[1.0], [0.0]])
        assert is_stabilizable(A, B2) is True


class TestSpectralRadius:
    def test_examples(self):
        assert spectral_radius(np.array([[0.5]])) == pytest.approx(0.5)
        assert spectral_radius(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(0.0)
        assert spectral_radius(np.array([[0.0, 1.0], [-1.0, 0.0]])) == pytest.approx(1.0)
