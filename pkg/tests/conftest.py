"""Shared fixtures and random-instance generators for the test suite."""

import numpy as np
import pytest

from teamlqg.model import (
    Blocked,
    CostSpec,
    Delayed,
    Homogeneous,
    MeanFieldTree,
    NoiseSpec,
    TeamSpec,
    Tree,
)


def rand_psd(rng, n, scale=1.0, ridge=0.0):
    F = rng.normal(size=(n, n))
    return scale * (F @ F.T) / n + ridge * np.eye(n)


def rand_pd(rng, n, scale=1.0):
    return rand_psd(rng, n, scale=scale, ridge=0.5)


def scalar_tree_spec(A=1.0, B=1.0, Q=1.0, R=1.0, Rt=0.5, Sd=1.0, So=0.5,
                     W=1.0, T=2, n_dm=2, info=None, family="gaussian"):
    return TeamSpec(
        n_dm=n_dm, horizon=T,
        dynamics=Homogeneous(A=[[A]], B=[[B]]),
        cost=CostSpec(Q=[[Q]], R=[[R]],
                      R_tilde=None if Rt is None else [[Rt]]),
        noise=NoiseSpec(sigma_w=[[W]], init_diag=[[Sd]], init_offdiag=[[So]],
                        family=family),
        info=info if info is not None else Tree(),
    )


def scalar_mf_spec(A=1.0, B=1.0, Q=1.0, R=1.0, Rt=0.5, Qt=0.5, Sd=1.0,
                   So=0.5, W=1.0, T=3, n_dm=2):
    return TeamSpec(
        n_dm=n_dm, horizon=T,
        dynamics=Homogeneous(A=[[A]], B=[[B]]),
        cost=CostSpec(Q=[[Q]], R=[[R]], R_tilde=[[Rt]], Q_tilde=[[Qt]]),
        noise=NoiseSpec(sigma_w=[[W]], init_diag=[[Sd]], init_offdiag=[[So]]),
        info=MeanFieldTree(),
    )


def random_tree_spec(rng, n=None, m=None, T=None, n_dm=2, coupled=True,
                     mean_field=False):
    n = n or int(rng.integers(1, 3))
    m = m or int(rng.integers(1, 3))
    T = T or int(rng.integers(1, 6))
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    Sd = rand_pd(rng, n)
    # exchangeable-feasible cross covariance: scaled-down copy of Sd
    So = float(rng.uniform(0.1, 0.45)) * Sd
    Rt = rand_pd(rng, m, scale=0.3) if coupled else None
    Qt = rand_psd(rng, n, scale=0.3) if (coupled and mean_field) else None
    return TeamSpec(
        n_dm=n_dm, horizon=T,
        dynamics=Homogeneous(A=A, B=B),
        cost=CostSpec(Q=rand_psd(rng, n), R=rand_pd(rng, m),
                      R_tilde=Rt, Q_tilde=Qt),
        noise=NoiseSpec(sigma_w=rand_psd(rng, n, scale=0.5),
                        init_diag=Sd, init_offdiag=So),
        info=MeanFieldTree() if mean_field else Tree(),
    )


def coupled_delayed_spec_2dm(T=3, S=0.2):
    """Scalar 2-agent delay-1 instance with cross-coupled dynamics."""
    return TeamSpec(
        n_dm=2, horizon=T,
        dynamics=Blocked(
            A_blocks=((np.array([[0.8]]), np.array([[0.3]])),
                      (np.array([[0.2]]), np.array([[0.7]]))),
            B_blocks=((np.array([[1.0]]), np.array([[0.4]])),
                      (np.array([[0.1]]), np.array([[1.2]]))),
        ),
        cost=CostSpec(Q=[[1.0]], R=[[1.0]], S=[[S]]),
        noise=NoiseSpec(sigma_w=[[0.6]], init_diag=[[1.0]],
                        init_offdiag=[[0.0]]),
        info=Delayed(delays=((0.0, 1.0), (1.0, 0.0))),
    )


def single_dm_delayed_spec(rng, T=None, n=None):
    n = n or int(rng.integers(1, 3))
    m = n
    T = T or int(rng.integers(1, 6))
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    Q = rand_psd(rng, n)
    R = rand_pd(rng, m)
    S = 0.1 * rng.normal(size=(n, m))
    while np.linalg.eigvalsh(np.block([[Q, S], [S.T, R]]))[0] < 0:
        S *= 0.5
    return TeamSpec(
        n_dm=1, horizon=T,
        dynamics=Homogeneous(A=A, B=B),
        cost=CostSpec(Q=Q, R=R, S=S),
        noise=NoiseSpec(sigma_w=rand_psd(rng, n, scale=0.5, ridge=0.05),
                        init_diag=rand_pd(rng, n),
                        init_offdiag=np.zeros((n, n))),
        info=Delayed(delays=((0.0,),)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
