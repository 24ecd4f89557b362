"""Reproducible sampling of team primitives.

Every rollout draws from its own counter-based stream keyed by
(seed, rollout index), so results are bitwise reproducible no matter how
rollouts are chunked or parallelized.  Initial states are exchangeable
across agents; the "uniform" family pushes i.i.d. uniform[-sqrt(3), sqrt(3)]
variates (unit variance) through the same covariance factors, so first and
second moments match the Gaussian family exactly.
"""

from __future__ import annotations

import numpy as np

from .linalg import is_psd, psd_factor, sym
from .model import NoiseSpec

_SQRT3 = np.sqrt(3.0)


def rollout_generator(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF,
                                       index & 0xFFFFFFFFFFFFFFFF],
                                      dtype=np.uint64))
    )


def _raw(gen, size, family):
    if family == "gaussian":
        return gen.standard_normal(size)
    return gen.uniform(-_SQRT3, _SQRT3, size)


class PrimitiveSampler:
    """Draws (x0, w) for closed-loop rollouts of an N-agent team."""

    def __init__(self, noise: NoiseSpec, n_dm: int):
        self.family = noise.family
        self.n_dm = n_dm
        self.n = noise.sigma_w.shape[0]
        self.Fw = psd_factor(sym(noise.sigma_w))
        sd, so = sym(noise.init_diag), sym(noise.init_offdiag)
        if is_psd(so) and is_psd(sd - so):
            # x0^i = Ad z_i + Ac z_common: O(N) draws per rollout.
            self._split = (psd_factor(sd - so), psd_factor(so))
            self._joint = None
        else:
            N = n_dm
            joint = np.kron(np.eye(N), sd - so) + np.kron(np.ones((N, N)), so)
            self._split = None
            self._joint = psd_factor(joint)

    def draw(self, T: int, n_rollouts: int, seed: int):
        """Returns x0 with shape (R, N, n) and w with shape (R, T, N, n)."""
        N, n = self.n_dm, self.n
        if self._split is not None:
            k_init = n + N * n
        else:
            k_init = N * n
        k_noise = T * N * n
        raw = np.empty((n_rollouts, k_init + k_noise))
        for r in range(n_rollouts):
            gen = rollout_generator(seed, r)
            raw[r] = _raw(gen, k_init + k_noise, self.family)

        if self._split is not None:
            Ad, Ac = self._split
            z_common = raw[:, :n]
            z_own = raw[:, n:k_init].reshape(n_rollouts, N, n)
            x0 = z_own @ Ad.T + (z_common @ Ac.T)[:, None, :]
        else:
            x0 = (raw[:, :k_init] @ self._joint.T).reshape(n_rollouts, N, n)
        w = raw[:, k_init:].reshape(n_rollouts, T, N, n) @ self.Fw.T
        return x0, w
