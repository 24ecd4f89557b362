"""Optimal symmetric policies for tree-information LQG teams.

The own-state feedback gains K_t and value matrices P_t come from the
standard backward Riccati recursion and are independent of every coupling
quantity.  The initial-state coupling gains L_t solve a linear stationarity
system: the expected cost is an exact quadratic in the stacked L gains, so we
assemble its gradient (hand-derived adjoint of the closed-loop second-moment
recursion) on a basis and solve the normal equations directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import sym
from .model import TeamSpec, conditional_gain
from .riccati import ConvergenceError, dare_solve, riccati_step, spectral_radius


class CouplingSystemError(RuntimeError):
    """The stacked linear system for the coupling gains is singular."""


# ---------------------------------------------------------------------------
# population modes


@dataclass(frozen=True)
class Population:
    """Which cost form and coupling statistic the policy is optimal for.

    kind: "two_dm" (pairwise cost, statistic E(x0^j|x0^i)),
          "n_dm" (sum-coupled N-agent cost, statistic sum over j != i),
          "mean_field_N" (1/(N-1)-scaled coupling, statistic = average),
          "mean_field_limit" (N -> infinity policy, statistic Sigma x0^i).
    """

    kind: str
    n: int | None = None

    def __post_init__(self):
        if self.kind not in ("two_dm", "n_dm", "mean_field_N", "mean_field_limit"):
            raise ValueError(f"unknown population kind {self.kind!r}")
        if self.kind in ("n_dm", "mean_field_N") and (self.n is None or self.n < 2):
            raise ValueError(f"{self.kind} needs a population size n >= 2")


def two_dm():
    return Population("two_dm")


def n_dm(n):
    return Population("n_dm", n)


def mean_field(n):
    return Population("mean_field_N", n)


def mean_field_limit():
    return Population("mean_field_limit")


def cost_weights(mode: Population):
    """(a, b, q, alpha): total-cost weights of tr(Q Sd)+tr(R Ud), tr(Rt Uo),
    tr(Qt So), and the scale of the coupling statistic c^i = alpha*Sigma*x0^i.
    """
    if mode.kind == "two_dm":
        return 2.0, 2.0, 0.0, 1.0
    if mode.kind == "n_dm":
        N = mode.n
        return float(N), 2.0 * N * (N - 1), 0.0, float(N - 1)
    if mode.kind == "mean_field_N":
        N = mode.n
        return float(N), 2.0 * N, 2.0 * N, 1.0
    # mean_field_limit: per-agent cost of the infinite-population problem
    return 1.0, 2.0, 2.0, 1.0


def default_mode(spec: TeamSpec) -> Population:
    from .model import MeanFieldTree, Tree

    if isinstance(spec.info, MeanFieldTree):
        return mean_field(spec.n_dm)
    if isinstance(spec.info, Tree):
        return two_dm() if spec.n_dm == 2 else n_dm(spec.n_dm)
    raise ValueError("tree solver needs Tree or MeanFieldTree information")


# ---------------------------------------------------------------------------
# K / P recursion


def solve_k_p(spec: TeamSpec, T: int):
    """Backward recursion from P_T = 0; gains are untouched by the coupling
    blocks, the initial-state correlation, and the noise distribution."""
    A, B = spec.dynamics.A, spec.dynamics.B
    Q, R = sym(spec.cost.Q), sym(spec.cost.R)
    P = [None] * (T + 1)
    K = [None] * T
    P[T] = np.zeros_like(Q)
    for t in range(T - 1, -1, -1):
        P[t], K[t] = riccati_step(A, B, Q, R, P[t + 1])
    return K, P


# ---------------------------------------------------------------------------
# exact quadratic cost of the symmetric affine class


@dataclass(frozen=True)
class _Params:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Rt: np.ndarray
    Qt: np.ndarray
    Sigma: np.ndarray
    Sd: np.ndarray
    So: np.ndarray
    W: np.ndarray
    a: float
    b: float
    q: float
    alpha: float


def _params(spec: TeamSpec, mode: Population) -> _Params:
    a, b, q, alpha = cost_weights(mode)
    n, m = spec.n, spec.m
    return _Params(
        A=spec.dynamics.A,
        B=spec.dynamics.B,
        Q=sym(spec.cost.Q),
        R=sym(spec.cost.R),
        Rt=spec.cost.r_tilde_or_zero(m),
        Qt=spec.cost.q_tilde_or_zero(n),
        Sigma=conditional_gain(spec.noise),
        Sd=sym(spec.noise.init_diag),
        So=sym(spec.noise.init_offdiag),
        W=sym(spec.noise.sigma_w),
        a=a,
        b=b,
        q=q,
        alpha=alpha,
    )


def _cost_and_grad(p: _Params, K, L, want_grad=True):
    """Exact cost (and gradient in L) of u_t^i = K_t x_t^i + L_t c^i.

    L has shape (batch, T, m, n).  The cost is propagated through the
    exchangeable pair moments Sd_t = E(x x^T) (own), So_t (cross pair),
    Vd_t = E(x_t^i c_i^T), Vo_t = E(x_t^i c_j^T); every step is linear or
    quadratic in L, so the returned gradient is exact.
    """
    A, B = p.A, p.B
    batch, T = L.shape[0], L.shape[1]
    Cd = p.alpha**2 * p.Sigma @ p.Sd @ p.Sigma.T
    Co = p.alpha**2 * p.Sigma @ p.So @ p.Sigma.T
    Phi = [A + B @ K[t] for t in range(T)]

    eye = np.ones((batch, 1, 1))
    Sd = p.Sd * eye
    So = p.So * eye
    Vd = (p.alpha * p.Sd @ p.Sigma.T) * eye
    Vo = (p.alpha * p.So @ p.Sigma.T) * eye
    Vd_hist, Vo_hist = [], []

    J = np.zeros(batch)
    c1 = 1.0 / T
    for t in range(T):
        Kt, Lt = K[t], L[:, t]
        Vd_hist.append(Vd)
        Vo_hist.append(Vo)
        KS = Kt @ Sd
        Ud = KS @ Kt.T + Kt @ Vd @ np.swapaxes(Lt, -1, -2) \
            + Lt @ np.swapaxes(Vd, -1, -2) @ Kt.T + Lt @ Cd @ np.swapaxes(Lt, -1, -2)
        Uo = Kt @ So @ Kt.T + Kt @ Vo @ np.swapaxes(Lt, -1, -2) \
            + Lt @ np.swapaxes(Vo, -1, -2) @ Kt.T + Lt @ Co @ np.swapaxes(Lt, -1, -2)
        J += c1 * (
            p.a * (np.trace(p.Q @ Sd, axis1=-2, axis2=-1)
                   + np.trace(p.R @ Ud, axis1=-2, axis2=-1))
            + p.b * np.trace(p.Rt @ Uo, axis1=-2, axis2=-1)
            + p.q * np.trace(p.Qt @ So, axis1=-2, axis2=-1)
        )
        if t == T - 1:
            break
        Ph = Phi[t]
        D = B @ Lt
        PhVd, PhVo = Ph @ Vd, Ph @ Vo
        Sd = Ph @ Sd @ Ph.T + PhVd @ np.swapaxes(D, -1, -2) \
            + D @ np.swapaxes(PhVd, -1, -2) + D @ Cd @ np.swapaxes(D, -1, -2) + p.W
        So = Ph @ So @ Ph.T + PhVo @ np.swapaxes(D, -1, -2) \
            + D @ np.swapaxes(PhVo, -1, -2) + D @ Co @ np.swapaxes(D, -1, -2)
        Vd = Ph @ Vd + D @ Cd
        Vo = Ph @ Vo + D @ Co

    if not want_grad:
        return J, None

    # Reverse pass.  The Sbar recursions are L-free, so they are unbatched.
    n = A.shape[0]
    Sbar_d = np.zeros((n, n))
    Sbar_o = np.zeros((n, n))
    Vbar_d = np.zeros((batch, n, n))
    Vbar_o = np.zeros((batch, n, n))
    grad = np.zeros_like(L)
    for t in range(T - 1, -1, -1):
        Kt, Lt, Ph = K[t], L[:, t], Phi[t]
        Vd_t, Vo_t = Vd_hist[t], Vo_hist[t]
        g = c1 * 2.0 * (
            p.a * (p.R @ Kt @ Vd_t + p.R @ Lt @ Cd)
            + p.b * (p.Rt @ Kt @ Vo_t + p.Rt @ Lt @ Co)
        )
        if t < T - 1:
            g = g + B.T @ Vbar_d @ Cd + B.T @ Vbar_o @ Co
            g = g + 2.0 * (B.T @ Sbar_d) @ (Ph @ Vd_t + B @ Lt @ Cd)
            g = g + 2.0 * (B.T @ Sbar_o) @ (Ph @ Vo_t + B @ Lt @ Co)
        grad[:, t] = g
        if t == 0:
            break
        cost_vd = c1 * p.a * 2.0 * Kt.T @ p.R @ Lt
        cost_vo = c1 * p.b * 2.0 * Kt.T @ p.Rt @ Lt
        if t < T - 1:
            Vbar_d = cost_vd + Ph.T @ Vbar_d + 2.0 * (Ph.T @ Sbar_d) @ (B @ Lt)
            Vbar_o = cost_vo + Ph.T @ Vbar_o + 2.0 * (Ph.T @ Sbar_o) @ (B @ Lt)
            Sbar_d = c1 * p.a * (p.Q + Kt.T @ p.R @ Kt) + Ph.T @ Sbar_d @ Ph
            Sbar_o = c1 * (p.q * p.Qt + p.b * Kt.T @ p.Rt @ Kt) + Ph.T @ Sbar_o @ Ph
        else:
            Vbar_d = cost_vd * np.ones((batch, 1, 1))
            Vbar_o = cost_vo * np.ones((batch, 1, 1))
            Sbar_d = c1 * p.a * (p.Q + Kt.T @ p.R @ Kt)
            Sbar_o = c1 * (p.q * p.Qt + p.b * Kt.T @ p.Rt @ Kt)
    return J, grad


def exact_policy_cost(spec: TeamSpec, T: int, K, L, mode: Population) -> float:
    """Exact expected cost of the symmetric affine policy (moment propagation)."""
    p = _params(spec, mode)
    Lb = np.asarray(L, dtype=float).reshape(1, T, spec.m, spec.n)
    J, _ = _cost_and_grad(p, K, Lb, want_grad=False)
    return float(J[0])


def policy_cost_gradient(spec: TeamSpec, T: int, K, L, mode: Population):
    p = _params(spec, mode)
    Lb = np.asarray(L, dtype=float).reshape(1, T, spec.m, spec.n)
    J, g = _cost_and_grad(p, K, Lb)
    return float(J[0]), g[0]


# ---------------------------------------------------------------------------
# coupling gains


def solve_coupling_gains(spec: TeamSpec, T: int, mode: Population):
    """Coupling gains L_0..L_{T-1} and propagators G_0..G_{T-1}.

    The cost restricted to the symmetric class with K fixed is an exact
    quadratic in the stacked L, so grad J(L) = H vec(L) + g0.  H is built
    column-by-column from gradients at basis points (exact, not a finite
    difference) and the stationarity system H vec(L) = -g0 is solved
    directly.
    """
    m, n = spec.m, spec.n
    p = _params(spec, mode)
    K, _ = solve_k_p(spec, T)
    d = T * m * n
    if np.all(p.Rt == 0.0) and np.all(p.Qt == 0.0):
        L = np.zeros((T, m, n))
        return [L[t] for t in range(T)], _propagators(spec, T, K, L, p.alpha)

    basis = np.zeros((d + 1, T, m, n))
    basis[1:] = np.eye(d).reshape(d, T, m, n)
    _, grads = _cost_and_grad(p, K, basis)
    g0 = grads[0].reshape(d)
    H = grads[1:].reshape(d, d).T - g0[:, None]
    H = 0.5 * (H + H.T)
    try:
        cond = np.linalg.cond(H)
        if not np.isfinite(cond) or cond > 1e12:
            raise np.linalg.LinAlgError(f"condition number {cond:.3e}")
        vecL = np.linalg.solve(H, -g0)
    except np.linalg.LinAlgError as exc:
        raise CouplingSystemError(
            f"coupling system singular ({exc}); check Sigma/R_tilde for "
            "degenerate combinations"
        ) from exc
    L = vecL.reshape(T, m, n)
    return [L[t] for t in range(T)], _propagators(spec, T, K, L, p.alpha)


def _propagators(spec, T, K, L, alpha):
    """G_t with E(x_t^i | x_0^i) = G_t x_0^i under the symmetric policy."""
    A, B = spec.dynamics.A, spec.dynamics.B
    Sigma = conditional_gain(spec.noise)
    G = [np.eye(spec.n)]
    for t in range(T - 1):
        G.append((A + B @ K[t]) @ G[t] + alpha * B @ L[t] @ Sigma)
    return G


# ---------------------------------------------------------------------------
# policies and predicted cost


@dataclass(frozen=True)
class TreePolicy:
    """Affine gain schedule u_t^i = K_t x_t^i + L_t c^i for the coupling
    statistic c^i implied by ``mode`` (see Population)."""

    horizon: int
    mode: Population
    K: list
    L: list
    P: list
    G: list

    def as_dict(self):
        return {
            "kind": "tree",
            "horizon": self.horizon,
            "mode": self.mode.kind,
            "mode_n": self.mode.n,
            "K": [k.tolist() for k in self.K],
            "L": [l.tolist() for l in self.L],
            "P": [p.tolist() for p in self.P],
            "G": [g.tolist() for g in self.G],
        }


def solve_tree(spec: TeamSpec, T: int | None = None, mode: Population | None = None):
    T = spec.horizon if T is None else T
    mode = default_mode(spec) if mode is None else mode
    K, P = solve_k_p(spec, T)
    L, G = solve_coupling_gains(spec, T, mode)
    return TreePolicy(horizon=T, mode=mode, K=K, L=L, P=P, G=G)


def closed_form_cost_variants(spec: TeamSpec, policy: TreePolicy):
    """Trace decompositions of the two-agent optimal cost.

    The exact value satisfies the completion-of-squares identity

        J = (2/T) [ tr(P_0 Sd) + sum_t tr(P_{t+1} W)
                    + sum_t tr(L_t^T (R + B^T P_{t+1} B) L_t C1)
                    + sum_t E(u_t^{1,T} R~ u_t^2) ],

    returned under the key "identity" (it matches moment propagation to
    machine precision).  The keyed entries are published index variants of a
    looser trace formula (quadratic term without the R part, cross term in
    powers of A^T); none reproduces the exact value in general, and the
    report exists to quantify their gaps — see the key "best_variant".
    """
    if policy.mode.kind != "two_dm":
        raise ValueError("closed-form cost applies to the two-agent tree mode")
    T = policy.horizon
    Sigma = conditional_gain(spec.noise)
    Sd, So = sym(spec.noise.init_diag), sym(spec.noise.init_offdiag)
    W = sym(spec.noise.sigma_w)
    A, B = spec.dynamics.A, spec.dynamics.B
    R = sym(spec.cost.R)
    Rt = spec.cost.r_tilde_or_zero(spec.m)
    P, K, L = policy.P, policy.K, policy.L
    C1 = Sigma @ Sd @ Sigma.T
    base = float(np.trace(P[0] @ Sd))
    noise = sum(float(np.trace(P[t + 1] @ W)) for t in range(T))
    quad = sum(float(np.trace(L[t].T @ B.T @ P[t + 1] @ B @ L[t] @ C1))
               for t in range(T))
    quad_r = sum(
        float(np.trace(L[t].T @ (R + B.T @ P[t + 1] @ B) @ L[t] @ C1))
        for t in range(T)
    )

    # exact cross-pair control correlation sum_t E(u1' R~ u2) by propagating
    # the pair moments of the closed loop
    Sot = So.copy()
    Vd = Sd @ Sigma.T
    Vo = So @ Sigma.T
    Cd = Sigma @ Sd @ Sigma.T
    Co = Sigma @ So @ Sigma.T
    cross_exact = 0.0
    Sdt = Sd.copy()
    for t in range(T):
        Kt, Lt = K[t], L[t]
        Uo = Kt @ Sot @ Kt.T + Kt @ Vo @ Lt.T + Lt @ Vo.T @ Kt.T + Lt @ Co @ Lt.T
        cross_exact += float(np.trace(Rt @ Uo))
        Ph = A + B @ Kt
        D = B @ Lt
        Sdt = Ph @ Sdt @ Ph.T + Ph @ Vd @ D.T + D @ Vd.T @ Ph.T + D @ Cd @ D.T + W
        Sot = Ph @ Sot @ Ph.T + Ph @ Vo @ D.T + D @ Vo.T @ Ph.T + D @ Co @ D.T
        Vd = Ph @ Vd + D @ Cd
        Vo = Ph @ Vo + D @ Co

    exact = exact_policy_cost(spec, T, policy.K, policy.L, policy.mode)
    out = {
        "exact": exact,
        "identity": (2.0 / T) * (base + noise + quad_r + cross_exact),
    }
    for exp_shift in (0, -1):
        cross = 0.0
        for t in range(1, T):
            Apow = np.linalg.matrix_power(A.T, max(t + exp_shift, 0))
            cross += float(np.trace(Apow @ P[t + 1] @ B @ L[t] @ Sigma @ Sd))
        key = f"literal A^{{t{'-1' if exp_shift else ''}}}"
        out[key] = (2.0 / T) * (base + noise + quad + cross)
    literal = {k: v for k, v in out.items() if k.startswith("literal")}
    out["best_variant"] = min(literal, key=lambda k: abs(literal[k] - exact))
    return out


def predicted_cost(spec: TeamSpec, T: int, policy: TreePolicy) -> float:
    """Optimal expected cost of a policy produced by this module.

    Evaluated by exact moment propagation of the closed loop, which agrees
    with the completion-of-squares trace identity to machine precision (see
    closed_form_cost_variants).
    """
    if T != policy.horizon:
        raise ValueError("policy horizon does not match requested horizon")
    return exact_policy_cost(spec, T, policy.K, policy.L, policy.mode)


# ---------------------------------------------------------------------------
# infinite horizon


@dataclass(frozen=True)
class InfiniteTreePolicy:
    mode: Population
    K: np.ndarray
    P: np.ndarray
    L: list
    decay_horizon: int | None
    horizon_used: int
    average_cost: float
    closed_loop_radius: float

    def as_dict(self):
        return {
            "kind": "tree_infinite",
            "mode": self.mode.kind,
            "mode_n": self.mode.n,
            "K": self.K.tolist(),
            "P": self.P.tolist(),
            "L": [l.tolist() for l in self.L],
            "decay_horizon": self.decay_horizon,
            "horizon_used": self.horizon_used,
            "average_cost": self.average_cost,
            "closed_loop_radius": self.closed_loop_radius,
        }


def solve_infinite_tree(spec: TeamSpec, tol: float = 1e-8,
                        horizon_cap: int = 4096,
                        mode: Population | None = None) -> InfiniteTreePolicy:
    """Stationary own-state gain from the algebraic Riccati fixed point, with
    the coupling-gain schedule detected as the pointwise horizon limit.

    Horizons double until the common prefix of successive L schedules
    disagrees by less than ``tol``; non-convergence within the cap is a
    reportable failure, not an assumption.
    """
    mode = default_mode(spec) if mode is None else mode
    if mode.kind not in ("two_dm", "n_dm"):
        raise ValueError("infinite-horizon solve supports two_dm/n_dm modes")
    A, B = spec.dynamics.A, spec.dynamics.B
    sol = dare_solve(A, B, sym(spec.cost.Q), sym(spec.cost.R))
    radius = spectral_radius(A + B @ sol.K)
    assert radius < 1.0, "stationary closed loop must be stable"
    a, _, _, _ = cost_weights(mode)
    avg_cost = a * float(np.trace(sol.P @ sym(spec.noise.sigma_w)))

    rt = spec.cost.r_tilde_or_zero(spec.m)
    if np.all(rt == 0.0):
        return InfiniteTreePolicy(mode=mode, K=sol.K, P=sol.P, L=[],
                                  decay_horizon=0, horizon_used=0,
                                  average_cost=avg_cost,
                                  closed_loop_radius=radius)

    T = 16
    L_prev, _ = solve_coupling_gains(spec, T, mode)
    disagreement = np.inf
    while True:
        T2 = 2 * T
        if T2 > horizon_cap:
            raise ConvergenceError(
                f"coupling gains did not stabilize below {tol} up to horizon "
                f"{horizon_cap} (last prefix disagreement {disagreement:.3e})",
                residual=disagreement,
            )
        L_next, _ = solve_coupling_gains(spec, T2, mode)
        disagreement = max(
            float(np.linalg.norm(L_next[t] - L_prev[t])) for t in range(T)
        )
        if disagreement < tol:
            L = L_next
            break
        T, L_prev = T2, L_next

    decay_horizon = None
    for t in range(len(L)):
        if all(np.linalg.norm(L[s]) < tol for s in range(t, len(L))):
            decay_horizon = t
            break
    return InfiniteTreePolicy(mode=mode, K=sol.K, P=sol.P, L=L,
                              decay_horizon=decay_horizon, horizon_used=2 * T,
                              average_cost=avg_cost, closed_loop_radius=radius)


# ---------------------------------------------------------------------------
# mean-field limit


@dataclass
class MeanFieldLimitResult:
    policy: TreePolicy
    schedule: list = field(default_factory=list)  # (N, L array, diff to prev)

    def convergence_series(self):
        return [(N, diff) for N, _, diff in self.schedule if diff is not None]


def meanfield_limit_policy(spec: TeamSpec, T: int, tol: float = 1e-7,
                           n_cap: int = 512) -> MeanFieldLimitResult:
    """Limit of the N-agent mean-field coupling gains over a doubling N
    schedule; emits the full convergence series for diagnostics."""
    K, P = solve_k_p(spec, T)
    schedule = []
    prev = None
    N = 2
    converged = False
    while N <= n_cap:
        L, _ = solve_coupling_gains(spec, T, mean_field(N))
        Larr = np.stack(L)
        diff = None if prev is None else float(
            max(np.linalg.norm(Larr[t] - prev[t]) for t in range(T))
        )
        schedule.append((N, Larr, diff))
        if diff is not None and diff < tol:
            converged = True
            break
        prev = Larr
        N *= 2
    if not converged:
        diffs = [(N_, d) for N_, _, d in schedule if d is not None]
        raise ConvergenceError(
            f"mean-field gains not Cauchy below {tol} up to N={n_cap}; "
            f"series {diffs}",
        )
    Llim = [schedule[-1][1][t] for t in range(T)]
    mode = mean_field_limit()
    _, _, _, alpha = cost_weights(mode)
    G = _propagators(spec, T, K, np.stack(Llim), alpha)
    policy = TreePolicy(horizon=T, mode=mode, K=K, L=Llim, P=P, G=G)
    return MeanFieldLimitResult(policy=policy, schedule=schedule)
