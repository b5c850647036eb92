"""Online actor-critic policy iteration with projection tuning laws.

The critic fits a packed quadratic ``V(Z) = theta_bar . zbar(Z)`` to the
temporal-difference constraint ``theta_bar . (zbar_k - zbar_{k+1}) = U_k``;
the actor ``mu = Omega E`` is pulled toward the greedy action of the
current critic. Both updates are regularised normalised projections
(Kaczmarz steps) with step factor ``delta`` and regulariser ``eta``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike

from .kernel import (
    CostWeights,
    Dimensions,
    ErrorStack,
    FloatArray,
    augment,
    evaluate_value,
    kron_pack_state,
    pack_kernel,
    stage_cost,
    unpack_kernel,
)
from .plants import ProbingNoise


class PolicyExtractionError(ArithmeticError):
    """The control-control block of the critic cannot be inverted safely."""


class PlantDivergenceError(RuntimeError):
    """The plant output left the configured blow-up bound."""

    def __init__(self, message: str, result: EpisodeResult | None = None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class LearnerConfig:
    delta_V: float = 0.5
    eta_V: float = 1.5
    delta_mu: float = 0.5
    eta_mu: float = 1.5
    N_T: int = 4000
    N: int = 30
    T_r: float = 0.0005
    exploration_steps: int = 250
    cond_limit: float = 1e8
    freeze_on_convergence: bool = True

    def __post_init__(self) -> None:
        for name in ("delta_V", "delta_mu"):
            val = getattr(self, name)
            if not 0 < val < 2:
                raise ValueError(f"{name}={val} violates the step bound 0 < {name} < 2")
        for name in ("eta_V", "eta_mu", "T_r"):
            val = getattr(self, name)
            if not val > 0:
                raise ValueError(f"{name}={val} must be > 0")
        if self.N < 1 or self.N_T < 0 or self.exploration_steps < 0:
            raise ValueError("need N >= 1, N_T >= 0, exploration_steps >= 0")
        if not self.cond_limit > 1:
            raise ValueError("cond_limit must exceed 1")


@dataclass
class LearnerState:
    """Critic and actor weights plus the recent weight-change norms."""

    theta_bar: FloatArray
    omega: FloatArray
    step: int = 0
    N: int = 30
    critic_changes: deque = field(default_factory=deque)
    actor_changes: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        self.theta_bar = np.asarray(self.theta_bar, dtype=float)
        self.omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        self.critic_changes = deque(self.critic_changes, maxlen=self.N)
        self.actor_changes = deque(self.actor_changes, maxlen=self.N)

    @property
    def theta(self) -> FloatArray:
        return unpack_kernel(self.theta_bar)

    def copy(self) -> LearnerState:
        return LearnerState(
            self.theta_bar.copy(), self.omega.copy(), self.step, self.N,
            deque(self.critic_changes), deque(self.actor_changes),
        )


def seed_kernel(omega0: ArrayLike, scale: float = 1.0) -> FloatArray:
    """Positive definite critic whose greedy strategy is ``omega0``.

    Returns ``scale * [[I + W'W, -W'], [-W, I]]`` with ``W = omega0``. Its
    Schur complement on the control block is ``scale * I`` so it is
    positive definite for any ``omega0``; with ``omega0 = 0`` it is
    ``scale * I``.
    """
    W = np.atleast_2d(np.asarray(omega0, dtype=float))
    t, n_E = W.shape
    if scale <= 0:
        raise ValueError("scale must be positive")
    top = np.hstack([np.eye(n_E) + W.T @ W, -W.T])
    bottom = np.hstack([-W, np.eye(t)])
    return scale * np.vstack([top, bottom])


def initial_state(dims: Dimensions, theta0: ArrayLike | None = None, omega0: ArrayLike | None = None,
                  N: int = 30, cond_limit: float = 1e8) -> LearnerState:
    """Learner state from a critic seed.

    With neither argument the critic is the identity and the strategy is
    extracted from it (zero). ``omega0`` alone seeds the critic with
    :func:`seed_kernel`; an explicit ``theta0`` takes precedence and the
    strategy is extracted from it unless ``omega0`` is also given.
    """
    if theta0 is None:
        theta0 = np.eye(dims.n_Z) if omega0 is None else seed_kernel(omega0)
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (dims.n_Z, dims.n_Z):
        raise ValueError(f"theta0 must be {dims.n_Z}x{dims.n_Z}")
    if np.linalg.eigvalsh(0.5 * (theta0 + theta0.T)).min() <= 0:
        raise ValueError("theta0 must be symmetric positive definite")
    if omega0 is None:
        omega0 = greedy_gains(theta0, dims.n_E, cond_limit)
    omega0 = np.atleast_2d(np.asarray(omega0, dtype=float))
    if omega0.shape != (dims.t, dims.n_E):
        raise ValueError(f"omega0 must be {dims.t}x{dims.n_E}")
    return LearnerState(pack_kernel(theta0), omega0, N=N)


def critic_target(E: ArrayLike, mu_hat: ArrayLike, w: CostWeights) -> float:
    """Desired temporal difference: the stage cost of the applied action."""
    return stage_cost(E, mu_hat, w)


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite value in learner update")


def critic_update(theta_bar: ArrayLike, zbar_k: ArrayLike, zbar_next: ArrayLike, target: float,
                  delta_V: float, eta_V: float) -> FloatArray:
    """One regularised projection of the critic onto ``theta . (zbar_k - zbar_next) = target``."""
    theta_bar = np.asarray(theta_bar, dtype=float)
    z_tilde = np.asarray(zbar_k, dtype=float) - np.asarray(zbar_next, dtype=float)
    if z_tilde.shape != theta_bar.shape:
        raise ValueError("critic weights and regressors must have equal length")
    _check_finite(theta_bar, z_tilde, target)
    denom = eta_V + z_tilde @ z_tilde
    if denom == 0:
        return theta_bar.copy()
    return theta_bar - delta_V * z_tilde / denom * (theta_bar @ z_tilde - target)


def greedy_gains(theta: ArrayLike, n_E: int, cond_limit: float = 1e8) -> FloatArray:
    """Gain matrix ``-Theta_mm^{-1} Theta_me`` of the critic's greedy strategy."""
    theta = np.asarray(theta, dtype=float)
    mm = theta[n_E:, n_E:]
    me = theta[n_E:, :n_E]
    eig = np.linalg.eigvalsh(0.5 * (mm + mm.T))
    if eig.min() <= 0:
        raise PolicyExtractionError(
            f"control block of the critic is not positive definite (min eigenvalue {eig.min():.3g})"
        )
    cond = eig.max() / eig.min()
    if cond > cond_limit:
        raise PolicyExtractionError(f"control block condition number {cond:.3g} exceeds {cond_limit:.3g}")
    return -np.linalg.solve(mm, me)


def desired_action(theta: ArrayLike, E: ArrayLike, cond_limit: float = 1e8) -> FloatArray:
    """Greedy correction control ``-Theta_mm^{-1} Theta_me E``."""
    E = np.atleast_1d(np.asarray(E, dtype=float))
    return greedy_gains(theta, E.shape[0], cond_limit) @ E


def actor_update(omega: ArrayLike, E: ArrayLike, mu_d: ArrayLike, delta_mu: float, eta_mu: float) -> FloatArray:
    """Regularised projection of every actor row onto ``Omega E = mu_d``."""
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    E = np.atleast_1d(np.asarray(E, dtype=float))
    mu_d = np.atleast_1d(np.asarray(mu_d, dtype=float))
    if omega.shape != (mu_d.shape[0], E.shape[0]):
        raise ValueError(f"actor of shape {omega.shape} does not match E {E.shape}, mu_d {mu_d.shape}")
    _check_finite(omega, E, mu_d)
    return omega - delta_mu * np.outer(omega @ E - mu_d, E) / (eta_mu + E @ E)


def contraction_factor(regressor: ArrayLike, delta: float, eta: float) -> float:
    """Eigenvalue of the error map along the regressor direction.

    ``(eta + (1 - delta) |r|^2) / (eta + |r|^2)``; every orthogonal
    direction has eigenvalue one.
    """
    r = np.atleast_1d(np.asarray(regressor, dtype=float))
    n2 = float(r @ r)
    return (eta + (1.0 - delta) * n2) / (eta + n2)


def bellman_residual(theta_bar: ArrayLike, z_k: ArrayLike, z_next: ArrayLike, E: ArrayLike, mu: ArrayLike,
                     w: CostWeights) -> float:
    """``V(Z_k) - V(Z_{k+1}) - U_k``; zero for an exact evaluation."""
    return evaluate_value(theta_bar, z_k) - evaluate_value(theta_bar, z_next) - stage_cost(E, mu, w)


@dataclass
class EpisodeResult:
    state: LearnerState
    converged: bool
    convergence_step: int | None
    trace: list[dict]
    stage_costs: FloatArray
    aborted: str | None = None


def trace_columns(n_E: int, t: int = 1) -> list[str]:
    base = ["k", "t", "y", "y_m", "eps", "u", "mu_clean", "mu_applied", "V_hat", "bellman_residual",
            "omega_change_norm", "theta_change_norm"]
    return base + [f"omega_{i + 1}" for i in range(t * n_E)]


def _scalar_or_list(v: FloatArray):
    v = np.atleast_1d(v)
    return float(v[0]) if v.shape == (1,) else [float(x) for x in v]


def run_online_episode(plant, reference, w: CostWeights, cfg: LearnerConfig, init: LearnerState,
                       noise: ProbingNoise | None = None, sink: Callable[[dict], None] | None = None,
                       steps: int | None = None, blowup: float = 1e6) -> EpisodeResult:
    """Run the online actor-critic loop against ``plant`` tracking ``reference``.

    Per step: apply ``mu = Omega E_k`` (plus probing noise) as an increment
    on the previous input, read ``y_{k+1}``, form ``E_{k+1}`` and the clean
    next action ``Omega E_{k+1}``, project the critic onto the TD constraint
    and the actor onto the critic's greedy action. Learning stops once both
    weight-change norms stay below ``T_r`` for ``N`` steps after the
    exploration window, or at ``N_T``; the loop keeps controlling with the
    frozen weights until ``steps`` (default ``N_T``) when
    ``cfg.freeze_on_convergence`` is set, otherwise it stops at
    convergence.

    Raises:
        PlantDivergenceError: output magnitude exceeded ``blowup``; the
            partial result is attached.
        PolicyExtractionError: the critic's control block became singular
            or indefinite.
    """
    steps = cfg.N_T if steps is None else steps
    state = init.copy()
    t_dim, n_E = state.omega.shape
    p = np.atleast_1d(plant.y).shape[0]
    if n_E % p:
        raise ValueError("actor width must be a multiple of the output count")
    stack = ErrorStack(np.zeros(n_E), p).shift(np.atleast_1d(reference.y) - np.atleast_1d(plant.y))
    u = np.zeros(t_dim)
    learning = True
    converged = False
    conv_step = None
    trace: list[dict] = []
    costs: list[float] = []
    time_of = getattr(plant, "time", None)

    for k in range(steps):
        E = stack.entries
        y_k = np.atleast_1d(plant.y)
        ym_k = np.atleast_1d(reference.y)
        t_k = plant.time if time_of is not None else float(k)
        mu_clean = state.omega @ E
        mu = mu_clean + (noise.sample(k) if noise is not None else 0.0)
        u = u + mu
        U = critic_target(E, mu, w)
        y_next = np.atleast_1d(plant.step(u))
        ym_next = np.atleast_1d(reference.step())
        if not np.all(np.isfinite(y_next)) or np.max(np.abs(y_next)) > blowup:
            msg = f"plant output {y_next} exceeded blow-up bound {blowup:g} at step {k}"
            raise PlantDivergenceError(msg, EpisodeResult(state, converged, conv_step, trace, np.asarray(costs), msg))
        next_stack = stack.shift(ym_next - y_next)
        E_next = next_stack.entries
        mu_next = state.omega @ E_next
        z_k = augment(E, mu)
        z_next = augment(E_next, mu_next)
        zbar_k = kron_pack_state(z_k)
        zbar_next = kron_pack_state(z_next)

        v_hat = float(state.theta_bar @ zbar_k)
        residual = v_hat - float(state.theta_bar @ zbar_next) - U
        d_theta = d_omega = 0.0
        if learning:
            theta_bar = critic_update(state.theta_bar, zbar_k, zbar_next, U, cfg.delta_V, cfg.eta_V)
            theta_new = unpack_kernel(theta_bar)
            try:
                mu_d = desired_action(theta_new, E, cfg.cond_limit)
            except PolicyExtractionError as exc:
                raise PolicyExtractionError(f"step {k}: {exc}") from exc
            omega = actor_update(state.omega, E, mu_d, cfg.delta_mu, cfg.eta_mu)
            d_theta = float(np.linalg.norm(theta_new - state.theta))
            d_omega = float(np.linalg.norm(omega - state.omega))
            state.theta_bar, state.omega = theta_bar, omega
            state.step = k + 1
            if k >= cfg.exploration_steps:
                state.critic_changes.append(d_theta)
                state.actor_changes.append(d_omega)
                if (len(state.critic_changes) == cfg.N
                        and max(state.critic_changes) < cfg.T_r and max(state.actor_changes) < cfg.T_r):
                    converged, conv_step = True, k
            if converged or k + 1 >= cfg.N_T:
                learning = False

        record = {
            "k": k, "t": t_k, "y": _scalar_or_list(y_k), "y_m": _scalar_or_list(ym_k),
            "eps": _scalar_or_list(ym_k - y_k), "u": _scalar_or_list(u),
            "mu_clean": _scalar_or_list(mu_clean), "mu_applied": _scalar_or_list(mu),
            "V_hat": v_hat, "bellman_residual": residual,
            "omega_change_norm": d_omega, "theta_change_norm": d_theta,
        }
        for i, val in enumerate(state.omega.reshape(-1)):
            record[f"omega_{i + 1}"] = float(val)
        trace.append(record)
        costs.append(U)
        if sink is not None:
            sink(record)
        stack = next_stack
        if converged and not cfg.freeze_on_convergence:
            break

    return EpisodeResult(state, converged, conv_step, trace, np.asarray(costs))


def post_convergence_residuals(result: EpisodeResult) -> tuple[FloatArray, FloatArray]:
    """Bellman residuals and stage costs logged strictly after convergence."""
    if result.convergence_step is None:
        return np.array([]), np.array([])
    rows = [i for i, rec in enumerate(result.trace) if rec["k"] > result.convergence_step]
    res = np.array([result.trace[i]["bellman_residual"] for i in rows])
    return res, result.stage_costs[rows]
