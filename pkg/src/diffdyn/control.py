"""Trajectory optimization and adaptive model-predictive control.

The controller works in an embedded state space: for the cartpole family
(one prismatic cart plus k revolute poles) the state is

    x = (p, pdot, sin q_0, cos q_0, ..., sin q_{k-1}, cos q_{k-1},
         qdot_0..qdot_{k-1}, qddot_0..qddot_{k-1})

with the upright goal at sin = 0, cos = 1.  The acceleration block carries
the acceleration computed at the *previous* step (zero at t = 0); the
transition never reads it, it is an observed output.

The one-step transition advances the trig pairs by the angle-addition
formula, so sin^2+cos^2 = 1 is preserved exactly and no inverse trig is
ever needed (the primitive set of the autodiff tape has none).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .dynamics import (
    JointState,
    Trajectory,
    forward_dynamics_aba,
    forward_kinematics,
    integrate_semi_implicit,
    joint_jx,
    prismatic_jx,
    revolute_jx_sincos,
)
from .model import PRISMATIC, REVOLUTE, FIXED, KinematicTree

__all__ = [
    "StateEmbedding",
    "QuadraticCost",
    "ControlBounds",
    "embedded_step",
    "linearize_dynamics",
    "IlqrOptions",
    "IlqrResult",
    "ilqr",
    "mpc_step",
    "AdaptiveMpcConfig",
    "adaptive_mpc_run",
]


class StateEmbedding:
    """Mapping (q, qd, qdd) -> x for carts with revolute poles.

    Requires every joint to be prismatic, revolute, or fixed, with at most
    one prismatic.  Only joint indices and offsets are kept, so one
    embedding works across any trees sharing the topology (e.g. the hidden
    environment and the controller's model).
    """

    def __init__(self, tree: KinematicTree):
        self.prismatic = None          # (joint index, q_off, v_off)
        self.revolute = []             # [(joint index, q_off, v_off)]
        for i, j in enumerate(tree.joints):
            if j.kind == PRISMATIC:
                if self.prismatic is not None:
                    raise ValueError("embedding supports a single prismatic joint")
                self.prismatic = (i, j.q_off, j.v_off)
            elif j.kind == REVOLUTE:
                self.revolute.append((i, j.q_off, j.v_off))
            elif j.kind != FIXED:
                raise ValueError(f"embedding does not support {j.kind} joints")
        self.k = len(self.revolute)
        self.dim = (2 if self.prismatic else 0) + 4 * self.k

    def embed(self, q, qd, qdd_prev=None):
        """Embedded state from generalized coordinates; ``qdd_prev`` is the
        acceleration computed at the previous step (zeros when absent)."""
        x = []
        if self.prismatic is not None:
            _, qo, vo = self.prismatic
            x.append(q[qo])
            x.append(qd[vo])
        for _, qo, _ in self.revolute:
            x.append(ad.sin(q[qo]))
            x.append(ad.cos(q[qo]))
        for _, _, vo in self.revolute:
            x.append(qd[vo])
        for _, _, vo in self.revolute:
            x.append(0.0 if qdd_prev is None else qdd_prev[vo])
        return x

    def goal_upright(self):
        """Goal: origin-centered cart at rest, poles upright and still."""
        x = []
        if self.prismatic is not None:
            x += [0.0, 0.0]
        for _ in range(self.k):
            x += [0.0, 1.0]
        x += [0.0] * (2 * self.k)
        return np.array(x)

    def check(self, x, tol=1e-9):
        """Verify the sin/cos blocks sit on the unit circle."""
        base = 2 if self.prismatic else 0
        for i in range(self.k):
            s, c = value_of(x[base + 2 * i]), value_of(x[base + 2 * i + 1])
            if abs(s * s + c * c - 1.0) > tol:
                return False
        return True


def embedded_step(tree, emb: StateEmbedding, x, u, dt):
    """One step of FD + semi-implicit integration in embedded coordinates.

    ``x`` and ``u`` may be traced; the returned state has the same layout
    as :meth:`StateEmbedding.embed` with the acceleration block holding the
    accelerations computed in this step.
    """
    base = 2 if emb.prismatic else 0
    k = emb.k
    nv = tree.n_v

    jx = [None] * tree.n_bodies
    qd = [0.0] * nv
    if emb.prismatic is not None:
        ji, _, vo = emb.prismatic
        p, pd = x[0], x[1]
        qd[vo] = pd
        jx[ji] = prismatic_jx(tree.joints[ji], p)
    trig = []
    for i, (ji, _, vo) in enumerate(emb.revolute):
        s, c = x[base + 2 * i], x[base + 2 * i + 1]
        trig.append((s, c))
        qd[vo] = x[base + 2 * k + i]
        jx[ji] = revolute_jx_sincos(tree.joints[ji], s, c)
    for bi, j in enumerate(tree.joints):
        if jx[bi] is None:
            jx[bi] = joint_jx(j, None)  # fixed joints only

    tau = [0.0] * nv
    for idx, ui in zip(tree.actuated_v, u):
        tau[idx] = ui
    qdd = forward_dynamics_aba(tree, None, qd, tau, jx=jx)

    qd_new = [qd[i] + dt * qdd[i] for i in range(nv)]
    out = []
    if emb.prismatic is not None:
        _, _, vo = emb.prismatic
        out.append(p + dt * qd_new[vo])
        out.append(qd_new[vo])
    for i, (_, _, vo) in enumerate(emb.revolute):
        s, c = trig[i]
        delta = dt * qd_new[vo]
        sd, cd = ad.sin(delta), ad.cos(delta)
        out.append(s * cd + c * sd)
        out.append(c * cd - s * sd)
    for _, _, vo in emb.revolute:
        out.append(qd_new[vo])
    for _, _, vo in emb.revolute:
        out.append(qdd[vo])
    return out


def linearize_dynamics(tree, emb, x, u, dt):
    """Jacobians (A, B) of the one-step embedded transition, one reverse
    sweep per state dimension."""
    n = emb.dim
    m = len(u)
    tape = ad.Tape()
    xs = tape.inputs([value_of(v) for v in x])
    us = tape.inputs([value_of(v) for v in u])
    outs = embedded_step(tree, emb, xs, us, dt)
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    for r, out in enumerate(outs):
        if type(out) is not ad.TracedValue:
            continue
        adj = tape.adjoints(out.i)
        for c in range(n):
            A[r, c] = adj[xs[c].i]
        for c in range(m):
            B[r, c] = adj[us[c].i]
    return A, B


@dataclass
class QuadraticCost:
    """Stage cost c(x, u) = w_x ||x - x*||^2 + w_u ||u||^2.

    The trajectory objective adds a terminal state term weighted by
    ``terminal_weight * w_x``: a receding-horizon window that ends mid-swing
    must value where it ends up, otherwise short horizons prefer hanging
    still (the window never sees the payoff of finishing the swing).
    """

    x_star: np.ndarray
    w_x: float = 1.0
    w_u: float = 1e-4
    terminal_weight: float = 1.0

    def __post_init__(self):
        self.x_star = np.asarray(self.x_star, dtype=float)
        if self.w_x < 0.0 or self.w_u <= 0.0 or self.terminal_weight < 0.0:
            raise ValueError("need w_x >= 0, w_u > 0, terminal_weight >= 0")

    def stage(self, x, u):
        dx = np.asarray(x) - self.x_star
        uu = np.asarray(u)
        return self.w_x * float(dx @ dx) + self.w_u * float(uu @ uu)

    def terminal(self, x):
        dx = np.asarray(x) - self.x_star
        return self.terminal_weight * self.w_x * float(dx @ dx)

    # Quadratic expansion (exact: the cost itself is quadratic).
    def cx(self, x):
        return 2.0 * self.w_x * (np.asarray(x) - self.x_star)

    def cu(self, u):
        return 2.0 * self.w_u * np.asarray(u)

    def cxx(self, n):
        return 2.0 * self.w_x * np.eye(n)

    def cuu(self, m):
        return 2.0 * self.w_u * np.eye(m)

    def terminal_cx(self, x):
        return 2.0 * self.terminal_weight * self.w_x * (np.asarray(x) - self.x_star)

    def terminal_cxx(self, n):
        return 2.0 * self.terminal_weight * self.w_x * np.eye(n)


@dataclass
class ControlBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if not np.all(self.lower < self.upper):
            raise ValueError("need lower < upper")

    @staticmethod
    def symmetric(limit, m=1):
        return ControlBounds(-limit * np.ones(m), limit * np.ones(m))

    def clamp(self, u):
        return np.minimum(np.maximum(u, self.lower), self.upper)


@dataclass
class IlqrOptions:
    max_iterations: int = 100
    tol: float = 1e-6                 # relative cost-improvement threshold
    lam0: float = 1e-6                # Levenberg-Marquardt regularization
    lam_factor: float = 10.0
    lam_max: float = 1e10
    n_alpha: int = 11                 # line search over 1, 0.5, ..., 2^-10


@dataclass
class IlqrResult:
    xs: np.ndarray                    # (H+1, n) states
    us: np.ndarray                    # (H, m) controls
    cost_trace: list                  # accepted costs, strictly decreasing
    converged: bool
    iterations: int
    reason: str


def _rollout_embedded(tree, emb, x0, us, dt, cost):
    H, m = us.shape
    xs = np.zeros((H + 1, emb.dim))
    xs[0] = x0
    J = 0.0
    x = list(x0)
    for t in range(H):
        u = us[t]
        J += cost.stage(x, u)
        x = [value_of(v) for v in embedded_step(tree, emb, x, list(u), dt)]
        xs[t + 1] = x
    J += cost.terminal(x)
    return xs, J


def ilqr(tree, cost: QuadraticCost, x0, horizon, u_init=None,
         bounds: ControlBounds | None = None, opts: IlqrOptions | None = None,
         dt=0.05, emb: StateEmbedding | None = None) -> IlqrResult:
    """Iterative LQR with box-clamped controls.

    Backward Riccati-style pass on the linearized dynamics (the cost being
    exactly quadratic, its expansion is exact; dynamics curvature is not
    used), Levenberg-Marquardt regularization on Q_uu, and a backtracking
    forward pass accepting the first cost decrease.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    emb = emb or StateEmbedding(tree)
    n = emb.dim
    bounds = bounds or ControlBounds.symmetric(200.0, len(tree.actuated_v))
    m = len(bounds.lower)
    opts = opts or IlqrOptions()

    us = np.zeros((horizon, m)) if u_init is None else np.array(u_init, dtype=float)
    us = np.array([bounds.clamp(u) for u in us])
    xs, J = _rollout_embedded(tree, emb, x0, us, dt, cost)
    if not math.isfinite(J):
        raise ArithmeticError("non-finite cost on the initial rollout")
    trace = [J]
    lam = opts.lam0
    alphas = [0.5 ** i for i in range(opts.n_alpha)]
    converged = False
    reason = "max_iterations"

    for _ in range(opts.max_iterations):
        As = np.zeros((horizon, n, n))
        Bs = np.zeros((horizon, n, m))
        for t in range(horizon):
            As[t], Bs[t] = linearize_dynamics(tree, emb, xs[t], us[t], dt)

        accepted = False
        while True:
            bp = _backward_pass(cost, xs, us, As, Bs, lam)
            if bp is None:
                lam *= opts.lam_factor
                if lam > opts.lam_max:
                    reason = "regularization_failure"
                    break
                continue
            ks, Ks = bp
            for alpha in alphas:
                us_new, xs_new, J_new = _forward_pass(
                    tree, emb, cost, bounds, x0, xs, us, ks, Ks, alpha, dt
                )
                if math.isfinite(J_new) and J_new < J:
                    accepted = True
                    break
            if accepted:
                lam = max(lam / 2.0, 1e-12)
                break
            lam *= opts.lam_factor
            if lam > opts.lam_max:
                reason = "regularization_failure"
                break
        if not accepted:
            break

        improvement = (J - J_new) / max(1.0, abs(J))
        xs, us, J = xs_new, us_new, J_new
        trace.append(J)
        if improvement < opts.tol:
            converged = True
            reason = "tolerance"
            break

    return IlqrResult(xs, us, trace, converged, len(trace) - 1, reason)


def _backward_pass(cost, xs, us, As, Bs, lam):
    H = us.shape[0]
    n = xs.shape[1]
    m = us.shape[1]
    Vx = cost.terminal_cx(xs[H])
    Vxx = cost.terminal_cxx(n)
    ks = np.zeros((H, m))
    Ks = np.zeros((H, m, n))
    cuu = cost.cuu(m)
    cxx = cost.cxx(n)
    for t in range(H - 1, -1, -1):
        A, B = As[t], Bs[t]
        Qx = cost.cx(xs[t]) + A.T @ Vx
        Qu = cost.cu(us[t]) + B.T @ Vx
        Qxx = cxx + A.T @ Vxx @ A
        Quu = cuu + B.T @ Vxx @ B + lam * np.eye(m)
        Qux = B.T @ Vxx @ A
        try:
            L = np.linalg.cholesky(Quu)
        except np.linalg.LinAlgError:
            return None
        k = -np.linalg.solve(Quu, Qu)
        K = -np.linalg.solve(Quu, Qux)
        ks[t] = k
        Ks[t] = K
        Vx = Qx + K.T @ Quu @ k + K.T @ Qu + Qux.T @ k
        Vxx = Qxx + K.T @ Quu @ K + K.T @ Qux + Qux.T @ K
        Vxx = 0.5 * (Vxx + Vxx.T)
    return ks, Ks


def _forward_pass(tree, emb, cost, bounds, x0, xs_ref, us_ref, ks, Ks, alpha, dt):
    H, m = us_ref.shape
    us = np.zeros_like(us_ref)
    xs = np.zeros_like(xs_ref)
    xs[0] = x0
    x = list(x0)
    J = 0.0
    for t in range(H):
        u = us_ref[t] + alpha * ks[t] + Ks[t] @ (np.asarray(x) - xs_ref[t])
        u = bounds.clamp(u)
        us[t] = u
        J += cost.stage(x, u)
        try:
            x = [value_of(v) for v in embedded_step(tree, emb, x, list(u), dt)]
        except ArithmeticError:
            return us, xs, math.inf
        xs[t + 1] = x
        if not all(math.isfinite(v) for v in x):
            return us, xs, math.inf
    J += cost.terminal(x)
    return us, xs, J


def mpc_step(tree, cost, x_t, horizon, warm_us=None, bounds=None,
             opts=None, dt=0.05, emb=None):
    """One receding-horizon step: solve the H-step problem, return the first
    control and the shifted solution as the next warm start."""
    res = ilqr(tree, cost, x_t, horizon, warm_us, bounds, opts, dt, emb)
    us = res.us
    warm_next = np.vstack([us[1:], us[-1:]])
    return us[0].copy(), warm_next, res


# -- adaptive MPC loop ----------------------------------------------------------


@dataclass
class AdaptiveMpcConfig:
    episodes: int = 3
    steps: int = 140
    horizon: int = 20
    dt: float = 0.05
    force_limit: float = 200.0
    fit_every: int = 50               # first-episode refit period
    seed: int = 0
    init_angle_noise: float = 0.05
    warm_start_noise: float = 0.1     # episode-start excitation, x force_limit
    terminal_weight: float | None = None  # default: the horizon length
    ilqr: IlqrOptions = field(
        default_factory=lambda: IlqrOptions(max_iterations=10)
    )
    fit_max_iterations: int = 80
    fit_g_tol: float = 1e-5
    excite_steps: int = 12            # steps with warm-start noise injection


@dataclass
class FitEvent:
    step: int
    theta_before: list
    theta_after: list
    loss_before: float
    loss_after: float


@dataclass
class EpisodeLog:
    episode: int
    cumulative_cost: float
    fit_events: list
    trajectory: Trajectory
    embedded: list                    # env embedded states x_1..x_T
    controls: list


@dataclass
class RunLog:
    episodes: list
    config: dict

    def to_json_dict(self):
        return {
            "config": self.config,
            "episodes": [
                {
                    "episode": ep.episode,
                    "cumulative_cost": ep.cumulative_cost,
                    "fit_events": [
                        {
                            "step": fe.step,
                            "theta_before": fe.theta_before,
                            "theta_after": fe.theta_after,
                            "loss_before": fe.loss_before,
                            "loss_after": fe.loss_after,
                        }
                        for fe in ep.fit_events
                    ],
                }
                for ep in self.episodes
            ],
        }


def adaptive_mpc_run(env_tree, model_tree, cost=None,
                     config: AdaptiveMpcConfig | None = None) -> RunLog:
    """Receding-horizon control of ``env_tree`` (ground truth, parameters
    hidden from the controller) using ``model_tree`` as the internal model,
    refitting the model's free parameters to observed transitions.

    Fits run every ``fit_every`` steps during the first episode (to
    warm-start the scheme) and at the end of every episode; each episode
    collects its own replay buffer.  Fully deterministic for a fixed seed.
    """
    from .estimation import ReplayBuffer, Transition

    config = config or AdaptiveMpcConfig()
    emb_env = StateEmbedding(env_tree)
    emb_model = StateEmbedding(model_tree)
    if emb_env.dim != emb_model.dim:
        raise ValueError("env and model must share topology")
    if cost is None:
        tw = config.terminal_weight
        cost = QuadraticCost(
            emb_env.goal_upright(),
            terminal_weight=float(config.horizon) if tw is None else tw,
        )
    bounds = ControlBounds.symmetric(config.force_limit, len(env_tree.actuated_v))
    m = len(bounds.lower)
    sigma = config.warm_start_noise * config.force_limit
    # The reset and the excitation noise repeat identically every episode:
    # the only thing that changes between episodes is the fitted model, so
    # per-episode costs compare model quality, not luck.
    reset_state = _swingup_initial_state(
        env_tree, emb_env, np.random.default_rng(config.seed),
        config.init_angle_noise,
    )
    episodes = []

    for ep in range(1, config.episodes + 1):
        state = reset_state.copy()
        rng_excite = np.random.default_rng(config.seed + 1)
        buffer = ReplayBuffer()
        qdd_prev = [0.0] * env_tree.n_v
        warm = np.zeros((config.horizon, m))
        cum_cost = 0.0
        fit_events = []
        states = [state.copy()]
        poses = [forward_kinematics(env_tree, state.q)]
        embedded = []
        controls = []

        for t in range(1, config.steps + 1):
            x_t = np.array(emb_env.embed(state.q, state.qd, qdd_prev))
            if t <= config.excite_steps:
                # Hanging still is a stationary point of the window problem;
                # a few noisy warm starts let the closed loop escape it.
                warm = warm + rng_excite.normal(0.0, sigma, size=warm.shape)
            u_t, warm, _res = mpc_step(
                model_tree, cost, x_t, config.horizon, warm, bounds,
                config.ilqr, config.dt, emb_model,
            )
            tau = [0.0] * env_tree.n_v
            for idx, ui in zip(env_tree.actuated_v, u_t):
                tau[idx] = float(ui)
            qdd = forward_dynamics_aba(env_tree, state.q, state.qd, tau)
            state.tau = tau
            state.qdd = qdd
            state = integrate_semi_implicit(env_tree, state, qdd, config.dt)
            x_next = np.array(emb_env.embed(state.q, state.qd, qdd))
            buffer.add(Transition(x_t, np.array(u_t), x_next))
            cum_cost += cost.stage(x_t, u_t)
            qdd_prev = qdd
            states.append(state.copy())
            poses.append(forward_kinematics(env_tree, state.q))
            embedded.append(x_next)
            controls.append(np.array(u_t))

            mid_fit = ep == 1 and t % config.fit_every == 0 and t < config.steps
            if mid_fit:
                fit_events.append(
                    _fit_event(model_tree, buffer, t, emb_model, config)
                )

        fit_events.append(
            _fit_event(model_tree, buffer, config.steps, emb_model, config)
        )
        episodes.append(
            EpisodeLog(
                ep, cum_cost, fit_events,
                Trajectory(config.dt, states, poses), embedded, controls,
            )
        )

    cfg = {
        "episodes": config.episodes,
        "steps": config.steps,
        "horizon": config.horizon,
        "dt": config.dt,
        "force_limit": config.force_limit,
        "fit_every": config.fit_every,
        "seed": config.seed,
    }
    return RunLog(episodes, cfg)


def _fit_event(model_tree, buffer, step, emb, config):
    from .estimation import fit_dynamics, prediction_loss
    from .optim import OptimizeOptions

    theta_before = model_tree.get_parameters()
    loss_before, _ = prediction_loss(
        model_tree, theta_before, buffer, dt=config.dt, embedding=emb
    )
    fit = fit_dynamics(
        model_tree, buffer,
        OptimizeOptions(max_iterations=config.fit_max_iterations,
                        g_tol=config.fit_g_tol),
        dt=config.dt, embedding=emb,
    )
    return FitEvent(
        step, list(theta_before), list(fit.theta), float(loss_before),
        float(fit.loss),
    )


def _swingup_initial_state(tree, emb, rng, noise):
    """Poles hanging down (first revolute at pi) with a small seeded
    perturbation; cart centered and everything at rest."""
    state = JointState.neutral(tree)
    for i, (_, qo, _) in enumerate(emb.revolute):
        base = math.pi if i == 0 else 0.0
        state.q[qo] = base + float(rng.uniform(-noise, noise))
    return state
