"""Task-based kinematic arm design: optimize Denavit-Hartenberg parameters so
a fixed joint-space trajectory reproduces a target end-effector path.

Success is measured in task space (path RMSE), not in DH-parameter space:
distinct DH vectors can realize identical end-effector paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .dynamics import forward_kinematics
from .model import DHParams, from_dh
from .optim import OptimizeOptions, lbfgs_minimize

__all__ = ["DesignProblem", "design_loss", "design_arm", "DesignResult",
           "end_effector_positions", "path_rmse"]


@dataclass
class DesignProblem:
    """A joint-space trajectory, the target end-effector path it should
    trace, and optionally an initial DH vector [d0, a0, alpha0, ...]."""

    q_traj: np.ndarray      # (T, N)
    p_traj: np.ndarray      # (T, 3)
    r0: np.ndarray | None = None

    def __post_init__(self):
        self.q_traj = np.asarray(self.q_traj, dtype=float)
        self.p_traj = np.asarray(self.p_traj, dtype=float)
        if self.q_traj.ndim != 2 or self.p_traj.ndim != 2 or self.p_traj.shape[1] != 3:
            raise ValueError("q_traj must be (T, N) and p_traj (T, 3)")
        if len(self.q_traj) != len(self.p_traj) or len(self.q_traj) < 1:
            raise ValueError("q and p trajectories must have equal length T >= 1")
        if self.r0 is not None:
            self.r0 = np.asarray(self.r0, dtype=float)
            if self.r0.shape != (3 * self.dof,):
                raise ValueError("r0 must have 3 scalars per joint")

    @property
    def dof(self):
        return self.q_traj.shape[1]

    @property
    def waypoints(self):
        return self.q_traj.shape[0]


def design_loss(r, problem: DesignProblem):
    """Sum of squared end-effector errors over the trajectory, with its
    gradient w.r.t. all 3N DH scalars (through the arm construction)."""
    r = [float(v) for v in r]
    tape = ad.Tape()
    rs = tape.inputs(r)
    tree = from_dh(DHParams.from_vector(rs))
    q_full = [0.0] * tree.n_q
    loss = 0.0
    for q_row, p_row in zip(problem.q_traj, problem.p_traj):
        for i, qi in enumerate(q_row):
            q_full[i] = float(qi)
        poses = forward_kinematics(tree, q_full)
        ee = poses[-1].position
        for e_c, p_c in zip(ee, p_row):
            d = e_c - float(p_c)
            loss = loss + d * d
    if type(loss) is not ad.TracedValue:
        return value_of(loss), np.zeros(len(r))
    adj = tape.adjoints(loss.i)
    return loss.v, np.array([adj[v.i] for v in rs])


def end_effector_positions(r, q_traj):
    """End-effector world positions of the arm r along a joint trajectory."""
    tree = from_dh(DHParams.from_vector([float(v) for v in r]))
    out = []
    q_full = [0.0] * tree.n_q
    for q_row in np.asarray(q_traj, dtype=float):
        for i, qi in enumerate(q_row):
            q_full[i] = qi
        out.append(forward_kinematics(tree, q_full)[-1].position)
    return np.array(out)


def path_rmse(r, problem: DesignProblem):
    pts = end_effector_positions(r, problem.q_traj)
    err = pts - problem.p_traj
    return math.sqrt(float(np.mean(np.sum(err * err, axis=1))))


@dataclass
class DesignResult:
    r: np.ndarray
    loss: float
    rmse: float
    converged: bool
    iterations: int
    reason: str
    record: list = field(default_factory=list)  # (iteration, loss, r) rows


def design_arm(problem: DesignProblem, opts: OptimizeOptions | None = None,
               seed=0) -> DesignResult:
    """Minimize the task-space error over DH vectors with L-BFGS.

    Without an initial guess, starts from d = 0, a = path-extent / N,
    alpha = 0, perturbed by seeded noise (sigma 0.1).
    """
    if problem.r0 is not None:
        r0 = problem.r0.copy()
    else:
        rng = np.random.default_rng(seed)
        extent = float(np.max(np.linalg.norm(problem.p_traj, axis=1)))
        n = problem.dof
        r0 = np.zeros(3 * n)
        r0[1::3] = max(extent, 1e-3) / n
        r0 += rng.normal(0.0, 0.1, size=3 * n)
    opts = opts or OptimizeOptions()
    opts.record = True
    res = lbfgs_minimize(lambda r: design_loss(r, problem), r0, opts)
    record = [(i, float(f), x.tolist()) for i, (f, x) in enumerate(res.history)]
    return DesignResult(res.x, res.value, path_rmse(res.x, problem),
                        res.converged, res.iterations, res.reason, record)
