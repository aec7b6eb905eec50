"""System identification: fit a tree's free physical parameters to observed
transitions (one-step state-action prediction loss) or to pairs of states
separated by an H-step horizon.

Both losses run the model forward with the parameter vector traced on a
fresh tape per sample and accumulate value and gradient sample by sample in
a fixed order, so results are deterministic and tape memory stays bounded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .control import StateEmbedding, embedded_step
from .dynamics import JointState, rollout
from .optim import OptimizeOptions, OptimizeResult, lbfgs_minimize

__all__ = [
    "Transition",
    "ReplayBuffer",
    "prediction_loss",
    "horizon_prediction_loss",
    "FitResult",
    "fit_dynamics",
    "write_transitions_csv",
    "read_transitions_csv",
    "write_pairs_csv",
    "read_pairs_csv",
]


@dataclass
class Transition:
    """(x, u, x') sample from the environment, in embedded coordinates."""

    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.atleast_1d(np.asarray(self.u, dtype=float))
        self.x_next = np.asarray(self.x_next, dtype=float)
        if self.x.shape != self.x_next.shape:
            raise ValueError("x and x_next must have the same dimension")


class ReplayBuffer:
    """Append-only transition store preserving insertion order."""

    def __init__(self, transitions=()):
        self._items = list(transitions)

    def add(self, transition: Transition):
        self._items.append(transition)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]


def prediction_loss(tree, theta, buffer, *, dt, embedding=None):
    """Sum of squared one-step prediction errors over the buffer, plus its
    gradient w.r.t. theta.

    Predictions run the embedded transition (FD + semi-implicit integration)
    of ``tree`` with parameters theta.
    """
    if len(buffer) == 0:
        raise ValueError("empty transition buffer")
    emb = embedding or StateEmbedding(tree)
    theta = [float(t) for t in theta]
    # One tape for the whole evaluation: parameters are set once and every
    # transition's residual accumulates into a single traced sum.
    tape = ad.Tape()
    th = tape.inputs(theta)
    tree.set_parameters(th)
    loss = 0.0
    for tr in buffer:
        pred = embedded_step(tree, emb, list(tr.x), list(tr.u), dt)
        for p, target in zip(pred, tr.x_next):
            e = p - float(target)
            loss = loss + e * e
    tree.set_parameters(theta)
    if type(loss) is not ad.TracedValue:
        return value_of(loss), np.zeros(len(theta))
    adj = tape.adjoints(loss.i)
    return loss.v, np.array([adj[t.i] for t in th])


def horizon_prediction_loss(tree, theta, pairs, horizon, *, dt):
    """Loss of unforced H-step rollouts against ground-truth future states.

    ``pairs`` holds (state_t, state_{t+H}) rows, each state being the
    concatenation [q, qd].  With horizon 1 and no controls this reduces to
    the one-step prediction loss on raw coordinates.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if len(pairs) == 0:
        raise ValueError("no state pairs given")
    nq = tree.n_q
    theta = [float(t) for t in theta]
    total = 0.0
    grad = np.zeros(len(theta))
    for start, target in pairs:
        start = np.asarray(start, dtype=float)
        target = np.asarray(target, dtype=float)
        tape = ad.Tape()
        th = tape.inputs(theta)
        tree.set_parameters(th)
        state0 = JointState(list(start[:nq]), list(start[nq:]))
        traj = rollout(tree, state0, None, horizon, dt, record_poses=False)
        final = traj.states[-1]
        loss = 0.0
        for p, t_val in zip(list(final.q) + list(final.qd), target):
            e = p - float(t_val)
            loss = loss + e * e
        total += value_of(loss)
        if type(loss) is ad.TracedValue:
            adj = tape.adjoints(loss.i)
            for k in range(len(theta)):
                grad[k] += adj[th[k].i]
    tree.set_parameters(theta)
    return total, grad


@dataclass
class FitResult:
    theta: np.ndarray
    loss: float
    iterations: int
    converged: bool
    reason: str
    history: list

    def __repr__(self):
        return (
            f"FitResult(loss={self.loss:.6g}, iterations={self.iterations}, "
            f"converged={self.converged})"
        )


def fit_dynamics(tree, data, opts: OptimizeOptions | None = None, *,
                 dt, horizon=None, embedding=None) -> FitResult:
    """Fit the tree's free parameters to data, updating the tree in place.

    ``data`` is a ReplayBuffer (one-step state-action loss) or a sequence of
    (state, state_after_horizon) pairs together with ``horizon``.
    """
    if isinstance(data, ReplayBuffer):
        if len(data) == 0:
            raise ValueError("empty transition buffer")
        emb = embedding or StateEmbedding(tree)

        def objective(theta):
            return prediction_loss(tree, theta, data, dt=dt, embedding=emb)

    else:
        pairs = list(data)
        if not pairs:
            raise ValueError("no state pairs given")
        if horizon is None:
            raise ValueError("horizon required for state-pair data")

        def objective(theta):
            return horizon_prediction_loss(tree, theta, pairs, horizon, dt=dt)

    theta0 = tree.get_parameters()
    if not theta0:
        raise ValueError("tree has no free parameters to fit")
    res = lbfgs_minimize(objective, theta0, opts)
    tree.set_parameters([float(t) for t in res.x])
    return FitResult(res.x, res.value, res.iterations, res.converged,
                     res.reason, res.history)


# -- CSV interchange -------------------------------------------------------------


def write_transitions_csv(buffer, fh):
    first = buffer[0]
    nd, nu = len(first.x), len(first.u)
    cols = [f"x{i}" for i in range(nd)]
    cols += [f"u{i}" for i in range(nu)]
    cols += [f"xn{i}" for i in range(nd)]
    fh.write(",".join(cols) + "\n")
    for tr in buffer:
        row = [repr(float(v)) for v in tr.x]
        row += [repr(float(v)) for v in tr.u]
        row += [repr(float(v)) for v in tr.x_next]
        fh.write(",".join(row) + "\n")


def read_transitions_csv(fh) -> ReplayBuffer:
    header = fh.readline().strip().split(",")
    nd = sum(1 for c in header if c.startswith("x") and not c.startswith("xn"))
    nu = sum(1 for c in header if c.startswith("u"))
    buffer = ReplayBuffer()
    for line in fh:
        line = line.strip()
        if not line:
            continue
        vals = [float(v) for v in line.split(",")]
        buffer.add(Transition(vals[:nd], vals[nd : nd + nu], vals[nd + nu :]))
    return buffer


def write_pairs_csv(pairs, fh):
    nd = len(pairs[0][0])
    cols = [f"x{i}" for i in range(nd)] + [f"xh{i}" for i in range(nd)]
    fh.write(",".join(cols) + "\n")
    for a, b in pairs:
        row = [repr(float(v)) for v in a] + [repr(float(v)) for v in b]
        fh.write(",".join(row) + "\n")


def read_pairs_csv(fh):
    header = fh.readline().strip().split(",")
    nd = sum(1 for c in header if c.startswith("x") and not c.startswith("xh"))
    pairs = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        vals = [float(v) for v in line.split(",")]
        pairs.append((np.array(vals[:nd]), np.array(vals[nd:])))
    return pairs
