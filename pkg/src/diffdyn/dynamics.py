"""Differentiable dynamics for kinematic trees.

Forward kinematics, articulated-body forward dynamics, recursive Newton-Euler
inverse dynamics, the bias-force and mass-matrix helpers derived from it,
semi-implicit Euler integration, and multi-step rollouts.

All scalars are generic: pass plain floats for simulation, TracedValues for
gradients.  Conventions:

* body i's frame coincides with its joint frame (after the joint motion);
  ``joints[i].xtree`` is the fixed parent-to-joint coordinate transform.
* gravity enters as the standard fictitious base acceleration, keeping both
  recursions O(n).
* floating joints store position coordinates ``[px, py, pz, qw, qx, qy, qz]``
  and velocity coordinates ``[wx, wy, wz, vx, vy, vz]`` in the body frame,
  angular block first.
"""

from __future__ import annotations

from collections import namedtuple

from . import autodiff as ad
from . import spatial as sp
from .autodiff import value_of
from .model import FIXED, FLOATING, PRISMATIC, REVOLUTE, KinematicTree
from .spatial import (
    ArticulatedInertia,
    SpatialForce,
    SpatialMotion,
    SpatialTransform,
    ZERO_MOTION,
    compose,
    cross_force,
    cross_motion,
    dual_pairing,
    inertia_apply,
    transform_force,
    transform_force_inv,
    transform_motion,
)

__all__ = [
    "SingularInertiaError",
    "JointState",
    "Pose",
    "Trajectory",
    "forward_kinematics",
    "body_com_world",
    "forward_dynamics_aba",
    "inverse_dynamics_rnea",
    "bias_forces",
    "mass_matrix",
    "integrate_semi_implicit",
    "rollout",
    "total_energy",
]


class SingularInertiaError(ArithmeticError):
    """Articulated inertia is singular along a joint axis (degenerate model).

    Subclasses ArithmeticError so optimizer line searches treat parameter
    vectors producing degenerate models as rejected trials.
    """


Pose = namedtuple("Pose", ["position", "rotation"])  # rotation: body -> world


class JointState:
    """Generalized coordinates q, velocities qd, accelerations qdd, forces tau."""

    __slots__ = ("q", "qd", "qdd", "tau")

    def __init__(self, q, qd, qdd=None, tau=None):
        self.q = list(q)
        self.qd = list(qd)
        self.qdd = list(qdd) if qdd is not None else [0.0] * len(self.qd)
        self.tau = list(tau) if tau is not None else [0.0] * len(self.qd)

    @staticmethod
    def neutral(tree: KinematicTree) -> "JointState":
        q = [0.0] * tree.n_q
        for j in tree.joints:
            if j.kind == FLOATING:
                q[j.q_off + 3] = 1.0  # identity quaternion (w, x, y, z)
        return JointState(q, [0.0] * tree.n_v)

    def copy(self):
        return JointState(self.q, self.qd, self.qdd, self.tau)

    def __repr__(self):
        return f"JointState(q={self.q}, qd={self.qd})"


class Trajectory:
    """Uniformly sampled rollout record: states plus world poses per step."""

    def __init__(self, dt, states, poses):
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        self.dt = dt
        self.states = states
        self.poses = poses

    def __len__(self):
        return len(self.states)

    def write_csv(self, fh, tree: KinematicTree):
        """One row per step; body columns are world com positions."""
        nq, nv = tree.n_q, tree.n_v
        cols = ["t"]
        cols += [f"q{i}" for i in range(nq)]
        cols += [f"qd{i}" for i in range(nv)]
        cols += [f"qdd{i}" for i in range(nv)]
        cols += [f"tau{i}" for i in range(nv)]
        for b in tree.bodies:
            cols += [f"body_{b.name}_{ax}" for ax in "xyz"]
        fh.write(",".join(cols) + "\n")
        for k, state in enumerate(self.states):
            row = [repr(k * self.dt)]
            row += [repr(value_of(x)) for x in state.q]
            row += [repr(value_of(x)) for x in state.qd]
            row += [repr(value_of(x)) for x in state.qdd]
            row += [repr(value_of(x)) for x in state.tau]
            poses = self.poses[k]
            for b, pose in zip(tree.bodies, poses):
                com = body_com_world(b, pose)
                row += [repr(value_of(c)) for c in com]
            fh.write(",".join(row) + "\n")


# -- per-joint transforms ------------------------------------------------------


def _axis_motion_angular(axis):
    return SpatialMotion(axis, (0.0, 0.0, 0.0))


def _axis_motion_linear(axis):
    return SpatialMotion((0.0, 0.0, 0.0), axis)


_FLOATING_S = [
    SpatialMotion((1.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
    SpatialMotion((0.0, 1.0, 0.0), (0.0, 0.0, 0.0)),
    SpatialMotion((0.0, 0.0, 1.0), (0.0, 0.0, 0.0)),
    SpatialMotion((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
    SpatialMotion((0.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    SpatialMotion((0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
]

_IDENTITY = SpatialTransform.identity()


def revolute_jx_sincos(joint, s, c):
    """Joint transform + motion subspace for a revolute joint given sin/cos
    of its angle (lets callers feed trig pairs straight into the dynamics)."""
    # Coordinate transform = point rotation transposed = rotation by -q.
    E = sp.rot_axis_sincos(joint.axis, -s, c)
    return SpatialTransform(E, (0.0, 0.0, 0.0)), (_axis_motion_angular(joint.axis),)


def prismatic_jx(joint, displacement):
    """Joint transform + motion subspace for a prismatic joint."""
    return (
        SpatialTransform(sp.M3_IDENTITY, sp.v3_scale(joint.axis, displacement)),
        (_axis_motion_linear(joint.axis),),
    )


def joint_jx(joint, q):
    """(XJ, S columns) for one joint; q is the tree position vector."""
    kind = joint.kind
    if kind == REVOLUTE:
        qi = q[joint.q_off]
        return revolute_jx_sincos(joint, ad.sin(qi), ad.cos(qi))
    if kind == PRISMATIC:
        qi = q[joint.q_off]
        return (
            SpatialTransform(sp.M3_IDENTITY, sp.v3_scale(joint.axis, qi)),
            (_axis_motion_linear(joint.axis),),
        )
    if kind == FIXED:
        return _IDENTITY, ()
    if kind == FLOATING:
        o = joint.q_off
        px, py, pz, qw, qx, qy, qz = q[o : o + 7]
        E = sp.m3_transpose(sp.rot_quat(qw, qx, qy, qz))
        return SpatialTransform(E, (px, py, pz)), tuple(_FLOATING_S)
    raise ValueError(f"unknown joint kind {kind!r}")


def _joint_vel(S, qd, v_off):
    if len(S) == 1:
        return S[0].scale(qd[v_off])
    vj = ZERO_MOTION
    for k, Sk in enumerate(S):
        vj = vj.add(Sk.scale(qd[v_off + k]))
    return vj


# -- forward kinematics --------------------------------------------------------


def forward_kinematics(tree: KinematicTree, q, jx=None):
    """World pose of every body: (position, body-to-world rotation)."""
    poses = []
    x0 = []  # coordinate transform world -> body
    for i, (body, joint) in enumerate(zip(tree.bodies, tree.joints)):
        XJ, _ = jx[i] if jx is not None else joint_jx(joint, q)
        Xup = compose(XJ, joint.xtree)
        X = Xup if joint.parent < 0 else compose(Xup, x0[joint.parent])
        x0.append(X)
        poses.append(Pose(X.trans, sp.m3_transpose(X.rot)))
    return poses


def body_com_world(body, pose: Pose):
    return sp.v3_add(pose.position, sp.m3_vec(pose.rotation, body.com))


# -- forward dynamics (articulated-body recursion) ------------------------------


def forward_dynamics_aba(tree, q, qd, tau, f_ext=None, gravity_on=True, jx=None):
    """Joint accelerations from state and generalized forces, O(n).

    ``f_ext`` is an optional per-body list of world-frame SpatialForce (None
    entries allowed).  Gravity is applied internally; raise ``gravity_on``
    only off for oracle computations.
    """
    n = tree.n_bodies
    joints = tree.joints
    Xup = [None] * n
    S = [None] * n
    v = [None] * n
    c = [None] * n
    IA = [None] * n
    pA = [None] * n
    x0 = [None] * n if f_ext is not None else None

    for i in range(n):
        joint = joints[i]
        XJ, Si = jx[i] if jx is not None else joint_jx(joint, q)
        S[i] = Si
        Xup[i] = compose(XJ, joint.xtree)
        vj = _joint_vel(Si, qd, joint.v_off) if Si else ZERO_MOTION
        if joint.parent < 0:
            v[i] = vj
            c[i] = ZERO_MOTION
        else:
            v[i] = transform_motion(Xup[i], v[joint.parent]).add(vj)
            c[i] = cross_motion(v[i], vj)
        body = tree.bodies[i]
        IA[i] = body.art
        pA[i] = cross_force(v[i], inertia_apply(body.spatial, v[i]))
        if f_ext is not None:
            x0[i] = (
                Xup[i]
                if joint.parent < 0
                else compose(Xup[i], x0[joint.parent])
            )
            fx = f_ext[i]
            if fx is not None:
                pA[i] = pA[i].sub(transform_force(x0[i], fx))

    U = [None] * n
    d = [None] * n
    u = [None] * n
    for i in range(n - 1, -1, -1):
        joint = joints[i]
        nv = joint.nv
        lam = joint.parent
        if nv == 0:
            if lam >= 0:
                IA[lam] = IA[lam].add(IA[i].transform_to_parent(Xup[i]))
                pa = pA[i].add(IA[i].apply(c[i]))
                pA[lam] = pA[lam].add(transform_force_inv(Xup[i], pa))
            continue
        if nv == 1:
            Si = S[i][0]
            Ui = IA[i].apply(Si)
            di = dual_pairing(Ui, Si)
            if not value_of(di) > 1e-12:
                raise SingularInertiaError(
                    f"joint {joint.name!r}: articulated inertia {value_of(di):g}"
                )
            ui = tau[joint.v_off] - dual_pairing(pA[i], Si)
            U[i], d[i], u[i] = Ui, di, ui
            if lam >= 0:
                inv_d = 1.0 / di
                Ia = IA[i].sub_scaled_outer(Ui, Ui, inv_d)
                pa = pA[i].add(Ia.apply(c[i])).add(Ui.scale(ui * inv_d))
                IA[lam] = IA[lam].add(Ia.transform_to_parent(Xup[i]))
                pA[lam] = pA[lam].add(transform_force_inv(Xup[i], pa))
        else:
            Ui = [IA[i].apply(Sk) for Sk in S[i]]
            Di = [[dual_pairing(Uk, Sj) for Uk in Ui] for Sj in S[i]]
            ui = [
                tau[joint.v_off + k] - dual_pairing(pA[i], S[i][k])
                for k in range(nv)
            ]
            U[i], d[i], u[i] = Ui, Di, ui
            if lam >= 0:
                # W = D^-1 U^T: one joint-space solve per spatial component.
                comp = [_force_comps(Ui, cc) for cc in range(6)]
                sols = _solve_sym(Di, comp)  # sols[cc][j] = W[j][cc]
                Ia = IA[i]
                for j in range(nv):
                    wj = SpatialForce(
                        (sols[0][j], sols[1][j], sols[2][j]),
                        (sols[3][j], sols[4][j], sols[5][j]),
                    )
                    Ia = Ia.sub_scaled_outer(Ui[j], wj, 1.0)
                du = _solve_sym(Di, [list(ui)])[0]
                pa = pA[i].add(Ia.apply(c[i]))
                for k in range(nv):
                    pa = pa.add(Ui[k].scale(du[k]))
                IA[lam] = IA[lam].add(Ia.transform_to_parent(Xup[i]))
                pA[lam] = pA[lam].add(transform_force_inv(Xup[i], pa))

    a_base = SpatialMotion((0.0, 0.0, 0.0), sp.v3_neg(tree.gravity)) if gravity_on \
        else ZERO_MOTION
    a = [None] * n
    qdd = [0.0] * tree.n_v
    for i in range(n):
        joint = joints[i]
        lam = joint.parent
        ap = transform_motion(Xup[i], a_base if lam < 0 else a[lam]).add(c[i])
        nv = joint.nv
        if nv == 0:
            a[i] = ap
        elif nv == 1:
            qi = (u[i] - dual_pairing(U[i], ap)) / d[i]
            qdd[joint.v_off] = qi
            a[i] = ap.add(S[i][0].scale(qi))
        else:
            rhs = [u[i][k] - dual_pairing(U[i][k], ap) for k in range(nv)]
            sol = _solve_sym(d[i], [rhs])[0]
            ai = ap
            for k in range(nv):
                qdd[joint.v_off + k] = sol[k]
                ai = ai.add(S[i][k].scale(sol[k]))
            a[i] = ai
    return qdd


def _force_comps(U, cc):
    """Spatial component ``cc`` of every force in U (one U^T row)."""
    if cc < 3:
        return [f.ang[cc] for f in U]
    return [f.lin[cc - 3] for f in U]


def _solve_sym(D, rhs_rows):
    """Solve D x = b for each row b in rhs_rows (generic scalars).

    Gaussian elimination with partial pivoting on absolute values; D is a
    small (joint-dof) symmetric positive-definite matrix.  Raises
    SingularInertiaError when a pivot collapses.
    """
    m = len(D)
    A = [list(row) for row in D]
    B = [list(r) for r in rhs_rows]
    nr = len(B)
    for col in range(m):
        piv = max(range(col, m), key=lambda r: abs(value_of(A[r][col])))
        if not abs(value_of(A[piv][col])) > 1e-12:
            raise SingularInertiaError("singular joint-space inertia block")
        if piv != col:
            A[col], A[piv] = A[piv], A[col]
            for r in range(nr):
                B[r][col], B[r][piv] = B[r][piv], B[r][col]
        inv_p = 1.0 / A[col][col]
        for row in range(col + 1, m):
            f = A[row][col] * inv_p
            if value_of(f) == 0.0:
                continue
            for k in range(col, m):
                A[row][k] = A[row][k] - f * A[col][k]
            for r in range(nr):
                B[r][row] = B[r][row] - f * B[r][col]
    for r in range(nr):
        x = B[r]
        for col in range(m - 1, -1, -1):
            acc = x[col]
            for k in range(col + 1, m):
                acc = acc - A[col][k] * x[k]
            x[col] = acc / A[col][col]
    return B


# -- inverse dynamics (recursive Newton-Euler) ----------------------------------


def inverse_dynamics_rnea(tree, q, qd, qdd, f_ext=None, gravity_on=True, jx=None):
    """Generalized forces producing ``qdd`` at (q, qd); O(n)."""
    n = tree.n_bodies
    joints = tree.joints
    a_base = SpatialMotion((0.0, 0.0, 0.0), sp.v3_neg(tree.gravity)) if gravity_on \
        else ZERO_MOTION
    Xup = [None] * n
    S = [None] * n
    v = [None] * n
    f = [None] * n
    x0 = [None] * n if f_ext is not None else None
    a = [None] * n

    for i in range(n):
        joint = joints[i]
        XJ, Si = jx[i] if jx is not None else joint_jx(joint, q)
        S[i] = Si
        Xup[i] = compose(XJ, joint.xtree)
        vj = _joint_vel(Si, qd, joint.v_off) if Si else ZERO_MOTION
        aj = _joint_vel(Si, qdd, joint.v_off) if Si else ZERO_MOTION
        if joint.parent < 0:
            v[i] = vj
            a[i] = transform_motion(Xup[i], a_base).add(aj)
        else:
            v[i] = transform_motion(Xup[i], v[joint.parent]).add(vj)
            a[i] = (
                transform_motion(Xup[i], a[joint.parent])
                .add(aj)
                .add(cross_motion(v[i], vj))
            )
        body = tree.bodies[i]
        f[i] = inertia_apply(body.spatial, a[i]).add(
            cross_force(v[i], inertia_apply(body.spatial, v[i]))
        )
        if f_ext is not None:
            x0[i] = (
                Xup[i]
                if joint.parent < 0
                else compose(Xup[i], x0[joint.parent])
            )
            fx = f_ext[i]
            if fx is not None:
                f[i] = f[i].sub(transform_force(x0[i], fx))

    tau = [0.0] * tree.n_v
    for i in range(n - 1, -1, -1):
        joint = joints[i]
        for k, Sk in enumerate(S[i]):
            tau[joint.v_off + k] = dual_pairing(f[i], Sk)
        if joint.parent >= 0:
            f[joint.parent] = f[joint.parent].add(transform_force_inv(Xup[i], f[i]))
    return tau


def bias_forces(tree, q, qd, gravity_on=True):
    """C(q, qd): Coriolis, centrifugal and gravity terms (RNEA at qdd = 0)."""
    return inverse_dynamics_rnea(tree, q, qd, [0.0] * tree.n_v,
                                 gravity_on=gravity_on)


def mass_matrix(tree, q):
    """Generalized inertia H(q), column by column through gravity-free RNEA."""
    nv = tree.n_v
    c0 = inverse_dynamics_rnea(tree, q, [0.0] * nv, [0.0] * nv, gravity_on=False)
    H = []
    for j in range(nv):
        e = [0.0] * nv
        e[j] = 1.0
        col = inverse_dynamics_rnea(tree, q, [0.0] * nv, e, gravity_on=False)
        H.append([col[i] - c0[i] for i in range(nv)])
    # H was built column-wise; transpose into row-major.
    return [[H[j][i] for j in range(nv)] for i in range(nv)]


# -- integration and rollout -----------------------------------------------------


def integrate_semi_implicit(tree, state: JointState, qdd, dt) -> JointState:
    """Velocity first, then position with the *new* velocity.

    Floating-joint quaternions advance by the quaternion derivative and are
    renormalized with a guarded square root; their positions advance along
    the world-frame linear velocity of the updated orientation.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    qd_new = [state.qd[k] + dt * qdd[k] for k in range(len(state.qd))]
    q_new = list(state.q)
    for joint in tree.joints:
        if joint.nv == 1:
            q_new[joint.q_off] = state.q[joint.q_off] + dt * qd_new[joint.v_off]
        elif joint.kind == FLOATING:
            o, vo = joint.q_off, joint.v_off
            px, py, pz, qw, qx, qy, qz = state.q[o : o + 7]
            wx, wy, wz = qd_new[vo : vo + 3]
            vx, vy, vz = qd_new[vo + 3 : vo + 6]
            # dQ/dt = Q (x) (0, w)/2 with w in body coordinates.
            dw = -0.5 * (qx * wx + qy * wy + qz * wz)
            dx = 0.5 * (qw * wx + qy * wz - qz * wy)
            dy = 0.5 * (qw * wy + qz * wx - qx * wz)
            dz = 0.5 * (qw * wz + qx * wy - qy * wx)
            nw = qw + dt * dw
            nx = qx + dt * dx
            ny = qy + dt * dy
            nz = qz + dt * dz
            norm = ad.hypot_guarded((nw, nx, ny, nz))
            nw, nx, ny, nz = nw / norm, nx / norm, ny / norm, nz / norm
            R = sp.rot_quat(nw, nx, ny, nz)
            vel_world = sp.m3_vec(R, (vx, vy, vz))
            q_new[o] = px + dt * vel_world[0]
            q_new[o + 1] = py + dt * vel_world[1]
            q_new[o + 2] = pz + dt * vel_world[2]
            q_new[o + 3 : o + 7] = [nw, nx, ny, nz]
    return JointState(q_new, qd_new, qdd, state.tau)


def rollout(tree, state0: JointState, controls=None, horizon=0, dt=0.05,
            zero_force_after_first=False, record_poses=True) -> Trajectory:
    """Unroll forward dynamics + integration for ``horizon`` steps.

    ``controls`` is None (unforced) or a length-``horizon`` sequence whose
    rows are either full generalized-force vectors (dimension n_v) or one
    entry per actuated joint.  With ``zero_force_after_first`` the first
    row is applied once and forces are zero afterwards.  Differentiable in
    everything: tree parameters, initial state, and controls.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    actuated = tree.actuated_v
    state = state0.copy()
    states = [state]
    poses = [forward_kinematics(tree, state.q)] if record_poses else [None]
    for t in range(horizon):
        tau = _controls_to_tau(tree, controls, t, actuated)
        if zero_force_after_first and t > 0:
            tau = [0.0] * tree.n_v
        state.tau = tau
        qdd = forward_dynamics_aba(tree, state.q, state.qd, tau)
        state.qdd = qdd
        state = integrate_semi_implicit(tree, state, qdd, dt)
        states.append(state)
        poses.append(forward_kinematics(tree, state.q) if record_poses else None)
    return Trajectory(dt, states, poses)


def _controls_to_tau(tree, controls, t, actuated):
    nv = tree.n_v
    if controls is None:
        return [0.0] * nv
    row = controls[t]
    try:
        row = list(row)
    except TypeError:
        row = [row]
    if len(row) == nv:
        return list(row)
    if len(row) == len(actuated):
        tau = [0.0] * nv
        for idx, val in zip(actuated, row):
            tau[idx] = val
        return tau
    raise ValueError(
        f"control row has {len(row)} entries; expected {nv} (full) or "
        f"{len(actuated)} (actuated joints)"
    )


def total_energy(tree, q, qd):
    """Kinetic plus gravitational potential energy of the whole tree."""
    n = tree.n_bodies
    v = [None] * n
    kin = 0.0
    for i, joint in enumerate(tree.joints):
        XJ, Si = joint_jx(tree.joints[i], q)
        Xup = compose(XJ, joint.xtree)
        vj = _joint_vel(Si, qd, joint.v_off) if Si else ZERO_MOTION
        v[i] = vj if joint.parent < 0 else transform_motion(Xup, v[joint.parent]).add(vj)
        kin = kin + 0.5 * dual_pairing(inertia_apply(tree.bodies[i].spatial, v[i]), v[i])
    pot = 0.0
    for body, pose in zip(tree.bodies, forward_kinematics(tree, q)):
        com = body_com_world(body, pose)
        pot = pot - body.mass * sp.v3_dot(tree.gravity, com)
    return kin + pot
