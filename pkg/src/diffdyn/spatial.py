"""Spatial (6-D) vector algebra: motion/force vectors, Plücker transforms,
rigid-body and articulated-body inertias, and the two cross-product operators.

Conventions
-----------
* 6-D vectors are stored as an (angular, linear) pair of 3-tuples, angular
  block first.
* ``SpatialTransform(rot=E, trans=r)`` is the coordinate transform from
  frame A to frame B, where frame B's origin sits at ``r`` (A coordinates)
  and ``E`` maps A-coordinates of a direction to B-coordinates.  A point
  with A-coordinates ``w`` has B-coordinates ``E (w - r)``.  As a 6x6
  Plücker matrix this is ``[[E, 0], [-E r~, E]]`` for motion vectors.
* Scalars may be plain floats or autodiff TracedValues; every routine here
  is generic over both.

Tuples (not numpy arrays) carry the 3-vectors and 3x3 matrices because the
scalar type is generic and the recursions in `dynamics` are the hot path.
Matrices are 9-tuples, row-major.
"""

from __future__ import annotations

from . import autodiff as ad
from .autodiff import value_of

# -- 3-vector / 3x3-matrix helpers (generic scalars) -------------------------

V3_ZERO = (0.0, 0.0, 0.0)
M3_IDENTITY = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)


def v3(x, y, z):
    return (x, y, z)


def v3_add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def v3_sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def v3_neg(a):
    return (-a[0], -a[1], -a[2])


def v3_scale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


def v3_dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def v3_cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def v3_norm(a):
    return ad.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def m3_vec(m, a):
    """m @ a for a row-major 9-tuple m."""
    return (
        m[0] * a[0] + m[1] * a[1] + m[2] * a[2],
        m[3] * a[0] + m[4] * a[1] + m[5] * a[2],
        m[6] * a[0] + m[7] * a[1] + m[8] * a[2],
    )


def m3_tvec(m, a):
    """m.T @ a without materializing the transpose."""
    return (
        m[0] * a[0] + m[3] * a[1] + m[6] * a[2],
        m[1] * a[0] + m[4] * a[1] + m[7] * a[2],
        m[2] * a[0] + m[5] * a[1] + m[8] * a[2],
    )


def m3_mul(a, b):
    return (
        a[0] * b[0] + a[1] * b[3] + a[2] * b[6],
        a[0] * b[1] + a[1] * b[4] + a[2] * b[7],
        a[0] * b[2] + a[1] * b[5] + a[2] * b[8],
        a[3] * b[0] + a[4] * b[3] + a[5] * b[6],
        a[3] * b[1] + a[4] * b[4] + a[5] * b[7],
        a[3] * b[2] + a[4] * b[5] + a[5] * b[8],
        a[6] * b[0] + a[7] * b[3] + a[8] * b[6],
        a[6] * b[1] + a[7] * b[4] + a[8] * b[7],
        a[6] * b[2] + a[7] * b[5] + a[8] * b[8],
    )


def m3_tmul(a, b):
    """a.T @ b."""
    return (
        a[0] * b[0] + a[3] * b[3] + a[6] * b[6],
        a[0] * b[1] + a[3] * b[4] + a[6] * b[7],
        a[0] * b[2] + a[3] * b[5] + a[6] * b[8],
        a[1] * b[0] + a[4] * b[3] + a[7] * b[6],
        a[1] * b[1] + a[4] * b[4] + a[7] * b[7],
        a[1] * b[2] + a[4] * b[5] + a[7] * b[8],
        a[2] * b[0] + a[5] * b[3] + a[8] * b[6],
        a[2] * b[1] + a[5] * b[4] + a[8] * b[7],
        a[2] * b[2] + a[5] * b[5] + a[8] * b[8],
    )


def m3_transpose(m):
    return (m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8])


def m3_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def m3_sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def m3_scale(m, s):
    return tuple(x * s for x in m)


def m3_outer(a, b):
    return (
        a[0] * b[0], a[0] * b[1], a[0] * b[2],
        a[1] * b[0], a[1] * b[1], a[1] * b[2],
        a[2] * b[0], a[2] * b[1], a[2] * b[2],
    )


def m3_skew(a):
    x, y, z = a
    return (0.0, -z, y, z, 0.0, -x, -y, x, 0.0)


def rot_axis_sincos(axis, s, c):
    """Rodrigues point-rotation matrix for a unit axis and given sin/cos.

    Axis components are usually plain-float constants, so products with
    zero entries fold away instead of landing on the tape.
    """
    ux, uy, uz = axis
    t = 1.0 - c
    return (
        c + ux * ux * t, ux * uy * t - uz * s, ux * uz * t + uy * s,
        uy * ux * t + uz * s, c + uy * uy * t, uy * uz * t - ux * s,
        uz * ux * t - uy * s, uz * uy * t + ux * s, c + uz * uz * t,
    )


def rot_axis_angle(axis, q):
    return rot_axis_sincos(axis, ad.sin(q), ad.cos(q))


def rot_rpy(r, p, y):
    """Point rotation Rz(y) @ Ry(p) @ Rx(r) (fixed-axis roll-pitch-yaw)."""
    sr, cr = ad.sin(r), ad.cos(r)
    sp, cp = ad.sin(p), ad.cos(p)
    sy, cy = ad.sin(y), ad.cos(y)
    return (
        cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
        sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
        -sp, cp * sr, cp * cr,
    )


def rot_quat(w, x, y, z):
    """Point rotation of a unit quaternion (w, x, y, z)."""
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return (
        1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy),
        2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx),
        2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy),
    )


# -- spatial vector types -----------------------------------------------------


class SpatialMotion:
    """Spatial motion vector: angular block (rad/s or rad/s^2) + linear block."""

    __slots__ = ("ang", "lin")

    def __init__(self, ang=V3_ZERO, lin=V3_ZERO):
        self.ang = ang
        self.lin = lin

    def __repr__(self):
        return f"SpatialMotion(ang={self.ang}, lin={self.lin})"

    def add(self, other):
        return SpatialMotion(v3_add(self.ang, other.ang), v3_add(self.lin, other.lin))

    def scale(self, s):
        return SpatialMotion(v3_scale(self.ang, s), v3_scale(self.lin, s))


class SpatialForce:
    """Spatial force vector: torque block (N*m) + force block (N)."""

    __slots__ = ("ang", "lin")

    def __init__(self, ang=V3_ZERO, lin=V3_ZERO):
        self.ang = ang
        self.lin = lin

    def __repr__(self):
        return f"SpatialForce(torque={self.ang}, force={self.lin})"

    def add(self, other):
        return SpatialForce(v3_add(self.ang, other.ang), v3_add(self.lin, other.lin))

    def sub(self, other):
        return SpatialForce(v3_sub(self.ang, other.ang), v3_sub(self.lin, other.lin))

    def scale(self, s):
        return SpatialForce(v3_scale(self.ang, s), v3_scale(self.lin, s))


ZERO_MOTION = SpatialMotion()
ZERO_FORCE = SpatialForce()


def cross_motion(v: SpatialMotion, m: SpatialMotion) -> SpatialMotion:
    """v x m  (motion-motion spatial cross product)."""
    return SpatialMotion(
        v3_cross(v.ang, m.ang),
        v3_add(v3_cross(v.ang, m.lin), v3_cross(v.lin, m.ang)),
    )


def cross_force(v: SpatialMotion, f: SpatialForce) -> SpatialForce:
    """v x* f  (motion-force spatial cross product, dual of cross_motion)."""
    return SpatialForce(
        v3_add(v3_cross(v.ang, f.ang), v3_cross(v.lin, f.lin)),
        v3_cross(v.ang, f.lin),
    )


def dual_pairing(f: SpatialForce, m: SpatialMotion):
    """<f, m> = torque . angular + force . linear (frame-invariant power)."""
    return v3_dot(f.ang, m.ang) + v3_dot(f.lin, m.lin)


# -- Plücker coordinate transforms --------------------------------------------


class SpatialTransform:
    """Coordinate transform between frames; see module docstring for the
    (rot, trans) semantics."""

    __slots__ = ("rot", "trans")

    def __init__(self, rot=M3_IDENTITY, trans=V3_ZERO):
        self.rot = rot
        self.trans = trans

    def __repr__(self):
        return f"SpatialTransform(rot={self.rot}, trans={self.trans})"

    @staticmethod
    def identity():
        return SpatialTransform()

    def point_to_child(self, w):
        """A-coordinates of a point -> B-coordinates: E (w - r)."""
        return m3_vec(self.rot, v3_sub(w, self.trans))

    def point_to_parent(self, b):
        """Inverse point map: E.T b + r."""
        return v3_add(m3_tvec(self.rot, b), self.trans)

    def validate(self, tol=1e-9):
        """Raise ValueError unless rot is orthonormal with det +1."""
        E = [value_of(x) for x in self.rot]
        ete = m3_mul(m3_transpose(tuple(E)), tuple(E))
        worst = max(abs(ete[i] - M3_IDENTITY[i]) for i in range(9))
        det = (
            E[0] * (E[4] * E[8] - E[5] * E[7])
            - E[1] * (E[3] * E[8] - E[5] * E[6])
            + E[2] * (E[3] * E[7] - E[4] * E[6])
        )
        if worst >= tol or abs(det - 1.0) >= tol:
            raise ValueError(
                f"rotation not orthonormal: |R'R - I| = {worst:g}, det = {det:.12g}"
            )


def transform_motion(T: SpatialTransform, m: SpatialMotion) -> SpatialMotion:
    """Motion vector from A-coordinates to B-coordinates."""
    w = m3_vec(T.rot, m.ang)
    return SpatialMotion(w, m3_vec(T.rot, v3_sub(m.lin, v3_cross(T.trans, m.ang))))


def transform_motion_inv(T: SpatialTransform, m: SpatialMotion) -> SpatialMotion:
    """Motion vector from B-coordinates back to A-coordinates."""
    w = m3_tvec(T.rot, m.ang)
    return SpatialMotion(w, v3_add(m3_tvec(T.rot, m.lin), v3_cross(T.trans, w)))


def transform_force(T: SpatialTransform, f: SpatialForce) -> SpatialForce:
    """Force vector from A-coordinates to B-coordinates."""
    F = m3_vec(T.rot, f.lin)
    return SpatialForce(m3_vec(T.rot, v3_sub(f.ang, v3_cross(T.trans, f.lin))), F)


def transform_force_inv(T: SpatialTransform, f: SpatialForce) -> SpatialForce:
    """Force vector from B-coordinates back to A-coordinates."""
    F = m3_tvec(T.rot, f.lin)
    return SpatialForce(v3_add(m3_tvec(T.rot, f.ang), v3_cross(T.trans, F)), F)


def compose(A: SpatialTransform, B: SpatialTransform) -> SpatialTransform:
    """Transform applying B first, then A (i.e. the map A o B)."""
    return SpatialTransform(
        m3_mul(A.rot, B.rot),
        v3_add(B.trans, m3_tvec(B.rot, A.trans)),
    )


def invert(T: SpatialTransform) -> SpatialTransform:
    return SpatialTransform(m3_transpose(T.rot), v3_neg(m3_vec(T.rot, T.trans)))


# -- inertia -------------------------------------------------------------------


class SpatialInertia:
    """Rigid-body inertia: mass, center of mass, rotational inertia about
    the com (row-major 3x3, symmetric)."""

    __slots__ = ("mass", "com", "inertia")

    def __init__(self, mass, com=V3_ZERO, inertia=(0.0,) * 9):
        self.mass = mass
        self.com = com
        self.inertia = inertia

    def __repr__(self):
        return f"SpatialInertia(mass={self.mass}, com={self.com})"

    @staticmethod
    def from_values(mass, com, ixx, iyy, izz, ixy=0.0, ixz=0.0, iyz=0.0):
        return SpatialInertia(
            mass, tuple(com), (ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz)
        )

    def validate(self, tol=1e-9, name="body"):
        m = value_of(self.mass)
        if not m > 0.0:
            raise ValueError(f"{name}: mass must be positive, got {m!r}")
        I = [value_of(x) for x in self.inertia]
        if (
            abs(I[1] - I[3]) > tol
            or abs(I[2] - I[6]) > tol
            or abs(I[5] - I[7]) > tol
        ):
            raise ValueError(f"{name}: rotational inertia must be symmetric")
        import numpy as np

        w = np.linalg.eigvalsh(np.array(I).reshape(3, 3))
        if w[0] < -tol:
            raise ValueError(f"{name}: rotational inertia must be PSD, eigs {w}")
        # Triangle inequalities on principal moments (physical realizability).
        a, b, c = sorted(w)
        if c > a + b + tol * max(1.0, c):
            raise ValueError(f"{name}: principal moments violate triangle inequality")


def inertia_apply(I: SpatialInertia, v: SpatialMotion) -> SpatialForce:
    """Spatial momentum/force I v for the (mass, com, I_com) form."""
    F = v3_scale(v3_add(v.lin, v3_cross(v.ang, I.com)), I.mass)
    tau = v3_add(m3_vec(I.inertia, v.ang), v3_cross(I.com, F))
    return SpatialForce(tau, F)


class ArticulatedInertia:
    """Dense symmetric 6x6 inertia in block form [[A, B], [B.T, C]].

    Rigid-body inertias stay in (mass, com, I_com) form; this type only
    appears inside the articulated-body recursion, where the propagated
    quantity is no longer representable that way.
    """

    __slots__ = ("A", "B", "C")

    def __init__(self, A, B, C):
        self.A = A
        self.B = B
        self.C = C

    @staticmethod
    def from_rigid(I: SpatialInertia) -> "ArticulatedInertia":
        m = I.mass
        cx = m3_skew(I.com)
        # A = I_com - m cx cx,  B = m cx,  C = m 1
        mcx = m3_scale(cx, m)
        return ArticulatedInertia(
            m3_sub(I.inertia, m3_mul(cx, mcx)),
            mcx,
            (m, 0.0, 0.0, 0.0, m, 0.0, 0.0, 0.0, m),
        )

    def apply(self, v: SpatialMotion) -> SpatialForce:
        return SpatialForce(
            v3_add(m3_vec(self.A, v.ang), m3_vec(self.B, v.lin)),
            v3_add(m3_tvec(self.B, v.ang), m3_vec(self.C, v.lin)),
        )

    def add(self, other: "ArticulatedInertia") -> "ArticulatedInertia":
        return ArticulatedInertia(
            m3_add(self.A, other.A), m3_add(self.B, other.B), m3_add(self.C, other.C)
        )

    def sub_scaled_outer(self, f: SpatialForce, g: SpatialForce, inv_d):
        """self - (f g.T symmetrized-by-construction) * inv_d  (rank-1 update
        with f == g in the 1-dof articulated-body step)."""
        ft = v3_scale(f.ang, inv_d)
        fl = v3_scale(f.lin, inv_d)
        return ArticulatedInertia(
            m3_sub(self.A, m3_outer(ft, g.ang)),
            m3_sub(self.B, m3_outer(ft, g.lin)),
            m3_sub(self.C, m3_outer(fl, g.lin)),
        )

    def transform_to_parent(self, T: SpatialTransform) -> "ArticulatedInertia":
        """Congruence X.T I X for X = [[E,0],[G,E]], G = -E r~.

        Maps an articulated inertia expressed in child coordinates into the
        parent frame (T transforms parent -> child).
        """
        E = T.rot
        G = m3_scale(m3_mul(E, m3_skew(T.trans)), -1.0)
        A, B, C = self.A, self.B, self.C
        AE_BG = m3_add(m3_mul(A, E), m3_mul(B, G))
        BtE_CG = m3_add(m3_tmul(B, E), m3_mul(C, G))
        CE = m3_mul(C, E)
        M11 = m3_add(m3_tmul(E, AE_BG), m3_tmul(G, BtE_CG))
        M12 = m3_add(m3_tmul(E, m3_mul(B, E)), m3_tmul(G, CE))
        M22 = m3_tmul(E, CE)
        return ArticulatedInertia(M11, M12, M22)

    def to_matrix(self):
        """Dense 6x6 (numpy) for diagnostics and test oracles."""
        import numpy as np

        A = np.array([[value_of(x) for x in self.A[i * 3 : i * 3 + 3]] for i in range(3)])
        B = np.array([[value_of(x) for x in self.B[i * 3 : i * 3 + 3]] for i in range(3)])
        C = np.array([[value_of(x) for x in self.C[i * 3 : i * 3 + 3]] for i in range(3)])
        top = np.hstack([A, B])
        bot = np.hstack([B.T, C])
        return np.vstack([top, bot])
