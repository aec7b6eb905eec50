"""Kinematic-tree description: bodies, joints, free-parameter bindings, and
construction from a JSON document or from Denavit-Hartenberg parameters.

Document schema (JSON)::

    {
      "gravity": [x, y, z],                        # optional, default z-down
      "bodies": [
        {"name": str, "mass": kg, "com": [3],
         "inertia": [Ixx, Iyy, Izz, Ixy, Ixz, Iyz],
         "length": m,                              # optional: link extent
         "rod_axis": [3],                          # optional, default [0,0,1]
         "com_along_length": f                     # optional: com = axis*(f*length)
        }, ...],
      "joints": [
        {"name": str, "type": "revolute|prismatic|fixed|floating",
         "parent": str ("world" for the root), "child": str,
         "origin": {"xyz": [3], "rpy": [3]},       # optional, defaults zero
         "axis": [3],                              # revolute/prismatic
         "actuated": bool,                         # optional
         "origin_along_parent_length": bool        # optional: xyz tracks the
        }, ...],                                   #   parent link's length
      "free_parameters": ["bodies/<name>/mass", "bodies/<name>/length",
                          "bodies/<name>/com/<i>",
                          "joints/<name>/origin/xyz/<i>", ...]
    }

``free_parameters`` paths define the ordering of the parameter vector theta
(document order).  Masses and lengths are carried in log-space inside theta
so unconstrained optimizers keep them positive by construction; com and
joint-origin coordinates are linear.  Bodies that declare a ``length`` get
their rotational inertia recomputed from the current mass and length with
the thin-rod formula whenever parameters change.
"""

from __future__ import annotations

import copy
import json
import math

from . import autodiff as ad
from . import spatial as sp
from .autodiff import value_of
from .spatial import SpatialInertia, SpatialTransform

__all__ = [
    "ModelError",
    "Joint",
    "Body",
    "KinematicTree",
    "DHParams",
    "load_model",
    "load_model_file",
    "save_model",
    "from_dh",
]

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FIXED = "fixed"
FLOATING = "floating"
JOINT_KINDS = (REVOLUTE, PRISMATIC, FIXED, FLOATING)

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


class ModelError(ValueError):
    """Invalid model document or inconsistent tree."""


class Joint:
    __slots__ = (
        "name", "kind", "axis", "parent", "child", "origin_xyz", "origin_rpy",
        "origin_along_parent_length", "actuated", "q_off", "v_off", "nq", "nv",
        "xtree",
    )

    def __init__(self, name, kind, parent, child, axis=(0.0, 0.0, 1.0),
                 origin_xyz=(0.0, 0.0, 0.0), origin_rpy=(0.0, 0.0, 0.0),
                 origin_along_parent_length=False, actuated=False):
        self.name = name
        self.kind = kind
        self.axis = axis
        self.parent = parent          # body index, -1 for world
        self.child = child            # body index
        self.origin_xyz = origin_xyz
        self.origin_rpy = origin_rpy
        self.origin_along_parent_length = origin_along_parent_length
        self.actuated = actuated
        self.q_off = 0
        self.v_off = 0
        self.nq, self.nv = _joint_dims(kind)
        self.xtree = SpatialTransform.identity()

    def __repr__(self):
        return f"Joint({self.name!r}, {self.kind}, q_off={self.q_off})"


def _joint_dims(kind):
    if kind == REVOLUTE or kind == PRISMATIC:
        return 1, 1
    if kind == FIXED:
        return 0, 0
    if kind == FLOATING:
        return 7, 6
    raise ModelError(f"unknown joint type {kind!r}")


class Body:
    __slots__ = (
        "name", "index", "mass", "com", "inertia0", "length", "rod_axis",
        "com_along_length", "spatial", "art",
    )

    def __init__(self, name, mass, com=(0.0, 0.0, 0.0), inertia0=(0.0,) * 9,
                 length=None, rod_axis=(0.0, 0.0, 1.0), com_along_length=None):
        self.name = name
        self.index = -1
        self.mass = mass
        self.com = com
        self.inertia0 = inertia0
        self.length = length
        self.rod_axis = rod_axis
        self.com_along_length = com_along_length
        self.spatial = None  # materialized SpatialInertia
        self.art = None      # cached block form for the articulated recursion

    def __repr__(self):
        return f"Body({self.name!r}, mass={self.mass})"


class Binding:
    """One free scalar: a path into the model plus how theta maps onto it."""

    __slots__ = ("path", "kind", "index", "coord", "log_space")

    def __init__(self, path, kind, index, coord, log_space):
        self.path = path
        self.kind = kind      # "mass" | "length" | "com" | "joint_origin"
        self.index = index    # body or joint index
        self.coord = coord    # component for com / joint_origin
        self.log_space = log_space

    def __repr__(self):
        return f"Binding({self.path!r})"


class KinematicTree:
    """Bodies ordered so parents precede children, one joint per body.

    Body i is connected to its parent (``joints[i].parent``, -1 meaning the
    fixed world root) through ``joints[i]``.  Free physical parameters are
    exposed through :meth:`get_parameters` / :meth:`set_parameters`; setting
    parameters only rebinds scalar fields (and the quantities derived from
    them), never the topology.
    """

    def __init__(self, bodies, joints, gravity=DEFAULT_GRAVITY, bindings=(),
                 document=None):
        self.bodies = bodies
        self.joints = joints
        self.gravity = gravity
        self.bindings = list(bindings)
        self.document = document
        self._theta = []
        self.n_q = 0
        self.n_v = 0
        self._index()
        self._theta = [self._read_binding(b) for b in self.bindings]
        self.materialize()

    # -- structure ----------------------------------------------------------

    def _index(self):
        q = v = 0
        for i, (b, j) in enumerate(zip(self.bodies, self.joints)):
            b.index = i
            if j.parent >= i:
                raise ModelError("bodies are not topologically ordered")
            j.q_off, j.v_off = q, v
            q += j.nq
            v += j.nv
        self.n_q, self.n_v = q, v

    @property
    def n_bodies(self):
        return len(self.bodies)

    @property
    def actuated_v(self):
        out = []
        for j in self.joints:
            if j.actuated:
                out.extend(range(j.v_off, j.v_off + j.nv))
        return out

    def body(self, name):
        for b in self.bodies:
            if b.name == name:
                return b
        raise KeyError(name)

    def joint(self, name):
        for j in self.joints:
            if j.name == name:
                return j
        raise KeyError(name)

    def clone(self):
        return copy.deepcopy(self)

    # -- parameters ----------------------------------------------------------

    @property
    def parameter_paths(self):
        return [b.path for b in self.bindings]

    def _read_binding(self, b):
        if b.kind == "mass":
            return math.log(value_of(self.bodies[b.index].mass))
        if b.kind == "length":
            return math.log(value_of(self.bodies[b.index].length))
        if b.kind == "com":
            return value_of(self.bodies[b.index].com[b.coord])
        if b.kind == "joint_origin":
            return value_of(self.joints[b.index].origin_xyz[b.coord])
        raise ModelError(f"unknown binding kind {b.kind!r}")

    def get_parameters(self):
        """Current free-parameter vector theta (log-space for mass/length)."""
        return list(self._theta)

    def set_parameters(self, theta):
        """Write theta into the bound fields and refresh derived quantities."""
        if len(theta) != len(self.bindings):
            raise ModelError(
                f"expected {len(self.bindings)} parameters, got {len(theta)}"
            )
        self._theta = list(theta)
        for b, t in zip(self.bindings, theta):
            if b.kind == "mass":
                self.bodies[b.index].mass = ad.exp(t)
            elif b.kind == "length":
                self.bodies[b.index].length = ad.exp(t)
            elif b.kind == "com":
                body = self.bodies[b.index]
                com = list(body.com)
                com[b.coord] = t
                body.com = tuple(com)
            elif b.kind == "joint_origin":
                j = self.joints[b.index]
                xyz = list(j.origin_xyz)
                xyz[b.coord] = t
                j.origin_xyz = tuple(xyz)
        self.materialize()

    def materialize(self):
        """Rebuild derived fields: com-from-length, thin-rod inertias, child
        joint attachment points, and the fixed parent-to-joint transforms."""
        for body in self.bodies:
            if body.length is not None:
                if body.com_along_length is not None:
                    body.com = sp.v3_scale(
                        body.rod_axis, body.com_along_length * body.length
                    )
                rot_inertia = _rod_inertia(body.mass, body.length, body.rod_axis)
            else:
                rot_inertia = body.inertia0
            body.spatial = SpatialInertia(body.mass, body.com, rot_inertia)
            body.art = sp.ArticulatedInertia.from_rigid(body.spatial)
        for j in self.joints:
            if j.origin_along_parent_length:
                parent = self.bodies[j.parent]
                xyz = sp.v3_scale(parent.rod_axis, parent.length)
            else:
                xyz = j.origin_xyz
            # Coordinate transform parent -> joint frame: E = R(rpy).T
            E = sp.m3_transpose(sp.rot_rpy(*j.origin_rpy))
            j.xtree = SpatialTransform(E, xyz)

    def validate(self):
        for b in self.bodies:
            b.spatial.validate(name=b.name)
            if b.length is not None and not value_of(b.length) > 0.0:
                raise ModelError(f"{b.name}: length must be positive")
        for j in self.joints:
            j.xtree.validate()


def _rod_inertia(mass, length, axis):
    """Thin rod of given mass/length along a unit axis, about its com."""
    s = mass * length * length * (1.0 / 12.0)
    ux, uy, uz = axis
    return (
        s * (1.0 - ux * ux), s * (-ux * uy), s * (-ux * uz),
        s * (-ux * uy), s * (1.0 - uy * uy), s * (-uy * uz),
        s * (-ux * uz), s * (-uy * uz), s * (1.0 - uz * uz),
    )


# -- document loading ---------------------------------------------------------


def load_model(document) -> KinematicTree:
    """Build and validate a KinematicTree from a model document.

    ``document`` is a dict or a JSON string matching the schema in the
    module docstring.  Bodies are reordered topologically (parents first);
    cycles, unknown parents, non-positive masses, and non-unit axes are
    rejected.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ModelError(f"malformed document: {e}") from None
    if not isinstance(document, dict):
        raise ModelError("document must be a JSON object")
    for key in ("bodies", "joints"):
        if key not in document or not isinstance(document[key], list):
            raise ModelError(f"document missing {key!r} list")

    gravity = tuple(float(g) for g in document.get("gravity", DEFAULT_GRAVITY))
    if len(gravity) != 3:
        raise ModelError("gravity must be a 3-vector")

    bodies = {}
    body_order = []
    for bd in document["bodies"]:
        b = _parse_body(bd)
        if b.name in bodies or b.name == "world":
            raise ModelError(f"duplicate body name {b.name!r}")
        bodies[b.name] = b
        body_order.append(b.name)

    joints_by_child = {}
    joint_names = set()
    for jd in document["joints"]:
        name, kind, parent, child, spec = _parse_joint(jd, bodies)
        if name in joint_names:
            raise ModelError(f"duplicate joint name {name!r}")
        joint_names.add(name)
        if child in joints_by_child:
            raise ModelError(f"body {child!r} has more than one parent joint")
        joints_by_child[child] = (name, kind, parent, spec)
    for name in body_order:
        if name not in joints_by_child:
            raise ModelError(f"body {name!r} is not connected to the tree")

    # Topological order (document order among ready bodies); a pass that
    # places nothing means a cycle.
    placed = {"world": -1}
    ordered = []
    remaining = list(body_order)
    while remaining:
        progressed = False
        still = []
        for name in remaining:
            parent = joints_by_child[name][2]
            if parent in placed:
                placed[name] = len(ordered)
                ordered.append(name)
                progressed = True
            else:
                still.append(name)
        if not progressed:
            raise ModelError(
                f"cycle or unreachable bodies detected: {', '.join(still)}"
            )
        remaining = still

    body_list = []
    joint_list = []
    for name in ordered:
        jname, kind, parent, spec = joints_by_child[name]
        b = bodies[name]
        body_list.append(b)
        j = Joint(jname, kind, placed[parent], len(body_list) - 1, **spec)
        joint_list.append(j)

    bindings = _parse_bindings(
        document.get("free_parameters", ()), body_list, joint_list
    )
    tree = KinematicTree(body_list, joint_list, gravity, bindings, document)
    tree.validate()
    return tree


def load_model_file(path) -> KinematicTree:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return load_model(text)


def _parse_body(bd) -> Body:
    try:
        name = str(bd["name"])
        mass = float(bd["mass"])
        com = tuple(float(x) for x in bd.get("com", (0.0, 0.0, 0.0)))
        ivals = [float(x) for x in bd.get("inertia", (0.0,) * 6)]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelError(f"malformed body entry: {e}") from None
    if mass <= 0.0:
        raise ModelError(f"body {name!r}: mass must be positive, got {mass}")
    if len(com) != 3 or len(ivals) != 6:
        raise ModelError(f"body {name!r}: com needs 3 and inertia 6 entries")
    ixx, iyy, izz, ixy, ixz, iyz = ivals
    inertia0 = (ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz)
    length = bd.get("length")
    if length is not None:
        length = float(length)
        if length <= 0.0:
            raise ModelError(f"body {name!r}: length must be positive")
    rod_axis = tuple(float(x) for x in bd.get("rod_axis", (0.0, 0.0, 1.0)))
    rod_axis = _unit_axis(rod_axis, f"body {name!r} rod_axis")
    cal = bd.get("com_along_length")
    if cal is not None:
        cal = float(cal)
    return Body(name, mass, com, inertia0, length, rod_axis, cal)


def _parse_joint(jd, bodies):
    try:
        name = str(jd["name"])
        kind = str(jd["type"])
        parent = str(jd["parent"])
        child = str(jd["child"])
    except KeyError as e:
        raise ModelError(f"malformed joint entry: missing {e}") from None
    if kind not in JOINT_KINDS:
        raise ModelError(f"joint {name!r}: unknown type {kind!r}")
    if child not in bodies:
        raise ModelError(f"joint {name!r}: unknown child body {child!r}")
    if parent != "world" and parent not in bodies:
        raise ModelError(f"joint {name!r}: unknown parent reference {parent!r}")
    if parent == child:
        raise ModelError(f"joint {name!r}: cycle (body is its own parent)")
    origin = jd.get("origin", {})
    xyz = tuple(float(x) for x in origin.get("xyz", (0.0, 0.0, 0.0)))
    rpy = tuple(float(x) for x in origin.get("rpy", (0.0, 0.0, 0.0)))
    axis = (0.0, 0.0, 1.0)
    if kind in (REVOLUTE, PRISMATIC):
        axis = tuple(float(x) for x in jd.get("axis", (0.0, 0.0, 1.0)))
        axis = _unit_axis(axis, f"joint {name!r} axis")
    oapl = bool(jd.get("origin_along_parent_length", False))
    if oapl:
        pb = bodies.get(parent)
        if pb is None or pb.length is None:
            raise ModelError(
                f"joint {name!r}: origin_along_parent_length needs a parent "
                "body with a length field"
            )
    spec = dict(
        axis=axis, origin_xyz=xyz, origin_rpy=rpy,
        origin_along_parent_length=oapl, actuated=bool(jd.get("actuated", False)),
    )
    return name, kind, parent, child, spec


def _unit_axis(axis, what):
    if len(axis) != 3:
        raise ModelError(f"{what}: need 3 components")
    n = math.sqrt(sum(x * x for x in axis))
    if abs(n - 1.0) > 1e-3:
        raise ModelError(f"{what}: not a unit vector (norm {n:.6g})")
    return tuple(x / n for x in axis)


def _parse_bindings(paths, bodies, joints):
    body_idx = {b.name: i for i, b in enumerate(bodies)}
    joint_idx = {j.name: i for i, j in enumerate(joints)}
    bindings = []
    for path in paths:
        parts = str(path).split("/")
        ok = False
        if len(parts) >= 3 and parts[0] == "bodies" and parts[1] in body_idx:
            i = body_idx[parts[1]]
            if len(parts) == 3 and parts[2] == "mass":
                bindings.append(Binding(path, "mass", i, 0, True))
                ok = True
            elif len(parts) == 3 and parts[2] == "length":
                if bodies[i].length is None:
                    raise ModelError(f"{path}: body has no length field")
                bindings.append(Binding(path, "length", i, 0, True))
                ok = True
            elif len(parts) == 4 and parts[2] == "com":
                if bodies[i].com_along_length is not None:
                    raise ModelError(
                        f"{path}: com is derived from length for this body"
                    )
                coord = _coord(parts[3], path)
                bindings.append(Binding(path, "com", i, coord, False))
                ok = True
        elif (
            len(parts) == 5
            and parts[0] == "joints"
            and parts[1] in joint_idx
            and parts[2] == "origin"
            and parts[3] == "xyz"
        ):
            i = joint_idx[parts[1]]
            if joints[i].origin_along_parent_length:
                raise ModelError(f"{path}: origin is derived from parent length")
            coord = _coord(parts[4], path)
            bindings.append(Binding(path, "joint_origin", i, coord, False))
            ok = True
        if not ok:
            raise ModelError(f"unknown free_parameters path {path!r}")
    return bindings


def _coord(token, path):
    try:
        coord = int(token)
    except ValueError:
        raise ModelError(f"{path}: bad coordinate index") from None
    if coord not in (0, 1, 2):
        raise ModelError(f"{path}: coordinate index out of range")
    return coord


def save_model(tree: KinematicTree) -> dict:
    """Serialize the tree (with its current parameter values) as a document."""
    bodies = []
    for b in tree.bodies:
        I = [value_of(x) for x in b.spatial.inertia]
        entry = {
            "name": b.name,
            "mass": value_of(b.mass),
            "com": [value_of(x) for x in b.com],
            "inertia": [I[0], I[4], I[8], I[1], I[2], I[5]],
        }
        if b.length is not None:
            entry["length"] = value_of(b.length)
            entry["rod_axis"] = list(b.rod_axis)
        if b.com_along_length is not None:
            entry["com_along_length"] = b.com_along_length
        bodies.append(entry)
    joints = []
    for j in tree.joints:
        entry = {
            "name": j.name,
            "type": j.kind,
            "parent": "world" if j.parent < 0 else tree.bodies[j.parent].name,
            "child": tree.bodies[j.child].name,
            "origin": {
                "xyz": [value_of(x) for x in j.origin_xyz],
                "rpy": [value_of(x) for x in j.origin_rpy],
            },
        }
        if j.kind in (REVOLUTE, PRISMATIC):
            entry["axis"] = list(j.axis)
        if j.actuated:
            entry["actuated"] = True
        if j.origin_along_parent_length:
            entry["origin_along_parent_length"] = True
        joints.append(entry)
    doc = {
        "gravity": list(tree.gravity),
        "bodies": bodies,
        "joints": joints,
        "free_parameters": [b.path for b in tree.bindings],
    }
    return doc


# -- Denavit-Hartenberg construction -------------------------------------------


class DHParams:
    """Per-joint (d, a, alpha); the rotation theta_i is the joint coordinate."""

    def __init__(self, d, a, alpha):
        self.d = list(d)
        self.a = list(a)
        self.alpha = list(alpha)
        if not (len(self.d) == len(self.a) == len(self.alpha)):
            raise ModelError("d, a, alpha must have equal length")
        if len(self.d) < 1:
            raise ModelError("need at least one joint")

    def __len__(self):
        return len(self.d)

    @staticmethod
    def from_vector(r):
        """Flat layout [d0, a0, alpha0, d1, a1, alpha1, ...]."""
        if len(r) % 3 != 0:
            raise ModelError("DH vector length must be a multiple of 3")
        return DHParams(r[0::3], r[1::3], r[2::3])

    def to_vector(self):
        out = []
        for d, a, al in zip(self.d, self.a, self.alpha):
            out.extend((d, a, al))
        return out


def from_dh(dh: DHParams) -> KinematicTree:
    """Serial arm realizing the standard DH convention.

    Joint i rotates about the z axis of frame i-1; the fixed part of DH row
    i (translate d along z, translate a along x, rotate alpha about x) sits
    *after* that rotation, so it becomes the parent-to-joint transform of
    row i+1, and a final fixed joint carries the last row out to the
    end-effector body.  The fixed part is encoded as origin xyz=(a, 0, d),
    rpy=(alpha, 0, 0), which realizes exactly TransZ(d) TransX(a) RotX(alpha).

    Accepts traced scalars in d/a/alpha, so designs can be optimized through
    the construction.  Bodies are unit point masses at each link end; the
    tree is meant for kinematics work, not dynamics.
    """
    n = len(dh)
    bodies = []
    joints = []
    for i in range(n):
        bodies.append(Body(f"link{i}", 1.0, com=(dh.a[i], 0.0, dh.d[i])))
        if i == 0:
            joints.append(Joint("joint0", REVOLUTE, -1, 0, axis=(0.0, 0.0, 1.0)))
        else:
            joints.append(
                Joint(
                    f"joint{i}", REVOLUTE, i - 1, i, axis=(0.0, 0.0, 1.0),
                    origin_xyz=(dh.a[i - 1], 0.0, dh.d[i - 1]),
                    origin_rpy=(dh.alpha[i - 1], 0.0, 0.0),
                )
            )
    bodies.append(Body("end_effector", 1.0))
    joints.append(
        Joint(
            "ee_fixed", FIXED, n - 1, n,
            origin_xyz=(dh.a[n - 1], 0.0, dh.d[n - 1]),
            origin_rpy=(dh.alpha[n - 1], 0.0, 0.0),
        )
    )
    return KinematicTree(bodies, joints)
