"""Bundled model documents: pendula, cartpoles, serial chains, and a 4-DOF
arm.  Each builder returns a plain document dict for :func:`model.load_model`,
so scenario variants (true vs. deliberately-wrong parameter values) are just
different arguments.

Conventions used by all scenarios: gravity (0, 0, -9.81) with z up; pendulum
links hang along -z at q = 0; cartpole poles point *up* at q = 0 (the upright
goal) and hang at q = pi; carts slide along x and are the actuated joint.
"""

from __future__ import annotations

import math

from .model import DHParams, load_model

__all__ = [
    "point_pendulum_doc",
    "pendulum_chain_doc",
    "cart_doc",
    "cartpole_doc",
    "double_cartpole_doc",
    "serial_chain_doc",
    "floating_body_doc",
    "arm4_dh",
    "builtin_document",
    "builtin_names",
]


def point_pendulum_doc(length=1.0, mass=1.0):
    """One revolute joint, point mass at distance ``length``; q = 0 hangs down
    and positive q swings toward +x."""
    return {
        "gravity": [0.0, 0.0, -9.81],
        "bodies": [
            {
                "name": "bob",
                "mass": mass,
                "com": [0.0, 0.0, -length],
                "inertia": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            }
        ],
        "joints": [
            {
                "name": "pivot",
                "type": "revolute",
                "parent": "world",
                "child": "bob",
                "axis": [0.0, -1.0, 0.0],
                "actuated": True,
            }
        ],
        "free_parameters": [],
    }


def pendulum_chain_doc(lengths=(3.0, 3.0, 3.0), masses=None, free_lengths=True):
    """Compound pendulum of thin-rod links chained at their distal ends.

    Each link's com sits at half its length and its rotational inertia is
    the thin-rod formula, so the link lengths are the only shape parameters;
    they are exposed as the free parameters by default.
    """
    n = len(lengths)
    masses = list(masses) if masses is not None else [1.0] * n
    bodies = []
    joints = []
    for i, (l, m) in enumerate(zip(lengths, masses)):
        bodies.append(
            {
                "name": f"link{i}",
                "mass": m,
                "com": [0.0, 0.0, -l / 2.0],
                "inertia": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                "length": l,
                "rod_axis": [0.0, 0.0, -1.0],
                "com_along_length": 0.5,
            }
        )
        joint = {
            "name": f"hinge{i}",
            "type": "revolute",
            "parent": "world" if i == 0 else f"link{i-1}",
            "child": f"link{i}",
            "axis": [0.0, -1.0, 0.0],
        }
        if i > 0:
            joint["origin_along_parent_length"] = True
        joints.append(joint)
    doc = {"gravity": [0.0, 0.0, -9.81], "bodies": bodies, "joints": joints}
    doc["free_parameters"] = (
        [f"bodies/link{i}/length" for i in range(n)] if free_lengths else []
    )
    return doc


def cart_doc(mass=1.0):
    """A bare cart on an x rail: the double-integrator test system."""
    return {
        "gravity": [0.0, 0.0, -9.81],
        "bodies": [
            {
                "name": "cart",
                "mass": mass,
                "com": [0.0, 0.0, 0.0],
                "inertia": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            }
        ],
        "joints": [
            {
                "name": "slider",
                "type": "prismatic",
                "parent": "world",
                "child": "cart",
                "axis": [1.0, 0.0, 0.0],
                "actuated": True,
            }
        ],
        "free_parameters": [],
    }


def _cart_body(mass, com):
    return {
        "name": "cart",
        "mass": mass,
        "com": list(com),
        "inertia": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    }


_CARTPOLE_FREE_9 = [
    "bodies/cart/mass",
    "bodies/pole/mass",
    "bodies/pole/length",
    "bodies/cart/com/0",
    "bodies/cart/com/1",
    "bodies/cart/com/2",
    "bodies/pole/com/0",
    "bodies/pole/com/1",
    "bodies/pole/com/2",
]


def cartpole_doc(cart_mass=1.0, pole_mass=0.1, pole_length=1.0,
                 cart_com=(0.0, 0.0, 0.0), pole_com=(0.0, 0.0, 0.5)):
    """Cart on an x rail carrying one pole hinged about y; pole up at q = 0.

    The 9 free parameters are the two masses, the pole length, and both
    3-D com coordinates (masses/length log-space in theta).
    """
    return {
        "gravity": [0.0, 0.0, -9.81],
        "bodies": [
            _cart_body(cart_mass, cart_com),
            {
                "name": "pole",
                "mass": pole_mass,
                "com": list(pole_com),
                "inertia": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                "length": pole_length,
                "rod_axis": [0.0, 0.0, 1.0],
            },
        ],
        "joints": [
            {
                "name": "slider",
                "type": "prismatic",
                "parent": "world",
                "child": "cart",
                "axis": [1.0, 0.0, 0.0],
                "actuated": True,
            },
            {
                "name": "hinge",
                "type": "revolute",
                "parent": "cart",
                "child": "pole",
                "axis": [0.0, 1.0, 0.0],
            },
        ],
        "free_parameters": list(_CARTPOLE_FREE_9),
    }


_DOUBLE_CARTPOLE_FREE_14 = [
    "bodies/cart/mass",
    "bodies/pole1/mass",
    "bodies/pole2/mass",
    "bodies/pole1/length",
    "bodies/pole2/length",
    "bodies/cart/com/0",
    "bodies/cart/com/1",
    "bodies/cart/com/2",
    "bodies/pole1/com/0",
    "bodies/pole1/com/1",
    "bodies/pole1/com/2",
    "bodies/pole2/com/0",
    "bodies/pole2/com/1",
    "bodies/pole2/com/2",
]


def double_cartpole_doc(cart_mass=0.8, pole1_mass=0.35, pole2_mass=0.25,
                        pole1_length=0.7, pole2_length=0.5,
                        cart_com=(0.0, 0.0, 0.0),
                        pole1_com=(0.0, 0.0, 0.35), pole2_com=(0.0, 0.0, 0.25)):
    """Double inverted pendulum on a cart; both poles up at q = (0, 0).

    14 free parameters: three masses, two pole lengths, three 3-D coms.
    Pole 2 attaches at pole 1's distal end, so pole 1's length moves the
    second hinge.
    """
    return {
        "gravity": [0.0, 0.0, -9.81],
        "bodies": [
            _cart_body(cart_mass, cart_com),
            {
                "name": "pole1",
                "mass": pole1_mass,
                "com": list(pole1_com),
                "inertia": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                "length": pole1_length,
                "rod_axis": [0.0, 0.0, 1.0],
            },
            {
                "name": "pole2",
                "mass": pole2_mass,
                "com": list(pole2_com),
                "inertia": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                "length": pole2_length,
                "rod_axis": [0.0, 0.0, 1.0],
            },
        ],
        "joints": [
            {
                "name": "slider",
                "type": "prismatic",
                "parent": "world",
                "child": "cart",
                "axis": [1.0, 0.0, 0.0],
                "actuated": True,
            },
            {
                "name": "hinge1",
                "type": "revolute",
                "parent": "cart",
                "child": "pole1",
                "axis": [0.0, 1.0, 0.0],
            },
            {
                "name": "hinge2",
                "type": "revolute",
                "parent": "pole1",
                "child": "pole2",
                "axis": [0.0, 1.0, 0.0],
                "origin_along_parent_length": True,
            },
        ],
        "free_parameters": list(_DOUBLE_CARTPOLE_FREE_14),
    }


def with_parameters_set_to(doc, value):
    """Copy of a document with every free parameter's physical value set to
    ``value`` (the deliberately-wrong initial model of the control runs)."""
    import copy

    doc = copy.deepcopy(doc)
    bodies = {b["name"]: b for b in doc["bodies"]}
    joints = {j["name"]: j for j in doc["joints"]}
    for path in doc.get("free_parameters", ()):
        parts = path.split("/")
        if parts[0] == "bodies":
            b = bodies[parts[1]]
            if parts[2] in ("mass", "length"):
                b[parts[2]] = value
            elif parts[2] == "com":
                b["com"][int(parts[3])] = value
        elif parts[0] == "joints":
            joints[parts[1]]["origin"]["xyz"][int(parts[4])] = value
    return doc


def serial_chain_doc(n, link_length=0.4, link_mass=1.0):
    """n-link serial revolute chain with alternating hinge axes (for the
    O(n) scaling measurements)."""
    bodies = []
    joints = []
    for i in range(n):
        bodies.append(
            {
                "name": f"seg{i}",
                "mass": link_mass,
                "com": [0.0, 0.0, -link_length / 2.0],
                "inertia": [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                "length": link_length,
                "rod_axis": [0.0, 0.0, -1.0],
                "com_along_length": 0.5,
            }
        )
        joint = {
            "name": f"j{i}",
            "type": "revolute",
            "parent": "world" if i == 0 else f"seg{i-1}",
            "child": f"seg{i}",
            "axis": [0.0, -1.0, 0.0] if i % 2 == 0 else [1.0, 0.0, 0.0],
        }
        if i > 0:
            joint["origin_along_parent_length"] = True
        joints.append(joint)
    return {
        "gravity": [0.0, 0.0, -9.81],
        "bodies": bodies,
        "joints": joints,
        "free_parameters": [],
    }


def floating_body_doc(mass=2.0, com=(0.0, 0.0, 0.0),
                      inertia=(0.1, 0.2, 0.3, 0.0, 0.0, 0.0), gravity=(0, 0, 0)):
    """Single free-floating rigid body on a 7-DOF joint."""
    return {
        "gravity": list(gravity),
        "bodies": [
            {
                "name": "brick",
                "mass": mass,
                "com": list(com),
                "inertia": list(inertia),
            }
        ],
        "joints": [
            {
                "name": "free",
                "type": "floating",
                "parent": "world",
                "child": "brick",
            }
        ],
        "free_parameters": [],
    }


def arm4_dh() -> DHParams:
    """Reference 4-DOF arm used by the design scenario."""
    return DHParams(
        d=[0.30, 0.0, 0.0, 0.12],
        a=[0.15, 0.45, 0.35, 0.10],
        alpha=[math.pi / 2.0, 0.0, 0.0, -math.pi / 2.0],
    )


_BUILTINS = {
    "pendulum": lambda: point_pendulum_doc(),
    "pendulum3": lambda: pendulum_chain_doc((3.0, 3.0, 3.0)),
    "pendulum3-init": lambda: pendulum_chain_doc((1.0, 5.0, 0.5)),
    "cart": lambda: cart_doc(),
    "cartpole": lambda: cartpole_doc(),
    "cartpole-init2": lambda: with_parameters_set_to(cartpole_doc(), 2.0),
    "double-cartpole": lambda: double_cartpole_doc(),
    "double-cartpole-init2": lambda: with_parameters_set_to(
        double_cartpole_doc(), 2.0
    ),
    "chain16": lambda: serial_chain_doc(16),
    "floating-brick": lambda: floating_body_doc(),
}


def builtin_names():
    return sorted(_BUILTINS)


def builtin_document(name):
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise KeyError(
            f"unknown builtin model {name!r}; available: {', '.join(builtin_names())}"
        ) from None


def load_builtin(name):
    return load_model(builtin_document(name))
