"""Shared fixtures: planar fixture hands, twin/quad hand sets, model doubles."""

import numpy as np
import pytest

from dexlatent.hands import parse_hand_spec
from dexlatent.model import LatentModel

HALF_PI = 1.5707963267948966


def planar_finger_doc(name="planar", link1=0.04, link2=0.03, tip=0.03):
    """Single 2-joint planar chain; the digit is registered as the thumb."""
    return {
        "name": name,
        "base_frame": {"rpy": [0, 0, 0], "xyz": [0, 0, 0]},
        "joints": [
            {"name": "j1", "parent": None, "xyz": [0, 0, 0], "rpy": [0, 0, 0],
             "axis": [0, 0, 1], "limits": [-3.2, 3.2]},
            {"name": "j2", "parent": "j1", "xyz": [link1, 0, 0], "rpy": [0, 0, 0],
             "axis": [0, 0, 1], "limits": [-3.2, 3.2]},
        ],
        "digits": {"thumb": {"joint": "j2", "offset": [tip, 0, 0]}},
    }


def _planar_digit(prefix, y, axis_z, joint_xyz, limits):
    """Chain of planar joints curling in the xy-plane toward the opposing side."""
    joints = []
    parent = None
    for k, dx in enumerate(joint_xyz):
        joints.append(
            {
                "name": f"{prefix}{k + 1}",
                "parent": parent,
                "xyz": [dx, y if parent is None else 0.0, 0.0],
                "rpy": [0, 0, 0],
                "axis": [0, 0, float(axis_z)],
                "limits": list(limits),
            }
        )
        parent = f"{prefix}{k + 1}"
    return joints


def twin_hand_doc(name, link1=0.04, link2=0.03, tip=0.03):
    """Two opposed planar 2-joint fingers (thumb and index) that can touch."""
    joints = _planar_digit("t", -0.02, +1, [0.0, link1], (0.0, HALF_PI))
    joints += _planar_digit("i", +0.02, -1, [0.0, link1], (0.0, HALF_PI))
    return {
        "name": name,
        "base_frame": {"rpy": [0, 0, 0], "xyz": [0, 0, 0]},
        "joints": joints,
        "digits": {
            "thumb": {"joint": "t2", "offset": [tip, 0, 0]},
            "index": {"joint": "i2", "offset": [tip, 0, 0]},
        },
    }


def quad_hand_docs():
    """Four heterogeneous planar hands with thumb/index/middle digits.

    qa: 2 joints per digit (6 dof); qb: like qa plus a mimic coupling on the
    index chain (5 dof); qc: 3 joints per digit (9 dof); qd: different link
    lengths and limits (6 dof).
    """
    def base(name, joints, digits):
        return {
            "name": name,
            "base_frame": {"rpy": [0, 0, 0], "xyz": [0, 0, 0]},
            "joints": joints,
            "digits": digits,
        }

    def digits(tj, ij, mj, tip=0.028):
        return {
            "thumb": {"joint": tj, "offset": [tip, 0, 0]},
            "index": {"joint": ij, "offset": [tip, 0, 0]},
            "middle": {"joint": mj, "offset": [tip, 0, 0]},
        }

    qa = base(
        "qa",
        _planar_digit("t", -0.030, +1, [0.0, 0.040], (0.0, HALF_PI))
        + _planar_digit("i", 0.020, -1, [0.0, 0.040], (0.0, HALF_PI))
        + _planar_digit("m", 0.045, -1, [0.0, 0.042], (0.0, HALF_PI)),
        digits("t2", "i2", "m2"),
    )

    qb_joints = (
        _planar_digit("t", -0.028, +1, [0.0, 0.038], (0.0, HALF_PI))
        + _planar_digit("i", 0.018, -1, [0.0, 0.036], (0.0, HALF_PI))
        + _planar_digit("m", 0.042, -1, [0.0, 0.040], (0.0, HALF_PI))
    )
    # index distal follows the proximal joint through a mimic coupling
    qb_joints[3]["mimic"] = {"source": "i1", "multiplier": 0.9, "offset": 0.0}
    qb_joints[3]["limits"] = [0.0, 1.5]
    qb = base("qb", qb_joints, digits("t2", "i2", "m2"))

    qc = base(
        "qc",
        _planar_digit("t", -0.032, +1, [0.0, 0.028, 0.024], (0.0, 1.2))
        + _planar_digit("i", 0.022, -1, [0.0, 0.028, 0.024], (0.0, 1.2))
        + _planar_digit("m", 0.048, -1, [0.0, 0.030, 0.025], (0.0, 1.2)),
        digits("t3", "i3", "m3", tip=0.022),
    )

    qd = base(
        "qd",
        _planar_digit("t", -0.024, +1, [0.0, 0.050], (0.0, 1.4))
        + _planar_digit("i", 0.016, -1, [0.0, 0.046], (0.0, 1.4))
        + _planar_digit("m", 0.038, -1, [0.0, 0.048], (0.0, 1.4)),
        digits("t2", "i2", "m2", tip=0.034),
    )
    return [qa, qb, qc, qd]


@pytest.fixture(scope="session")
def planar_finger():
    return parse_hand_spec(planar_finger_doc())


@pytest.fixture(scope="session")
def twin_specs():
    return [parse_hand_spec(twin_hand_doc("twin_a")), parse_hand_spec(twin_hand_doc("twin_b"))]


@pytest.fixture(scope="session")
def quad_specs():
    return [parse_hand_spec(doc) for doc in quad_hand_docs()]


def identity_model(specs, latent_dim=None):
    """Model whose codec is the identity on normalized joints (test double).

    Encoder emits mu = normalized pose (zero-padded to the latent size) and
    log-variance 0; decoder reads the pose back off the leading latent dims.
    """
    dim = latent_dim or max(s.actuated_dof for s in specs)
    model = LatentModel.initialize(specs, dim, (), seed=0)
    for spec in specs:
        head = model.heads[spec.name]
        d = spec.actuated_dof
        enc = np.zeros((d, 2 * dim))
        enc[np.arange(d), np.arange(d)] = 1.0
        head.encoder[0] = (enc, np.zeros(2 * dim))
        dec = np.zeros((dim, d))
        dec[np.arange(d), np.arange(d)] = 1.0
        head.decoder[0] = (dec, np.zeros(d))
    return model
