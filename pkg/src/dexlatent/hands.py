"""Hand kinematic descriptions and differentiable forward kinematics.

A hand is described by a JSON document (see ``parse_hand_spec``) giving a
tree of revolute joints, optional mimic couplings (joint angle as an affine
function of an actuated joint), per-digit fingertip frames, and a base
transform placing the hand root in the canonical palm frame. The canonical
frame convention is palm normal +z, finger extension +x, thumb side +y;
cross-hand geometric comparisons are only meaningful because every hand maps
into this shared frame.

Forward kinematics composes, per joint, a fixed origin transform and a
rotation about the joint axis (Rodrigues form). The math runs over the
dispatch ops in :mod:`dexlatent.autodiff`, so angle inputs may be plain
floats, batched numpy arrays, or taped Tensors; gradients flow through the
whole chain in the Tensor case.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

CANONICAL_DIGITS = ("thumb", "index", "middle", "ring", "little")

_AXIS_TOL = 1e-9


class HandSpecError(ValueError):
    """Base class for hand description problems."""


class SchemaError(HandSpecError):
    """Document does not match the hand-spec schema."""


class UnknownFieldError(SchemaError):
    """Document contains a field the schema does not define."""


class JointTreeCycleError(HandSpecError):
    """Joint parent references do not form a tree."""


class UnknownMimicSourceError(HandSpecError):
    """Mimic references a joint that is not an earlier actuated joint."""


class NonUnitAxisError(HandSpecError):
    """Joint axis is not a unit vector."""


class InvertedLimitsError(HandSpecError):
    """Joint limits have lo >= hi."""


class MimicRangeError(HandSpecError):
    """Mimic output can leave its own limits while the source is in-limits."""


class MissingThumbError(HandSpecError):
    """Every hand must define a thumb digit."""


class MissingDigitError(HandSpecError):
    """Requested digit does not exist on this hand."""


class PoseError(ValueError):
    """Joint pose has the wrong dimension or violates limits."""


@dataclass(frozen=True)
class MimicCoupling:
    source: str
    multiplier: float
    offset: float


@dataclass(frozen=True)
class JointDef:
    """One revolute joint: fixed origin transform plus rotation about axis."""

    name: str
    parent: str | None  # None = attached to the hand root
    xyz: tuple[float, float, float]  # origin translation, meters
    rpy: tuple[float, float, float]  # origin rotation, radians (roll pitch yaw)
    axis: tuple[float, float, float]
    limits: tuple[float, float]  # radians
    mimic: MimicCoupling | None = None

    @property
    def actuated(self):
        return self.mimic is None


@dataclass(frozen=True)
class FingertipFrame:
    joint: str  # joint whose frame carries the fingertip
    offset: tuple[float, float, float]  # meters, in that joint's frame


@dataclass
class JointPose:
    """Actuated joint values (radians) for one hand."""

    hand: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)


def rpy_matrix(roll, pitch, yaw):
    """Fixed-axis XYZ rotation: Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def _skew(v):
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


class HandSpec:
    """Validated kinematic description of one hand.

    Construction resolves the joint tree (raising JointTreeCycleError if the
    parent references loop) and precomputes constant per-joint transforms.
    ``validate()`` checks the remaining invariants; ``parse_hand_spec`` always
    calls it. Instances are immutable by convention and safe to share.
    """

    def __init__(self, name, joints, digits, base_rpy=(0.0, 0.0, 0.0), base_xyz=(0.0, 0.0, 0.0)):
        self.name = name
        self.joints = tuple(joints)
        self.digits = dict(digits)
        self.base_rpy = tuple(float(v) for v in base_rpy)
        self.base_xyz = tuple(float(v) for v in base_xyz)

        self._index = {}
        for j in self.joints:
            if j.name in self._index:
                raise SchemaError(f"{name}: duplicate joint name {j.name!r}")
            self._index[j.name] = j
        self.actuated_names = tuple(j.name for j in self.joints if j.actuated)
        self._actuated_pos = {n: i for i, n in enumerate(self.actuated_names)}

        self._chains = {}  # joint name -> tuple of JointDef from root down
        for j in self.joints:
            chain, seen, cur = [], set(), j
            while cur is not None:
                if cur.name in seen:
                    raise JointTreeCycleError(
                        f"{name}: joint tree cycle through {cur.name!r}"
                    )
                seen.add(cur.name)
                chain.append(cur)
                if cur.parent is None:
                    cur = None
                elif cur.parent in self._index:
                    cur = self._index[cur.parent]
                else:
                    raise SchemaError(
                        f"{name}: joint {cur.name!r} has unknown parent {cur.parent!r}"
                    )
            self._chains[j.name] = tuple(reversed(chain))

        self.base_rotation = rpy_matrix(*self.base_rpy)
        self.base_translation = np.asarray(self.base_xyz, dtype=np.float64)
        # Rodrigues split R(theta) = A cos(theta) + B sin(theta) + C per joint
        self._rot_coeffs = {}
        for j in self.joints:
            k = _skew(np.asarray(j.axis, dtype=np.float64))
            k2 = k @ k
            self._rot_coeffs[j.name] = (-k2, k, np.eye(3) + k2)
        self._origin = {
            j.name: (rpy_matrix(*j.rpy), np.asarray(j.xyz, dtype=np.float64))
            for j in self.joints
        }

    # -- basic shape -------------------------------------------------------

    @property
    def actuated_dof(self):
        return len(self.actuated_names)

    @property
    def mimic_count(self):
        return len(self.joints) - self.actuated_dof

    @property
    def actuated_limits(self):
        """(dof, 2) array of [lo, hi] per actuated joint."""
        return np.array([self._index[n].limits for n in self.actuated_names])

    def actuated_index(self, joint_name):
        return self._actuated_pos[joint_name]

    def chain(self, joint_name):
        return self._chains[joint_name]

    def clamp(self, values):
        lim = self.actuated_limits
        return np.clip(np.asarray(values, dtype=np.float64), lim[:, 0], lim[:, 1])

    def validate_pose(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.actuated_dof,):
            raise PoseError(
                f"{self.name}: pose has shape {values.shape}, expected ({self.actuated_dof},)"
            )
        lim = self.actuated_limits
        if np.any(values < lim[:, 0]) or np.any(values > lim[:, 1]):
            raise PoseError(f"{self.name}: pose violates joint limits")
        return values

    # -- invariants --------------------------------------------------------

    def validate(self):
        for j in self.joints:
            norm = math.sqrt(sum(a * a for a in j.axis))
            if abs(norm - 1.0) > _AXIS_TOL:
                raise NonUnitAxisError(
                    f"{self.name}: joint {j.name!r} axis has norm {norm:.12f}"
                )
            lo, hi = j.limits
            if not lo < hi:
                raise InvertedLimitsError(
                    f"{self.name}: joint {j.name!r} limits [{lo}, {hi}] need lo < hi"
                )
        order = {j.name: i for i, j in enumerate(self.joints)}
        for i, j in enumerate(self.joints):
            if j.mimic is None:
                continue
            src = self._index.get(j.mimic.source)
            if src is None or not src.actuated or order[src.name] >= i:
                raise UnknownMimicSourceError(
                    f"{self.name}: mimic joint {j.name!r} must reference an "
                    f"earlier actuated joint, got {j.mimic.source!r}"
                )
            # interval arithmetic: image of source limits must fit in own limits
            ends = (
                j.mimic.multiplier * src.limits[0] + j.mimic.offset,
                j.mimic.multiplier * src.limits[1] + j.mimic.offset,
            )
            if min(ends) < j.limits[0] - 1e-9 or max(ends) > j.limits[1] + 1e-9:
                raise MimicRangeError(
                    f"{self.name}: mimic joint {j.name!r} range "
                    f"[{min(ends):.6f}, {max(ends):.6f}] leaves limits {j.limits}"
                )
        if "thumb" not in self.digits:
            raise MissingThumbError(f"{self.name}: no thumb digit defined")
        for digit, frame in self.digits.items():
            if digit not in CANONICAL_DIGITS:
                raise SchemaError(f"{self.name}: unknown digit name {digit!r}")
            if frame.joint not in self._index:
                raise SchemaError(
                    f"{self.name}: digit {digit!r} attached to unknown joint {frame.joint!r}"
                )
        return self


# ---------------------------------------------------------------------------
# parsing

def _require(mapping, fields, optional=(), where=""):
    unknown = set(mapping) - set(fields) - set(optional)
    if unknown:
        raise UnknownFieldError(f"{where}: unknown fields {sorted(unknown)}")
    missing = [f for f in fields if f not in mapping]
    if missing:
        raise SchemaError(f"{where}: missing fields {missing}")


def _vec3(value, where):
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise SchemaError(f"{where}: expected a 3-vector, got {value!r}")
    return tuple(float(v) for v in value)


def parse_hand_spec(document):
    """Parse and validate a hand description.

    ``document`` is a JSON string or an already-decoded dict with schema::

        {"name": str,
         "base_frame": {"rpy": [r, p, y], "xyz": [x, y, z]},
         "joints": [{"name": str, "parent": str | null,
                     "xyz": [3], "rpy": [3], "axis": [3],
                     "limits": [lo, hi],
                     "mimic": {"source": str, "multiplier": f, "offset": f}?}],
         "digits": {"thumb": {"joint": str, "offset": [3]}, ...}}

    Lengths are meters, angles radians. Unknown fields are rejected.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise SchemaError(f"hand spec is not valid JSON: {e}") from None
    if not isinstance(document, dict):
        raise SchemaError("hand spec must be a JSON object")
    _require(document, ["name", "base_frame", "joints", "digits"], where="hand spec")
    name = str(document["name"])

    base = document["base_frame"]
    _require(base, ["rpy", "xyz"], where=f"{name}.base_frame")
    base_rpy = _vec3(base["rpy"], f"{name}.base_frame.rpy")
    base_xyz = _vec3(base["xyz"], f"{name}.base_frame.xyz")

    joints = []
    if not isinstance(document["joints"], list) or not document["joints"]:
        raise SchemaError(f"{name}: joints must be a non-empty list")
    for entry in document["joints"]:
        where = f"{name}.joints[{entry.get('name', '?')}]"
        _require(entry, ["name", "parent", "xyz", "rpy", "axis", "limits"], ["mimic"], where)
        limits = entry["limits"]
        if not isinstance(limits, (list, tuple)) or len(limits) != 2:
            raise SchemaError(f"{where}: limits must be [lo, hi]")
        mimic = None
        if "mimic" in entry and entry["mimic"] is not None:
            m = entry["mimic"]
            _require(m, ["source", "multiplier", "offset"], where=f"{where}.mimic")
            mimic = MimicCoupling(str(m["source"]), float(m["multiplier"]), float(m["offset"]))
        parent = entry["parent"]
        if parent is not None:
            parent = str(parent)
        joints.append(
            JointDef(
                name=str(entry["name"]),
                parent=parent,
                xyz=_vec3(entry["xyz"], f"{where}.xyz"),
                rpy=_vec3(entry["rpy"], f"{where}.rpy"),
                axis=_vec3(entry["axis"], f"{where}.axis"),
                limits=(float(limits[0]), float(limits[1])),
                mimic=mimic,
            )
        )

    digits = {}
    if not isinstance(document["digits"], dict):
        raise SchemaError(f"{name}: digits must be an object")
    for digit, entry in document["digits"].items():
        _require(entry, ["joint", "offset"], where=f"{name}.digits[{digit}]")
        digits[digit] = FingertipFrame(
            str(entry["joint"]), _vec3(entry["offset"], f"{name}.digits[{digit}].offset")
        )

    return HandSpec(name, joints, digits, base_rpy, base_xyz).validate()


def load_hand_spec(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_hand_spec(f.read())


# ---------------------------------------------------------------------------
# entry arithmetic: values are float constants, (B,) arrays, or Tensors.
# Constant zeros/ones fold away so axis-aligned chains stay small on tape.

def _is_const(x):
    return isinstance(x, (int, float, np.floating))


def _emul(a, b):
    if _is_const(a):
        if a == 0.0:
            return 0.0
        if _is_const(b):
            return float(a) * float(b)
        if a == 1.0:
            return b
    if _is_const(b):
        if b == 0.0:
            return 0.0
        if b == 1.0:
            return a
    return ad.mul(a, b)


def _eadd(a, b):
    if _is_const(a):
        if _is_const(b):
            return float(a) + float(b)
        if a == 0.0:
            return b
    if _is_const(b) and b == 0.0:
        return a
    return ad.add(a, b)


def _mat_mul(m, n):
    return [
        [
            _eadd(_eadd(_emul(m[i][0], n[0][j]), _emul(m[i][1], n[1][j])), _emul(m[i][2], n[2][j]))
            for j in range(3)
        ]
        for i in range(3)
    ]


def _mat_vec(m, v):
    return [
        _eadd(_eadd(_emul(m[i][0], v[0]), _emul(m[i][1], v[1])), _emul(m[i][2], v[2]))
        for i in range(3)
    ]


def _vec_add(u, v):
    return [_eadd(u[i], v[i]) for i in range(3)]


def _const_mat(arr):
    return [[float(arr[i, j]) for j in range(3)] for i in range(3)]


def expand_mimic_entries(spec, actuated):
    """Expand actuated entries to all joints; mimic = multiplier * src + offset."""
    if len(actuated) != spec.actuated_dof:
        raise PoseError(
            f"{spec.name}: got {len(actuated)} actuated values, expected {spec.actuated_dof}"
        )
    out = []
    for j in spec.joints:
        if j.mimic is None:
            out.append(actuated[spec.actuated_index(j.name)])
        else:
            src = actuated[spec.actuated_index(j.mimic.source)]
            out.append(_eadd(_emul(j.mimic.multiplier, src), j.mimic.offset))
    return out


def fingertip_components(spec, joint_angles):
    """Fingertip positions for every digit from per-joint angle entries.

    ``joint_angles`` holds one entry per joint in spec order (mimic already
    expanded). Returns {digit: [x, y, z]} with entries of the same kind as
    the inputs. This is the differentiable core of forward kinematics.
    """
    angle_by_joint = {j.name: joint_angles[i] for i, j in enumerate(spec.joints)}
    out = {}
    for digit, frame in spec.digits.items():
        rot = _const_mat(spec.base_rotation)
        pos = [float(v) for v in spec.base_translation]
        for j in spec.chain(frame.joint):
            o_rot, o_xyz = spec._origin[j.name]
            pos = _vec_add(pos, _mat_vec(rot, [float(v) for v in o_xyz]))
            rot = _mat_mul(rot, _const_mat(o_rot))
            theta = angle_by_joint[j.name]
            if _is_const(theta):
                c, s = math.cos(theta), math.sin(theta)
            else:
                c, s = ad.cos(theta), ad.sin(theta)
            ca, sb, cc = spec._rot_coeffs[j.name]
            joint_rot = [
                [
                    _eadd(
                        _eadd(_emul(float(ca[i, k]), c), _emul(float(sb[i, k]), s)),
                        float(cc[i, k]),
                    )
                    for k in range(3)
                ]
                for i in range(3)
            ]
            rot = _mat_mul(rot, joint_rot)
        out[digit] = _vec_add(pos, _mat_vec(rot, [float(v) for v in frame.offset]))
    return out


# ---------------------------------------------------------------------------
# public kinematics API

def expand_mimic(pose, spec):
    """Full joint vector (radians, all joints) from an actuated pose."""
    values = np.asarray(pose.values, dtype=np.float64)
    if values.shape != (spec.actuated_dof,):
        raise PoseError(
            f"{spec.name}: pose has shape {values.shape}, expected ({spec.actuated_dof},)"
        )
    return np.array(
        [float(e) for e in expand_mimic_entries(spec, [float(v) for v in values])]
    )


def forward_kinematics(pose, spec):
    """Map a pose to fingertip positions, meters in the canonical palm frame."""
    values = spec.validate_pose(pose.values)
    full = expand_mimic_entries(spec, [float(v) for v in values])
    comps = fingertip_components(spec, full)
    return {d: np.array([float(c) for c in xyz]) for d, xyz in comps.items()}


def fingertip_positions_batch(spec, poses):
    """Vectorized FK for an (n, dof) array of in-limit poses.

    Returns {digit: (n, 3) array}. No gradients; plain numpy throughout.
    """
    q = np.asarray(poses, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != spec.actuated_dof:
        raise PoseError(
            f"{spec.name}: batch has shape {q.shape}, expected (n, {spec.actuated_dof})"
        )
    n = q.shape[0]
    cols = [q[:, i] for i in range(spec.actuated_dof)]
    comps = fingertip_components(spec, expand_mimic_entries(spec, cols))
    out = {}
    for digit, xyz in comps.items():
        stacked = [
            np.full(n, float(c)) if _is_const(c) else np.asarray(c) for c in xyz
        ]
        out[digit] = np.stack(stacked, axis=1)
    return out


def fingertip_displacement(pose, spec, digit_i, digit_j):
    """Vector from fingertip j to fingertip i (p_i - p_j), meters."""
    for d in (digit_i, digit_j):
        if d not in spec.digits:
            raise MissingDigitError(f"{spec.name}: no digit {d!r}")
    tips = forward_kinematics(pose, spec)
    return tips[digit_i] - tips[digit_j]


def sample_pose(spec, rng):
    """Uniform actuated pose within the joint limits."""
    lim = spec.actuated_limits
    return JointPose(spec.name, rng.uniform(lim[:, 0], lim[:, 1]))


def sample_pose_batch(spec, rng, n):
    """(n, dof) array of uniform in-limit poses; rows are samples."""
    lim = spec.actuated_limits
    return rng.uniform(lim[:, 0], lim[:, 1], size=(n, spec.actuated_dof))


# ---------------------------------------------------------------------------
# packaged example hands (approximate geometry, real DoF/mimic structure)

def example_hand_names():
    """Names of the hand specs shipped with the package."""
    from importlib import resources

    root = resources.files("dexlatent").joinpath("data/hands")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_example_hand(name):
    """Load a packaged example hand spec by name (see example_hand_names)."""
    from importlib import resources

    path = resources.files("dexlatent").joinpath("data/hands", f"{name}.json")
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SchemaError(
            f"no packaged hand {name!r}; available: {example_hand_names()}"
        ) from None
    return parse_hand_spec(text)
