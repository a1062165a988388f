"""Hand spec parsing, mimic expansion, forward kinematics, pose sampling."""

import json
import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from dexlatent import autodiff as ad
from dexlatent import hands as hm

from conftest import planar_finger_doc


def scipy_fk_oracle(spec, values):
    """Independent FK: explicit 4x4 homogeneous transforms via scipy rotations."""
    full = {}
    expanded = list(values)
    angles = {}
    k = 0
    for j in spec.joints:
        if j.mimic is None:
            angles[j.name] = expanded[k]
            k += 1
    for j in spec.joints:
        if j.mimic is not None:
            angles[j.name] = j.mimic.multiplier * angles[j.mimic.source] + j.mimic.offset
    base = np.eye(4)
    base[:3, :3] = Rotation.from_euler("xyz", spec.base_rpy).as_matrix()
    base[:3, 3] = spec.base_xyz
    for digit, frame in spec.digits.items():
        t = base.copy()
        for j in spec.chain(frame.joint):
            fixed = np.eye(4)
            fixed[:3, :3] = Rotation.from_euler("xyz", j.rpy).as_matrix()
            fixed[:3, 3] = j.xyz
            spin = np.eye(4)
            spin[:3, :3] = Rotation.from_rotvec(np.array(j.axis) * angles[j.name]).as_matrix()
            t = t @ fixed @ spin
        full[digit] = (t @ np.array([*frame.offset, 1.0]))[:3]
    return full


def random_chain_doc(rng, n_joints):
    joints = []
    parent = None
    for k in range(n_joints):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        joints.append(
            {
                "name": f"j{k}",
                "parent": parent,
                "xyz": rng.uniform(-0.05, 0.05, 3).tolist(),
                "rpy": rng.uniform(-1.0, 1.0, 3).tolist(),
                "axis": axis.tolist(),
                "limits": [-3.0, 3.0],
            }
        )
        parent = f"j{k}"
    return {
        "name": "chain",
        "base_frame": {
            "rpy": rng.uniform(-1.0, 1.0, 3).tolist(),
            "xyz": rng.uniform(-0.05, 0.05, 3).tolist(),
        },
        "joints": joints,
        "digits": {"thumb": {"joint": f"j{n_joints - 1}", "offset": rng.uniform(-0.03, 0.03, 3).tolist()}},
    }


class TestParsing:
    def test_minimal_planar_finger(self, planar_finger):
        assert planar_finger.actuated_dof == 2
        assert planar_finger.mimic_count == 0

    def test_single_mimic_adds_expanded_dim(self):
        doc = planar_finger_doc()
        doc["joints"][1]["mimic"] = {"source": "j1", "multiplier": 1.0, "offset": 0.0}
        spec = hm.parse_hand_spec(doc)
        assert spec.actuated_dof == 1
        assert len(spec.joints) == spec.actuated_dof + 1

    def test_ability_like_counts(self):
        spec = hm.load_example_hand("ability")
        assert len(spec.digits) == 5
        assert len(spec.joints) == 12
        assert spec.actuated_dof == 6
        assert spec.mimic_count == 6

    def test_parses_from_json_text(self):
        spec = hm.parse_hand_spec(json.dumps(planar_finger_doc()))
        assert spec.name == "planar"

    def test_cycle_error(self):
        doc = planar_finger_doc()
        doc["joints"][0]["parent"] = "j2"
        with pytest.raises(hm.JointTreeCycleError):
            hm.parse_hand_spec(doc)

    def test_unknown_mimic_source(self):
        doc = planar_finger_doc()
        doc["joints"][1]["mimic"] = {"source": "nope", "multiplier": 1.0, "offset": 0.0}
        with pytest.raises(hm.UnknownMimicSourceError):
            hm.parse_hand_spec(doc)

    def test_mimic_must_reference_earlier_actuated(self):
        doc = planar_finger_doc()
        # forward reference: j1 mimics j2
        doc["joints"][0]["mimic"] = {"source": "j2", "multiplier": 1.0, "offset": 0.0}
        with pytest.raises(hm.UnknownMimicSourceError):
            hm.parse_hand_spec(doc)

    def test_non_unit_axis(self):
        doc = planar_finger_doc()
        doc["joints"][0]["axis"] = [0, 0, 2]
        with pytest.raises(hm.NonUnitAxisError):
            hm.parse_hand_spec(doc)

    def test_inverted_limits(self):
        doc = planar_finger_doc()
        doc["joints"][0]["limits"] = [1.0, -1.0]
        with pytest.raises(hm.InvertedLimitsError):
            hm.parse_hand_spec(doc)

    def test_missing_thumb(self):
        doc = planar_finger_doc()
        doc["digits"] = {"index": doc["digits"]["thumb"]}
        with pytest.raises(hm.MissingThumbError):
            hm.parse_hand_spec(doc)

    def test_unknown_field_rejected(self):
        doc = planar_finger_doc()
        doc["joints"][0]["damping"] = 0.1
        with pytest.raises(hm.UnknownFieldError):
            hm.parse_hand_spec(doc)

    def test_mimic_range_violation(self):
        doc = planar_finger_doc()
        doc["joints"][1]["limits"] = [-0.5, 0.5]
        doc["joints"][1]["mimic"] = {"source": "j1", "multiplier": 1.0, "offset": 0.0}
        # j1 spans [-3.2, 3.2] which cannot fit in [-0.5, 0.5]
        with pytest.raises(hm.MimicRangeError):
            hm.parse_hand_spec(doc)


class TestMimicExpansion:
    def make(self, multiplier, offset):
        doc = planar_finger_doc()
        doc["joints"][1]["limits"] = [-8.0, 8.0]
        doc["joints"][1]["mimic"] = {
            "source": "j1", "multiplier": multiplier, "offset": offset,
        }
        return hm.parse_hand_spec(doc)

    def test_identity_mimic(self):
        spec = self.make(1.0, 0.0)
        out = hm.expand_mimic(hm.JointPose("planar", [0.5]), spec)
        assert np.array_equal(out, [0.5, 0.5])

    def test_affine_mimic(self):
        spec = self.make(2.0, 0.1)
        out = hm.expand_mimic(hm.JointPose("planar", [0.3]), spec)
        # oracle: 2 * 0.3 + 0.1 by hand
        assert out[1] == pytest.approx(0.7, abs=1e-15)

    def test_pass_through_without_mimic(self, planar_finger):
        values = np.array([0.2, -0.4])
        out = hm.expand_mimic(hm.JointPose("planar", values), planar_finger)
        assert np.array_equal(out, values)

    def test_expansion_is_linear_with_zero_offsets(self):
        spec = self.make(1.7, 0.0)
        q1, q2 = np.array([0.3]), np.array([-0.2])
        a, b = 0.6, -1.2
        lhs = hm.expand_mimic(hm.JointPose("planar", a * q1 + b * q2), spec)
        rhs = a * hm.expand_mimic(hm.JointPose("planar", q1), spec) + b * hm.expand_mimic(
            hm.JointPose("planar", q2), spec
        )
        assert np.allclose(lhs, rhs, atol=1e-15)


class TestForwardKinematics:
    def test_zero_pose_home_position(self, planar_finger):
        tips = hm.forward_kinematics(hm.JointPose("planar", [0.0, 0.0]), planar_finger)
        assert np.allclose(tips["thumb"], [0.07, 0.0, 0.0], atol=1e-15)

    def test_planar_quarter_turn(self, planar_finger):
        tips = hm.forward_kinematics(
            hm.JointPose("planar", [math.pi / 2, 0.0]), planar_finger
        )
        # oracle: both links rotated 90 degrees in the plane
        assert np.allclose(tips["thumb"], [0.0, 0.07, 0.0], atol=1e-12)

    def test_planar_bend_back(self, planar_finger):
        tips = hm.forward_kinematics(
            hm.JointPose("planar", [math.pi / 2, -math.pi / 2]), planar_finger
        )
        assert np.allclose(tips["thumb"], [0.03, 0.04, 0.0], atol=1e-12)

    def test_random_chains_match_homogeneous_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            doc = random_chain_doc(rng, int(rng.integers(1, 7)))
            spec = hm.parse_hand_spec(doc)
            q = hm.sample_pose(spec, rng)
            mine = hm.forward_kinematics(q, spec)
            oracle = scipy_fk_oracle(spec, q.values)
            for digit in mine:
                assert np.allclose(mine[digit], oracle[digit], atol=1e-9)

    def test_jacobian_matches_central_differences(self):
        rng = np.random.default_rng(7)
        doc = random_chain_doc(rng, 4)
        spec = hm.parse_hand_spec(doc)
        q0 = hm.sample_pose(spec, rng).values

        for comp in range(3):
            tape = ad.Tape()
            q = tape.leaf(q0, requires_grad=True)
            cols = [q[i] for i in range(len(q0))]
            tips = hm.fingertip_components(spec, hm.expand_mimic_entries(spec, cols))
            grads = tape.backward(tips["thumb"][comp])[q]
            h = 1e-6
            for i in range(len(q0)):
                bump = np.zeros_like(q0)
                bump[i] = h
                hi = hm.forward_kinematics(hm.JointPose(spec.name, q0 + bump), spec)
                lo = hm.forward_kinematics(hm.JointPose(spec.name, q0 - bump), spec)
                fd = (hi["thumb"][comp] - lo["thumb"][comp]) / (2 * h)
                assert abs(grads[i] - fd) / (1.0 + abs(fd)) < 1e-5

    def test_batch_matches_single(self, quad_specs):
        spec = quad_specs[0]
        rng = np.random.default_rng(1)
        q = hm.sample_pose_batch(spec, rng, 16)
        batched = hm.fingertip_positions_batch(spec, q)
        for row in range(16):
            single = hm.forward_kinematics(hm.JointPose(spec.name, q[row]), spec)
            for digit in single:
                assert np.allclose(batched[digit][row], single[digit], atol=1e-12)

    def test_mimic_hand_fk_matches_oracle(self):
        spec = hm.load_example_hand("ability")
        rng = np.random.default_rng(3)
        q = hm.sample_pose(spec, rng)
        mine = hm.forward_kinematics(q, spec)
        oracle = scipy_fk_oracle(spec, q.values)
        for digit in mine:
            assert np.allclose(mine[digit], oracle[digit], atol=1e-9)


class TestDisplacement:
    def test_self_displacement_zero(self, twin_specs):
        spec = twin_specs[0]
        pose = hm.JointPose(spec.name, np.array([0.3, 0.2, 0.1, 0.4]))
        assert np.array_equal(
            hm.fingertip_displacement(pose, spec, "thumb", "thumb"), np.zeros(3)
        )

    def test_componentwise_subtraction(self, twin_specs):
        spec = twin_specs[0]
        pose = hm.JointPose(spec.name, np.zeros(4))
        tips = hm.forward_kinematics(pose, spec)
        delta = hm.fingertip_displacement(pose, spec, "thumb", "index")
        assert np.allclose(delta, tips["thumb"] - tips["index"], atol=0)

    def test_antisymmetry(self, quad_specs):
        spec = quad_specs[2]
        rng = np.random.default_rng(9)
        pose = hm.sample_pose(spec, rng)
        dij = hm.fingertip_displacement(pose, spec, "thumb", "middle")
        dji = hm.fingertip_displacement(pose, spec, "middle", "thumb")
        assert np.array_equal(dij, -dji)

    def test_missing_digit_error(self):
        spec = hm.load_example_hand("paxini")
        pose = hm.JointPose(spec.name, spec.clamp(np.zeros(spec.actuated_dof)))
        with pytest.raises(hm.MissingDigitError):
            hm.fingertip_displacement(pose, spec, "thumb", "little")


class TestSampling:
    def test_degenerate_limits_give_zero(self):
        joints = [
            hm.JointDef("j1", None, (0, 0, 0), (0, 0, 0), (0, 0, 1), (0.0, 0.0)),
        ]
        digits = {"thumb": hm.FingertipFrame("j1", (0.01, 0, 0))}
        spec = hm.HandSpec("degenerate", joints, digits)  # not validated: lo == hi
        pose = hm.sample_pose(spec, np.random.default_rng(0))
        assert np.array_equal(pose.values, [0.0])

    def test_reproducible_under_fixed_seed(self, planar_finger):
        a = hm.sample_pose(planar_finger, np.random.default_rng(123)).values
        b = hm.sample_pose(planar_finger, np.random.default_rng(123)).values
        assert np.array_equal(a, b)

    def test_uniform_statistics(self):
        doc = planar_finger_doc()
        for j in doc["joints"]:
            j["limits"] = [-1.0, 2.0]
        spec = hm.parse_hand_spec(doc)
        q = hm.sample_pose_batch(spec, np.random.default_rng(5), 10_000)
        assert q.min() >= -1.0 and q.max() <= 2.0
        assert abs(q.mean() - 0.5) < 0.05

    def test_validate_pose_rejects_out_of_limits(self, twin_specs):
        with pytest.raises(hm.PoseError):
            twin_specs[0].validate_pose(np.array([0.1, 0.1, 0.1, 99.0]))
