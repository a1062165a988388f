"""Latent-space evaluation statistics.

Ten statistics over a trained model, all deterministic per seed and invariant
to the order hands are listed in:

* reconstruction: RMSE between input and reconstructed joint angles
  (radians) and RMSE of the fingertip displacement between the two (meters);
* cross-embodiment transfer: thumb-digit line direction error (degrees) and
  pinch distance error (meters), for pinch-heavy and for random pose sets,
  averaged over all ordered hand pairs;
* latent continuity: mean joint- and fingertip-space deviation after
  perturbing latent codes with isotropic Gaussian noise of a given standard
  deviation;
* interpolation smoothness: mean acceleration and jerk norms of fingertip
  trajectories decoded along linear latent paths (finite differences with
  unit step per interpolation index).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import hands as hm
from .losses import DEGENERATE_PINCH, PairSet

_TAG_RECON = 1
_TAG_PINCH = 2
_TAG_RANDOM = 3
_TAG_CONTINUITY = 4
_TAG_INTERP = 5


class PinchBudgetError(RuntimeError):
    """Candidate budget exhausted before enough pinch poses were collected."""


@dataclass
class MetricsConfig:
    samples: int = 512
    interp_steps: int = 32
    epsilon: float = 0.05
    seed: int = 0


@dataclass
class MetricsReport:
    recon_joint_rmse: float  # radians
    recon_tip_rmse: float  # meters
    pinch_dir_err: float  # degrees
    pinch_dist_err: float  # meters
    rand_dir_err: float  # degrees
    rand_dist_err: float  # meters
    continuity_joint: float  # radians
    continuity_tip: float  # meters
    interp_accel_mean: float  # meters per step^2
    interp_jerk_mean: float  # meters per step^3
    samples: int
    interp_steps: int
    epsilon: float
    seed: int


def _stream(seed, tag, *names):
    """Independent deterministic substream keyed by metric and hand names."""
    keys = [int(seed) & 0xFFFFFFFF, tag] + [zlib.crc32(n.encode("utf-8")) for n in names]
    return np.random.default_rng(np.random.SeedSequence(keys))


def _sorted_digits(spec):
    return sorted(spec.digits)


def _tip_stack(spec, poses):
    """(n, digits, 3) fingertip positions with digits in sorted order."""
    tips = hm.fingertip_positions_batch(spec, poses)
    return np.stack([tips[d] for d in _sorted_digits(spec)], axis=1)


# ---------------------------------------------------------------------------
# reconstruction

def recon_rmse(model, spec, n, seed):
    """(joint rmse, tip rmse) over n uniform poses, deterministic codec."""
    if n <= 0:
        raise ValueError("recon_rmse: n must be > 0")
    rng = _stream(seed, _TAG_RECON, spec.name)
    q = hm.sample_pose_batch(spec, rng, n)
    q_hat = model.decode_batch(spec.name, model.encode_batch(spec.name, q))
    joint = math.sqrt(float(np.mean((q_hat - q) ** 2)))
    delta = _tip_stack(spec, q_hat) - _tip_stack(spec, q)
    tip = math.sqrt(float(np.mean(np.sum(delta * delta, axis=2))))
    return joint, tip


# ---------------------------------------------------------------------------
# cross-embodiment transfer

def make_pinch_poses(spec, n, seed, keep_fraction=0.05, candidate_budget=None):
    """Uniform candidates filtered to the tightest pinches.

    Draws candidate poses uniformly within limits, scores each by its minimum
    thumb-digit fingertip distance, and keeps the lowest-scoring
    ``keep_fraction`` of every chunk until n poses are collected. Raises
    PinchBudgetError if the candidate budget runs out first.
    """
    digits = [d for d in _sorted_digits(spec) if d != "thumb"]
    if "thumb" not in spec.digits or not digits:
        raise ValueError(f"{spec.name}: pinch poses need a thumb and an opposing digit")
    dof = spec.actuated_dof
    if n == 0:
        return np.empty((0, dof))
    if candidate_budget is None:
        candidate_budget = max(80 * n, 8192)
    rng = _stream(seed, _TAG_PINCH, spec.name) if isinstance(seed, int) else seed
    chunk = 4096
    kept, drawn = [], 0
    collected = 0
    while collected < n:
        if drawn >= candidate_budget:
            raise PinchBudgetError(
                f"{spec.name}: collected {collected}/{n} pinch poses "
                f"from {drawn} candidates"
            )
        size = min(chunk, candidate_budget - drawn)
        q = hm.sample_pose_batch(spec, rng, size)
        drawn += size
        tips = hm.fingertip_positions_batch(spec, q)
        score = np.min(
            np.stack(
                [np.linalg.norm(tips["thumb"] - tips[d], axis=1) for d in digits]
            ),
            axis=0,
        )
        take = max(1, int(size * keep_fraction))
        order = np.argsort(score, kind="stable")[:take]
        kept.append(q[order])
        collected += len(order)
    return np.concatenate(kept)[:n]


def transfer_error(model, source_spec, target_spec, kind, n, seed, pairs=None):
    """(direction error degrees, distance error meters) for one hand pair.

    Encodes poses on the source hand, decodes on the target, and compares the
    thumb-digit lines of the raw source pose against the decoded target pose,
    averaged over effective digit pairs and samples. ``kind`` is "pinch" or
    "random".
    """
    if n <= 0:
        raise ValueError("transfer_error: n must be > 0")
    pairs = pairs or PairSet()
    eff = pairs.effective(source_spec, target_spec)
    if not eff:
        raise ValueError(
            f"no common digit pairs between {source_spec.name!r} and {target_spec.name!r}"
        )
    if kind == "pinch":
        q = make_pinch_poses(
            source_spec, n, _stream(seed, _TAG_PINCH, source_spec.name, target_spec.name)
        )
    elif kind == "random":
        rng = _stream(seed, _TAG_RANDOM, source_spec.name, target_spec.name)
        q = hm.sample_pose_batch(source_spec, rng, n)
    else:
        raise ValueError(f"unknown pose set kind {kind!r}")
    decoded = model.decode_batch(
        target_spec.name, model.encode_batch(source_spec.name, q)
    )
    src_tips = hm.fingertip_positions_batch(source_spec, q)
    tgt_tips = hm.fingertip_positions_batch(target_spec, decoded)
    angles, gaps = [], []
    for i, j in eff:
        ds = src_tips[i] - src_tips[j]
        dt = tgt_tips[i] - tgt_tips[j]
        ns = np.linalg.norm(ds, axis=1)
        nt = np.linalg.norm(dt, axis=1)
        good = (ns >= DEGENERATE_PINCH) & (nt >= DEGENERATE_PINCH)
        cos = np.ones(len(ns))
        denom = np.where(good, ns * nt, 1.0)
        cos = np.where(good, np.sum(ds * dt, axis=1) / denom, 1.0)
        angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
        gaps.append(np.abs(ns - nt))
    return float(np.mean(np.concatenate(angles))), float(np.mean(np.concatenate(gaps)))


# ---------------------------------------------------------------------------
# latent continuity and interpolation smoothness

def latent_continuity(model, spec, epsilon, n, seed):
    """Mean joint / fingertip deviation after Gaussian latent perturbation."""
    if n <= 0:
        raise ValueError("latent_continuity: n must be > 0")
    rng = _stream(seed, _TAG_CONTINUITY, spec.name)
    q = hm.sample_pose_batch(spec, rng, n)
    z = model.encode_batch(spec.name, q)
    noise = rng.standard_normal(z.shape)
    base = model.decode_batch(spec.name, z)
    moved = model.decode_batch(spec.name, z + epsilon * noise)
    joint_dev = float(np.mean(np.linalg.norm(moved - base, axis=1)))
    tip_delta = _tip_stack(spec, moved) - _tip_stack(spec, base)
    tip_dev = float(np.mean(np.linalg.norm(tip_delta, axis=2)))
    return joint_dev, tip_dev


def path_smoothness(positions):
    """(mean accel norm, mean jerk norm) of one or more sampled 3-d paths.

    ``positions``: (steps, 3) or (steps, m, 3) array sampled at unit step.
    Second and third finite differences; needs at least 4 steps.
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.shape[0] < 4:
        raise ValueError("path_smoothness: need at least 4 steps")
    accel = p[2:] - 2.0 * p[1:-1] + p[:-2]
    jerk = accel[1:] - accel[:-1]
    return (
        float(np.mean(np.linalg.norm(accel, axis=-1))),
        float(np.mean(np.linalg.norm(jerk, axis=-1))),
    )


def interpolation_smoothness(model, spec, n, steps, seed):
    """Fingertip accel/jerk along linear latent paths between pose pairs."""
    if steps < 4:
        raise ValueError("interpolation_smoothness: need at least 4 steps")
    if n <= 0:
        raise ValueError("interpolation_smoothness: n must be > 0")
    rng = _stream(seed, _TAG_INTERP, spec.name)
    q = hm.sample_pose_batch(spec, rng, 2 * n)
    za = model.encode_batch(spec.name, q[:n])
    zb = model.encode_batch(spec.name, q[n:])
    path = []
    for k in range(steps):
        tau = k / (steps - 1)
        decoded = model.decode_batch(spec.name, za + tau * (zb - za))
        path.append(_tip_stack(spec, decoded))  # (n, digits, 3)
    positions = np.stack(path)  # (steps, n, digits, 3)
    return path_smoothness(positions.reshape(steps, -1, 3))


# ---------------------------------------------------------------------------
# aggregate report

def full_report(model, specs, config=None):
    """All ten statistics, aggregated over hands and ordered hand pairs."""
    config = config or MetricsConfig()
    specs = sorted(specs, key=lambda s: s.name)
    n, seed = config.samples, config.seed

    joints, tips = [], []
    cont_j, cont_t = [], []
    accels, jerks = [], []
    for spec in specs:
        j, t = recon_rmse(model, spec, n, seed)
        joints.append(j)
        tips.append(t)
        cj, ct = latent_continuity(model, spec, config.epsilon, n, seed)
        cont_j.append(cj)
        cont_t.append(ct)
        a, jk = interpolation_smoothness(model, spec, n, config.interp_steps, seed)
        accels.append(a)
        jerks.append(jk)

    p_dir, p_dist, r_dir, r_dist = [], [], [], []
    for src in specs:
        for tgt in specs:
            if src.name == tgt.name:
                continue
            d, g = transfer_error(model, src, tgt, "pinch", n, seed)
            p_dir.append(d)
            p_dist.append(g)
            d, g = transfer_error(model, src, tgt, "random", n, seed)
            r_dir.append(d)
            r_dist.append(g)
    if not p_dir:  # single hand: transfer degenerates to self-consistency
        p_dir = p_dist = r_dir = r_dist = [0.0]

    return MetricsReport(
        recon_joint_rmse=float(np.mean(joints)),
        recon_tip_rmse=float(np.mean(tips)),
        pinch_dir_err=float(np.mean(p_dir)),
        pinch_dist_err=float(np.mean(p_dist)),
        rand_dir_err=float(np.mean(r_dir)),
        rand_dist_err=float(np.mean(r_dist)),
        continuity_joint=float(np.mean(cont_j)),
        continuity_tip=float(np.mean(cont_t)),
        interp_accel_mean=float(np.mean(accels)),
        interp_jerk_mean=float(np.mean(jerks)),
        samples=n,
        interp_steps=config.interp_steps,
        epsilon=config.epsilon,
        seed=seed,
    )


_METRIC_KEYS = (
    "recon_joint_rmse",
    "recon_tip_rmse",
    "pinch_dir_err",
    "pinch_dist_err",
    "rand_dir_err",
    "rand_dist_err",
    "continuity_joint",
    "continuity_tip",
    "interp_accel_mean",
    "interp_jerk_mean",
)


def report_records(report):
    """Ordered (key, value) pairs: metrics first, then run parameters."""
    rows = [(k, getattr(report, k)) for k in _METRIC_KEYS]
    rows += [
        ("samples", report.samples),
        ("interp_steps", report.interp_steps),
        ("epsilon", report.epsilon),
        ("seed", report.seed),
    ]
    return rows


def report_text(report):
    """Human-readable report grouped like the metric families above."""
    lines = [
        "latent space evaluation report",
        f"seed {report.seed} | samples per metric {report.samples} | "
        f"interpolation steps {report.interp_steps}",
        "",
        "reconstruction",
        f"  joint rmse (rad):             {report.recon_joint_rmse:.6f}",
        f"  fingertip rmse (m):           {report.recon_tip_rmse:.6f}",
        "cross-embodiment transfer",
        f"  pinch direction error (deg):  {report.pinch_dir_err:.6f}",
        f"  pinch distance error (m):     {report.pinch_dist_err:.6f}",
        f"  random direction error (deg): {report.rand_dir_err:.6f}",
        f"  random distance error (m):    {report.rand_dist_err:.6f}",
        f"latent continuity (epsilon = {report.epsilon:g})",
        f"  joint deviation (rad):        {report.continuity_joint:.6f}",
        f"  fingertip deviation (m):      {report.continuity_tip:.6f}",
        "interpolation smoothness",
        f"  accel mean (m/step^2):        {report.interp_accel_mean:.6f}",
        f"  jerk mean (m/step^3):         {report.interp_jerk_mean:.6f}",
    ]
    return "\n".join(lines) + "\n"
