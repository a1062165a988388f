"""Joint trajectory files: a JSON header line, then one frame per line.

The header carries {"hand", "rate_hz", "dof"}; each following line is one
frame of ``dof`` decimal joint values (radians) separated by spaces. Decimal
text is written with full round-trip precision, so load(save(t)) is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fileio import atomic_write_text


class TrajectoryError(ValueError):
    """Trajectory file malformed or inconsistent with its header."""


@dataclass
class Trajectory:
    hand: str
    rate_hz: float
    frames: np.ndarray  # (n_frames, dof), radians

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise TrajectoryError("frames must be a (n, dof) array")
        if not self.rate_hz > 0:
            raise TrajectoryError("rate_hz must be > 0")

    @property
    def dof(self):
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


def save_trajectory(traj, path):
    header = json.dumps(
        {"hand": traj.hand, "rate_hz": traj.rate_hz, "dof": traj.dof},
        sort_keys=True,
        separators=(",", ":"),
    )
    lines = [header]
    for frame in traj.frames:
        lines.append(" ".join(repr(float(v)) for v in frame))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_trajectory(path):
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]
    if not lines:
        raise TrajectoryError(f"{path}: empty trajectory file")
    try:
        header = json.loads(lines[0])
        hand = str(header["hand"])
        rate_hz = float(header["rate_hz"])
        dof = int(header["dof"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise TrajectoryError(f"{path}: bad header line: {e}") from None
    frames = []
    for i, line in enumerate(lines[1:], start=2):
        values = line.split()
        if len(values) != dof:
            raise TrajectoryError(
                f"{path}:{i}: frame has {len(values)} values, header says {dof}"
            )
        try:
            frames.append([float(v) for v in values])
        except ValueError as e:
            raise TrajectoryError(f"{path}:{i}: {e}") from None
    return Trajectory(hand, rate_hz, np.array(frames).reshape(len(frames), dof))
