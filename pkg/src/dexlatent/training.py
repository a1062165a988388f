"""Self-supervised joint training of all hand heads.

Each step samples a fresh batch of uniform in-limit poses per hand, assembles
the full objective (reconstruction + retargeting + KL) in one graph, runs a
single backward pass, and applies one optimizer update to every head jointly.
No demonstrations or precomputed trajectories are involved. Single-threaded
and fully determined by (specs, config): the same seed reproduces the final
parameters bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import hands as hm
from .losses import LossWeights, PairSet, total_loss
from .model import LatentModel, load_checkpoint, save_checkpoint  # noqa: F401 (re-export)

_SAMPLING_STREAM = 0x5A3D


class TrainingDivergedError(RuntimeError):
    def __init__(self, step, term, value):
        super().__init__(
            f"training diverged at step {step}: {term} became {value!r}"
        )
        self.step = step
        self.term = term


@dataclass
class TrainConfig:
    steps: int = 20000
    batch_per_hand: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic snapshots
    latent_dim: int = 32
    hidden_sizes: tuple = (128, 64)

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError("steps must be > 0")
        if self.batch_per_hand <= 0:
            raise ValueError("batch_per_hand must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class TrainLog:
    history: list  # LossBreakdown per executed step
    wall_clock: float
    rng_digest: str

    def records(self):
        """Line-delimited record dicts: step plus the loss terms."""
        return [
            {
                "step": i,
                "recon": bd.recon,
                "retarget": bd.retarget,
                "kl": bd.kl,
                "total": bd.total,
            }
            for i, bd in enumerate(self.history)
        ]


class AdamOptimizer:
    """Adaptive-moment update with bias correction."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        """Update params in place from same-keyed gradient arrays."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for key, p in params.items():
            g = grads[key]
            if g.shape != p.shape:
                raise ValueError(
                    f"{key}: gradient shape {g.shape} != param shape {p.shape}"
                )
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            self.m[key] = b1 * self.m[key] + (1.0 - b1) * g
            self.v[key] = b2 * self.v[key] + (1.0 - b2) * g * g
            m_hat = self.m[key] / (1.0 - b1 ** self.t)
            v_hat = self.v[key] / (1.0 - b2 ** self.t)
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def train(specs, config, pairs=None, checkpoint_path=None):
    """Train all heads jointly; returns (model, TrainLog).

    With a single hand the retargeting term is inactive. If the total loss
    goes non-finite the run aborts with the offending step and term.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("train: need at least one hand spec")
    pairs = pairs or PairSet()
    model = LatentModel.initialize(
        specs, config.latent_dim, config.hidden_sizes, seed=config.seed
    )
    optimizer = AdamOptimizer(
        config.learning_rate, config.beta1, config.beta2, config.adam_eps
    )
    rng = np.random.default_rng(
        np.random.SeedSequence([int(config.seed), _SAMPLING_STREAM])
    )
    params_np = model.param_arrays()
    history = []
    started = time.perf_counter()
    for step in range(config.steps):
        batch = {
            s.name: hm.sample_pose_batch(s, rng, config.batch_per_hand) for s in specs
        }
        eps = {
            s.name: rng.standard_normal((config.batch_per_hand, config.latent_dim))
            for s in specs
        }
        tape = ad.Tape()
        params = model.param_tensors(tape)
        try:
            bd = total_loss(
                model, specs, batch, config.weights, pairs, params=params, eps=eps
            )
        except ad.DomainError as e:
            # runaway parameters overflow inside the graph before the loss
            # value itself can read as non-finite
            raise TrainingDivergedError(step, "forward pass", str(e)) from e
        for term in ("recon", "retarget", "kl", "total"):
            value = getattr(bd, term)
            if not math.isfinite(value):
                raise TrainingDivergedError(step, term, value)
        grads_by_leaf = tape.backward(bd.total_tensor)
        grads = {key: grads_by_leaf[leaf] for key, leaf in params.items()}
        optimizer.step(params_np, grads)
        bd.total_tensor = None  # drop the tape so memory stays bounded
        history.append(bd)
        if (
            checkpoint_path
            and config.checkpoint_every > 0
            and (step + 1) % config.checkpoint_every == 0
        ):
            save_checkpoint(model, checkpoint_path)
    log = TrainLog(
        history=history,
        wall_clock=time.perf_counter() - started,
        rng_digest=_rng_digest(config.seed, rng),
    )
    return model, log


def _rng_digest(seed, rng):
    state = json.dumps(
        {"seed": int(seed), "state": rng.bit_generator.state}, sort_keys=True, default=int
    )
    return hashlib.sha256(state.encode("utf-8")).hexdigest()
