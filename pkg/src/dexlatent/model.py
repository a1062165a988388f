"""Per-hand encoder/decoder heads over a shared Gaussian latent space.

Each hand gets a small MLP encoder (joint vector, scaled to [-1, 1] by its
joint limits, to posterior mean and log-variance) and a decoder (latent back
to the joint vector, rescaled and clamped to limits). All heads share one
latent dimension; retargeting is encode-on-source, decode-on-target.

The forward math runs over :mod:`dexlatent.autodiff` dispatch ops so the same
code serves plain-numpy inference and taped training (pass ``params`` with
Tensor leaves to substitute weights).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .fileio import atomic_write_text
from .hands import JointPose

CHECKPOINT_VERSION = 1
WEIGHT_ENCODING = "base64/little-endian-float64"


class UnknownHandError(KeyError):
    """Hand has no encoder/decoder head in the model."""


class CheckpointError(ValueError):
    """Checkpoint file is malformed or inconsistent."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format_version is not supported."""


@dataclass
class LatentCode:
    """One latent embedding plus the Gaussian posterior it came from."""

    z: np.ndarray
    mu: np.ndarray
    log_var: np.ndarray

    @property
    def sigma(self):
        return np.exp(0.5 * self.log_var)


@dataclass
class HandHead:
    """Parameter stack for one hand. Layers are (weight (in, out), bias (out,))."""

    encoder: list
    decoder: list
    limits: np.ndarray  # (dof, 2), used to scale joints to [-1, 1]

    @property
    def dof(self):
        return self.limits.shape[0]


def mlp_forward(layers, x):
    """tanh-hidden MLP; final layer linear. Works on ndarray or Tensor x."""
    h = x
    for weight, bias in layers[:-1]:
        h = ad.tanh(ad.add(ad.matmul(h, weight), bias))
    weight, bias = layers[-1]
    return ad.add(ad.matmul(h, weight), bias)


def param_key(hand, which, index, kind):
    return f"{hand}/{which}/{index}/{kind}"


class LatentModel:
    """Shared latent space with per-hand heads.

    Immutable during inference; training manipulates the parameter arrays via
    ``param_arrays()`` (the live ndarrays) or substitutes taped Tensors via
    the ``params`` argument of the forward methods.
    """

    def __init__(self, latent_dim, hidden_sizes, heads):
        self.latent_dim = int(latent_dim)
        self.hidden_sizes = [int(h) for h in hidden_sizes]
        self.heads = dict(heads)
        for name, head in self.heads.items():
            if head.encoder[-1][1].shape[0] != 2 * self.latent_dim:
                raise ValueError(f"head {name}: encoder must emit 2*latent_dim values")
            if head.decoder[-1][1].shape[0] != head.dof:
                raise ValueError(f"head {name}: decoder must emit dof values")

    # -- construction --------------------------------------------------------

    @classmethod
    def initialize(cls, specs, latent_dim=32, hidden_sizes=(128, 64), seed=0):
        """Fresh heads for the given hand specs.

        Weights are uniform with fan-in scaling, biases zero; the draw order
        is fixed (hands in given order, encoder then decoder, layer by layer)
        so a seed fully determines the parameters.
        """
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1217]))
        heads = {}
        for spec in specs:
            dof = spec.actuated_dof
            enc_dims = [dof, *hidden_sizes, 2 * latent_dim]
            dec_dims = [latent_dim, *reversed(list(hidden_sizes)), dof]
            heads[spec.name] = HandHead(
                encoder=_init_layers(enc_dims, rng),
                decoder=_init_layers(dec_dims, rng),
                limits=spec.actuated_limits,
            )
        return cls(latent_dim, hidden_sizes, heads)

    def hand_names(self):
        return list(self.heads)

    def head(self, hand):
        try:
            return self.heads[hand]
        except KeyError:
            raise UnknownHandError(f"no head for hand {hand!r}") from None

    def parameter_count(self):
        return sum(w.size + b.size for h in self.heads.values() for w, b in h.encoder + h.decoder)

    def param_arrays(self):
        """Ordered name -> live ndarray mapping over every weight and bias."""
        out = {}
        for hand, head in self.heads.items():
            for which, layers in (("encoder", head.encoder), ("decoder", head.decoder)):
                for i, (w, b) in enumerate(layers):
                    out[param_key(hand, which, i, "weight")] = w
                    out[param_key(hand, which, i, "bias")] = b
        return out

    def param_tensors(self, tape):
        """Wrap every parameter as a grad-requiring leaf on the tape."""
        return {k: tape.leaf(v, requires_grad=True) for k, v in self.param_arrays().items()}

    def _layers(self, hand, which, params=None):
        head = self.head(hand)
        layers = head.encoder if which == "encoder" else head.decoder
        if params is None:
            return layers
        return [
            (
                params[param_key(hand, which, i, "weight")],
                params[param_key(hand, which, i, "bias")],
            )
            for i in range(len(layers))
        ]

    # -- normalization -------------------------------------------------------

    def normalize(self, hand, q):
        """Joint values to [-1, 1] by limits. q: (dof,) | (n, dof) | Tensor."""
        lim = self.head(hand).limits
        scale = 2.0 / (lim[:, 1] - lim[:, 0])
        return ad.sub(ad.mul(ad.sub(q, lim[:, 0]), scale), 1.0)

    def denormalize(self, hand, y):
        lim = self.head(hand).limits
        scale = (lim[:, 1] - lim[:, 0]) / 2.0
        return ad.add(ad.mul(ad.add(y, 1.0), scale), lim[:, 0])

    # -- forward passes (ndarray or Tensor) -----------------------------------

    def forward_encode(self, hand, q, params=None):
        """Posterior stats (mu, log_var) for normalized input of any batch rank."""
        x = self.normalize(hand, q)
        out = mlp_forward(self._layers(hand, "encoder", params), x)
        d = self.latent_dim
        return out[..., :d], out[..., d : 2 * d]

    def forward_decode_raw(self, hand, z, params=None):
        """Decoded joint values before clamping (differentiable path)."""
        y = mlp_forward(self._layers(hand, "decoder", params), z)
        return self.denormalize(hand, y)

    # -- public inference ----------------------------------------------------

    def encode(self, hand, pose, rng=None):
        """Encode one pose. rng=None gives the deterministic code z = mu."""
        values = self._pose_values(hand, pose)
        self._check_dim(hand, values)
        mu, log_var = self.forward_encode(hand, values)
        if rng is None:
            z = mu
        else:
            eps = rng.standard_normal(self.latent_dim)
            z = mu + np.exp(0.5 * log_var) * eps
        return LatentCode(z=z, mu=mu, log_var=log_var)

    def decode(self, hand, z):
        """Decode a latent vector to an in-limit pose for the hand."""
        z = np.asarray(z, dtype=np.float64)
        raw = self.forward_decode_raw(hand, z)
        lim = self.head(hand).limits
        return JointPose(hand, np.clip(raw, lim[:, 0], lim[:, 1]))

    def cross_decode(self, source, pose, target):
        """Deterministic retarget: encode on source, decode on target."""
        return self.decode(target, self.encode(source, pose).z)

    def encode_batch(self, hand, poses):
        """(n, dof) -> deterministic latent codes (n, latent_dim)."""
        q = np.asarray(poses, dtype=np.float64)
        mu, _ = self.forward_encode(hand, q)
        return mu

    def decode_batch(self, hand, codes):
        """(n, latent_dim) -> clamped joint values (n, dof)."""
        z = np.asarray(codes, dtype=np.float64)
        raw = self.forward_decode_raw(hand, z)
        lim = self.head(hand).limits
        return np.clip(raw, lim[:, 0], lim[:, 1])

    def _pose_values(self, hand, pose):
        if isinstance(pose, JointPose):
            if pose.hand != hand:
                raise ValueError(f"pose is for hand {pose.hand!r}, not {hand!r}")
            return pose.values
        return np.asarray(pose, dtype=np.float64)

    def _check_dim(self, hand, values):
        dof = self.head(hand).dof
        if values.shape[-1] != dof:
            raise ValueError(
                f"{hand}: pose has {values.shape[-1]} values, head expects {dof}"
            )


def _init_layers(dims, rng):
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    return layers


# ---------------------------------------------------------------------------
# checkpoint file format

def _encode_array(arr):
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode_array(text, shape):
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as e:
        raise CheckpointError(f"bad weight payload: {e}") from None
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if arr.size != int(np.prod(shape)):
        raise CheckpointError(f"weight payload has {arr.size} values, expected {shape}")
    return arr.reshape(shape)


def checkpoint_document(model):
    hands = []
    for name, head in model.heads.items():
        hands.append(
            {
                "name": name,
                "dof": head.dof,
                "joint_limits": [[float(lo), float(hi)] for lo, hi in head.limits],
                "encoder_layers": [_layer_doc(w, b) for w, b in head.encoder],
                "decoder_layers": [_layer_doc(w, b) for w, b in head.decoder],
            }
        )
    return {
        "format_version": CHECKPOINT_VERSION,
        "weight_encoding": WEIGHT_ENCODING,
        "latent_dim": model.latent_dim,
        "hidden_sizes": model.hidden_sizes,
        "hands": hands,
    }


def _layer_doc(w, b):
    return {
        "rows": int(w.shape[0]),
        "cols": int(w.shape[1]),
        "weights": _encode_array(w),
        "bias": _encode_array(b),
    }


def save_checkpoint(model, path):
    """Write the model atomically; identical models produce identical bytes."""
    text = json.dumps(checkpoint_document(model), sort_keys=True, separators=(",", ":"))
    atomic_write_text(path, text)


def load_checkpoint(path, specs=None):
    """Load a checkpoint; reproduces encode/decode bit-identically.

    If ``specs`` is given, every spec must have a head with matching dof and
    joint limits, otherwise a CheckpointError is raised.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"corrupt checkpoint: {e}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointError("corrupt checkpoint: missing format_version")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"unsupported format_version {doc['format_version']}, "
            f"this build reads {CHECKPOINT_VERSION}"
        )
    if doc.get("weight_encoding") != WEIGHT_ENCODING:
        raise CheckpointError(f"unknown weight_encoding {doc.get('weight_encoding')!r}")
    try:
        heads = {}
        for hd in doc["hands"]:
            limits = np.array(hd["joint_limits"], dtype=np.float64)
            heads[hd["name"]] = HandHead(
                encoder=[_load_layer(ld) for ld in hd["encoder_layers"]],
                decoder=[_load_layer(ld) for ld in hd["decoder_layers"]],
                limits=limits,
            )
            if limits.shape != (int(hd["dof"]), 2):
                raise CheckpointError(
                    f"hand {hd['name']}: joint_limits do not match dof {hd['dof']}"
                )
        model = LatentModel(doc["latent_dim"], doc["hidden_sizes"], heads)
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e!r}") from None
    if specs is not None:
        for spec in specs:
            if spec.name not in model.heads:
                raise CheckpointError(f"checkpoint has no head for hand {spec.name!r}")
            head = model.heads[spec.name]
            if head.dof != spec.actuated_dof or not np.array_equal(
                head.limits, spec.actuated_limits
            ):
                raise CheckpointError(
                    f"checkpoint head for {spec.name!r} does not match the hand spec"
                )
    return model


def _load_layer(doc):
    w = _decode_array(doc["weights"], (int(doc["rows"]), int(doc["cols"])))
    b = _decode_array(doc["bias"], (int(doc["cols"]),))
    return (w, b)
