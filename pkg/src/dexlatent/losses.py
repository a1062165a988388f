"""Training objective: reconstruction, cross-hand retargeting, KL regularization.

The total objective is ``recon_weight * L_recon + L_retarget + beta * L_kl``.
Reconstruction is the per-hand MSE between input and self-decoded joints,
averaged over hands. Retargeting compares thumb-digit pinch geometry between
each source hand's raw pose and every other hand's decode of the same latent:
squared pinch-distance gap plus one-minus-cosine of the pinch directions,
weighted by exp(-lambda * source pinch distance) so tight pinches dominate.
KL pulls each Gaussian posterior toward the standard normal prior.

All terms assemble in one graph (pass ``params`` with Tensor leaves) so a
single backward pass yields gradients for every head jointly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import hands as hm

THUMB_PAIRS = (
    ("thumb", "index"),
    ("thumb", "middle"),
    ("thumb", "ring"),
    ("thumb", "little"),
)

# below this pinch length the direction is noise; its cosine is defined as 1
DEGENERATE_PINCH = 1e-8


class PairSetError(ValueError):
    """No usable digit pairs for a hand pair."""


@dataclass(frozen=True)
class LossWeights:
    beta: float = 1e-5
    lambda_dis: float = 2000.0
    lambda_dir: float = 5.0
    lambda_dis_exp: float = 12.0
    recon_weight: float = 1.0  # 0 disables reconstruction (ablation runs)

    def __post_init__(self):
        for name in ("beta", "lambda_dis", "lambda_dir", "lambda_dis_exp", "recon_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class PairSet:
    """Ordered thumb-digit pairs; missing digits drop their pairs per hand pair."""

    pairs: tuple = THUMB_PAIRS

    def __post_init__(self):
        for p in self.pairs:
            if tuple(p) not in THUMB_PAIRS:
                raise ValueError(f"pair {p!r} is not a thumb-digit pair")

    def effective(self, source_spec, target_spec):
        """Pairs whose digits exist on both hands."""
        out = []
        for i, j in self.pairs:
            if (
                i in source_spec.digits
                and j in source_spec.digits
                and i in target_spec.digits
                and j in target_spec.digits
            ):
                out.append((i, j))
        return out


@dataclass
class LossBreakdown:
    recon: float
    retarget: float
    kl: float
    total: float
    per_hand_recon: dict = field(default_factory=dict)
    per_pair_retarget: dict = field(default_factory=dict)
    total_tensor: object = None  # Tensor when built with taped params

    @classmethod
    def combine(cls, recon, retarget, kl, weights):
        total = weights.recon_weight * recon + retarget + weights.beta * kl
        return cls(recon=recon, retarget=retarget, kl=kl, total=total)


def _scalar(x):
    return float(x.data) if isinstance(x, ad.Tensor) else float(x)


# ---------------------------------------------------------------------------
# individual terms

def reconstruction_loss(recon_pairs):
    """Mean over hands of the joint-space MSE.

    ``recon_pairs``: {hand: (q, q_hat)} with matching shapes per hand. Values
    may be ndarrays or Tensors; the result matches.
    """
    if not recon_pairs:
        raise ValueError("reconstruction_loss: empty hand set")
    acc = None
    for hand, (q, q_hat) in recon_pairs.items():
        mse = ad.mean(ad.square(ad.sub(q_hat, q)))
        acc = mse if acc is None else ad.add(acc, mse)
    return ad.mul(acc, 1.0 / len(recon_pairs))


def pinch_weight(delta, lambda_dis_exp):
    """exp(-lambda * ||delta||): emphasis weight for tight pinches."""
    return float(np.exp(-lambda_dis_exp * np.linalg.norm(np.asarray(delta, dtype=np.float64))))


def kl_from_stats(mu, log_var):
    """Batch-mean KL(N(mu, diag(sigma^2)) || N(0, I)); inputs (n, d) or (d,)."""
    per_elem = ad.sub(ad.sub(ad.add(ad.square(mu), ad.exp(log_var)), 1.0), log_var)
    total = ad.tsum(per_elem)
    shape = mu.shape if isinstance(mu, ad.Tensor) else np.shape(mu)
    n = shape[0] if len(shape) == 2 else 1
    return ad.mul(total, 0.5 / n)


def kl_loss(codes):
    """Mean KL to the standard normal over a batch of LatentCode."""
    codes = list(codes)
    if not codes:
        return 0.0
    mu = np.stack([c.mu for c in codes])
    log_var = np.stack([c.log_var for c in codes])
    return float(kl_from_stats(mu, log_var))


def pinch_pair_term(delta_source, delta_target, weights):
    """Closed-form single-pair retargeting term (reference scalar path).

    w * [lambda_dis * (||d_s|| - ||d_t||)^2 + lambda_dir * (1 - cos)], with
    cos defined as 1 when either pinch is degenerate.
    """
    ds = np.asarray(delta_source, dtype=np.float64)
    dt = np.asarray(delta_target, dtype=np.float64)
    ns, nt = np.linalg.norm(ds), np.linalg.norm(dt)
    w = np.exp(-weights.lambda_dis_exp * ns)
    if ns < DEGENERATE_PINCH or nt < DEGENERATE_PINCH:
        cos = 1.0
    else:
        cos = float(ds @ dt / (ns * nt))
    return float(w * (weights.lambda_dis * (ns - nt) ** 2 + weights.lambda_dir * (1.0 - cos)))


def _pair_term_batch(delta_src, tgt_delta_xyz, weights):
    """Batch retargeting term: numpy source geometry vs target entries.

    delta_src: (n, 3) ndarray from the raw source pose. tgt_delta_xyz: three
    (n,) entries (Tensor or ndarray) from the decoded target configuration.
    Returns the batch mean as a scalar entry.
    """
    ns = np.linalg.norm(delta_src, axis=1)
    w = np.exp(-weights.lambda_dis_exp * ns)
    tx, ty, tz = tgt_delta_xyz
    nt = ad.sqrt(ad.add(ad.add(ad.square(tx), ad.square(ty)), ad.square(tz)))
    dist = ad.square(ad.sub(ns, nt))

    nt_val = nt.data if isinstance(nt, ad.Tensor) else np.asarray(nt)
    keep = ((ns >= DEGENERATE_PINCH) & (nt_val >= DEGENERATE_PINCH)).astype(np.float64)
    ns_safe = np.where(keep > 0, ns, 1.0)
    nt_safe = ad.add(ad.mul(nt, keep), 1.0 - keep)
    dot = ad.add(
        ad.add(ad.mul(tx, delta_src[:, 0]), ad.mul(ty, delta_src[:, 1])),
        ad.mul(tz, delta_src[:, 2]),
    )
    cos = ad.div(ad.mul(dot, keep), ad.mul(nt_safe, ns_safe))
    direction = ad.mul(ad.sub(1.0, cos), keep)

    per_sample = ad.mul(
        w,
        ad.add(ad.mul(dist, weights.lambda_dis), ad.mul(direction, weights.lambda_dir)),
    )
    return ad.mean(per_sample)


def _target_tip_components(model, spec, z, params):
    """Fingertip components of the decoded (unclamped) target configuration."""
    decoded = model.forward_decode_raw(spec.name, z, params)
    cols = [decoded[:, k] for k in range(spec.actuated_dof)]
    return hm.fingertip_components(spec, hm.expand_mimic_entries(spec, cols))


def _retargeting_terms(model, specs, z_by_hand, batch, weights, pairs, params):
    """All (source, target, pair) term entries keyed by (s, t, i, j)."""
    spec_by_name = {s.name: s for s in specs}
    src_tips = {
        s.name: hm.fingertip_positions_batch(s, batch[s.name]) for s in specs
    }
    terms = {}
    for src in specs:
        for tgt in specs:
            if tgt.name == src.name:
                continue
            eff = pairs.effective(src, tgt)
            if not eff:
                raise PairSetError(
                    f"no common digit pairs between {src.name!r} and {tgt.name!r}"
                )
            tgt_tips = _target_tip_components(model, tgt, z_by_hand[src.name], params)
            for i, j in eff:
                delta_src = src_tips[src.name][i] - src_tips[src.name][j]
                delta_tgt = [
                    ad.sub(tgt_tips[i][c], tgt_tips[j][c]) for c in range(3)
                ]
                terms[(src.name, tgt.name, i, j)] = _pair_term_batch(
                    delta_src, delta_tgt, weights
                )
    return terms


def retargeting_loss(model, specs, batch, weights, pairs=None):
    """Pinch-consistency loss over all ordered hand pairs (deterministic codes).

    ``batch``: {hand: (n, dof) poses}. The source pinch geometry comes from
    the raw input pose; the target side from decoding the source latent on
    the target hand. Normalized by the number of terms actually evaluated.
    """
    specs = list(specs)
    if len(specs) < 2:
        raise ValueError("retargeting_loss needs at least 2 hands")
    pairs = pairs or PairSet()
    z_by_hand = {
        s.name: model.encode_batch(s.name, batch[s.name]) for s in specs
    }
    terms = _retargeting_terms(model, specs, z_by_hand, batch, weights, pairs, None)
    acc = None
    for key in terms:
        acc = terms[key] if acc is None else ad.add(acc, terms[key])
    return _scalar(ad.mul(acc, 1.0 / len(terms)))


def total_loss(model, specs, batch, weights=None, pairs=None, params=None, eps=None):
    """Assemble the full objective in one differentiable graph.

    ``batch``: {hand: (n, dof) poses}. ``eps``: optional {hand: (n, latent)}
    standard-normal draws for reparameterized sampling; omitted means the
    deterministic code z = mu. ``params``: optional Tensor substitution of
    the model weights; when given, the returned breakdown carries
    ``total_tensor`` for a backward pass.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("total_loss: empty hand set")
    weights = weights or LossWeights()
    pairs = pairs or PairSet()

    z_by_hand = {}
    hand_mse = {}
    kl_acc = None
    n_posteriors = 0
    for spec in specs:
        if spec.name not in batch:
            raise ValueError(f"total_loss: batch has no poses for hand {spec.name!r}")
        q = np.asarray(batch[spec.name], dtype=np.float64)
        mu, log_var = model.forward_encode(spec.name, q, params)
        if eps is not None and eps.get(spec.name) is not None:
            sigma = ad.exp(ad.mul(log_var, 0.5))
            z = ad.add(mu, ad.mul(sigma, eps[spec.name]))
        else:
            z = mu
        z_by_hand[spec.name] = z
        q_hat = model.forward_decode_raw(spec.name, z, params)
        hand_mse[spec.name] = ad.mean(ad.square(ad.sub(q_hat, q)))
        per_elem = ad.sub(
            ad.sub(ad.add(ad.square(mu), ad.exp(log_var)), 1.0), log_var
        )
        s = ad.tsum(per_elem)
        kl_acc = s if kl_acc is None else ad.add(kl_acc, s)
        n_posteriors += q.shape[0] if q.ndim == 2 else 1

    acc = None
    for h in hand_mse:
        acc = hand_mse[h] if acc is None else ad.add(acc, hand_mse[h])
    recon = ad.mul(acc, 1.0 / len(hand_mse))
    kl = ad.mul(kl_acc, 0.5 / n_posteriors)

    per_pair = {}
    if len(specs) >= 2 and (weights.lambda_dis > 0 or weights.lambda_dir > 0):
        terms = _retargeting_terms(model, specs, z_by_hand, batch, weights, pairs, params)
        acc = None
        for key in terms:
            acc = terms[key] if acc is None else ad.add(acc, terms[key])
            per_pair[key] = _scalar(terms[key])
        retarget = ad.mul(acc, 1.0 / len(terms))
    else:
        retarget = 0.0

    total = ad.add(
        ad.add(ad.mul(recon, weights.recon_weight), retarget),
        ad.mul(kl, weights.beta),
    )
    return LossBreakdown(
        recon=_scalar(recon),
        retarget=_scalar(retarget),
        kl=_scalar(kl),
        total=_scalar(total),
        per_hand_recon={h: _scalar(m) for h, m in hand_mse.items()},
        per_pair_retarget=per_pair,
        total_tensor=total if isinstance(total, ad.Tensor) else None,
    )
