"""Training objectives: symmetric InfoNCE over pooled embeddings, masked
patch reconstruction, label-prediction BCE, and their combination."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError, InputError, ShapeError
from .nn import Tensor

VARIANTS = ("base", "visual", "audio", "separate", "and", "or")

BCE_CLAMP = 1e-7
_NORM_EPS = 1e-12


@dataclass
class LossBreakdown:
    """Scalar components of one step; the sums hold exactly (same
    floating-point association as the training graph)."""

    l_c: float
    l_r: float
    l_a2l: float
    l_v2l: float
    l_base: float
    l_deteclap: float

    def as_dict(self):
        return asdict(self)


def l2_normalize(x):
    """Row-wise unit vectors; scale-invariant for any positive rescaling."""
    return x * ((x * x).sum(axis=-1, keepdims=True) + _NORM_EPS) ** -0.5


def contrastive_loss(a_bar, v_bar, temperature):
    """Symmetric InfoNCE between row-aligned batches of embeddings.

    Rows are L2-normalized, similarities scaled by 1/temperature, and
    the matched pair sits on the diagonal; both retrieval directions are
    averaged. Requires at least two clips (in-batch negatives).
    """
    if a_bar.ndim != 2 or v_bar.ndim != 2 or a_bar.shape != v_bar.shape:
        raise ShapeError(
            f"expected matching (B, D) batches; got {a_bar.shape} and {v_bar.shape}"
        )
    if a_bar.shape[0] < 2:
        raise ContractError(
            "contrastive loss needs a batch of >= 2 (no in-batch negatives)"
        )
    if not temperature > 0:
        raise ContractError(f"temperature must be positive; got {temperature}")
    b = a_bar.shape[0]
    sims = (l2_normalize(a_bar) @ l2_normalize(v_bar).transpose(1, 0)) * (
        1.0 / temperature
    )
    diag_key = (np.arange(b), np.arange(b))

    def direction(logits):
        shift = logits.data.max(axis=1, keepdims=True)  # constant offset
        lse = (logits - shift).exp().sum(axis=1).log() + shift[:, 0]
        return (lse - logits[diag_key]).mean()

    return (direction(sims) + direction(sims.transpose(1, 0))) * 0.5


def normalize_patch_targets(patches, eps=1e-6):
    """Standardize each patch vector to zero mean / unit variance."""
    x = np.asarray(patches, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def reconstruction_loss(a_rec, v_rec, a_orig, v_orig, audio_sets, visual_sets,
                        mode="masked_only"):
    """Mean squared error of reconstructed patches against normalized
    originals, pooled over both modalities as one element mean.

    mode="masked_only" scores only positions hidden from the encoder;
    mode="all" scores every grid position.
    """
    if mode not in ("masked_only", "all"):
        raise InputError(f"unknown reconstruction mode {mode!r}")
    if not isinstance(audio_sets, (list, tuple)):
        audio_sets = [audio_sets]
        visual_sets = [visual_sets]
        a_rec = a_rec.reshape(1, *a_rec.shape)
        v_rec = v_rec.reshape(1, *v_rec.shape)
        a_orig = np.asarray(a_orig)[None]
        v_orig = np.asarray(v_orig)[None]

    def one_modality(rec, orig, sets):
        orig = np.asarray(orig, dtype=np.float64)
        if rec.shape != orig.shape:
            raise ContractError(
                f"reconstruction shape {rec.shape} != target shape {orig.shape}"
            )
        n_total = sets[0].n_total
        if orig.shape[1] != n_total:
            raise ContractError(
                f"targets cover {orig.shape[1]} patches but the grid has {n_total}"
            )
        mask = np.zeros(rec.shape[:2])
        if mode == "all":
            mask[:] = 1.0
        else:
            for i, s in enumerate(sets):
                mask[i, s.masked_indices] = 1.0
        diff = rec - normalize_patch_targets(orig)
        total = (diff * diff * mask[:, :, None]).sum()
        return total, float(mask.sum()) * rec.shape[2]

    sum_a, count_a = one_modality(a_rec, a_orig, audio_sets)
    sum_v, count_v = one_modality(v_rec, v_orig, visual_sets)
    denom = count_a + count_v
    if denom == 0:
        raise ContractError("no positions selected for the reconstruction loss")
    return (sum_a + sum_v) * (1.0 / denom)


def label_bce(y_hat, target):
    """Mean binary cross entropy; accepts hard {0,1} and soft [0,1]
    targets. Predictions are clamped to [1e-7, 1 - 1e-7]."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != y_hat.shape:
        raise ShapeError(
            f"target shape {target.shape} != prediction shape {y_hat.shape}"
        )
    if target.min() < 0.0 or target.max() > 1.0:
        raise InputError("label targets must lie in [0, 1]")
    p = y_hat.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
    return -(target * p.log() + (1.0 - target) * (1.0 - p).log()).mean()


def total_loss(l_c, l_r, l_a2l=None, l_v2l=None, variant="base"):
    """Combine components per training variant.

    Returns (total Tensor, LossBreakdown). The breakdown satisfies
    l_base == l_c + l_r and l_deteclap == l_base + l_a2l + l_v2l with
    the exact floats of the graph.
    """
    if variant not in VARIANTS:
        raise InputError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    l_base = l_c + l_r
    if variant == "base":
        if l_a2l is not None or l_v2l is not None:
            raise ContractError("variant 'base' takes no label losses")
        breakdown = LossBreakdown(
            l_c=l_c.item(), l_r=l_r.item(), l_a2l=0.0, l_v2l=0.0,
            l_base=l_base.item(), l_deteclap=l_base.item(),
        )
        return l_base, breakdown
    if l_a2l is None or l_v2l is None:
        raise ContractError(
            f"variant {variant!r} uses labels but a label loss is missing"
        )
    total = (l_base + l_a2l) + l_v2l
    breakdown = LossBreakdown(
        l_c=l_c.item(), l_r=l_r.item(), l_a2l=l_a2l.item(), l_v2l=l_v2l.item(),
        l_base=l_base.item(), l_deteclap=total.item(),
    )
    return total, breakdown
