"""Masked cosine alignment losses and the total training objective."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autograd import (
    DimensionMismatchError,
    NonFiniteError,
    Tensor,
    add,
    as_tensor,
    cosine_rows,
    gather_rows,
    mean,
    mul,
    sub,
)

log = logging.getLogger(__name__)


@dataclass
class LossWeights:
    """Balancing coefficients for the four alignment terms; all default to 1."""

    lambda_v2g: float = 1.0
    lambda_g2v: float = 1.0
    lambda_v2t: float = 1.0
    lambda_g2t: float = 1.0

    def validate(self) -> None:
        for name, v in vars(self).items():
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")


def masked_cosine_loss(pred, target, mask: np.ndarray) -> Tensor:
    """Mean of (1 - cosine similarity) over valid patches.

    `pred` and `target` are (N, D) patch matrices; `mask` is a flat boolean
    array of length N.  Invalid patches are dropped before any arithmetic, so
    their feature values can never influence the value or its gradients.
    Returns 0 (with a warning) when no patch is valid.
    """
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise DimensionMismatchError(
            f"masked_cosine_loss shapes differ: {pred.data.shape} vs {target.data.shape}")
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.shape[0] != pred.data.shape[0]:
        raise DimensionMismatchError(
            f"mask length {mask.shape[0]} != patch count {pred.data.shape[0]}")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        log.warning("masked_cosine_loss: no valid patch, contributing 0")
        return Tensor(0.0)
    sims = cosine_rows(gather_rows(pred, idx), gather_rows(target, idx))
    return mean(sub(1.0, sims))


def visual_loss(f_rgb, f_3d, f_rgb_to_3d, f_3d_to_rgb, mask: np.ndarray,
                w: LossWeights) -> Tensor:
    """Bidirectional visual-geometric consistency term."""
    return add(mul(masked_cosine_loss(f_rgb_to_3d, f_3d, mask), w.lambda_v2g),
               mul(masked_cosine_loss(f_3d_to_rgb, f_rgb, mask), w.lambda_g2v))


def text_loss(f_rgb_to_text, f_3d_to_text, text_anchor, mask: np.ndarray,
              w: LossWeights) -> Tensor:
    """Visual-linguistic alignment: pull projected patches toward the class anchor.

    The single 1 x D_text anchor is broadcast to every valid patch; the same
    anchor serves both the RGB-side and 3D-side terms.
    """
    f_rgb_to_text = as_tensor(f_rgb_to_text)
    anchor_rgb = _broadcast_anchor(text_anchor, f_rgb_to_text.data.shape[0])
    anchor_3d = _broadcast_anchor(text_anchor, as_tensor(f_3d_to_text).data.shape[0])
    return add(mul(masked_cosine_loss(anchor_rgb, f_rgb_to_text, mask), w.lambda_v2t),
               mul(masked_cosine_loss(anchor_3d, f_3d_to_text, mask), w.lambda_g2t))


def _broadcast_anchor(anchor, n: int) -> Tensor:
    anchor = as_tensor(anchor)
    return gather_rows(anchor, np.zeros(n, dtype=np.intp))


def total_loss(l_vis, l_text) -> Tensor:
    """Sum of the visual and textual alignment losses."""
    l_vis, l_text = as_tensor(l_vis), as_tensor(l_text)
    if not (np.isfinite(l_vis.data).all() and np.isfinite(l_text.data).all()):
        raise NonFiniteError("total_loss received a non-finite term")
    return add(l_vis, l_text)
