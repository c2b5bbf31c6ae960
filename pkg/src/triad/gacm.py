"""Geometry-aware cross-modal mapper: predicts 3D-side features from RGB features.

The RGB feature grid is bifurcated into a semantic branch and a geometric
branch, blended by a sigmoid gate driven by the geometric branch, passed
through LayerNorm + GELU, and added to a residual projection of the input.
"""

from __future__ import annotations

import numpy as np

from .autograd import (
    DimensionMismatchError,
    LinearParams,
    ParameterStore,
    Tensor,
    add,
    gelu,
    layer_norm,
    linear_forward,
    mul,
    sigmoid,
    sub,
)

LN_EPS = 1e-5


def _init_linear(store: ParameterStore, prefix: str, d_in: int, d_out: int,
                 rng: np.random.Generator) -> LinearParams:
    bound = 1.0 / np.sqrt(d_in)
    w = store.register(f"{prefix}.weight", rng.uniform(-bound, bound, size=(d_in, d_out)))
    b = store.register(f"{prefix}.bias", np.zeros(d_out))
    return LinearParams(w, b)


def _init_identity_linear(store: ParameterStore, prefix: str, d_in: int,
                          d_out: int) -> LinearParams:
    # identity when square, zero-padded identity otherwise
    w0 = np.zeros((d_in, d_out))
    for i in range(min(d_in, d_out)):
        w0[i, i] = 1.0
    w = store.register(f"{prefix}.weight", w0)
    b = store.register(f"{prefix}.bias", np.zeros(d_out))
    return LinearParams(w, b)


class GacmParams:
    """All trainable tensors of the mapper, registered under `prefix` in `store`."""

    def __init__(self, store: ParameterStore, d_rgb: int, d_3d: int,
                 rng: np.random.Generator, prefix: str = "gacm",
                 zero_branches: bool = False):
        self.d_rgb = d_rgb
        self.d_3d = d_3d
        if zero_branches:
            zrng = _ZeroRng()
            self.phi_s = _init_linear(store, f"{prefix}.phi_s", d_rgb, d_3d, zrng)
            self.phi_g = _init_linear(store, f"{prefix}.phi_g", d_rgb, d_3d, zrng)
            self.w_gate = _init_linear(store, f"{prefix}.w_gate", d_3d, d_3d, zrng)
        else:
            self.phi_s = _init_linear(store, f"{prefix}.phi_s", d_rgb, d_3d, rng)
            self.phi_g = _init_linear(store, f"{prefix}.phi_g", d_rgb, d_3d, rng)
            self.w_gate = _init_linear(store, f"{prefix}.w_gate", d_3d, d_3d, rng)
        self.ln_gain = store.register(f"{prefix}.ln_gain", np.ones(d_3d))
        self.ln_shift = store.register(f"{prefix}.ln_shift", np.zeros(d_3d))
        self.residual = _init_identity_linear(store, f"{prefix}.residual", d_rgb, d_3d)


class _ZeroRng:
    """Stand-in rng producing zeros, for the exact pass-through initialization."""

    def uniform(self, low, high, size):
        return np.zeros(size)


def gacm_bifurcate(f_rgb, p: GacmParams) -> tuple[Tensor, Tensor]:
    """Split the RGB grid into semantic and geometric branches."""
    f_sem = linear_forward(f_rgb, p.phi_s)
    f_geo = linear_forward(f_rgb, p.phi_g)
    return f_sem, f_geo


def gacm_gate(f_geo, p: GacmParams) -> Tensor:
    """Sigmoid gate derived from the geometric branch; values in (0, 1)."""
    return sigmoid(linear_forward(f_geo, p.w_gate))


def gacm_fuse(f_sem: Tensor, f_geo: Tensor, gate: Tensor) -> Tensor:
    """Convex per-element blend: geo * gate + sem * (1 - gate)."""
    if f_sem.data.shape != f_geo.data.shape or f_sem.data.shape != gate.data.shape:
        raise DimensionMismatchError(
            f"gacm_fuse shapes differ: {f_sem.data.shape}, {f_geo.data.shape}, "
            f"{gate.data.shape}")
    return add(mul(f_geo, gate), mul(f_sem, sub(1.0, gate)))


def gacm_forward(f_rgb, p: GacmParams) -> Tensor:
    """Full mapper: residual(F_rgb) + GELU(LN(fused))."""
    f_sem, f_geo = gacm_bifurcate(f_rgb, p)
    gate = gacm_gate(f_geo, p)
    fused = gacm_fuse(f_sem, f_geo, gate)
    mimic = gelu(layer_norm(fused, p.ln_gain, p.ln_shift, LN_EPS))
    return add(linear_forward(f_rgb, p.residual), mimic)
