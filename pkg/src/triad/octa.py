"""Object-conditioned textual feature adaptor.

Builds the normal-state prompt ensemble for a class, embeds it, enhances the
embeddings with a sparse top-k mixture of experts, distills them into one
anchor vector via prototype cross-attention, and refines that anchor with an
MLP + FFN block.  The same anchor serves the RGB-side and 3D-side alignment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .autograd import (
    ParameterStore,
    Tensor,
    add,
    gather_rows,
    layer_norm,
    linear_forward,
    matmul,
    mul,
    softmax_row,
    transpose,
)
from .gacm import _init_linear
from .projectors import MlpParams, project

DEFAULT_STATES = [
    "[c]",
    "flawless [c]",
    "perfect [c]",
    "unblemished [c]",
    "[c] without flaw",
    "[c] without defect",
    "[c] without damage",
]

DEFAULT_TEMPLATES = [
    "a photo of a [s].",
    "a photo of the [s].",
]


@dataclass
class PromptCatalog:
    """State descriptors with a [c] slot and contextual templates with an [s] slot."""

    states: list[str] = field(default_factory=lambda: list(DEFAULT_STATES))
    templates: list[str] = field(default_factory=lambda: list(DEFAULT_TEMPLATES))


def build_prompts(class_name: str, catalog: PromptCatalog | None = None) -> list[str]:
    """Expand the catalog grammar for one class; [c] first, then [s]."""
    if not class_name:
        raise ValueError("class name must be nonempty")
    if catalog is None:
        catalog = PromptCatalog()
    states = [s.replace("[c]", class_name) for s in catalog.states]
    return [t.replace("[s]", s) for s in states for t in catalog.templates]


class HashingEmbedder:
    """Deterministic desk-scale text embedder.

    Each whitespace token hashes to a fixed pseudo-random unit vector; a
    sentence embedding is the L2-normalized sum of its token vectors.
    """

    def __init__(self, d_text: int, seed: int = 0):
        self.d_text = d_text
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        v = self._cache.get(token)
        if v is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(int.from_bytes(digest[:8], "little"))))
            v = rng.standard_normal(self.d_text)
            v /= np.linalg.norm(v)
            self._cache[token] = v
        return v

    def embed(self, sentences: list[str]) -> np.ndarray:
        out = np.zeros((len(sentences), self.d_text))
        for i, sent in enumerate(sentences):
            acc = np.zeros(self.d_text)
            for tok in sent.split():
                acc += self._token_vector(tok)
            norm = np.linalg.norm(acc)
            if norm > 0:
                acc /= norm
            out[i] = acc
        return out


class MoeParams:
    """E expert MLPs plus a linear gate; only the top-k experts fire per row."""

    def __init__(self, store: ParameterStore, d_text: int, n_experts: int, k: int,
                 rng: np.random.Generator, prefix: str = "moe"):
        if not 1 <= k <= n_experts:
            raise ValueError(f"top-k count {k} out of range [1, {n_experts}]")
        self.d_text = d_text
        self.k = k
        self.experts = [MlpParams(store, d_text, d_text, rng, f"{prefix}.expert{i}")
                        for i in range(n_experts)]
        self.gate = _init_linear(store, f"{prefix}.gate", d_text, len(self.experts), rng)


def moe_forward(t_embed, p: MoeParams) -> Tensor:
    """Sparse mixture: per row, softmax over the k largest gate logits.

    Unselected experts receive an exactly-zero weight, so their parameters get
    no gradient and perturbing them cannot change the output.  Ties are broken
    toward the lower expert index.
    """
    t = t_embed if isinstance(t_embed, Tensor) else Tensor(t_embed)
    logits = linear_forward(t, p.gate)
    n, n_experts = logits.data.shape
    # stable argsort descending; ties resolve to the lower index
    order = np.argsort(-logits.data, axis=1, kind="stable")
    selected = np.zeros((n, n_experts), dtype=bool)
    np.put_along_axis(selected, order[:, :p.k], True, axis=1)
    # softmax over selected logits only: push unselected logits far below the rest
    masked = add(mul(logits, selected.astype(float)),
                 Tensor(np.where(selected, 0.0, -1e30)))
    weights = softmax_row(masked)
    out = None
    for i, expert in enumerate(p.experts):
        if not selected[:, i].any():
            continue  # zero weight everywhere: skipping keeps output bit-identical
        contrib = mul(project(t, expert), gather_cols(weights, i))
        out = contrib if out is None else add(out, contrib)
    return out


def gather_cols(w, i: int) -> Tensor:
    """Column i of a 2-D tensor as an (N, 1) tensor."""
    cols = transpose(w)
    return transpose(gather_rows(cols, np.array([i])))


class PrototypeParams:
    """Learnable prototype query plus the attention/refinement weights."""

    def __init__(self, store: ParameterStore, d_text: int, rng: np.random.Generator,
                 prefix: str = "proto", dropout_rate: float = 0.1):
        bound = 1.0 / np.sqrt(d_text)
        self.d_text = d_text
        self.scale = float(np.sqrt(d_text))
        self.dropout_rate = dropout_rate
        self.prototype = store.register(
            f"{prefix}.prototype", rng.uniform(-bound, bound, size=(1, d_text)))
        # bias-free query/key/value projections
        self.wq = store.register(f"{prefix}.wq",
                                 rng.uniform(-bound, bound, size=(d_text, d_text)))
        self.wk = store.register(f"{prefix}.wk",
                                 rng.uniform(-bound, bound, size=(d_text, d_text)))
        self.wv = store.register(f"{prefix}.wv",
                                 rng.uniform(-bound, bound, size=(d_text, d_text)))
        self.post_mlp = MlpParams(store, d_text, d_text, rng, f"{prefix}.post_mlp")
        self.ffn = MlpParams(store, d_text, d_text, rng, f"{prefix}.ffn")
        self.final_ln_gain = store.register(f"{prefix}.final_ln_gain", np.ones(d_text))
        self.final_ln_shift = store.register(f"{prefix}.final_ln_shift", np.zeros(d_text))


def prototype_attention(t_hat, p: PrototypeParams) -> Tensor:
    """Single-query cross-attention: the prototype attends over enhanced text rows."""
    t = t_hat if isinstance(t_hat, Tensor) else Tensor(t_hat)
    q = matmul(p.prototype, p.wq)
    scores = mul(matmul(q, transpose(matmul(t, p.wk))), 1.0 / p.scale)
    attn = softmax_row(scores)
    return matmul(attn, matmul(t, p.wv))


def octa_refine(f_p, p: PrototypeParams, mode: str = "eval",
                dropout_rng: np.random.Generator | None = None) -> Tensor:
    """MLP(P + F_p), then LN over a dropout-regularized FFN residual."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    f_hat = project(add(p.prototype, f_p), p.post_mlp)
    ffn_out = project(f_hat, p.ffn)
    if mode == "train" and p.dropout_rate > 0.0:
        if dropout_rng is None:
            raise ValueError("train-mode dropout needs a seeded generator")
        keep = 1.0 - p.dropout_rate
        mask = (dropout_rng.random(ffn_out.data.shape) < keep) / keep
        ffn_out = mul(ffn_out, Tensor(mask))
    return layer_norm(add(f_hat, ffn_out), p.final_ln_gain, p.final_ln_shift)


def octa_forward(class_name: str, catalog: PromptCatalog | None, embedder,
                 moe: MoeParams, proto: PrototypeParams, mode: str = "eval",
                 dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Full adaptor: prompts -> embeddings -> MoE -> attention -> refinement.

    The returned 1 x D_text anchor is shared by the RGB-side and 3D-side terms.
    """
    sentences = build_prompts(class_name, catalog)
    t_embed = Tensor(embedder.embed(sentences))
    t_hat = moe_forward(t_embed, moe)
    f_p = prototype_attention(t_hat, proto)
    return octa_refine(f_p, proto, mode=mode, dropout_rng=dropout_rng)
