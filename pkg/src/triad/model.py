"""Full detection head: mapper + projectors + textual adaptor over one store.

The head owns a single ParameterStore so that checkpointing, optimization,
and gradient checking can treat every trainable tensor uniformly.  Feature
grids enter as (H, W, D) numpy arrays and are flattened to (H*W, D) patch
matrices internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import ParameterStore, Tensor
from .gacm import GacmParams, gacm_forward
from .octa import (
    HashingEmbedder,
    MoeParams,
    PromptCatalog,
    PrototypeParams,
    octa_forward,
)
from .projectors import MlpParams, project

MAPPER_GACM = "gacm"
MAPPER_MLP = "mlp"


@dataclass
class ModelDims:
    d_rgb: int = 12
    d_3d: int = 18
    d_text: int = 16
    n_experts: int = 4
    top_k: int = 2
    dropout_rate: float = 0.1


class Model:
    """All trainable components of the head plus the frozen text embedder."""

    def __init__(self, dims: ModelDims, seed: int,
                 catalog: PromptCatalog | None = None,
                 mapper_kind: str = MAPPER_GACM,
                 embedder_seed: int = 0):
        if mapper_kind not in (MAPPER_GACM, MAPPER_MLP):
            raise ValueError(f"unknown mapper kind {mapper_kind!r}")
        self.dims = dims
        self.seed = seed
        self.mapper_kind = mapper_kind
        self.catalog = catalog if catalog is not None else PromptCatalog()
        self.embedder = HashingEmbedder(dims.d_text, seed=embedder_seed)
        self.store = ParameterStore()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0])))
        if mapper_kind == MAPPER_GACM:
            self.mapper = GacmParams(self.store, dims.d_rgb, dims.d_3d, rng)
        else:
            self.mapper = MlpParams(self.store, dims.d_rgb, dims.d_3d, rng, "mapper")
        self.proj_3d_to_rgb = MlpParams(self.store, dims.d_3d, dims.d_rgb, rng,
                                        "proj_3d_to_rgb")
        self.proj_rgb_to_text = MlpParams(self.store, dims.d_rgb, dims.d_text, rng,
                                          "proj_rgb_to_text")
        self.proj_3d_to_text = MlpParams(self.store, dims.d_3d, dims.d_text, rng,
                                         "proj_3d_to_text")
        self.moe = MoeParams(self.store, dims.d_text, dims.n_experts, dims.top_k, rng)
        self.proto = PrototypeParams(self.store, dims.d_text, rng,
                                     dropout_rate=dims.dropout_rate)

    def map_rgb_to_3d(self, f_rgb: Tensor) -> Tensor:
        if self.mapper_kind == MAPPER_GACM:
            return gacm_forward(f_rgb, self.mapper)
        return project(f_rgb, self.mapper)

    def forward_sample(self, f_rgb_grid: np.ndarray,
                       f_3d_grid: np.ndarray) -> dict[str, Tensor]:
        """Map one sample's grids into every target modality.

        Returns flattened (H*W, D) tensors keyed by mapping name.
        """
        h, w, d_rgb = f_rgb_grid.shape
        f_rgb = Tensor(f_rgb_grid.reshape(h * w, d_rgb))
        f_3d = Tensor(f_3d_grid.reshape(h * w, -1))
        return {
            "f_rgb": f_rgb,
            "f_3d": f_3d,
            "f_rgb_to_3d": self.map_rgb_to_3d(f_rgb),
            "f_3d_to_rgb": project(f_3d, self.proj_3d_to_rgb),
            "f_rgb_to_text": project(f_rgb, self.proj_rgb_to_text),
            "f_3d_to_text": project(f_3d, self.proj_3d_to_text),
        }

    def text_anchor(self, class_name: str, mode: str = "eval",
                    dropout_rng: np.random.Generator | None = None) -> Tensor:
        """Class-conditioned 1 x D_text anchor (shared by both visual sides)."""
        return octa_forward(class_name, self.catalog, self.embedder,
                            self.moe, self.proto, mode=mode,
                            dropout_rng=dropout_rng)

    def parameter_names(self) -> list[str]:
        return self.store.names()

    def export_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.store.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        names = self.store.names()
        if set(arrays) != set(names):
            missing = set(names) - set(arrays)
            extra = set(arrays) - set(names)
            raise ValueError(f"parameter set mismatch: missing={sorted(missing)}, "
                             f"unexpected={sorted(extra)}")
        for name in names:
            t = self.store[name]
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{arr.shape} vs {t.data.shape}")
            t.data = arr.copy()
