"""Feature providers: the seam that stands in for frozen backbone extractors.

Any object with ``provide(ref) -> (f_rgb, f_3d, mask, class_name)`` returning
aligned grids deterministically satisfies the contract.  The default
implementation reads the TMF1 sample folders written by ``triad gen-data``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Protocol

import numpy as np

from .synthdata import LabeledSample
from .tmf import canonical_json, read_tensor, write_tensor


class FeatureProvider(Protocol):
    def provide(self, ref: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
        ...


class DatasetIOError(OSError):
    pass


def save_dataset(out_dir, train, test, config_hash: str, seed: int) -> None:
    """Write manifest.json plus one TMF1 file set per sample."""
    out = Path(out_dir)
    entries = []
    for split, samples in (("train", train), ("test", test)):
        for i, s in enumerate(samples):
            sid = f"{split}-{i:05d}"
            sdir = out / "samples" / sid
            sdir.mkdir(parents=True, exist_ok=True)
            write_tensor(sdir / "f_rgb.tmf", s.f_rgb)
            write_tensor(sdir / "f_3d.tmf", s.f_3d)
            write_tensor(sdir / "mask.tmf", s.mask.astype(np.float32))
            write_tensor(sdir / "gt.tmf", s.gt_pixels.astype(np.float32))
            entries.append({"id": sid, "class": s.class_name, "split": split,
                            "is_anomalous": bool(s.is_anomalous)})
    manifest = {"config_hash": config_hash, "seed": seed, "samples": entries}
    (out / "manifest.json").write_bytes(canonical_json(manifest))


class DatasetFolderProvider:
    """Reads the sample folders referenced by a dataset manifest."""

    def __init__(self, data_dir):
        self.root = Path(data_dir)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise DatasetIOError(f"no manifest.json in {self.root}")
        self.manifest = json.loads(manifest_path.read_text())
        self._by_id = {e["id"]: e for e in self.manifest["samples"]}

    def refs(self, split: str | None = None) -> list[str]:
        return [e["id"] for e in self.manifest["samples"]
                if split is None or e["split"] == split]

    def provide(self, ref: str):
        entry = self._by_id.get(ref)
        if entry is None:
            raise DatasetIOError(f"unknown sample reference {ref!r}")
        sdir = self.root / "samples" / ref
        f_rgb = np.asarray(read_tensor(sdir / "f_rgb.tmf"), dtype=np.float64)
        f_3d = np.asarray(read_tensor(sdir / "f_3d.tmf"), dtype=np.float64)
        mask = read_tensor(sdir / "mask.tmf").astype(bool)
        return f_rgb, f_3d, mask, entry["class"]

    def load_sample(self, ref: str) -> LabeledSample:
        entry = self._by_id[ref]
        f_rgb, f_3d, mask, cname = self.provide(ref)
        gt = read_tensor(self.root / "samples" / ref / "gt.tmf").astype(bool)
        return LabeledSample(cname, f_rgb, f_3d, mask, gt,
                             bool(entry["is_anomalous"]))

    def load_split(self, split: str) -> list[LabeledSample]:
        return [self.load_sample(r) for r in self.refs(split)]


class InMemoryProvider:
    """Wraps already generated samples; used for desk-scale runs and tests."""

    def __init__(self, samples: list[LabeledSample]):
        self._samples = {f"mem-{i:05d}": s for i, s in enumerate(samples)}

    def refs(self) -> list[str]:
        return list(self._samples)

    def provide(self, ref: str):
        s = self._samples[ref]
        return s.f_rgb.copy(), s.f_3d.copy(), s.mask.copy(), s.class_name


def validate_provider(provider: FeatureProvider, probe_refs: list[str]) -> list[str]:
    """Shape, finiteness, and determinism diagnostics; empty list means OK."""
    if not probe_refs:
        raise ValueError("at least one probe reference is required")
    diagnostics: list[str] = []
    for ref in probe_refs:
        f_rgb, f_3d, mask, cname = provider.provide(ref)
        if f_rgb.ndim != 3 or f_3d.ndim != 3 or mask.ndim != 2:
            diagnostics.append(f"{ref}: rank mismatch")
            continue
        if f_rgb.shape[:2] != f_3d.shape[:2] or f_rgb.shape[:2] != mask.shape:
            diagnostics.append(f"{ref}: grid mismatch "
                               f"({f_rgb.shape[:2]} vs {f_3d.shape[:2]} vs {mask.shape})")
        if not np.isfinite(f_rgb).all() or not np.isfinite(f_3d).all():
            diagnostics.append(f"{ref}: non-finite feature values")
        if not cname:
            diagnostics.append(f"{ref}: empty class name")
        f_rgb2, f_3d2, mask2, cname2 = provider.provide(ref)
        if (not np.array_equal(f_rgb, f_rgb2) or not np.array_equal(f_3d, f_3d2)
                or not np.array_equal(mask, mask2) or cname != cname2):
            diagnostics.append(f"{ref}: nondeterministic provide()")
    return diagnostics
