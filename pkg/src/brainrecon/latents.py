"""Latent feature layouts and bundle arithmetic.

Three feature families flow through the pipeline, each a named flat layout:

* ``vdvae``: 31 concatenated hierarchical-VAE layers, 91168 values
* ``clip_vision``: 257 image-token embeddings of width 768 (197376 values);
  token 0 is the category embedding, tokens 1..256 are image patches
* ``clip_text``: 77 caption-token embeddings of width 768 (59136 values)

Bundles persist as an NPY matrix (samples x flat_len, f32) plus a JSON
sidecar carrying the family, the layer table, and free-form provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import dataio
from .errors import DegenerateInputError, LayoutError

FAMILIES = ("vdvae", "clip_vision", "clip_text")

FLAT_LENGTHS = {"vdvae": 91168, "clip_vision": 197376, "clip_text": 59136}
SHAPES = {"vdvae": (91168,), "clip_vision": (257, 768), "clip_text": (77, 768)}

VDVAE_LAYER_COUNT = 31


def default_vdvae_layer_table() -> tuple[int, ...]:
    """Per-layer lengths shipped with the package (versioned data file)."""
    text = resources.files(__package__).joinpath("vdvae_layers.json").read_text()
    return tuple(json.loads(text)["layer_sizes"])


@dataclass(frozen=True)
class LatentLayout:
    family: str
    shape: tuple[int, ...]
    block_lengths: tuple[int, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise LayoutError(f"unknown latent family {self.family!r}")
        if self.shape != SHAPES[self.family]:
            raise LayoutError(f"{self.family}: shape {self.shape} != {SHAPES[self.family]}")
        if sum(self.block_lengths) != self.flat_len:
            raise LayoutError(
                f"{self.family}: block lengths sum to {sum(self.block_lengths)}, "
                f"expected {self.flat_len}"
            )

    @property
    def flat_len(self) -> int:
        return int(np.prod(self.shape))

    @property
    def block_offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum(self.block_lengths)[:-1]]).tolist())


def layout_for(family: str, layer_table: Sequence[int] | None = None) -> LatentLayout:
    """Build the layout for a family.

    ``layer_table`` applies to the vdvae family only and must hold exactly
    31 per-layer lengths summing to 91168.
    """
    if family not in FAMILIES:
        raise LayoutError(f"unknown latent family {family!r}")
    if family == "vdvae":
        table = tuple(layer_table) if layer_table is not None else default_vdvae_layer_table()
        if len(table) != VDVAE_LAYER_COUNT:
            raise LayoutError(
                f"vdvae layer table must have {VDVAE_LAYER_COUNT} entries, got {len(table)}"
            )
        return LatentLayout("vdvae", SHAPES["vdvae"], table)
    if layer_table is not None:
        raise LayoutError(f"{family} layout takes no layer table")
    tokens, width = SHAPES[family]
    return LatentLayout(family, SHAPES[family], (width,) * tokens)


@dataclass(frozen=True)
class LatentBundle:
    layout: LatentLayout
    values: np.ndarray  # (n_samples, flat_len) f32

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValueError("bundle values must be a 2-d samples x features matrix")
        if values.shape[1] != self.layout.flat_len:
            raise LayoutError(
                f"bundle has {values.shape[1]} columns, layout {self.layout.family} "
                f"expects {self.layout.flat_len}"
            )
        object.__setattr__(self, "values", values)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


def unpack(bundle: LatentBundle, sample: int) -> list[np.ndarray]:
    """Split one sample row into its per-layer / per-token blocks (views)."""
    if not 0 <= sample < bundle.n_samples:
        raise IndexError(f"sample {sample} out of range [0, {bundle.n_samples})")
    row = bundle.values[sample]
    blocks = []
    offset = 0
    for length in bundle.layout.block_lengths:
        blocks.append(row[offset : offset + length])
        offset += length
    return blocks


def pack(layout: LatentLayout, blocks: Iterable[np.ndarray]) -> np.ndarray:
    """Concatenate blocks back into a flat row; inverse of :func:`unpack`."""
    blocks = list(blocks)
    lengths = tuple(len(b) for b in blocks)
    if lengths != tuple(layout.block_lengths):
        raise LayoutError(
            f"block lengths {lengths} do not match layout {layout.block_lengths}"
        )
    return np.concatenate([np.asarray(b, dtype=np.float32) for b in blocks])


def average_subjects(bundles: Sequence[LatentBundle]) -> LatentBundle:
    """Elementwise mean of same-layout bundles (f64 accumulation)."""
    if len(bundles) == 0:
        raise ValueError("need at least one bundle")
    first = bundles[0]
    for b in bundles[1:]:
        if b.layout != first.layout:
            raise ValueError(
                f"layout mismatch: {b.layout.family} vs {first.layout.family}"
            )
        if b.n_samples != first.n_samples:
            raise ValueError(
                f"sample count mismatch: {b.n_samples} vs {first.n_samples}"
            )
    acc = np.zeros(first.values.shape, dtype=np.float64)
    for b in bundles:
        acc += b.values
    acc /= len(bundles)
    return LatentBundle(first.layout, acc.astype(np.float32))


def row_norm_mean(values: np.ndarray) -> float:
    """Mean Euclidean row norm of a samples x features matrix (f64)."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("values must be a 2-d samples x features matrix")
    return float(np.linalg.norm(values.astype(np.float64), axis=1).mean())


def mean_row_norm(bundle: LatentBundle) -> float:
    """Mean Euclidean norm of the bundle's rows, accumulated in f64."""
    return row_norm_mean(bundle.values)


def renormalize_rows(values: np.ndarray, target_norm: float) -> np.ndarray:
    """Scale each row to Euclidean norm ``target_norm``, keeping direction."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("values must be a 2-d samples x features matrix")
    v64 = values.astype(np.float64)
    norms = np.linalg.norm(v64, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"prediction row {zero[0]} has zero norm")
    return (v64 * (target_norm / norms)[:, None]).astype(np.float32)


def renormalize_to_norm(pred: LatentBundle, target_norm: float) -> LatentBundle:
    """Bundle-level wrapper around :func:`renormalize_rows`."""
    return LatentBundle(pred.layout, renormalize_rows(pred.values, target_norm))


def renormalize_to_training(pred: LatentBundle, train: LatentBundle) -> LatentBundle:
    """Rescale out-of-distribution predictions to the training norm scale.

    Each prediction row is scaled so its Euclidean norm equals the mean
    Euclidean norm of the training rows.
    """
    if pred.layout != train.layout:
        raise ValueError("prediction and training bundles must share a layout")
    return renormalize_to_norm(pred, mean_row_norm(train))


def save_bundle(
    bundle: LatentBundle,
    npy_path: str | Path,
    sidecar_path: str | Path | None = None,
    provenance: dict | None = None,
) -> None:
    """Persist values as NPY plus a JSON sidecar describing the layout."""
    npy_path = Path(npy_path)
    dataio.write_npy(bundle.values, npy_path)
    sidecar = {
        "family": bundle.layout.family,
        "shape": list(bundle.layout.shape),
        "n_samples": bundle.n_samples,
        "provenance": provenance or {},
    }
    if bundle.layout.family == "vdvae":
        sidecar["layer_table"] = list(bundle.layout.block_lengths)
    with open(sidecar_path or npy_path.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def load_bundle(npy_path: str | Path, sidecar_path: str | Path | None = None) -> LatentBundle:
    """Load a bundle persisted by :func:`save_bundle`."""
    npy_path = Path(npy_path)
    with open(sidecar_path or npy_path.with_suffix(".json")) as f:
        sidecar = json.load(f)
    layout = layout_for(sidecar["family"], sidecar.get("layer_table"))
    values = dataio.read_npy(npy_path)
    return LatentBundle(layout, values)
