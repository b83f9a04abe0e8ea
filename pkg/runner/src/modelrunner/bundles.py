"""Latent bundle file contract.

A bundle is a float32 samples x flat-width NPY matrix plus a JSON sidecar
(same stem, ``.json``) recording the family, layout shape, sample count,
and provenance; hierarchical-VAE bundles additionally carry the per-layer
length table so rows can be split back into layer tensors. The schema is
shared with the decoding toolkit; this module is the runner's only
knowledge of it.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError

FLAT_WIDTHS = {"vdvae": 91168, "clip_vision": 197376, "clip_text": 59136}
LAYOUT_SHAPES = {
    "vdvae": [91168],
    "clip_vision": [257, 768],
    "clip_text": [77, 768],
}
VDVAE_LAYER_COUNT = 31
# hierarchical-VAE latents all have 16 channels; spatial size follows
# from the block length (16 * r * r)
VDVAE_CHANNELS = 16


def validate_width(family: str, values: np.ndarray) -> None:
    if family not in FLAT_WIDTHS:
        raise DataError(f"unknown latent family {family!r}")
    if values.ndim != 2:
        raise DataError(
            f"{family} bundle must be 2-d samples x features, got shape "
            f"{values.shape}"
        )
    if values.shape[1] != FLAT_WIDTHS[family]:
        raise DataError(
            f"{family} bundle has width {values.shape[1]}, "
            f"layout requires {FLAT_WIDTHS[family]}"
        )


def validate_layer_table(table) -> tuple[int, ...]:
    table = tuple(int(v) for v in table)
    if len(table) != VDVAE_LAYER_COUNT:
        raise DataError(
            f"vdvae layer table must have {VDVAE_LAYER_COUNT} entries, "
            f"got {len(table)}"
        )
    if sum(table) != FLAT_WIDTHS["vdvae"]:
        raise DataError(
            f"vdvae layer table sums to {sum(table)}, "
            f"expected {FLAT_WIDTHS['vdvae']}"
        )
    for length in table:
        side = round((length / VDVAE_CHANNELS) ** 0.5)
        if VDVAE_CHANNELS * side * side != length:
            raise DataError(f"layer length {length} is not 16*r*r for integer r")
    return table


def layer_shapes(table) -> list[tuple[int, int, int]]:
    """(channels, r, r) per layer for a validated length table."""
    out = []
    for length in validate_layer_table(table):
        side = round((length / VDVAE_CHANNELS) ** 0.5)
        out.append((VDVAE_CHANNELS, side, side))
    return out


def write_bundle(
    family: str,
    values: np.ndarray,
    npy_path: str | Path,
    provenance: dict | None = None,
    layer_table=None,
) -> None:
    values = np.asarray(values, dtype=np.float32)
    validate_width(family, values)
    npy_path = Path(npy_path)
    npy_path.parent.mkdir(parents=True, exist_ok=True)
    np.save(npy_path, np.ascontiguousarray(values))
    sidecar = {
        "family": family,
        "shape": LAYOUT_SHAPES[family],
        "n_samples": int(values.shape[0]),
        "provenance": provenance or {},
    }
    if family == "vdvae":
        if layer_table is None:
            raise DataError("vdvae bundles need a per-layer length table")
        sidecar["layer_table"] = list(validate_layer_table(layer_table))
    with open(npy_path.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def read_bundle(npy_path: str | Path) -> tuple[np.ndarray, dict]:
    """Load and validate a bundle; returns (values, sidecar)."""
    npy_path = Path(npy_path)
    sidecar_path = npy_path.with_suffix(".json")
    if not sidecar_path.exists():
        raise DataError(f"bundle sidecar missing: {sidecar_path}")
    with open(sidecar_path) as f:
        sidecar = json.load(f)
    family = sidecar.get("family")
    values = np.load(npy_path)
    validate_width(family, values)
    declared = sidecar.get("n_samples")
    if declared is not None and declared != values.shape[0]:
        raise DataError(
            f"{npy_path}: sidecar says {declared} samples, file has "
            f"{values.shape[0]}"
        )
    if family == "vdvae":
        if "layer_table" not in sidecar:
            raise DataError(f"{sidecar_path}: vdvae sidecar lacks layer_table")
        validate_layer_table(sidecar["layer_table"])
    return values.astype(np.float32, copy=False), sidecar


def split_vdvae_rows(values: np.ndarray, layer_table) -> list[np.ndarray]:
    """Split (n, 91168) rows into 31 arrays shaped (n, 16, r, r)."""
    validate_width("vdvae", values)
    shapes = layer_shapes(layer_table)
    out = []
    offset = 0
    for c, h, w in shapes:
        length = c * h * w
        block = values[:, offset : offset + length]
        out.append(np.ascontiguousarray(block).reshape(values.shape[0], c, h, w))
        offset += length
    return out
