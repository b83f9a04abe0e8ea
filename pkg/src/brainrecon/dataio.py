"""Tensor file exchange and fMRI dataset assembly.

Binary tensors travel as NPY files (read v1.0/v2.0, write v1.0,
little-endian only); job inputs travel as flat JSON manifests mapping role
names to file paths. All functions are pure and all returned objects are
treated as immutable, so everything here is safe to share across threads.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataConsistencyError, NpyFormatError, UnsupportedDtypeError

MAGIC = b"\x93NUMPY"

# descriptor <-> dtype for the supported element types; everything else is
# rejected by name so callers see exactly which descriptor failed.
_DESCR_TO_DTYPE = {
    "<f4": np.dtype("<f4"),
    "<f8": np.dtype("<f8"),
    "<i4": np.dtype("<i4"),
    "<i8": np.dtype("<i8"),
    "|b1": np.dtype("bool"),
}
_KIND_TO_DESCR = {
    ("f", 4): "<f4",
    ("f", 8): "<f8",
    ("i", 4): "<i4",
    ("i", 8): "<i8",
    ("b", 1): "|b1",
}

SUPPORTED_DTYPES = tuple(np.dtype(d) for d in ("float32", "float64", "int32", "int64", "bool"))


def _descr_for(dtype: np.dtype) -> str:
    key = (dtype.kind, dtype.itemsize)
    if key not in _KIND_TO_DESCR:
        raise UnsupportedDtypeError(f"unsupported dtype for NPY exchange: {dtype!r}")
    return _KIND_TO_DESCR[key]


def _format_shape(shape: tuple[int, ...]) -> str:
    if len(shape) == 0:
        return "()"
    if len(shape) == 1:
        return f"({shape[0]},)"
    return "(" + ", ".join(str(s) for s in shape) + ")"


def write_npy(t: np.ndarray, path: str | Path) -> None:
    """Write ``t`` as NPY v1.0 with the data section 64-byte aligned."""
    t = np.asarray(t)
    descr = _descr_for(t.dtype)
    header = (
        f"{{'descr': '{descr}', 'fortran_order': False, "
        f"'shape': {_format_shape(t.shape)}, }}"
    )
    # magic(6) + version(2) + header-length field(2) precede the text.
    preamble = len(MAGIC) + 2 + 2
    total = preamble + len(header) + 1
    pad = (64 - total % 64) % 64
    header = header + " " * pad + "\n"
    if len(header) > 0xFFFF:
        raise NpyFormatError(f"header too long for version 1.0: {len(header)} bytes")

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(b"\x01\x00")
        f.write(struct.pack("<H", len(header)))
        f.write(header.encode("latin1"))
        np.ascontiguousarray(t, dtype=_DESCR_TO_DTYPE[descr]).tofile(f)


def read_npy(path: str | Path) -> np.ndarray:
    """Read an NPY v1.0/v2.0 file into a row-major array.

    Column-major files (``fortran_order: True``) are converted to row-major
    by index remapping; element bytes are otherwise passed through untouched.
    """
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise NpyFormatError(f"not an NPY file: bad magic {magic!r}", offset=0)
        version = f.read(2)
        if len(version) < 2:
            raise NpyFormatError("truncated version field", offset=len(MAGIC))
        major, minor = version[0], version[1]
        if (major, minor) not in ((1, 0), (2, 0)):
            raise NpyFormatError(
                f"unsupported NPY version {major}.{minor}", offset=len(MAGIC)
            )
        if major == 1:
            raw = f.read(2)
            if len(raw) < 2:
                raise NpyFormatError("truncated header length", offset=len(MAGIC) + 2)
            (hlen,) = struct.unpack("<H", raw)
        else:
            raw = f.read(4)
            if len(raw) < 4:
                raise NpyFormatError("truncated header length", offset=len(MAGIC) + 2)
            (hlen,) = struct.unpack("<I", raw)
        header_start = f.tell()
        header_bytes = f.read(hlen)
        if len(header_bytes) < hlen:
            raise NpyFormatError("truncated header text", offset=header_start)

        try:
            header = ast.literal_eval(header_bytes.decode("latin1").strip())
        except (ValueError, SyntaxError) as exc:
            raise NpyFormatError(f"unparseable header: {exc}", offset=header_start) from None
        if not isinstance(header, dict):
            raise NpyFormatError("header is not a dict literal", offset=header_start)
        for key in ("descr", "fortran_order", "shape"):
            if key not in header:
                raise NpyFormatError(f"header missing required key {key!r}", offset=header_start)

        descr = header["descr"]
        if descr not in _DESCR_TO_DTYPE:
            raise UnsupportedDtypeError(
                f"unsupported dtype descriptor {descr!r}", offset=header_start
            )
        fortran = header["fortran_order"]
        if not isinstance(fortran, bool):
            raise NpyFormatError("fortran_order must be a bool", offset=header_start)
        shape = header["shape"]
        if not isinstance(shape, tuple) or not all(
            isinstance(s, int) and s >= 0 for s in shape
        ):
            raise NpyFormatError(f"bad shape {shape!r}", offset=header_start)

        dtype = _DESCR_TO_DTYPE[descr]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data_start = f.tell()
        data = np.fromfile(f, dtype=dtype, count=count)
        if data.size < count:
            raise NpyFormatError(
                f"truncated data section: expected {count} elements, got {data.size}",
                offset=data_start + data.size * dtype.itemsize,
            )
    out = data.reshape(shape, order="F" if fortran else "C")
    if not out.flags["C_CONTIGUOUS"]:
        out = out.copy(order="C")
    return out


@dataclass(frozen=True)
class RoiMask:
    """Named voxel subset: sorted unique indices into a voxel vector."""

    name: str
    indices: np.ndarray
    universe_size: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("mask indices must be one-dimensional")
        if idx.size and (np.any(np.diff(idx) <= 0)):
            raise ValueError(f"mask {self.name!r}: indices must be strictly increasing")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.universe_size):
            raise ValueError(
                f"mask {self.name!r}: indices outside [0, {self.universe_size})"
            )
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_indices(cls, name: str, indices, universe_size: int) -> "RoiMask":
        """Build a mask from indices in any order, deduplicating."""
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        return cls(name, idx, universe_size)

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class FmriDataset:
    """Samples-by-voxels response matrix with one row per image."""

    subject_id: str
    betas: np.ndarray
    image_ids: tuple

    def __post_init__(self):
        betas = np.asarray(self.betas)
        if betas.ndim != 2:
            raise ValueError("betas must be a 2-d samples x voxels matrix")
        if len(self.image_ids) != betas.shape[0]:
            raise ValueError(
                f"image_ids length {len(self.image_ids)} != row count {betas.shape[0]}"
            )
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "image_ids", tuple(self.image_ids))

    @property
    def n_samples(self) -> int:
        return self.betas.shape[0]

    @property
    def voxel_count(self) -> int:
        return self.betas.shape[1]


def average_repetitions(trials: np.ndarray, image_ids: Sequence, subject_id: str = "") -> FmriDataset:
    """Average repeated presentations into one row per unique image id.

    Output rows follow first-occurrence order of the ids. Accumulation runs
    in f64 and the result is cast back to the input dtype.
    """
    trials = np.asarray(trials)
    if trials.ndim != 2:
        raise ValueError("trials must be a 2-d trials x voxels matrix")
    if len(image_ids) != trials.shape[0]:
        raise ValueError(
            f"image_ids length {len(image_ids)} != trial count {trials.shape[0]}"
        )
    groups: dict = {}
    order = []
    for row, img in enumerate(image_ids):
        if img not in groups:
            groups[img] = []
            order.append(img)
        groups[img].append(row)
    out = np.empty((len(order), trials.shape[1]), dtype=trials.dtype)
    for k, img in enumerate(order):
        rows = groups[img]
        out[k] = trials[rows].mean(axis=0, dtype=np.float64).astype(trials.dtype)
    return FmriDataset(subject_id=subject_id, betas=out, image_ids=tuple(order))


def apply_mask(pattern: np.ndarray, mask: RoiMask) -> np.ndarray:
    """Gather ``pattern`` at the mask's indices, in index order."""
    pattern = np.asarray(pattern)
    if pattern.ndim != 1:
        raise ValueError("pattern must be one-dimensional")
    if pattern.shape[0] != mask.universe_size:
        raise ValueError(
            f"pattern length {pattern.shape[0]} != mask universe {mask.universe_size}"
        )
    return pattern[mask.indices]


def save_paths_manifest(roles: dict, path: str | Path) -> None:
    """Write a flat role-name -> file-path JSON object."""
    flat = {}
    for key, value in roles.items():
        if not isinstance(key, str):
            raise DataConsistencyError(f"manifest role names must be strings, got {key!r}")
        flat[key] = str(value)
    with open(path, "w") as f:
        json.dump(flat, f, indent=2, sort_keys=True)
        f.write("\n")


def load_paths_manifest(path: str | Path) -> dict[str, str]:
    """Read a flat role-name -> file-path JSON object."""
    with open(path) as f:
        obj = json.load(f)
    if not isinstance(obj, dict):
        raise DataConsistencyError(f"manifest must be a JSON object, got {type(obj).__name__}")
    for key, value in obj.items():
        if not isinstance(value, str):
            raise DataConsistencyError(f"manifest value for {key!r} must be a path string")
    return obj
