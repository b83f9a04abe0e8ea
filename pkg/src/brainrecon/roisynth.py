"""Synthetic ROI activation patterns and regression-weight analysis.

A synthetic pattern lights up one region (value 1) against a silent brain
(value 0), restricted to the voxel-selection mask the decoders were trained
on; feeding such patterns through the decoding pipeline shows what each
region contributes to reconstructions. The weight analysis ranks voxels by
the L1 norm of their regression weights per feature family and compares
region means against the low-level-baseline family.

ROI definitions are data: a JSON catalog names index-file masks and
composition rules (unions of member regions), so alternative atlases slot
in without code changes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.stats

from . import dataio
from .dataio import RoiMask
from .errors import DataError
from .ridge import RidgeModel, weight_l1_per_voxel

ECCENTRICITY_LABELS = (
    "0°<e<0.5°",
    "0.5°<e<1°",
    "1°<e<2°",
    "2°<e<4°",
    "4°<e",
)

BASELINE_FAMILY = "vdvae"
COMPARED_FAMILIES = ("clip_vision", "clip_text")

# Standard composition rules for the NSD atlas names; catalogs may override.
STANDARD_COMPOSITIONS = {
    "V1": ("V1v", "V1d"),
    "V2": ("V2v", "V2d"),
    "V3": ("V3v", "V3d"),
    "Face-ROI": ("OFA", "FFA-1", "FFA-2", "mTL-faces", "aTL-faces"),
    "Word-ROI": ("OWFA", "VWFA-1", "VWFA-2", "mfs-words", "mTL-words"),
    "Place-ROI": ("OPA", "PPA", "RSC"),
    "Body-ROI": ("EBA", "FBA-1", "FBA-2", "mTL-bodies"),
}


@dataclass(frozen=True)
class EccentricityBands:
    """Five pairwise-disjoint retinotopic bands ordered foveal to peripheral."""

    bands: tuple  # of RoiMask, aligned with ECCENTRICITY_LABELS

    def __post_init__(self):
        if len(self.bands) != len(ECCENTRICITY_LABELS):
            raise ValueError(
                f"expected {len(ECCENTRICITY_LABELS)} bands, got {len(self.bands)}"
            )
        sizes = {m.universe_size for m in self.bands}
        if len(sizes) > 1:
            raise ValueError(f"bands disagree on universe_size: {sorted(sizes)}")
        seen = np.concatenate([m.indices for m in self.bands])
        if np.unique(seen).size != seen.size:
            raise ValueError("eccentricity bands must be pairwise disjoint")
        object.__setattr__(self, "bands", tuple(self.bands))

    @property
    def labels(self) -> tuple:
        return ECCENTRICITY_LABELS

    def items(self):
        return list(zip(ECCENTRICITY_LABELS, self.bands))


@dataclass(frozen=True)
class RoiCatalog:
    """Named masks plus composition rules over a shared voxel universe."""

    universe_size: int
    masks: dict
    compositions: dict = field(default_factory=dict)
    eccentricity_order: tuple = ()  # mask names, foveal to peripheral

    def __post_init__(self):
        for name, mask in self.masks.items():
            if mask.universe_size != self.universe_size:
                raise ValueError(
                    f"mask {name!r} has universe_size {mask.universe_size}, "
                    f"catalog says {self.universe_size}"
                )
        for name, members in self.compositions.items():
            if name in self.masks:
                raise ValueError(f"composition {name!r} shadows a mask")
            for member in members:
                if member not in self.masks and member not in self.compositions:
                    raise KeyError(
                        f"composition {name!r} references unknown member {member!r}"
                    )
        for name in self.eccentricity_order:
            if name not in self.masks:
                raise KeyError(f"eccentricity band {name!r} is not a mask")

    def names(self) -> list:
        return sorted(set(self.masks) | set(self.compositions))

    def resolve(self, name: str, _visiting: frozenset = frozenset()) -> RoiMask:
        """Mask for a name, expanding composition rules recursively."""
        if name in self.masks:
            return self.masks[name]
        if name not in self.compositions:
            raise KeyError(
                f"unknown ROI {name!r}; available: {', '.join(self.names())}"
            )
        if name in _visiting:
            raise ValueError(f"composition cycle through {name!r}")
        visiting = _visiting | {name}
        members = [self.resolve(m, visiting) for m in self.compositions[name]]
        indices = np.unique(np.concatenate([m.indices for m in members]))
        return RoiMask(name=name, indices=indices, universe_size=self.universe_size)

    def eccentricity_bands(self) -> EccentricityBands:
        if len(self.eccentricity_order) != len(ECCENTRICITY_LABELS):
            raise ValueError(
                "catalog does not define the "
                f"{len(ECCENTRICITY_LABELS)} eccentricity bands"
            )
        return EccentricityBands(
            bands=tuple(self.masks[n] for n in self.eccentricity_order)
        )


def load_catalog(path: str | Path) -> RoiCatalog:
    """Read a catalog JSON; mask index files resolve relative to it.

    Schema: {"universe_size": int, "masks": {name: npy_path},
    "compositions": {name: [members]}, "eccentricity": [5 mask names]}.
    """
    path = Path(path)
    with open(path) as f:
        doc = json.load(f)
    for key in ("universe_size", "masks"):
        if key not in doc:
            raise DataError(f"{path}: catalog is missing the {key!r} field")
    base = path.parent
    masks = {}
    for name, rel in doc["masks"].items():
        indices = dataio.read_npy(base / rel)
        masks[name] = RoiMask.from_indices(name, indices, doc["universe_size"])
    return RoiCatalog(
        universe_size=doc["universe_size"],
        masks=masks,
        compositions={k: tuple(v) for k, v in doc.get("compositions", {}).items()},
        eccentricity_order=tuple(doc.get("eccentricity", ())),
    )


def union_rois(catalog: RoiCatalog, names) -> RoiMask:
    """Sorted union of the named regions."""
    if not names:
        raise ValueError("need at least one ROI name")
    members = [catalog.resolve(n) for n in names]
    indices = np.unique(np.concatenate([m.indices for m in members]))
    return RoiMask(
        name="+".join(names), indices=indices, universe_size=catalog.universe_size
    )


def synth_pattern(roi: RoiMask, general: RoiMask) -> np.ndarray:
    """Binary activation over the general mask: 1 inside the ROI, 0 outside.

    Output is indexed by the general mask's voxel order. An ROI disjoint
    from the general mask yields all zeros with a warning.
    """
    if roi.universe_size != general.universe_size:
        raise ValueError(
            f"universe mismatch: roi {roi.universe_size} vs "
            f"general {general.universe_size}"
        )
    member = np.isin(general.indices, roi.indices)
    if not member.any():
        warnings.warn(
            f"ROI {roi.name!r} does not intersect the general mask; "
            "pattern is all zeros"
        )
    return member.astype(np.float32)


def percentile_ranks(values: np.ndarray) -> np.ndarray:
    """Midpoint percentile of each value among all values, in (0, 100).

    Ties share their average rank; any strictly monotone transform of the
    input leaves the output unchanged.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("values must be a non-empty 1-d array")
    ranks = scipy.stats.rankdata(values, method="average")
    return 100.0 * (ranks - 0.5) / values.size


def weight_percentile_analysis(
    models: dict,
    catalog: RoiCatalog,
    roi_names,
    general: RoiMask,
    baseline: str = BASELINE_FAMILY,
    families=COMPARED_FAMILIES,
) -> dict:
    """Per-ROI contrast of weight-percentile means against the baseline family.

    ``models`` maps family name to a fitted RidgeModel over the general
    mask's voxels. Each family's per-voxel L1 weight norms become midpoint
    percentiles; for each ROI the result is
    (mean_pct_family - mean_pct_baseline) / mean_pct_baseline.
    Returns {roi_name: {family: difference}}; ROIs that do not intersect
    the general mask are skipped with a warning.
    """
    needed = (baseline, *families)
    for fam in needed:
        if fam not in models:
            raise KeyError(f"no model for family {fam!r}")
    p = general.size
    for fam in needed:
        if models[fam].n_features != p:
            raise ValueError(
                f"model {fam!r} has {models[fam].n_features} voxels, "
                f"general mask has {p}"
            )
    pct = {
        fam: percentile_ranks(weight_l1_per_voxel(models[fam])) for fam in needed
    }
    out = {}
    for roi_name in roi_names:
        roi = catalog.resolve(roi_name)
        member = np.isin(general.indices, roi.indices)
        if not member.any():
            warnings.warn(
                f"ROI {roi_name!r} does not intersect the general mask; skipped"
            )
            continue
        base_mean = float(pct[baseline][member].mean())
        out[roi_name] = {
            fam: (float(pct[fam][member].mean()) - base_mean) / base_mean
            for fam in families
        }
    return out


def sem_across_subjects(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and standard errors over a subjects x rois matrix.

    Standard error uses the sample standard deviation (k - 1 denominator)
    divided by sqrt(k).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("values must be a subjects x rois matrix")
    k = values.shape[0]
    if k < 2:
        raise ValueError(f"need at least 2 subjects, got {k}")
    mean = values.mean(axis=0)
    sem = values.std(axis=0, ddof=1) / np.sqrt(k)
    return mean, sem
