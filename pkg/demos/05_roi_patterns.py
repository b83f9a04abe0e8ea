"""
Region-of-interest patterns and weight analysis
===============================================

Builds a small ROI catalog on disk, synthesizes binary activation
patterns against a trained-voxel mask, then asks which feature family's
regression weights concentrate in which region. Subject aggregation at
the end shows the mean and standard-error convention.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from brainrecon import dataio, ridge, roisynth
from brainrecon.dataio import RoiMask

workdir = Path(tempfile.mkdtemp(prefix="roi_demo_"))

# a catalog is data: index files plus a JSON naming them, so swapping
# atlases never touches code
mask_indices = {
    "V1v": np.arange(0, 10),
    "V1d": np.arange(10, 20),
    "FFA-1": np.arange(25, 35),
    "OFA": np.arange(35, 40),
    "ecc0": np.arange(0, 8),
    "ecc1": np.arange(8, 16),
    "ecc2": np.arange(16, 24),
    "ecc3": np.arange(24, 32),
    "ecc4": np.arange(32, 40),
}
for name, idx in mask_indices.items():
    dataio.write_npy(idx.astype(np.int64), workdir / f"{name}.npy")
catalog_doc = {
    "universe_size": 60,
    "masks": {name: f"{name}.npy" for name in mask_indices},
    "compositions": {"V1": ["V1v", "V1d"], "faces": ["FFA-1", "OFA"]},
    "eccentricity": ["ecc0", "ecc1", "ecc2", "ecc3", "ecc4"],
}
with open(workdir / "catalog.json", "w") as f:
    json.dump(catalog_doc, f, indent=2)

catalog = roisynth.load_catalog(workdir / "catalog.json")
print(f"catalog: {len(catalog.names())} names over {catalog.universe_size} voxels")
print(f"  {', '.join(catalog.names())}")

# compositions resolve recursively to sorted unions
v1 = catalog.resolve("V1")
print(f"\nresolve('V1') -> {v1.size} voxels "
      f"(V1v {catalog.resolve('V1v').size} + V1d {catalog.resolve('V1d').size})")
both = roisynth.union_rois(catalog, ["faces", "V1"])
print(f"union faces+V1 -> name {both.name!r}, {both.size} voxels")

# the general mask is the voxel set the decoders saw during training;
# patterns are expressed in its coordinate order
general = RoiMask.from_indices("general", np.arange(40), 60)
pattern = roisynth.synth_pattern(v1, general)
print(f"\nsynthetic V1 pattern: {int(pattern.sum())} of {pattern.size} voxels on, "
      f"dtype {pattern.dtype}")
print(f"  first 24 entries: {pattern[:24].astype(int)}")

# eccentricity bands carry fixed foveal-to-peripheral labels
bands = catalog.eccentricity_bands()
print("\neccentricity bands:")
for label, mask in bands.items():
    print(f"  {label:<12} {mask.size} voxels")

# percentile anchor: ties share their average rank
print(f"\npercentile_ranks([1, 1, 2]) = {roisynth.percentile_ranks([1, 1, 2])}")


def fit_family_models(seed: int) -> dict:
    """Three toy decoders over the general mask's 40 voxels.

    The baseline family reads all voxels; clip_vision depends only on
    face voxels and clip_text only on V1 voxels, so their weights should
    rank high inside those regions.
    """
    rng = np.random.default_rng(seed)
    n, q = 200, 12
    X = rng.normal(size=(n, general.size))
    cfg = ridge.FitConfig(lambda_grid=(10.0,))
    models = {}
    for family, roi in (("vdvae", None), ("clip_vision", "faces"), ("clip_text", "V1")):
        cols = (np.ones(general.size, dtype=bool) if roi is None
                else np.isin(general.indices, catalog.resolve(roi).indices))
        B = rng.normal(size=(int(cols.sum()), q))
        Y = X[:, cols] @ B + 0.1 * rng.normal(size=(n, q))
        models[family] = ridge.fit(X, Y, cfg)
    return models


contrast = roisynth.weight_percentile_analysis(
    fit_family_models(seed=0), catalog, ["V1", "faces"], general
)
print("\nweight-percentile contrast vs the vdvae baseline "
      "(positive = family leans on that region more):")
for roi_name, per_family in contrast.items():
    cells = ", ".join(f"{fam} {diff:+.3f}" for fam, diff in per_family.items())
    print(f"  {roi_name:<6} {cells}")

# aggregate the clip_vision contrast over three simulated subjects
roi_names = ["V1", "faces"]
rows = []
for seed in range(3):
    per_subject = roisynth.weight_percentile_analysis(
        fit_family_models(seed), catalog, roi_names, general
    )
    rows.append([per_subject[r]["clip_vision"] for r in roi_names])
mean, sem = roisynth.sem_across_subjects(np.array(rows))
print("\nclip_vision contrast across 3 subjects (mean ± sem):")
for r, m, s in zip(roi_names, mean, sem):
    print(f"  {r:<6} {m:+.3f} ± {s:.3f}")
