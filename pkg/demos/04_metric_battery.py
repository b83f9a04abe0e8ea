"""
Scoring reconstructions: the full metric battery
================================================

Two tiny image sets stand in for reconstructions and ground truth. The
low-level metrics compare pixels; the high-level ones compare feature
rows from six named extractors (here: random stand-ins with a controlled
amount of shared signal).
"""

import tempfile
from pathlib import Path

import numpy as np

from brainrecon import dataio, metrics

rng = np.random.default_rng(0)
workdir = Path(tempfile.mkdtemp(prefix="metrics_demo_"))
recon_dir = workdir / "recon"
gt_dir = workdir / "gt"
feat_dir = workdir / "features"
for d in (recon_dir, gt_dir, feat_dir):
    d.mkdir()

# ground truth: smooth gradients; reconstruction: the same plus noise
n_images = 4
for i in range(n_images):
    ramp = np.linspace(0, 255, 32)
    base = np.stack([np.add.outer(ramp * (i + 1) / n_images, ramp / 2) % 256] * 3,
                    axis=2).astype(np.uint8)
    noisy = np.clip(
        base.astype(np.int16) + rng.integers(-40, 41, base.shape), 0, 255
    ).astype(np.uint8)
    metrics.ImageRgb.from_array(base).to_png(gt_dir / f"{i:02d}.png")
    metrics.ImageRgb.from_array(noisy).to_png(recon_dir / f"{i:02d}.png")

# feature rows: recon features = gt features + noise, so identification
# should beat chance but distances stay above zero
for name in metrics.EXTRACTOR_NAMES:
    gt_feats = rng.normal(size=(n_images, 48)).astype(np.float32)
    recon_feats = (gt_feats + 0.6 * rng.normal(size=gt_feats.shape)).astype(np.float32)
    dataio.write_npy(recon_feats, feat_dir / f"{name}_recon.npy")
    dataio.write_npy(gt_feats, feat_dir / f"{name}_gt.npy")

feature_files = {
    name: (feat_dir / f"{name}_recon.npy", feat_dir / f"{name}_gt.npy")
    for name in metrics.EXTRACTOR_NAMES
}
report, per_sample = metrics.evaluate_directories(recon_dir, gt_dir, feature_files)

print("aggregate report:")
print(f"  pixcorr      {report.pixcorr:7.4f}   (pixel-level correlation)")
print(f"  ssim         {report.ssim:7.4f}   (structural similarity)")
for name in metrics.IDENTIFICATION_EXTRACTORS:
    print(f"  {name:<12} {getattr(report, name):7.4f}   (2-way identification)")
print(f"  effnet_dist  {report.effnet_dist:7.4f}   (correlation distance)")
print(f"  swav_dist    {report.swav_dist:7.4f}   (correlation distance)")

print("\nper-sample pixcorr / clip 2-way score:")
for row in per_sample:
    print(f"  {row['recon_image']}: {row['pixcorr']:.4f} / {row['clip_score']}")

# sanity anchor: an image against itself scores 1.0 on both pixel metrics
img = metrics.ImageRgb.from_png(gt_dir / "00.png")
print(f"\nself pixcorr {metrics.pixcorr(img, img):.6f}, "
      f"self ssim {metrics.ssim(img, img):.6f}")
