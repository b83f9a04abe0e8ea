"""Reconstruction evaluation battery.

Image-space scores (pixel correlation, luminance SSIM) are computed directly
on PNG pairs; feature-space scores (2-way identification, correlation
distance) consume externally extracted network features supplied as NPY
files. The feature networks themselves live behind that file boundary and
are never run here.

Protocol choices are recorded in the report metadata: similarity is Pearson
correlation, distance is 1 - Pearson, identification is exhaustive over all
ordered pairs with exact ties scoring 0.5, SSIM uses an 11x11 Gaussian
window (sigma 1.5) on BT.601 luminance over valid window positions, and
resizing is bilinear with half-pixel centers and edge clamping.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal
from PIL import Image

from . import dataio
from .errors import (
    DataConsistencyError,
    DegenerateInputError,
    UndefinedCorrelationError,
)

IDENTIFICATION_EXTRACTORS = ("alexnet2", "alexnet5", "inception", "clip")
DISTANCE_EXTRACTORS = ("effnet", "swav")
EXTRACTOR_NAMES = IDENTIFICATION_EXTRACTORS + DISTANCE_EXTRACTORS

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DYNAMIC_RANGE = 255.0

# BT.601 luminance weights for R, G, B.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

PROTOCOL_METADATA = {
    "similarity": "pearson",
    "distance": "1 - pearson",
    "identification": "exhaustive pairwise, ties 0.5",
    "ssim_window": "gaussian 11x11 sigma 1.5, valid positions, BT.601 luminance",
    "resize": "bilinear, half-pixel centers, edge clamp",
}


@dataclass(frozen=True)
class ImageRgb:
    """8-bit RGB raster stored row-major as an (height, width, 3) array."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {px.dtype}")
        if px.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixel buffer shape {px.shape} does not match "
                f"{self.height}x{self.width}x3"
            )
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageRgb":
        arr = np.asarray(arr, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an (h, w, 3) array, got shape {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr)

    @classmethod
    def from_png(cls, path: str | Path) -> "ImageRgb":
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
        return cls.from_array(arr)

    def to_png(self, path: str | Path) -> None:
        Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")


def resize_bilinear(img: ImageRgb, width: int, height: int) -> ImageRgb:
    """Bilinear resample with half-pixel centers and edge clamping.

    An exact-size input is returned unchanged.
    """
    if width < 1 or height < 1:
        raise ValueError(f"target size must be >= 1, got {width}x{height}")
    if (width, height) == (img.width, img.height):
        return img
    src = img.pixels.astype(np.float64)
    x = (np.arange(width) + 0.5) * (img.width / width) - 0.5
    y = (np.arange(height) + 0.5) * (img.height / height) - 0.5
    x = np.clip(x, 0.0, img.width - 1.0)
    y = np.clip(y, 0.0, img.height - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = (x - x0)[None, :, None]
    fy = (y - y0)[:, None, None]
    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy) + bottom * fy
    pixels = np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)
    return ImageRgb(width=width, height=height, pixels=pixels)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedCorrelationError(
            "correlation undefined for a zero-variance input"
        )
    return float((a @ b) / (na * nb))


def pixcorr(recon: ImageRgb, gt: ImageRgb) -> float:
    """Pearson correlation of flattened RGB vectors; gt defines the size."""
    recon = resize_bilinear(recon, gt.width, gt.height)
    return _pearson(
        recon.pixels.reshape(-1).astype(np.float64),
        gt.pixels.reshape(-1).astype(np.float64),
    )


def _luminance(img: ImageRgb) -> np.ndarray:
    px = img.pixels.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    return r * px[:, :, 0] + g * px[:, :, 1] + b * px[:, :, 2]


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(recon: ImageRgb, gt: ImageRgb) -> float:
    """Mean structural similarity on the luminance channel.

    Gaussian-weighted window moments, valid window positions only, dynamic
    range 255.
    """
    recon = resize_bilinear(recon, gt.width, gt.height)
    if min(gt.width, gt.height) < SSIM_WINDOW:
        raise ValueError(
            f"image {gt.width}x{gt.height} smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    x = _luminance(recon)
    y = _luminance(gt)
    w = _gaussian_window()
    c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) ** 2

    def smooth(a):
        return scipy.signal.correlate(a, w, mode="valid", method="direct")

    mu_x = smooth(x)
    mu_y = smooth(y)
    var_x = smooth(x * x) - mu_x * mu_x
    var_y = smooth(y * y) - mu_y * mu_y
    cov = smooth(x * y) - mu_x * mu_y
    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return float(ssim_map.mean())


@dataclass(frozen=True)
class FeatureSet:
    """Per-sample feature rows from one named extractor."""

    extractor_name: str
    features: np.ndarray  # (n_samples, d) f32

    def __post_init__(self):
        if self.extractor_name not in EXTRACTOR_NAMES:
            raise ValueError(
                f"unknown extractor {self.extractor_name!r}; expected one of "
                f"{', '.join(EXTRACTOR_NAMES)}"
            )
        feats = np.asarray(self.features, dtype=np.float32)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-d, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features contain NaN or Inf")
        object.__setattr__(self, "features", feats)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]


def _check_pair(recon: FeatureSet, gt: FeatureSet) -> None:
    if recon.features.shape != gt.features.shape:
        raise ValueError(
            f"feature shape mismatch: recon {recon.features.shape} vs "
            f"gt {gt.features.shape}"
        )


def _unit_rows(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-centered unit-norm matrix plus a usable-row mask."""
    X = F.astype(np.float64)
    Xc = X - X.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(Xc, axis=1)
    ok = norms > 0
    out = np.zeros_like(Xc)
    out[ok] = Xc[ok] / norms[ok, None]
    return out, ok


def _usable_rows(recon: FeatureSet, gt: FeatureSet):
    rn, r_ok = _unit_rows(recon.features)
    gn, g_ok = _unit_rows(gt.features)
    ok = r_ok & g_ok
    if not np.all(ok):
        warnings.warn(
            f"{int((~ok).sum())} constant feature row(s) excluded from "
            f"{recon.extractor_name} scoring"
        )
    return rn, gn, ok


def nway_scores(recon: FeatureSet, gt: FeatureSet) -> np.ndarray:
    """Per-sample exhaustive 2-way scores; excluded samples hold NaN."""
    _check_pair(recon, gt)
    rn, gn, ok = _usable_rows(recon, gt)
    kept = np.flatnonzero(ok)
    if kept.size < 2:
        raise DegenerateInputError(
            "2-way identification needs at least 2 usable samples, "
            f"got {kept.size}"
        )
    C = rn[kept] @ gn[kept].T
    diag = np.diag(C)
    wins = (diag[:, None] > C).sum(axis=1).astype(np.float64)
    ties = (diag[:, None] == C).sum(axis=1).astype(np.float64) - 1.0  # drop j == i
    scores = np.full(recon.n_samples, np.nan)
    scores[kept] = (wins + 0.5 * ties) / (kept.size - 1)
    return scores


def nway_identification(recon: FeatureSet, gt: FeatureSet, n: int = 2) -> float:
    """Exhaustive pairwise identification accuracy.

    For each sample, every other sample serves once as a distractor; a
    comparison scores 1 when the matched correlation is strictly larger,
    0.5 on an exact tie.
    """
    if n != 2:
        raise ValueError(f"only the 2-way protocol is supported, got n={n}")
    scores = nway_scores(recon, gt)
    return float(np.nanmean(scores))


def distance_rows(recon: FeatureSet, gt: FeatureSet) -> np.ndarray:
    """Per-sample correlation distance 1 - corr; excluded samples hold NaN.

    Bitwise-identical rows yield exactly 0; values are clipped to the
    mathematical range [0, 2] to strip rounding spill.
    """
    _check_pair(recon, gt)
    rn, gn, ok = _usable_rows(recon, gt)
    out = np.full(recon.n_samples, np.nan)
    out[ok] = np.clip(1.0 - (rn[ok] * gn[ok]).sum(axis=1), 0.0, 2.0)
    identical = ok & np.all(rn == gn, axis=1)
    out[identical] = 0.0
    negated = ok & np.all(rn == -gn, axis=1)
    out[negated] = 2.0
    return out


def feature_distance(recon: FeatureSet, gt: FeatureSet) -> float:
    """Mean correlation distance between matched sample rows."""
    rows = distance_rows(recon, gt)
    usable = rows[~np.isnan(rows)]
    if usable.size == 0:
        raise DegenerateInputError("no usable samples for feature distance")
    return float(usable.mean())


@dataclass(frozen=True)
class MetricReport:
    """Aggregate scores for one reconstruction set.

    Identification fields are accuracies in [0, 1]; pixcorr/ssim are
    correlations in [-1, 1]; the distance fields are lower-better in [0, 2].
    """

    pixcorr: float
    ssim: float
    alexnet2: float
    alexnet5: float
    inception: float
    clip: float
    effnet_dist: float
    swav_dist: float
    n_samples: int
    metadata: dict = field(default_factory=lambda: dict(PROTOCOL_METADATA))

    def __post_init__(self):
        for name in ("alexnet2", "alexnet5", "inception", "clip"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("pixcorr", "ssim"):
            v = getattr(self, name)
            if not -1.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name} must lie in [-1, 1], got {v}")
        for name in ("effnet_dist", "swav_dist"):
            v = getattr(self, name)
            if not 0.0 <= v <= 2.0 + 1e-12:
                raise ValueError(f"{name} must lie in [0, 2], got {v}")

    def to_dict(self) -> dict:
        return {
            "pixcorr": self.pixcorr,
            "ssim": self.ssim,
            "alexnet2": self.alexnet2,
            "alexnet5": self.alexnet5,
            "inception": self.inception,
            "clip": self.clip,
            "effnet_dist": self.effnet_dist,
            "swav_dist": self.swav_dist,
            "n_samples": self.n_samples,
            "metadata": self.metadata,
        }

    def save_json(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**d)


def _list_pngs(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")


def _load_feature_pair(name: str, paths) -> tuple[FeatureSet, FeatureSet]:
    recon_path, gt_path = paths
    for p in (recon_path, gt_path):
        if not Path(p).exists():
            raise DataConsistencyError(f"feature file for {name!r} missing: {p}")
    recon = FeatureSet(name, dataio.read_npy(recon_path))
    gt = FeatureSet(name, dataio.read_npy(gt_path))
    return recon, gt


def evaluate_directories(
    recon_dir: str | Path,
    gt_dir: str | Path,
    feature_files: dict,
) -> tuple[MetricReport, list[dict]]:
    """Full battery over paired PNG directories plus per-extractor NPY pairs.

    ``feature_files`` maps every extractor name to a (recon_npy, gt_npy)
    pair. Returns the aggregate report and a per-sample breakdown (one dict
    per sample; excluded feature scores are None).
    """
    recon_dir = Path(recon_dir)
    gt_dir = Path(gt_dir)
    recon_pngs = _list_pngs(recon_dir)
    gt_pngs = _list_pngs(gt_dir)
    if len(recon_pngs) != len(gt_pngs):
        raise DataConsistencyError(
            f"image count mismatch: {len(recon_pngs)} reconstruction(s) vs "
            f"{len(gt_pngs)} ground-truth image(s)"
        )
    if not recon_pngs:
        raise DataConsistencyError(f"no PNG images found in {recon_dir}")
    n = len(recon_pngs)

    missing = [name for name in EXTRACTOR_NAMES if name not in feature_files]
    if missing:
        raise DataConsistencyError(
            f"feature files missing for extractor(s): {', '.join(missing)}"
        )

    sets = {}
    for name in EXTRACTOR_NAMES:
        pair = _load_feature_pair(name, feature_files[name])
        for fs in pair:
            if fs.n_samples != n:
                raise DataConsistencyError(
                    f"{name} features have {fs.n_samples} sample(s) but the "
                    f"image directories have {n}"
                )
        sets[name] = pair

    pix_vals = np.empty(n)
    ssim_vals = np.empty(n)
    for i, (rp, gp) in enumerate(zip(recon_pngs, gt_pngs)):
        recon = ImageRgb.from_png(rp)
        gt = ImageRgb.from_png(gp)
        pix_vals[i] = pixcorr(recon, gt)
        ssim_vals[i] = ssim(recon, gt)

    ident_scores = {
        name: nway_scores(*sets[name]) for name in IDENTIFICATION_EXTRACTORS
    }
    dist_vals = {name: distance_rows(*sets[name]) for name in DISTANCE_EXTRACTORS}

    report = MetricReport(
        pixcorr=float(pix_vals.mean()),
        ssim=float(ssim_vals.mean()),
        alexnet2=float(np.nanmean(ident_scores["alexnet2"])),
        alexnet5=float(np.nanmean(ident_scores["alexnet5"])),
        inception=float(np.nanmean(ident_scores["inception"])),
        clip=float(np.nanmean(ident_scores["clip"])),
        effnet_dist=float(np.nanmean(dist_vals["effnet"])),
        swav_dist=float(np.nanmean(dist_vals["swav"])),
        n_samples=n,
    )

    def cell(v: float):
        return None if np.isnan(v) else float(v)

    rows = []
    for i in range(n):
        row = {
            "index": i,
            "recon_image": recon_pngs[i].name,
            "gt_image": gt_pngs[i].name,
            "pixcorr": float(pix_vals[i]),
            "ssim": float(ssim_vals[i]),
        }
        for name in IDENTIFICATION_EXTRACTORS:
            row[f"{name}_score"] = cell(ident_scores[name][i])
        for name in DISTANCE_EXTRACTORS:
            row[f"{name}_dist"] = cell(dist_vals[name][i])
        rows.append(row)
    return report, rows


def build_report(
    recon_dir: str | Path, gt_dir: str | Path, feature_files: dict
) -> MetricReport:
    """Aggregate-only wrapper around :func:`evaluate_directories`."""
    report, _ = evaluate_directories(recon_dir, gt_dir, feature_files)
    return report
