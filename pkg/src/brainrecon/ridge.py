"""Closed-form multi-target ridge regression between voxels and latents.

The solver standardizes inputs with training statistics, then solves the
penalized normal equations through one Cholesky factorization shared by all
targets: the primal p x p system when p <= n, the dual n x n Gram system
when p > n. Targets are processed in column chunks so the 100k-target fits
stay within a bounded working set. Gram matrices accumulate in f64 even for
f32 inputs.

Y is always centered with training means; ``standardize_y`` additionally
divides by the per-column std. Because the solution is linear in Y and the
scaling is per-column, predictions are identical either way.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg

from . import dataio
from .errors import CapacityError, DataError, RankDeficiencyError

DEFAULT_TARGET_CHUNK = 4096
# Largest implicit weight-matrix materialization (elements) allowed before
# weight_l1_per_voxel demands explicit chunking.
DEFAULT_MATERIALIZE_BUDGET = 2**28

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring statistics with a floored std."""

    mean: np.ndarray  # (p,) f64
    std: np.ndarray  # (p,) f64, >= floor everywhere
    floor: float = STD_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))
        if np.any(self.std < self.floor):
            raise ValueError("std entries below the configured floor")

    @classmethod
    def fit(cls, X: np.ndarray, scale: bool = True, floor: float = STD_FLOOR) -> "Standardizer":
        """Training statistics of ``X``; ``scale=False`` keeps unit stds."""
        mean = X.mean(axis=0, dtype=np.float64)
        if scale:
            std = np.maximum(X.std(axis=0, dtype=np.float64), floor)
        else:
            std = np.ones(X.shape[1], dtype=np.float64)
        return cls(mean=mean, std=std, floor=floor)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.std + self.mean


@dataclass(frozen=True)
class FitConfig:
    """Fit hyperparameters; the grid drives holdout lambda selection."""

    lambda_grid: tuple[float, ...] = (1.0,)
    holdout_fraction: float = 0.1
    seed: int = 0
    standardize_y: bool = True
    target_chunk: int = DEFAULT_TARGET_CHUNK
    form: str = "auto"  # auto | primal | dual

    def __post_init__(self):
        grid = tuple(float(v) for v in self.lambda_grid)
        if len(grid) == 0:
            raise ValueError("lambda_grid must be non-empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("lambda_grid must be strictly increasing")
        if any(v < 0 for v in grid):
            raise ValueError("lambda values must be >= 0")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.form not in ("auto", "primal", "dual"):
            raise ValueError(f"unknown form {self.form!r}")
        if self.target_chunk < 1:
            raise ValueError("target_chunk must be >= 1")
        object.__setattr__(self, "lambda_grid", grid)


@dataclass
class RidgeModel:
    """Fitted standardizers plus either primal weights or dual coefficients."""

    lam: float
    x_stats: Standardizer
    y_stats: Standardizer
    form: str
    weights: np.ndarray | None = None  # (q, p) f64, primal form
    dual_coefs: np.ndarray | None = None  # (n, q) f64, dual form
    train_x: np.ndarray | None = None  # (n, p) original dtype, dual form
    target_chunk: int = DEFAULT_TARGET_CHUNK
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.form == "primal":
            if self.weights is None or self.dual_coefs is not None:
                raise ValueError("primal form carries weights only")
        elif self.form == "dual":
            if self.dual_coefs is None or self.weights is not None or self.train_x is None:
                raise ValueError("dual form carries dual_coefs plus the training design")
        else:
            raise ValueError(f"unknown form {self.form!r}")

    @property
    def n_features(self) -> int:
        return self.x_stats.mean.shape[0]

    @property
    def n_targets(self) -> int:
        if self.form == "primal":
            return self.weights.shape[0]
        return self.dual_coefs.shape[1]


def _validate_xy(X: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("X and Y must be 2-d matrices")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row mismatch: X has {X.shape[0]}, Y has {Y.shape[0]}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not np.all(np.isfinite(X)):
        raise DataError("X contains NaN or Inf")
    if not np.all(np.isfinite(Y)):
        raise DataError("Y contains NaN or Inf")
    return X, Y


def _factorize(Xs: np.ndarray, lam: float, form: str):
    """Cholesky factor of the penalized normal matrix for one form."""
    if form == "primal":
        G = Xs.T @ Xs
    else:
        G = Xs @ Xs.T
    G.flat[:: G.shape[0] + 1] += lam
    try:
        return scipy.linalg.cho_factor(G, lower=True, overwrite_a=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            f"normal equations singular at lambda={lam}; use lambda > 0"
        ) from exc


def _solve_targets(factor, Xs: np.ndarray, Yc: np.ndarray, form: str, chunk: int) -> np.ndarray:
    """Back-substitute all target columns in chunks; returns B (p,q) or A (n,q)."""
    q = Yc.shape[1]
    rows = Xs.shape[1] if form == "primal" else Xs.shape[0]
    out = np.empty((rows, q), dtype=np.float64)
    for j0 in range(0, q, chunk):
        j1 = min(j0 + chunk, q)
        rhs = Xs.T @ Yc[:, j0:j1] if form == "primal" else Yc[:, j0:j1]
        out[:, j0:j1] = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    return out


def _resolve_form(form: str, n: int, p: int) -> str:
    if form != "auto":
        return form
    return "primal" if p <= n else "dual"


def fit(X: np.ndarray, Y: np.ndarray, cfg: FitConfig = FitConfig()) -> RidgeModel:
    """Fit one ridge model mapping the columns of X to the columns of Y."""
    X, Y = _validate_xy(X, Y)
    n, p = X.shape
    lam = cfg.lambda_grid[0] if len(cfg.lambda_grid) == 1 else select_lambda(X, Y, cfg)

    x_stats = Standardizer.fit(X)
    y_stats = Standardizer.fit(Y, scale=cfg.standardize_y)
    Xs = x_stats.transform(X)
    Yc = y_stats.transform(Y)

    form = _resolve_form(cfg.form, n, p)
    factor = _factorize(Xs, lam, form)
    coefs = _solve_targets(factor, Xs, Yc, form, cfg.target_chunk)
    if form == "primal":
        return RidgeModel(
            lam=lam, x_stats=x_stats, y_stats=y_stats, form="primal",
            weights=coefs.T, target_chunk=cfg.target_chunk,
        )
    return RidgeModel(
        lam=lam, x_stats=x_stats, y_stats=y_stats, form="dual",
        dual_coefs=coefs, train_x=X, target_chunk=cfg.target_chunk,
    )


def predict(model: RidgeModel, X: np.ndarray) -> np.ndarray:
    """Apply the fitted map to new rows; returns an m x q f64 matrix."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d matrix")
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"feature mismatch: model expects {model.n_features} columns, got {X.shape[1]}"
        )
    q = model.n_targets
    if X.shape[0] == 0:
        return np.empty((0, q), dtype=np.float64)
    Xs = model.x_stats.transform(X)
    chunk = model.target_chunk
    raw = np.empty((X.shape[0], q), dtype=np.float64)
    if model.form == "primal":
        for j0 in range(0, q, chunk):
            j1 = min(j0 + chunk, q)
            raw[:, j0:j1] = Xs @ model.weights[j0:j1].T
    else:
        K = Xs @ model.x_stats.transform(model.train_x).T
        for j0 in range(0, q, chunk):
            j1 = min(j0 + chunk, q)
            raw[:, j0:j1] = K @ model.dual_coefs[:, j0:j1]
    return model.y_stats.inverse(raw)


def _holdout_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    n_hold = int(round(n * fraction))
    if n_hold < 2 or n - n_hold < 2:
        raise ValueError(
            f"holdout split of {n} rows at fraction {fraction} leaves fewer than "
            "2 rows on one side"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return perm[n_hold:], perm[:n_hold]


def _mean_holdout_r(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean per-column Pearson r; constant truth columns are excluded."""
    t_std = truth.std(axis=0)
    keep = t_std > 0
    if not np.all(keep):
        warnings.warn(
            f"{int((~keep).sum())} constant holdout target column(s) excluded "
            "from lambda scoring"
        )
    if not np.any(keep):
        warnings.warn("no scorable holdout columns; treating score as 0")
        return 0.0
    p = pred[:, keep] - pred[:, keep].mean(axis=0)
    t = truth[:, keep] - truth[:, keep].mean(axis=0)
    p_norm = np.linalg.norm(p, axis=0)
    t_norm = np.linalg.norm(t, axis=0)
    r = np.zeros(p.shape[1])
    ok = p_norm > 0
    r[ok] = (p[:, ok] * t[:, ok]).sum(axis=0) / (p_norm[ok] * t_norm[ok])
    return float(r.mean())


def select_lambda(X: np.ndarray, Y: np.ndarray, cfg: FitConfig) -> float:
    """Pick the grid lambda maximizing mean holdout Pearson r.

    The split is deterministic from the seed; exact ties resolve toward the
    largest lambda.
    """
    X, Y = _validate_xy(X, Y)
    if len(cfg.lambda_grid) == 1:
        return cfg.lambda_grid[0]
    train_idx, hold_idx = _holdout_split(X.shape[0], cfg.holdout_fraction, cfg.seed)
    X_tr, Y_tr = X[train_idx], Y[train_idx]
    X_ho, Y_ho = X[hold_idx], Y[hold_idx]

    x_stats = Standardizer.fit(X_tr)
    y_stats = Standardizer.fit(Y_tr, scale=cfg.standardize_y)
    Xs = x_stats.transform(X_tr)
    Yc = y_stats.transform(Y_tr)
    Xs_ho = x_stats.transform(X_ho)
    form = _resolve_form(cfg.form, *X_tr.shape)

    best_lam, best_score = None, -np.inf
    for lam in cfg.lambda_grid:
        factor = _factorize(Xs, lam, form)
        coefs = _solve_targets(factor, Xs, Yc, form, cfg.target_chunk)
        if form == "primal":
            raw = Xs_ho @ coefs
        else:
            raw = (Xs_ho @ Xs.T) @ coefs
        pred = y_stats.inverse(raw)
        score = _mean_holdout_r(pred, Y_ho)
        if score >= best_score:
            best_lam, best_score = lam, score
    return best_lam


def weight_l1_per_voxel(
    model: RidgeModel,
    raw_space: bool = False,
    target_chunk: int | None = None,
    budget: int = DEFAULT_MATERIALIZE_BUDGET,
) -> np.ndarray:
    """Per-feature L1 norm of the weight matrix, summed over targets.

    Weights live in standardized space by default; ``raw_space`` divides by
    the per-feature training std. Dual models materialize the weight matrix
    on the fly; if p*q exceeds ``budget``, pass ``target_chunk`` to process
    targets in bounded chunks.
    """
    p = model.n_features
    if model.form == "primal":
        out = np.abs(model.weights).sum(axis=0)
    else:
        q = model.n_targets
        if target_chunk is None:
            if p * q > budget:
                raise CapacityError(
                    f"materializing a {p}x{q} weight matrix exceeds the budget of "
                    f"{budget} elements; pass target_chunk to chunk over targets"
                )
            target_chunk = q
        Xs_t = model.x_stats.transform(model.train_x).T  # (p, n)
        out = np.zeros(p, dtype=np.float64)
        for j0 in range(0, q, target_chunk):
            j1 = min(j0 + target_chunk, q)
            out += np.abs(Xs_t @ model.dual_coefs[:, j0:j1]).sum(axis=1)
    if raw_space:
        out = out / model.x_stats.std
    return out


def save_model(model: RidgeModel, directory: str | Path) -> None:
    """Persist a model as NPY blocks plus a JSON metadata file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dataio.write_npy(model.x_stats.mean, directory / "x_mean.npy")
    dataio.write_npy(model.x_stats.std, directory / "x_std.npy")
    dataio.write_npy(model.y_stats.mean, directory / "y_mean.npy")
    dataio.write_npy(model.y_stats.std, directory / "y_std.npy")
    if model.form == "primal":
        dataio.write_npy(model.weights, directory / "weights.npy")
    else:
        dataio.write_npy(model.dual_coefs, directory / "dual_coefs.npy")
        dataio.write_npy(model.train_x, directory / "train_x.npy")
    meta = {
        "format_version": 1,
        "form": model.form,
        "lambda": model.lam,
        "n_features": model.n_features,
        "n_targets": model.n_targets,
        "std_floor": model.x_stats.floor,
        "target_chunk": model.target_chunk,
        "meta": model.meta,
    }
    with open(directory / "model.json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


def load_model(directory: str | Path) -> RidgeModel:
    """Load a model persisted by :func:`save_model`."""
    directory = Path(directory)
    with open(directory / "model.json") as f:
        meta = json.load(f)
    floor = meta.get("std_floor", STD_FLOOR)
    x_stats = Standardizer(
        dataio.read_npy(directory / "x_mean.npy"),
        dataio.read_npy(directory / "x_std.npy"),
        floor=floor,
    )
    y_stats = Standardizer(
        dataio.read_npy(directory / "y_mean.npy"),
        dataio.read_npy(directory / "y_std.npy"),
        floor=floor,
    )
    kwargs = dict(
        lam=meta["lambda"],
        x_stats=x_stats,
        y_stats=y_stats,
        form=meta["form"],
        target_chunk=meta.get("target_chunk", DEFAULT_TARGET_CHUNK),
        meta=meta.get("meta", {}),
    )
    if meta["form"] == "primal":
        kwargs["weights"] = dataio.read_npy(directory / "weights.npy")
    else:
        kwargs["dual_coefs"] = dataio.read_npy(directory / "dual_coefs.npy")
        kwargs["train_x"] = dataio.read_npy(directory / "train_x.npy")
    return RidgeModel(**kwargs)
