"""Command-line surface for the decoding pipeline.

Subcommands cover the full workflow: ``train`` fits per-family ridge models
from fMRI and latent-feature files, ``predict`` turns held-out fMRI into
latent bundles plus a generation job manifest, ``evaluate`` scores
reconstructed images against ground truth, ``roi-synth`` pushes synthetic
region activations through the decoders, ``analyze-weights`` contrasts
regression-weight percentiles across feature families, and ``schedule``
prints the diffusion schedule table.

Configuration comes from a TOML file with command-line flag overrides;
every run embeds a hash of the resolved configuration in its output
manifests. Heavy network inference (feature extraction, image generation)
is never run here: commands emit versioned JSON job manifests for the
separate model runner.

Exit codes: 0 success, 2 usage or configuration error, 3 data-consistency
error, 4 capacity error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import re
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import dataio, latents, metrics, ridge, roisynth, schedule as sched_mod
from .dataio import RoiMask
from .errors import (
    CapacityError,
    ConfigError,
    DataConsistencyError,
    DataError,
    DegenerateInputError,
    LayoutError,
    NpyFormatError,
    RankDeficiencyError,
)

MANIFEST_VERSION = 1

_DEFAULTS = {
    "subject": "subject",
    "seed": 0,
    "paths": {},
    "ridge": {
        "lambda_grid": [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0],
        "holdout_fraction": 0.1,
        "standardize_y": True,
        "target_chunk": ridge.DEFAULT_TARGET_CHUNK,
        "form": "auto",
    },
    "guidance": {
        "w_vision": sched_mod.GUIDANCE_VISION,
        "w_text": sched_mod.GUIDANCE_TEXT,
        "strength": sched_mod.DEFAULT_STRENGTH,
    },
    "schedule": {"total_steps": sched_mod.DEFAULT_TOTAL_STEPS},
    "ablation": {
        "use_vdvae_init": True,
        "use_clip_text": True,
        "use_clip_vision": True,
    },
}

_PATH_ROLES = (
    "train_fmri",
    "test_fmri",
    "latents_dir",
    "models_dir",
    "output_dir",
    "catalog",
    "general_mask",
    "recon_dir",
    "gt_dir",
    "features_dir",
)


def _merge_toml(cfg: dict, doc: dict, source: str) -> None:
    sections = {"run", "paths", "ridge", "guidance", "schedule", "ablation"}
    for section, body in doc.items():
        if section not in sections:
            raise ConfigError(f"{source}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: [{section}] must be a table")
        if section == "run":
            for key, value in body.items():
                if key not in ("subject", "seed"):
                    raise ConfigError(f"{source}: unknown key run.{key}")
                cfg[key] = value
        elif section == "paths":
            for key, value in body.items():
                if key not in _PATH_ROLES:
                    raise ConfigError(f"{source}: unknown path role {key!r}")
                cfg["paths"][key] = str(value)
        else:
            for key, value in body.items():
                if key not in cfg[section]:
                    raise ConfigError(f"{source}: unknown key {section}.{key}")
                cfg[section][key] = value


def _apply_flag_overrides(cfg: dict, args: argparse.Namespace) -> None:
    def take(attr, section, key):
        value = getattr(args, attr, None)
        if value is not None:
            if section is None:
                cfg[key] = value
            else:
                cfg[section][key] = value

    take("subject", None, "subject")
    take("seed", None, "seed")
    for role in _PATH_ROLES:
        value = getattr(args, role, None)
        if value is not None:
            cfg["paths"][role] = str(value)
    take("lambda_grid", "ridge", "lambda_grid")
    take("holdout_fraction", "ridge", "holdout_fraction")
    take("standardize_y", "ridge", "standardize_y")
    take("target_chunk", "ridge", "target_chunk")
    take("form", "ridge", "form")
    take("w_vision", "guidance", "w_vision")
    take("w_text", "guidance", "w_text")
    take("strength", "guidance", "strength")
    take("total_steps", "schedule", "total_steps")
    take("use_vdvae_init", "ablation", "use_vdvae_init")
    take("use_clip_text", "ablation", "use_clip_text")
    take("use_clip_vision", "ablation", "use_clip_vision")


def _load_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with open(path, "rb") as f:
            try:
                doc = tomllib.load(f)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        _merge_toml(cfg, doc, str(path))
    _apply_flag_overrides(cfg, args)
    cfg["ridge"]["lambda_grid"] = [float(v) for v in cfg["ridge"]["lambda_grid"]]
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _require_path(cfg: dict, role: str) -> Path:
    value = cfg["paths"].get(role)
    if not value:
        raise ConfigError(f"required path {role!r} is not configured")
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"path {role!r} does not exist: {path}")
    return path


def _output_dir(cfg: dict) -> Path:
    value = cfg["paths"].get("output_dir")
    if not value:
        raise ConfigError("required path 'output_dir' is not configured")
    path = Path(value)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fit_config(cfg: dict) -> ridge.FitConfig:
    r = cfg["ridge"]
    try:
        return ridge.FitConfig(
            lambda_grid=tuple(r["lambda_grid"]),
            holdout_fraction=r["holdout_fraction"],
            seed=cfg["seed"],
            standardize_y=r["standardize_y"],
            target_chunk=r["target_chunk"],
            form=r["form"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_guidance(cfg: dict) -> sched_mod.GuidanceConfig:
    ab = cfg["ablation"]
    if not ab["use_clip_vision"] and not ab["use_clip_text"]:
        raise ConfigError(
            "generation needs at least one of use_clip_vision/use_clip_text"
        )
    g = cfg["guidance"]
    wv, wt = g["w_vision"], g["w_text"]
    if not ab["use_clip_text"]:
        wv, wt = 1.0, 0.0
    elif not ab["use_clip_vision"]:
        wv, wt = 0.0, 1.0
    return sched_mod.GuidanceConfig(
        w_vision=wv, w_text=wt, strength=g["strength"]
    )


def _enabled_families(cfg: dict) -> list:
    ab = cfg["ablation"]
    pairs = (
        ("vdvae", ab["use_vdvae_init"]),
        ("clip_vision", ab["use_clip_vision"]),
        ("clip_text", ab["use_clip_text"]),
    )
    return [fam for fam, on in pairs if on]


def _schedule_doc(sched: sched_mod.DiffusionSchedule) -> dict:
    return {
        "label": "nominal",
        "total_steps": sched.total_steps,
        "training_timesteps": sched.training_timesteps,
        "beta_start": sched.beta_start,
        "beta_end": sched.beta_end,
        "timesteps": sched.timesteps.tolist(),
        "betas": sched.betas.tolist(),
        "alpha_bar": sched.alpha_bar.tolist(),
    }


def _write_generation_manifest(
    path: Path,
    cfg: dict,
    paths: dict,
    guidance: sched_mod.GuidanceConfig,
    sched: sched_mod.DiffusionSchedule,
    extra: dict | None = None,
) -> None:
    ab = cfg["ablation"]
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "kind": "generate",
        "subject": cfg["subject"],
        "seed": cfg["seed"],
        "config_sha256": config_hash(cfg),
        "paths": {role: str(p) for role, p in paths.items()},
        "guidance": {
            "w_vision": guidance.w_vision,
            "w_text": guidance.w_text,
            "strength": guidance.strength,
        },
        "steps": {
            "total_steps": sched.total_steps,
            "noising_steps": sched_mod.steps_from_strength(
                sched.total_steps, guidance.strength
            ),
        },
        "schedule": _schedule_doc(sched),
        "ablation": dict(ab),
        "init": "vdvae" if ab["use_vdvae_init"] else "random",
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def _load_model_for(models_dir: Path, family: str) -> ridge.RidgeModel:
    model_dir = models_dir / family
    if not (model_dir / "model.json").exists():
        raise ConfigError(f"no trained model for family {family!r} in {models_dir}")
    return ridge.load_model(model_dir)


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", label).strip("-")


def _save_prediction(
    family: str, values: np.ndarray, npy_path: Path, provenance: dict
) -> None:
    """Persist a latent matrix as NPY plus a JSON sidecar.

    Canonical-width matrices go through the latents bundle writer (which
    records the full layout); other widths, such as downsized test fixtures,
    keep the same sidecar schema with the observed shape.
    """
    values = np.asarray(values, dtype=np.float32)
    if values.ndim == 2 and values.shape[1] == latents.FLAT_LENGTHS[family]:
        bundle = latents.LatentBundle(latents.layout_for(family), values)
        latents.save_bundle(bundle, npy_path, provenance=provenance)
        return
    dataio.write_npy(values, npy_path)
    sidecar = {
        "family": family,
        "shape": [int(values.shape[1])],
        "n_samples": int(values.shape[0]),
        "provenance": provenance,
    }
    with open(npy_path.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def _load_latent_matrix(path: Path, family: str) -> np.ndarray:
    """Read a latent matrix, cross-checking any sidecar's family tag."""
    values = dataio.read_npy(path)
    if values.ndim != 2:
        raise DataConsistencyError(
            f"{path} must hold a 2-d samples x features matrix, got shape "
            f"{values.shape}"
        )
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        tagged = json.loads(sidecar.read_text()).get("family")
        if tagged is not None and tagged != family:
            raise DataConsistencyError(
                f"{path} holds family {tagged!r}, expected {family!r}"
            )
    return values


def cmd_train(cfg: dict, args: argparse.Namespace) -> int:
    fmri_path = _require_path(cfg, "train_fmri")
    latents_dir = _require_path(cfg, "latents_dir")
    models_value = cfg["paths"].get("models_dir")
    if not models_value:
        raise ConfigError("required path 'models_dir' is not configured")
    models_dir = Path(models_value)

    families = args.families.split(",") if args.families else list(latents.FAMILIES)
    for fam in families:
        if fam not in latents.FAMILIES:
            raise ConfigError(
                f"unknown family {fam!r}; expected {', '.join(latents.FAMILIES)}"
            )

    X = dataio.read_npy(fmri_path)
    if X.ndim != 2:
        raise DataConsistencyError(f"fMRI matrix must be 2-d, got shape {X.shape}")

    # Load and shape-check every latent matrix before fitting anything.
    targets = {}
    for fam in families:
        bundle_path = latents_dir / f"{fam}.npy"
        if not bundle_path.exists():
            raise ConfigError(f"latent file missing: {bundle_path}")
        Y = _load_latent_matrix(bundle_path, fam)
        if Y.shape[0] != X.shape[0]:
            raise DataConsistencyError(
                f"{fam} latents have {Y.shape[0]} rows but the fMRI "
                f"matrix has {X.shape[0]}"
            )
        targets[fam] = Y

    fit_cfg = _fit_config(cfg)
    for fam, Y in targets.items():
        model = ridge.fit(X, Y, fit_cfg)
        model.meta = {
            "family": fam,
            "subject": cfg["subject"],
            "train_mean_row_norm": latents.row_norm_mean(Y),
            "config_sha256": config_hash(cfg),
        }
        ridge.save_model(model, models_dir / fam)
        print(
            f"trained {fam}: {model.form} form, lambda={model.lam:g}, "
            f"{model.n_features} voxels -> {model.n_targets} targets"
        )
    return 0


def cmd_predict(cfg: dict, args: argparse.Namespace) -> int:
    out_dir = _output_dir(cfg)
    guidance = _resolve_guidance(cfg)
    sched = sched_mod.DiffusionSchedule.nominal(cfg["schedule"]["total_steps"])
    families = _enabled_families(cfg)

    manifest_paths = {}
    if args.average_subjects:
        source_dirs = [Path(d) for d in args.average_subjects]
        for d in source_dirs:
            if not d.exists():
                raise ConfigError(f"prediction directory not found: {d}")
        for fam in families:
            per_subject = []
            for d in source_dirs:
                bundle_path = d / f"{fam}.npy"
                if not bundle_path.exists():
                    raise ConfigError(f"latent file missing: {bundle_path}")
                per_subject.append(_load_latent_matrix(bundle_path, fam))
            shapes = {m.shape for m in per_subject}
            if len(shapes) > 1:
                raise DataConsistencyError(
                    f"{fam} bundles disagree on shape: {sorted(shapes)}"
                )
            stacked = np.stack([m.astype(np.float64) for m in per_subject])
            averaged = stacked.mean(axis=0).astype(np.float32)
            bundle_path = out_dir / f"{fam}.npy"
            _save_prediction(
                fam,
                averaged,
                bundle_path,
                provenance={
                    "source": "average_subjects",
                    "inputs": [str(d) for d in source_dirs],
                },
            )
            manifest_paths[f"{fam}_bundle"] = bundle_path
            print(f"averaged {fam} over {len(source_dirs)} subjects")
    else:
        fmri_path = _require_path(cfg, "test_fmri")
        models_dir = _require_path(cfg, "models_dir")
        X = dataio.read_npy(fmri_path)
        if X.ndim != 2:
            raise DataConsistencyError(
                f"fMRI matrix must be 2-d, got shape {X.shape}"
            )
        for fam in families:
            model = _load_model_for(models_dir, fam)
            if model.n_features != X.shape[1]:
                raise DataConsistencyError(
                    f"{fam} model expects {model.n_features} voxels but the "
                    f"fMRI matrix has {X.shape[1]}"
                )
            pred = ridge.predict(model, X)
            bundle_path = out_dir / f"{fam}.npy"
            _save_prediction(
                fam,
                pred,
                bundle_path,
                provenance={
                    "source": "predict",
                    "subject": cfg["subject"],
                    "lambda": model.lam,
                },
            )
            manifest_paths[f"{fam}_bundle"] = bundle_path
            print(f"predicted {fam}: {pred.shape[0]} samples")

    manifest_paths["output_images"] = out_dir / "images"
    manifest_path = out_dir / "manifest.json"
    extra = {}
    if args.average_subjects:
        extra["averaged_from"] = [str(d) for d in args.average_subjects]
    _write_generation_manifest(
        manifest_path, cfg, manifest_paths, guidance, sched, extra=extra
    )
    print(f"wrote {manifest_path}")
    return 0


def cmd_evaluate(cfg: dict, args: argparse.Namespace) -> int:
    recon_dir = _require_path(cfg, "recon_dir")
    gt_dir = _require_path(cfg, "gt_dir")
    features_dir = _require_path(cfg, "features_dir")
    out_dir = _output_dir(cfg)

    feature_files = {
        name: (
            features_dir / f"{name}_recon.npy",
            features_dir / f"{name}_gt.npy",
        )
        for name in metrics.EXTRACTOR_NAMES
    }
    report, rows = metrics.evaluate_directories(recon_dir, gt_dir, feature_files)

    report_path = out_dir / "report.json"
    report.save_json(report_path)
    csv_path = out_dir / "per_sample.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})

    for name in ("pixcorr", "ssim", "alexnet2", "alexnet5", "inception", "clip",
                 "effnet_dist", "swav_dist"):
        print(f"{name}: {getattr(report, name):.4f}")
    print(f"wrote {report_path} and {csv_path}")
    return 0


def cmd_roi_synth(cfg: dict, args: argparse.Namespace) -> int:
    catalog = roisynth.load_catalog(_require_path(cfg, "catalog"))
    general_indices = dataio.read_npy(_require_path(cfg, "general_mask"))
    general = RoiMask.from_indices(
        "general", general_indices, catalog.universe_size
    )
    models_dir = _require_path(cfg, "models_dir")
    out_dir = _output_dir(cfg)
    guidance = _resolve_guidance(cfg)
    sched = sched_mod.DiffusionSchedule.nominal(cfg["schedule"]["total_steps"])
    families = _enabled_families(cfg)

    models = {}
    for fam in families:
        model = _load_model_for(models_dir, fam)
        if model.n_features != general.size:
            raise DataConsistencyError(
                f"{fam} model expects {model.n_features} voxels but the "
                f"general mask has {general.size}"
            )
        models[fam] = model

    if args.eccentricity:
        try:
            targets = catalog.eccentricity_bands().items()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        if not args.roi:
            raise ConfigError("pass --roi NAME (repeatable) or --eccentricity")
        try:
            targets = [(name, catalog.resolve(name)) for name in args.roi]
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from exc

    for label, roi in targets:
        roi_dir = out_dir / _slug(label)
        roi_dir.mkdir(parents=True, exist_ok=True)
        pattern = roisynth.synth_pattern(roi, general)
        pattern_path = roi_dir / "pattern.npy"
        dataio.write_npy(pattern, pattern_path)
        manifest_paths = {
            "pattern": pattern_path,
            "output_images": roi_dir / "images",
        }
        for fam, model in models.items():
            pred = ridge.predict(model, pattern[None, :])
            target_norm = model.meta.get("train_mean_row_norm")
            if target_norm is None:
                raise ConfigError(
                    f"model for {fam!r} lacks train_mean_row_norm metadata; "
                    "retrain with this toolkit's train command"
                )
            scaled = latents.renormalize_rows(pred, float(target_norm))
            bundle_path = roi_dir / f"{fam}.npy"
            _save_prediction(
                fam,
                scaled,
                bundle_path,
                provenance={"source": "roi_synth", "roi": label},
            )
            manifest_paths[f"{fam}_bundle"] = bundle_path
        _write_generation_manifest(
            roi_dir / "manifest.json",
            cfg,
            manifest_paths,
            guidance,
            sched,
            extra={"roi": label, "pattern_support": int(pattern.sum())},
        )
        print(f"{label}: support {int(pattern.sum())} of {general.size} voxels")
    return 0


def cmd_analyze_weights(cfg: dict, args: argparse.Namespace) -> int:
    catalog = roisynth.load_catalog(_require_path(cfg, "catalog"))
    general_indices = dataio.read_npy(_require_path(cfg, "general_mask"))
    general = RoiMask.from_indices(
        "general", general_indices, catalog.universe_size
    )
    model_dirs = [Path(d) for d in (args.models_dirs or [])]
    if not model_dirs:
        model_dirs = [_require_path(cfg, "models_dir")]
    roi_names = args.roi or catalog.names()

    needed = (roisynth.BASELINE_FAMILY, *roisynth.COMPARED_FAMILIES)
    per_subject = {}
    for d in model_dirs:
        if not d.exists():
            raise ConfigError(f"models directory not found: {d}")
        models = {fam: _load_model_for(d, fam) for fam in needed}
        subject = models[needed[0]].meta.get("subject") or d.name
        try:
            diffs = roisynth.weight_percentile_analysis(
                models, catalog, roi_names, general
            )
        except KeyError as exc:
            raise ConfigError(exc.args[0]) from exc
        per_subject[subject] = diffs

    rows = []
    for subject, diffs in per_subject.items():
        for roi_name, by_family in diffs.items():
            for fam, diff in by_family.items():
                rows.append((subject, roi_name, fam, diff))

    subjects = list(per_subject)
    if len(subjects) >= 2:
        # Summarize only cells present for every subject.
        cells = [
            (roi_name, fam)
            for roi_name, by_family in per_subject[subjects[0]].items()
            for fam in by_family
            if all(roi_name in per_subject[s] for s in subjects)
        ]
        if cells:
            matrix = np.array(
                [[per_subject[s][r][f] for r, f in cells] for s in subjects]
            )
            mean, sem = roisynth.sem_across_subjects(matrix)
            for (roi_name, fam), m, e in zip(cells, mean, sem):
                rows.append(("mean", roi_name, fam, float(m)))
                rows.append(("sem", roi_name, fam, float(e)))

    out_path = Path(args.output) if args.output else _output_dir(cfg) / "weights.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["subject", "roi", "family", "difference"])
        writer.writerows(rows)
    print(f"wrote {out_path} ({len(rows)} rows)")
    return 0


def cmd_schedule(cfg: dict, args: argparse.Namespace) -> int:
    sched = sched_mod.DiffusionSchedule.nominal(cfg["schedule"]["total_steps"])
    text = sched_mod.format_schedule_csv(sched)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--subject", help="subject label for outputs")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--output-dir", dest="output_dir", help="output directory")


def _add_ablation(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--no-vdvae-init", dest="use_vdvae_init", action="store_false",
        default=None, help="start generation from random latents",
    )
    p.add_argument(
        "--no-clip-text", dest="use_clip_text", action="store_false",
        default=None, help="drop the text-conditioning pathway",
    )
    p.add_argument(
        "--no-clip-vision", dest="use_clip_vision", action="store_false",
        default=None, help="drop the vision-conditioning pathway",
    )


def _add_guidance(p: argparse.ArgumentParser) -> None:
    p.add_argument("--w-vision", dest="w_vision", type=float)
    p.add_argument("--w-text", dest="w_text", type=float)
    p.add_argument("--strength", type=float, help="image-to-image strength in [0, 1]")
    p.add_argument("--total-steps", dest="total_steps", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brainrecon",
        description="Decode visual stimuli from fMRI: train latent regressors, "
        "emit generation manifests, and score reconstructions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit per-family ridge models")
    _add_common(p)
    p.add_argument("--train-fmri", dest="train_fmri", help="training fMRI NPY")
    p.add_argument("--latents-dir", dest="latents_dir", help="training latent bundles")
    p.add_argument("--models-dir", dest="models_dir", help="model output directory")
    p.add_argument(
        "--families", help="comma list of vdvae,clip_vision,clip_text (default all)"
    )
    p.add_argument(
        "--lambda-grid", dest="lambda_grid",
        type=lambda s: [float(v) for v in s.split(",")],
        help="comma list of ridge penalties",
    )
    p.add_argument("--holdout-fraction", dest="holdout_fraction", type=float)
    p.add_argument(
        "--no-standardize-y", dest="standardize_y", action="store_false",
        default=None, help="center targets without scaling",
    )
    p.add_argument("--target-chunk", dest="target_chunk", type=int)
    p.add_argument("--form", choices=("auto", "primal", "dual"))
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="predict latent bundles and emit a manifest")
    _add_common(p)
    p.add_argument("--test-fmri", dest="test_fmri", help="held-out fMRI NPY")
    p.add_argument("--models-dir", dest="models_dir", help="trained model directory")
    p.add_argument(
        "--average-subjects", dest="average_subjects", nargs="+", metavar="DIR",
        help="average existing prediction directories instead of predicting",
    )
    _add_guidance(p)
    _add_ablation(p)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("evaluate", help="score reconstructions against ground truth")
    _add_common(p)
    p.add_argument("--recon-dir", dest="recon_dir", help="reconstructed PNG directory")
    p.add_argument("--gt-dir", dest="gt_dir", help="ground-truth PNG directory")
    p.add_argument(
        "--features-dir", dest="features_dir",
        help="directory of {extractor}_recon.npy / {extractor}_gt.npy files",
    )
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("roi-synth", help="decode synthetic region activations")
    _add_common(p)
    p.add_argument("--catalog", help="ROI catalog JSON")
    p.add_argument("--general-mask", dest="general_mask", help="voxel-selection NPY")
    p.add_argument("--models-dir", dest="models_dir", help="trained model directory")
    p.add_argument("--roi", action="append", help="ROI name (repeatable)")
    p.add_argument(
        "--eccentricity", action="store_true",
        help="run the five eccentricity bands in order",
    )
    _add_guidance(p)
    _add_ablation(p)
    p.set_defaults(handler=cmd_roi_synth)

    p = sub.add_parser(
        "analyze-weights", help="weight-percentile contrasts per region"
    )
    _add_common(p)
    p.add_argument("--catalog", help="ROI catalog JSON")
    p.add_argument("--general-mask", dest="general_mask", help="voxel-selection NPY")
    p.add_argument(
        "--models-dir", dest="models_dirs", action="append", metavar="DIR",
        help="trained model directory, one per subject (repeatable)",
    )
    p.add_argument("--roi", action="append", help="ROI name (repeatable)")
    p.add_argument("--output", help="output CSV path")
    p.set_defaults(handler=cmd_analyze_weights)

    p = sub.add_parser("schedule", help="print the diffusion schedule table")
    _add_common(p)
    p.add_argument("--total-steps", dest="total_steps", type=int)
    p.add_argument("--output", help="write CSV here instead of stdout")
    p.set_defaults(handler=cmd_schedule)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        return args.handler(cfg, args)
    except (ConfigError, RankDeficiencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        DataConsistencyError,
        DataError,
        NpyFormatError,
        LayoutError,
        DegenerateInputError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
