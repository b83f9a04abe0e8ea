"""Job manifest schema (version 1) and validation.

A manifest is a JSON object naming the job kind, every path the job may
touch, and, for generation jobs, the guidance configuration, the step
counts, and the full noise-schedule table. Generation manifests are
emitted by the decoding toolkit's ``predict`` and ``roi-synth`` commands;
extraction manifests are written by hand or by wrapper scripts.

Validation is strict about the fields the runner acts on and tolerant of
extra provenance fields (subject label, config hash, ROI name and so on),
which pass through untouched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError

SCHEMA_VERSION = 1

KINDS = (
    "extract_vdvae",
    "extract_clip_v",
    "extract_clip_t",
    "generate",
    "extract_metric_features",
)

# path roles per kind: (required inputs that must exist, outputs)
_INPUT_ROLES = {
    "extract_vdvae": ("images_dir",),
    "extract_clip_v": ("images_dir",),
    "extract_clip_t": ("captions",),
    "extract_metric_features": ("recon_dir", "gt_dir"),
    "generate": (),  # bundle inputs depend on the ablation flags, see below
}
_OUTPUT_ROLES = {
    "extract_vdvae": ("output_bundle",),
    "extract_clip_v": ("output_bundle",),
    "extract_clip_t": ("output_bundle",),
    "extract_metric_features": ("output_dir",),
    "generate": ("output_images",),
}

GUIDANCE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class JobManifest:
    kind: str
    seed: int
    paths: dict  # role -> Path, inputs verified to exist
    guidance: dict | None = None  # w_vision, w_text, strength
    steps: dict | None = None  # total_steps, noising_steps
    schedule: dict | None = None  # betas / alpha_bar / timesteps table
    ablation: dict = field(default_factory=dict)
    init: str | None = None  # "vdvae" | "random", generation only
    raw: dict = field(default_factory=dict)


def _require(doc: dict, key: str, kind_msg: str):
    if key not in doc:
        raise ManifestError(f"{kind_msg}: missing required field {key!r}")
    return doc[key]


def _check_number(value, name: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ManifestError(f"{name} must be a number, got {value!r}")
    return float(value)


def _validate_guidance(doc: dict) -> dict:
    g = _require(doc, "guidance", "generate manifest")
    if not isinstance(g, dict):
        raise ManifestError("guidance must be an object")
    wv = _check_number(g.get("w_vision"), "guidance.w_vision")
    wt = _check_number(g.get("w_text"), "guidance.w_text")
    strength = _check_number(g.get("strength"), "guidance.strength")
    if wv < 0 or wt < 0:
        raise ManifestError(f"guidance weights must be >= 0, got {wv}/{wt}")
    if abs((wv + wt) - 1.0) > GUIDANCE_SUM_TOL:
        raise ManifestError(
            f"guidance weights must sum to 1, got {wv} + {wt} = {wv + wt}"
        )
    if not 0.0 <= strength <= 1.0:
        raise ManifestError(f"strength must lie in [0, 1], got {strength}")
    return {"w_vision": wv, "w_text": wt, "strength": strength}


def _validate_schedule(doc: dict, steps: dict) -> dict:
    sched = _require(doc, "schedule", "generate manifest")
    if not isinstance(sched, dict):
        raise ManifestError("schedule must be an object")
    total = steps["total_steps"]
    for key in ("training_timesteps", "beta_start", "beta_end",
                "timesteps", "betas", "alpha_bar"):
        if key not in sched:
            raise ManifestError(f"schedule: missing field {key!r}")
    timesteps = sched["timesteps"]
    betas = sched["betas"]
    alpha_bar = sched["alpha_bar"]
    if len(timesteps) != total or len(betas) != total:
        raise ManifestError(
            f"schedule table length mismatch: {len(timesteps)} timesteps / "
            f"{len(betas)} betas for total_steps {total}"
        )
    if len(alpha_bar) != total + 1:
        raise ManifestError(
            f"alpha_bar must have total_steps + 1 entries, got {len(alpha_bar)}"
        )
    if alpha_bar[0] != 1.0:
        raise ManifestError(f"alpha_bar[0] must be 1.0, got {alpha_bar[0]}")
    if any(b >= a for a, b in zip(alpha_bar, alpha_bar[1:])):
        raise ManifestError("alpha_bar must be strictly decreasing")
    if any(t1 <= t0 for t0, t1 in zip(timesteps, timesteps[1:])):
        raise ManifestError("schedule timesteps must be strictly increasing")
    if timesteps and timesteps[-1] >= sched["training_timesteps"]:
        raise ManifestError(
            f"timestep {timesteps[-1]} outside the training range "
            f"[0, {sched['training_timesteps']})"
        )
    return sched


def _validate_steps(doc: dict, guidance: dict) -> dict:
    steps = _require(doc, "steps", "generate manifest")
    if not isinstance(steps, dict):
        raise ManifestError("steps must be an object")
    total = steps.get("total_steps")
    noising = steps.get("noising_steps")
    if not isinstance(total, int) or total < 1:
        raise ManifestError(f"steps.total_steps must be a positive int, got {total!r}")
    if not isinstance(noising, int) or noising < 0:
        raise ManifestError(
            f"steps.noising_steps must be a non-negative int, got {noising!r}"
        )
    expected = math.floor(total * guidance["strength"])
    if noising != expected:
        raise ManifestError(
            f"steps.noising_steps is {noising} but strength "
            f"{guidance['strength']} over {total} steps gives {expected}"
        )
    return {"total_steps": total, "noising_steps": noising}


def _validate_generate(doc: dict, paths: dict) -> dict:
    ab = _require(doc, "ablation", "generate manifest")
    for flag in ("use_vdvae_init", "use_clip_text", "use_clip_vision"):
        if not isinstance(ab.get(flag), bool):
            raise ManifestError(f"ablation.{flag} must be a boolean")
    if not ab["use_clip_text"] and not ab["use_clip_vision"]:
        raise ManifestError(
            "generation needs at least one of use_clip_vision/use_clip_text"
        )
    init = doc.get("init")
    expected_init = "vdvae" if ab["use_vdvae_init"] else "random"
    if init != expected_init:
        raise ManifestError(
            f"init is {init!r} but ablation.use_vdvae_init implies "
            f"{expected_init!r}"
        )
    needed = []
    if ab["use_vdvae_init"]:
        needed.append("vdvae_bundle")
    if ab["use_clip_vision"]:
        needed.append("clip_vision_bundle")
    if ab["use_clip_text"]:
        needed.append("clip_text_bundle")
    for role in needed:
        if role not in paths:
            raise ManifestError(f"generate manifest: missing path role {role!r}")
        if not paths[role].exists():
            raise ManifestError(f"input path does not exist: {paths[role]}")
    return ab


def validate(doc: dict) -> JobManifest:
    """Check a parsed manifest document against the schema."""
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")
    version = doc.get("manifest_version")
    if version != SCHEMA_VERSION:
        raise ManifestError(
            f"unsupported manifest_version {version!r}, runner speaks "
            f"{SCHEMA_VERSION}"
        )
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ManifestError(
            f"unknown job kind {kind!r}; known: {', '.join(KINDS)}"
        )
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ManifestError(f"seed must be a non-negative int, got {seed!r}")

    raw_paths = _require(doc, "paths", f"{kind} manifest")
    if not isinstance(raw_paths, dict):
        raise ManifestError("paths must be an object of role -> path")
    paths = {}
    for role, value in raw_paths.items():
        if not isinstance(value, str) or not value:
            raise ManifestError(f"path role {role!r} must be a non-empty string")
        paths[role] = Path(value)

    for role in _INPUT_ROLES[kind]:
        if role not in paths:
            raise ManifestError(f"{kind} manifest: missing path role {role!r}")
        if not paths[role].exists():
            raise ManifestError(f"input path does not exist: {paths[role]}")
    for role in _OUTPUT_ROLES[kind]:
        if role not in paths:
            raise ManifestError(f"{kind} manifest: missing path role {role!r}")

    guidance = steps = schedule = None
    ablation: dict = {}
    init = None
    if kind == "generate":
        guidance = _validate_guidance(doc)
        steps = _validate_steps(doc, guidance)
        schedule = _validate_schedule(doc, steps)
        ablation = _validate_generate(doc, paths)
        init = doc["init"]

    return JobManifest(
        kind=kind,
        seed=seed,
        paths=paths,
        guidance=guidance,
        steps=steps,
        schedule=schedule,
        ablation=dict(ablation),
        init=init,
        raw=doc,
    )


def load(path: str | Path) -> JobManifest:
    """Read and validate a manifest file."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    return validate(doc)
