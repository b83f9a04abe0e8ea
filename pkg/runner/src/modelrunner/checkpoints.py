"""Checkpoint discovery.

All frozen network weights live under one root directory named by the
``MODELRUNNER_CHECKPOINTS`` environment variable. Nothing is ever
downloaded at job time: a missing artifact fails fast with instructions
for fetching it on a networked machine.

Expected layout under the root:

* ``vdvae/code/``: a clone of the reference hierarchical-VAE
  implementation (the runner imports its model classes from here)
* ``vdvae/imagenet64-iter-1600000-model-ema.th``: the 64x64 EMA weights
  named in that repository's README
* ``versatile-diffusion/``: a local snapshot of the
  ``shi-labs/versatile-diffusion`` model in diffusers layout
  (``model_index.json`` plus subfolders); its image/text encoders double
  as the CLIP feature extractors
* ``torch-hub/``: a pre-populated torch hub cache (``TORCH_HOME``)
  holding the metric extractor weights: alexnet, inception_v3,
  efficientnet_b1 from torchvision and the swav resnet50 release
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import CheckpointError

ENV_VAR = "MODELRUNNER_CHECKPOINTS"


@dataclass(frozen=True)
class Artifact:
    name: str
    relpath: str
    is_dir: bool
    instructions: str


REGISTRY = {
    a.name: a
    for a in (
        Artifact(
            "vdvae_code",
            "vdvae/code",
            True,
            "clone https://github.com/openai/vdvae into "
            "$MODELRUNNER_CHECKPOINTS/vdvae/code",
        ),
        Artifact(
            "vdvae_weights",
            "vdvae/imagenet64-iter-1600000-model-ema.th",
            False,
            "download imagenet64-iter-1600000-model-ema.th from the link in "
            "the vdvae repository README into $MODELRUNNER_CHECKPOINTS/vdvae/",
        ),
        Artifact(
            "versatile_diffusion",
            "versatile-diffusion",
            True,
            "on a networked machine run huggingface-cli download "
            "shi-labs/versatile-diffusion --local-dir "
            "$MODELRUNNER_CHECKPOINTS/versatile-diffusion",
        ),
        Artifact(
            "torch_hub",
            "torch-hub",
            True,
            "pre-populate a torch hub cache: with TORCH_HOME="
            "$MODELRUNNER_CHECKPOINTS/torch-hub load torchvision alexnet, "
            "inception_v3, efficientnet_b1 (pretrained) and "
            "facebookresearch/swav resnet50 once on a networked machine",
        ),
    )
}

# artifact names each job kind depends on; generate adds the vdvae pair
# only when the manifest initializes from the decoded initial guess
NEEDS = {
    "extract_vdvae": ("vdvae_code", "vdvae_weights"),
    "extract_clip_v": ("versatile_diffusion",),
    "extract_clip_t": ("versatile_diffusion",),
    "extract_metric_features": ("torch_hub", "versatile_diffusion"),
    "generate": ("versatile_diffusion",),
}
GENERATE_VDVAE_NEEDS = ("vdvae_code", "vdvae_weights")


def needs_for(kind: str, init: str | None = None) -> tuple[str, ...]:
    names = NEEDS[kind]
    if kind == "generate" and init == "vdvae":
        names = names + GENERATE_VDVAE_NEEDS
    return names


def root(env=None) -> Path:
    env = os.environ if env is None else env
    value = env.get(ENV_VAR)
    if not value:
        raise CheckpointError(
            f"{ENV_VAR} is not set; point it at the checkpoint root "
            "directory (see modelrunner.checkpoints for the layout)"
        )
    path = Path(value)
    if not path.is_dir():
        raise CheckpointError(f"{ENV_VAR}={value} is not a directory")
    return path


def resolve(name: str, env=None) -> Path:
    artifact = REGISTRY[name]
    path = root(env) / artifact.relpath
    present = path.is_dir() if artifact.is_dir else path.is_file()
    if not present:
        raise CheckpointError(
            f"checkpoint {name!r} not found at {path}; {artifact.instructions}"
        )
    return path


def missing(names, env=None) -> list[str]:
    """Subset of ``names`` that cannot be resolved (no exception)."""
    out = []
    for name in names:
        try:
            resolve(name, env)
        except CheckpointError:
            out.append(name)
    return out


def require(names, env=None) -> dict:
    """Resolve every name or raise on the first missing one."""
    return {name: resolve(name, env) for name in names}
