import json
import math

import numpy as np

TRAINING_TIMESTEPS = 1000
BETA_START = 0.00085
BETA_END = 0.012


def nominal_schedule_doc(total_steps: int) -> dict:
    """Rebuild the scaled-linear schedule table a generation manifest carries."""
    betas = (
        np.linspace(
            math.sqrt(BETA_START), math.sqrt(BETA_END), TRAINING_TIMESTEPS
        )
        ** 2
    )
    alpha_bar_full = np.cumprod(1.0 - betas)
    idx = [
        math.ceil(k * TRAINING_TIMESTEPS / total_steps) - 1
        for k in range(1, total_steps + 1)
    ]
    return {
        "label": "nominal",
        "total_steps": total_steps,
        "training_timesteps": TRAINING_TIMESTEPS,
        "beta_start": BETA_START,
        "beta_end": BETA_END,
        "timesteps": idx,
        "betas": [float(betas[i]) for i in idx],
        "alpha_bar": [1.0] + [float(alpha_bar_full[i]) for i in idx],
    }


def make_generate_doc(
    tmp_path,
    n_samples: int = 0,
    total_steps: int = 50,
    strength: float = 0.75,
    w_vision: float = 0.6,
    w_text: float = 0.4,
    use_vdvae_init: bool = True,
    use_clip_text: bool = True,
    use_clip_vision: bool = True,
    seed: int = 0,
    write_bundles: bool = True,
) -> dict:
    """A schema-valid generate manifest over tmp_path.

    With ``write_bundles`` the referenced bundle files exist (zero-filled
    full-width matrices when n_samples > 0, else bare touched files so
    only path existence holds).
    """
    paths = {"output_images": str(tmp_path / "images")}
    widths = {"vdvae": 91168, "clip_vision": 197376, "clip_text": 59136}
    flags = {
        "vdvae": use_vdvae_init,
        "clip_vision": use_clip_vision,
        "clip_text": use_clip_text,
    }
    for fam, on in flags.items():
        if not on:
            continue
        npy = tmp_path / f"{fam}.npy"
        paths[f"{fam}_bundle"] = str(npy)
        if not write_bundles:
            continue
        if n_samples:
            np.save(npy, np.zeros((n_samples, widths[fam]), dtype=np.float32))
            sidecar = {
                "family": fam,
                "shape": [widths[fam]] if fam == "vdvae" else (
                    [257, 768] if fam == "clip_vision" else [77, 768]
                ),
                "n_samples": n_samples,
                "provenance": {},
            }
            if fam == "vdvae":
                sidecar["layer_table"] = (
                    [16] * 2 + [256] * 4 + [1024] * 8 + [4096] * 16 + [16384]
                )
            npy.with_suffix(".json").write_text(json.dumps(sidecar))
        else:
            npy.touch()
    return {
        "manifest_version": 1,
        "kind": "generate",
        "subject": "test",
        "seed": seed,
        "config_sha256": "0" * 64,
        "paths": paths,
        "guidance": {"w_vision": w_vision, "w_text": w_text, "strength": strength},
        "steps": {
            "total_steps": total_steps,
            "noising_steps": math.floor(total_steps * strength),
        },
        "schedule": nominal_schedule_doc(total_steps),
        "ablation": {
            "use_vdvae_init": use_vdvae_init,
            "use_clip_text": use_clip_text,
            "use_clip_vision": use_clip_vision,
        },
        "init": "vdvae" if use_vdvae_init else "random",
    }
