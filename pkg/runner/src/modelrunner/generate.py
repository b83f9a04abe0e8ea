"""Dual-guided image-to-image generation job.

Per sample: decode the predicted hierarchical-VAE latents into a 64x64
initial guess, upsample to 512x512 (bilinear; recorded in the output
metadata), encode into the autoencoder latent space, forward-noise for
the manifest's noising step count, then denoise under joint image/text
guidance built from the predicted embedding bundles. With strength 0 the
loop is empty and the output is exactly the decoded initial guess.

Determinism: the manifest seed fixes everything. Each sample uses its own
generator seeded ``seed + index`` so results do not depend on batching,
and the deterministic sampler variant is used (no per-step noise).

Conditioning convention: the context is the caption tokens (77) followed
by the image tokens (257); the dual attention blocks weight the text
branch by ``mix_ratio``, so ``mix_ratio = w_text``. Classifier-free
guidance uses an empty caption and a flat gray image as the
unconditional pair, at a fixed scale recorded in the metadata.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import bundles, checkpoints, extract
from .errors import DataError
from .manifest import JobManifest
from .progress import Progress

GUIDANCE_SCALE = 7.5
SCHEDULE_CHECK_TOL = 1e-5
OUTPUT_SIZE = 512


def _load_pipeline(env=None):
    vd = checkpoints.resolve("versatile_diffusion", env)
    import torch
    from diffusers import VersatileDiffusionDualGuidedPipeline

    pipe = VersatileDiffusionDualGuidedPipeline.from_pretrained(
        vd, torch_dtype=torch.float32
    )
    device = "cuda" if torch.cuda.is_available() else "cpu"
    return pipe.to(device), device


def _build_scheduler(schedule: dict, total_steps: int):
    """Deterministic sampler driven by the manifest's schedule table.

    The sampler is rebuilt from beta_start/beta_end and then cross-checked
    against the manifest's alpha_bar column, so a manifest produced with a
    different beta convention is rejected instead of silently drifting.
    """
    import torch
    from diffusers import DDIMScheduler

    sched = DDIMScheduler(
        num_train_timesteps=int(schedule["training_timesteps"]),
        beta_start=float(schedule["beta_start"]),
        beta_end=float(schedule["beta_end"]),
        beta_schedule="scaled_linear",
        clip_sample=False,
        set_alpha_to_one=True,
        steps_offset=0,
    )
    sched.set_timesteps(total_steps)
    timesteps = [int(t) for t in schedule["timesteps"]]
    alpha_bar = schedule["alpha_bar"]
    for k, t in enumerate(timesteps, start=1):
        have = float(sched.alphas_cumprod[t])
        want = float(alpha_bar[k])
        if abs(have - want) > SCHEDULE_CHECK_TOL:
            raise DataError(
                f"manifest alpha_bar[{k}]={want} disagrees with the "
                f"scaled-linear schedule at timestep {t} ({have})"
            )
    sched.timesteps = torch.tensor(sorted(timesteps, reverse=True), dtype=torch.long)
    return sched


def _read_bundles(m: JobManifest) -> tuple[int, dict]:
    """Load every bundle the ablation flags call for; check row counts."""
    loaded = {}
    if m.ablation["use_vdvae_init"]:
        loaded["vdvae"] = bundles.read_bundle(m.paths["vdvae_bundle"])
    if m.ablation["use_clip_vision"]:
        loaded["clip_vision"] = bundles.read_bundle(m.paths["clip_vision_bundle"])
    if m.ablation["use_clip_text"]:
        loaded["clip_text"] = bundles.read_bundle(m.paths["clip_text_bundle"])
    counts = {fam: v.shape[0] for fam, (v, _) in loaded.items()}
    if len(set(counts.values())) > 1:
        raise DataError(f"bundles disagree on sample count: {counts}")
    n = next(iter(counts.values()))
    return n, loaded


def _uncond_context(pipe):
    """(text, image) unconditional token embeddings, batch of one."""
    import torch

    tokens = pipe.tokenizer(
        [""],
        padding="max_length",
        max_length=pipe.tokenizer.model_max_length,
        truncation=True,
        return_tensors="pt",
    )
    with torch.inference_mode():
        text_out = pipe.text_encoder(
            input_ids=tokens.input_ids.to(pipe.device)
        )
        text = extract.normalize_text_tokens(pipe.text_encoder, text_out)
        gray = [np.zeros((OUTPUT_SIZE, OUTPUT_SIZE, 3)) + 0.5]
        pixels = pipe.image_feature_extractor(
            images=gray, return_tensors="pt"
        ).pixel_values.to(pipe.device)
        image_out = pipe.image_encoder(pixel_values=pixels)
        image = extract.normalize_vision_tokens(pipe.image_encoder, image_out)
    return text, image


def _init_images(m: JobManifest, loaded: dict, n: int, progress: Progress):
    """512x512 float arrays in [0, 1] to start generation from, or None."""
    if not m.ablation["use_vdvae_init"]:
        return None
    values, sidecar = loaded["vdvae"]
    vae = extract.load_vdvae()
    progress.emit("decode_init", n_samples=n)
    small = extract.decode_vdvae_rows(
        vae, values, sidecar["layer_table"], seed=m.seed
    )
    out = np.empty((n, OUTPUT_SIZE, OUTPUT_SIZE, 3), dtype=np.float32)
    for i in range(n):
        im = Image.fromarray(small[i], mode="RGB").resize(
            (OUTPUT_SIZE, OUTPUT_SIZE), Image.BILINEAR
        )
        out[i] = np.asarray(im, dtype=np.float32) / 255.0
    return out


def generate(m: JobManifest, progress: Progress) -> None:
    out_dir = m.paths["output_images"]
    out_dir.mkdir(parents=True, exist_ok=True)
    n, loaded = _read_bundles(m)
    progress.emit("scan", kind=m.kind, n_samples=n)

    init_images = _init_images(m, loaded, n, progress)

    import torch

    pipe, device = _load_pipeline()
    sched = _build_scheduler(m.schedule, m.steps["total_steps"])
    mix_ratio = m.guidance["w_text"]
    pipe.set_transformer_params(mix_ratio, ("text", "image"))
    uncond_text, uncond_image = _uncond_context(pipe)
    scaling = pipe.vae.config.scaling_factor

    total = m.steps["total_steps"]
    noising = m.steps["noising_steps"]
    active_timesteps = sched.timesteps[total - noising :] if noising else []

    shapes = bundles.LAYOUT_SHAPES
    for i in range(n):
        generator = torch.Generator(device="cpu").manual_seed(m.seed + i)

        if m.ablation["use_clip_text"]:
            text = torch.from_numpy(
                loaded["clip_text"][0][i].reshape(1, *shapes["clip_text"])
            ).to(device)
        else:
            text = uncond_text
        if m.ablation["use_clip_vision"]:
            image = torch.from_numpy(
                loaded["clip_vision"][0][i].reshape(1, *shapes["clip_vision"])
            ).to(device)
        else:
            image = uncond_image
        context = torch.cat([text, image], dim=1)
        uncond = torch.cat([uncond_text, uncond_image], dim=1)

        with torch.inference_mode():
            if init_images is not None:
                x = torch.from_numpy(init_images[i]).permute(2, 0, 1)[None]
                x = (x * 2.0 - 1.0).to(device)
                latents = pipe.vae.encode(x).latent_dist.mode() * scaling
            else:
                latents = torch.randn(
                    (1, pipe.vae.config.latent_channels,
                     OUTPUT_SIZE // 8, OUTPUT_SIZE // 8),
                    generator=generator,
                ).to(device)

            if noising:
                noise = torch.randn(
                    latents.shape, generator=generator
                ).to(device)
                latents = sched.add_noise(
                    latents, noise, active_timesteps[0:1]
                )
                for t in active_timesteps:
                    lat_in = torch.cat([latents, latents])
                    ctx = torch.cat([uncond, context])
                    noise_pred = pipe.image_unet(
                        lat_in, t, encoder_hidden_states=ctx
                    ).sample
                    pred_uncond, pred_cond = noise_pred.chunk(2)
                    noise_pred = pred_uncond + GUIDANCE_SCALE * (
                        pred_cond - pred_uncond
                    )
                    latents = sched.step(noise_pred, t, latents).prev_sample

            decoded = pipe.vae.decode(latents / scaling).sample

        pixels = ((decoded / 2 + 0.5).clamp(0, 1) * 255.0).round()
        arr = pixels[0].permute(1, 2, 0).cpu().numpy().astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(
            out_dir / f"{i:05d}.png", format="PNG"
        )
        progress.emit("sample", index=i, total=n)

    metadata = {
        "runner_version": 1,
        "device": device,
        "guidance_scale": GUIDANCE_SCALE,
        "upsample": "bilinear",
        "latent_init": "posterior_mode",
        "mix_ratio": mix_ratio,
        "context_order": ["text", "image"],
        "seed": m.seed,
        "per_sample_seed": "seed + index",
        "init": m.init,
        "n_samples": n,
        "config_sha256": m.raw.get("config_sha256"),
    }
    with open(out_dir / "metadata.json", "w") as f:
        json.dump(metadata, f, indent=2)
        f.write("\n")
    progress.emit("write", path=str(out_dir), n_samples=n)
