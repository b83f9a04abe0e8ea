"""Feature extraction jobs.

Four job kinds produce NPY artifacts for the decoding toolkit:

* ``extract_vdvae``: hierarchical-VAE posterior latents of 64x64 images,
  first 31 layers flattened and concatenated to 91168 values per image
* ``extract_clip_v``: per-token projected image embeddings, (257, 768)
* ``extract_clip_t``: per-token projected caption embeddings, (77, 768)
* ``extract_metric_features``: the six evaluation extractors over paired
  reconstruction / ground-truth image directories

Heavy imports happen inside the job functions so that manifest handling
and the empty-batch paths work without torch installed. An empty input
batch short-circuits to a 0-row bundle before any checkpoint is touched.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import bundles, checkpoints
from .errors import DataError
from .manifest import JobManifest
from .progress import Progress

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
VDVAE_INPUT_SIZE = 64
VDVAE_BATCH = 32
CLIP_BATCH = 32
METRIC_BATCH = 16

# imagenet64 normalization from the reference data pipeline: the encoder
# saw (x + shift) * scale, x in [0, 255]
VDVAE_SHIFT = -115.92961967
VDVAE_SCALE = 1.0 / 69.37404

# canonical first-31-layer length table of the 64x64 model: latents have
# 16 channels at spatial sizes 1, 4, 8, 16, 32
DEFAULT_VDVAE_LAYER_TABLE = (
    (16,) * 2 + (256,) * 4 + (1024,) * 8 + (4096,) * 16 + (16384,)
)


def list_images(directory: Path) -> list[Path]:
    return sorted(
        p for p in Path(directory).iterdir()
        if p.suffix.lower() in IMAGE_SUFFIXES
    )


def load_captions(path: Path) -> list[str]:
    """Captions file: a JSON array with one string per sample."""
    with open(path) as f:
        doc = json.load(f)
    if not isinstance(doc, list) or any(not isinstance(c, str) for c in doc):
        raise DataError(f"{path} must hold a JSON array of caption strings")
    return doc


def _batches(n: int, size: int):
    for start in range(0, n, size):
        yield start, min(start + size, n)


# -- hierarchical VAE ---------------------------------------------------

def load_vdvae(env=None):
    """Instantiate the 64x64 hierarchical VAE from the reference clone.

    The checkpoint directory must hold the reference implementation
    (imported from here, never vendored) and the EMA weights file.
    """
    code = checkpoints.resolve("vdvae_code", env)
    weights = checkpoints.resolve("vdvae_weights", env)
    import argparse

    import torch

    if str(code) not in sys.path:
        sys.path.insert(0, str(code))
    from hps import Hyperparams, add_vae_arguments, parse_args_and_update_hparams
    from vae import VAE

    parser = add_vae_arguments(argparse.ArgumentParser())
    H = Hyperparams()
    parse_args_and_update_hparams(H, parser, s=["--hps", "imagenet64"])
    H.image_size = 64
    H.image_channels = 3
    vae = VAE(H)
    try:
        from train_helpers import restore_params

        restore_params(vae, str(weights), map_cpu=True)
    except (ImportError, TypeError):
        state = torch.load(weights, map_location="cpu")
        state = {k.removeprefix("module."): v for k, v in state.items()}
        vae.load_state_dict(state)
    return vae.eval()


def _vdvae_preprocess(paths: list[Path]):
    """uint8 64x64 RGB batch -> normalized float tensor."""
    import torch

    arrs = []
    for p in paths:
        with Image.open(p) as im:
            im = im.convert("RGB")
            if im.size != (VDVAE_INPUT_SIZE, VDVAE_INPUT_SIZE):
                im = im.resize(
                    (VDVAE_INPUT_SIZE, VDVAE_INPUT_SIZE), Image.BILINEAR
                )
            arrs.append(np.asarray(im, dtype=np.float32))
    x = torch.from_numpy(np.stack(arrs))
    return (x + VDVAE_SHIFT) * VDVAE_SCALE


def extract_vdvae(m: JobManifest, progress: Progress) -> None:
    images = list_images(m.paths["images_dir"])
    out_path = m.paths["output_bundle"]
    progress.emit("scan", kind=m.kind, n_images=len(images))
    if not images:
        bundles.write_bundle(
            "vdvae",
            np.empty((0, bundles.FLAT_WIDTHS["vdvae"]), dtype=np.float32),
            out_path,
            provenance={"source": m.kind, "n_images": 0},
            layer_table=DEFAULT_VDVAE_LAYER_TABLE,
        )
        progress.emit("write", path=str(out_path), n_samples=0)
        return

    import torch

    vae = load_vdvae()
    torch.manual_seed(m.seed)
    rows = []
    layer_table = None
    with torch.inference_mode():
        for start, stop in _batches(len(images), VDVAE_BATCH):
            x = _vdvae_preprocess(images[start:stop])
            stats = vae.forward_get_latents(x)
            zs = [s["z"] for s in stats[: bundles.VDVAE_LAYER_COUNT]]
            if layer_table is None:
                layer_table = tuple(
                    int(np.prod(z.shape[1:])) for z in zs
                )
                bundles.validate_layer_table(layer_table)
            flat = torch.cat([z.reshape(z.shape[0], -1) for z in zs], dim=1)
            rows.append(flat.cpu().numpy().astype(np.float32))
            progress.emit("batch", done=stop, total=len(images))
    values = np.concatenate(rows)
    bundles.write_bundle(
        "vdvae",
        values,
        out_path,
        provenance={"source": m.kind, "n_images": len(images), "seed": m.seed},
        layer_table=layer_table,
    )
    progress.emit("write", path=str(out_path), n_samples=values.shape[0])


def decode_vdvae_rows(vae, values: np.ndarray, layer_table, seed: int) -> np.ndarray:
    """Predicted rows -> uint8 (n, 64, 64, 3) initial-guess images.

    Layers past the 31 provided are sampled from the prior by the
    reference decoder, hence the explicit seeding.
    """
    import torch

    torch.manual_seed(seed)
    per_layer = bundles.split_vdvae_rows(values, layer_table)
    out = []
    with torch.inference_mode():
        for start, stop in _batches(values.shape[0], 8):
            zs = [torch.from_numpy(block[start:stop]) for block in per_layer]
            px = vae.forward_samples_set_latents(stop - start, zs)
            out.append(np.asarray(px, dtype=np.uint8))
    return np.concatenate(out)


# -- CLIP embeddings ----------------------------------------------------

def _load_image_encoder(env=None):
    vd = checkpoints.resolve("versatile_diffusion", env)
    from transformers import CLIPImageProcessor, CLIPVisionModelWithProjection

    processor = CLIPImageProcessor.from_pretrained(
        vd, subfolder="image_feature_extractor"
    )
    encoder = CLIPVisionModelWithProjection.from_pretrained(
        vd, subfolder="image_encoder"
    ).eval()
    return processor, encoder


def _load_text_encoder(env=None):
    vd = checkpoints.resolve("versatile_diffusion", env)
    from transformers import CLIPTextModelWithProjection, CLIPTokenizer

    tokenizer = CLIPTokenizer.from_pretrained(vd, subfolder="tokenizer")
    encoder = CLIPTextModelWithProjection.from_pretrained(
        vd, subfolder="text_encoder"
    ).eval()
    return tokenizer, encoder


def normalize_vision_tokens(encoder, encoder_output):
    """Per-token projected embeddings, scaled by the class-token norm.

    This is the dual-guidance conditioning convention: layernorm over all
    tokens, project each to 768, divide by the projected class token's
    Euclidean norm.
    """
    import torch

    embeds = encoder.vision_model.post_layernorm(encoder_output.last_hidden_state)
    embeds = encoder.visual_projection(embeds)
    pooled = embeds[:, 0:1]
    return embeds / torch.norm(pooled, dim=-1, keepdim=True)


def normalize_text_tokens(encoder, encoder_output):
    """Per-token projected caption embeddings, scaled by the pooled norm."""
    import torch

    embeds = encoder.text_projection(encoder_output.last_hidden_state)
    pooled = encoder_output.text_embeds
    return embeds / torch.norm(pooled.unsqueeze(1), dim=-1, keepdim=True)


def encode_images_clip(processor, encoder, pil_images) -> np.ndarray:
    import torch

    inputs = processor(images=pil_images, return_tensors="pt")
    with torch.inference_mode():
        out = encoder(pixel_values=inputs.pixel_values)
        tokens = normalize_vision_tokens(encoder, out)
    return tokens.cpu().numpy().astype(np.float32)


def encode_captions_clip(tokenizer, encoder, captions) -> np.ndarray:
    import torch

    inputs = tokenizer(
        captions,
        padding="max_length",
        max_length=tokenizer.model_max_length,
        truncation=True,
        return_tensors="pt",
    )
    with torch.inference_mode():
        out = encoder(input_ids=inputs.input_ids)
        tokens = normalize_text_tokens(encoder, out)
    return tokens.cpu().numpy().astype(np.float32)


def extract_clip_v(m: JobManifest, progress: Progress) -> None:
    images = list_images(m.paths["images_dir"])
    out_path = m.paths["output_bundle"]
    progress.emit("scan", kind=m.kind, n_images=len(images))
    if not images:
        bundles.write_bundle(
            "clip_vision",
            np.empty((0, bundles.FLAT_WIDTHS["clip_vision"]), dtype=np.float32),
            out_path,
            provenance={"source": m.kind, "n_images": 0},
        )
        progress.emit("write", path=str(out_path), n_samples=0)
        return
    processor, encoder = _load_image_encoder()
    rows = []
    for start, stop in _batches(len(images), CLIP_BATCH):
        pil = []
        for p in images[start:stop]:
            with Image.open(p) as im:
                pil.append(im.convert("RGB"))
        tokens = encode_images_clip(processor, encoder, pil)
        rows.append(tokens.reshape(tokens.shape[0], -1))
        progress.emit("batch", done=stop, total=len(images))
    values = np.concatenate(rows)
    bundles.write_bundle(
        "clip_vision",
        values,
        out_path,
        provenance={"source": m.kind, "n_images": len(images)},
    )
    progress.emit("write", path=str(out_path), n_samples=values.shape[0])


def extract_clip_t(m: JobManifest, progress: Progress) -> None:
    captions = load_captions(m.paths["captions"])
    out_path = m.paths["output_bundle"]
    progress.emit("scan", kind=m.kind, n_captions=len(captions))
    if not captions:
        bundles.write_bundle(
            "clip_text",
            np.empty((0, bundles.FLAT_WIDTHS["clip_text"]), dtype=np.float32),
            out_path,
            provenance={"source": m.kind, "n_captions": 0},
        )
        progress.emit("write", path=str(out_path), n_samples=0)
        return
    tokenizer, encoder = _load_text_encoder()
    rows = []
    for start, stop in _batches(len(captions), CLIP_BATCH):
        tokens = encode_captions_clip(tokenizer, encoder, captions[start:stop])
        rows.append(tokens.reshape(tokens.shape[0], -1))
        progress.emit("batch", done=stop, total=len(captions))
    values = np.concatenate(rows)
    bundles.write_bundle(
        "clip_text",
        values,
        out_path,
        provenance={"source": m.kind, "n_captions": len(captions)},
    )
    progress.emit("write", path=str(out_path), n_samples=values.shape[0])


# -- metric feature extractors ------------------------------------------

def _metric_extractors(env=None):
    """name -> (preprocess, forward) for the six evaluation networks.

    torchvision weights load from the pre-populated hub cache; the clip
    extractor reuses the dual-guidance image encoder's final projected
    embedding.
    """
    import os

    hub = checkpoints.resolve("torch_hub", env)
    os.environ.setdefault("TORCH_HOME", str(hub))
    import torch
    import torchvision.models as tvm
    import torchvision.transforms as T

    imagenet_tf = T.Compose([
        T.Resize(256),
        T.CenterCrop(224),
        T.ToTensor(),
        T.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
    ])
    inception_tf = T.Compose([
        T.Resize(342),
        T.CenterCrop(299),
        T.ToTensor(),
        T.Normalize(mean=[0.485, 0.456, 0.406], std=[0.229, 0.224, 0.225]),
    ])

    alexnet = tvm.alexnet(weights=tvm.AlexNet_Weights.IMAGENET1K_V1).eval()
    inception = tvm.inception_v3(
        weights=tvm.Inception_V3_Weights.IMAGENET1K_V1
    ).eval()
    effnet = tvm.efficientnet_b1(
        weights=tvm.EfficientNet_B1_Weights.IMAGENET1K_V1
    ).eval()
    swav = torch.hub.load("facebookresearch/swav:main", "resnet50").eval()
    swav.fc = torch.nn.Identity()
    processor, clip_enc = _load_image_encoder(env)

    def pooled(model_forward):
        def run(x):
            h = model_forward(x)
            return torch.flatten(h, 1)

        return run

    def alexnet_slice(stop):
        def run(x):
            h = alexnet.features[:stop](x)
            return torch.flatten(h, 1)

        return run

    def inception_pool(x):
        # everything up to and including the final average pool
        m = inception
        h = m.Conv2d_1a_3x3(x)
        h = m.Conv2d_2a_3x3(h)
        h = m.Conv2d_2b_3x3(h)
        h = m.maxpool1(h)
        h = m.Conv2d_3b_1x1(h)
        h = m.Conv2d_4a_3x3(h)
        h = m.maxpool2(h)
        h = m.Mixed_5b(h)
        h = m.Mixed_5c(h)
        h = m.Mixed_5d(h)
        h = m.Mixed_6a(h)
        h = m.Mixed_6b(h)
        h = m.Mixed_6c(h)
        h = m.Mixed_6d(h)
        h = m.Mixed_6e(h)
        h = m.Mixed_7a(h)
        h = m.Mixed_7b(h)
        h = m.Mixed_7c(h)
        h = m.avgpool(h)
        return torch.flatten(h, 1)

    def effnet_pool(x):
        h = effnet.avgpool(effnet.features(x))
        return torch.flatten(h, 1)

    def clip_embed(pil_batch):
        inputs = processor(images=pil_batch, return_tensors="pt")
        return clip_enc(pixel_values=inputs.pixel_values).image_embeds

    # second and fifth conv activations: feature indices 4 and 11
    return {
        "alexnet2": (imagenet_tf, alexnet_slice(5)),
        "alexnet5": (imagenet_tf, alexnet_slice(12)),
        "inception": (inception_tf, inception_pool),
        "clip": (None, clip_embed),
        "effnet": (imagenet_tf, effnet_pool),
        "swav": (imagenet_tf, pooled(swav)),
    }


def _extract_features_dir(extractors, directory: Path, progress: Progress):
    import torch

    images = list_images(directory)
    if not images:
        raise DataError(f"no images found in {directory}")
    features = {name: [] for name in extractors}
    for start, stop in _batches(len(images), METRIC_BATCH):
        pil = []
        for p in images[start:stop]:
            with Image.open(p) as im:
                pil.append(im.convert("RGB"))
        with torch.inference_mode():
            for name, (transform, forward) in extractors.items():
                if transform is None:
                    out = forward(pil)
                else:
                    x = torch.stack([transform(im) for im in pil])
                    out = forward(x)
                features[name].append(out.cpu().numpy().astype(np.float32))
        progress.emit("batch", directory=str(directory), done=stop, total=len(images))
    return {name: np.concatenate(chunks) for name, chunks in features.items()}


def extract_metric_features(m: JobManifest, progress: Progress) -> None:
    out_dir = m.paths["output_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    extractors = _metric_extractors()
    for label, role in (("recon", "recon_dir"), ("gt", "gt_dir")):
        feats = _extract_features_dir(extractors, m.paths[role], progress)
        for name, values in feats.items():
            path = out_dir / f"{name}_{label}.npy"
            np.save(path, values)
            progress.emit(
                "write", path=str(path), n_samples=values.shape[0],
                width=values.shape[1],
            )
