"""
NPY files as the exchange format between pipeline stages
========================================================

Every matrix this toolkit passes between processes is a plain NPY file.
This script writes a few, peeks at the raw bytes, and shows the latent
bundle sidecar convention used to hand predictions to the image generator.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from brainrecon import dataio, latents

workdir = Path(tempfile.mkdtemp(prefix="npy_demo_"))

# write a small float matrix and read it back
mat = np.arange(12, dtype=np.float32).reshape(3, 4)
path = workdir / "small.npy"
dataio.write_npy(mat, path)
back = dataio.read_npy(path)
print(f"roundtrip exact: {np.array_equal(mat, back)}")

raw = path.read_bytes()
print(f"magic bytes: {raw[:6]!r}, version {raw[6]}.{raw[7]}")
header_len = int.from_bytes(raw[8:10], "little")
print(f"header text: {raw[10:10 + header_len].decode().strip()}")
# the writer pads the header so the data section starts on a 64-byte
# boundary, which keeps memory-mapped reads aligned
print(f"data offset: {10 + header_len} (multiple of 64: "
      f"{(10 + header_len) % 64 == 0})")

# fortran-ordered input is stored row-major; values are preserved
f_ordered = np.asfortranarray(rng_mat := np.random.default_rng(1).normal(size=(4, 5)))
dataio.write_npy(f_ordered, workdir / "fortran.npy")
print(f"fortran input preserved: "
      f"{np.array_equal(dataio.read_npy(workdir / 'fortran.npy'), rng_mat)}")

# NaN payloads survive bit-for-bit, which matters for masked sentinel values
with_nan = np.array([1.0, np.nan, np.inf], dtype=np.float64)
dataio.write_npy(with_nan, workdir / "nan.npy")
bits_in = with_nan.view(np.uint64)
bits_out = dataio.read_npy(workdir / "nan.npy").view(np.uint64)
print(f"NaN/Inf bits identical: {np.array_equal(bits_in, bits_out)}")

# latent bundles add a JSON sidecar naming the feature family and layout
layout = latents.layout_for("clip_text")
bundle = latents.LatentBundle(
    layout,
    np.random.default_rng(2).normal(size=(2, layout.flat_len)).astype(np.float32),
)
bundle_path = workdir / "clip_text.npy"
latents.save_bundle(bundle, bundle_path, provenance={"source": "demo"})
sidecar = json.loads(bundle_path.with_suffix(".json").read_text())
print(f"sidecar: family={sidecar['family']}, shape={sidecar['shape']}, "
      f"n_samples={sidecar['n_samples']}")

reloaded = latents.load_bundle(bundle_path)
print(f"bundle roundtrip exact: {np.array_equal(reloaded.values, bundle.values)}")
print(f"files in {workdir}:")
for p in sorted(workdir.iterdir()):
    print(f"  {p.name} ({p.stat().st_size} bytes)")
