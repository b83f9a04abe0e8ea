"""Job runner for the heavyweight pretrained networks.

The decoding toolkit (the ``brainrecon`` package) trains regressors,
predicts latent bundles, and scores reconstructions; it never loads a
neural network. This package is the other side of that file boundary: it
executes versioned JSON job manifests, reads and writes the same NPY
bundle format, and wraps the frozen pretrained models (hierarchical-VAE
encoder/decoder, CLIP vision/text encoders, the dual-guided latent
diffusion sampler, and the six metric feature extractors).

The two packages share no code, only file formats. One job runs per
process invocation (``runner --manifest job.json``); progress streams to
stdout as JSON lines. Identical manifest plus seed gives identical
outputs.
"""

__version__ = "0.1.0"
