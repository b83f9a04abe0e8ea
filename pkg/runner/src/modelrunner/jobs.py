"""Job dispatch: one manifest kind, one handler."""

from __future__ import annotations

from . import checkpoints, extract, generate
from .manifest import JobManifest
from .progress import Progress

HANDLERS = {
    "extract_vdvae": extract.extract_vdvae,
    "extract_clip_v": extract.extract_clip_v,
    "extract_clip_t": extract.extract_clip_t,
    "extract_metric_features": extract.extract_metric_features,
    "generate": generate.generate,
}


def run(m: JobManifest, progress: Progress) -> None:
    progress.emit("start", kind=m.kind, seed=m.seed)
    HANDLERS[m.kind](m, progress)
    progress.emit("done", kind=m.kind)


def required_checkpoints(m: JobManifest) -> tuple[str, ...]:
    return checkpoints.needs_for(m.kind, m.init)
