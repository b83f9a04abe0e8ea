"""Process entry point: ``runner --manifest job.json``.

Runs exactly one job, touches only paths named in the manifest, and
streams JSON-lines progress to stdout. Exit codes: 0 success, 2 invalid
manifest or usage, 3 inconsistent input data, 4 missing checkpoint or
environment problem.
"""

from __future__ import annotations

import argparse
import sys

from . import jobs, manifest
from .errors import CheckpointError, DataError, ManifestError
from .progress import Progress


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="runner",
        description="Execute one pretrained-network job manifest.",
    )
    parser.add_argument("--manifest", required=True, help="job manifest JSON")
    args = parser.parse_args(argv)

    progress = Progress()
    try:
        m = manifest.load(args.manifest)
        jobs.run(m, progress)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except CheckpointError as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
