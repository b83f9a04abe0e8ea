"""JSON-lines progress stream.

Every event is one JSON object per line on the chosen stream (stdout by
default), so a supervising process can follow long jobs without parsing
free-form logs. Events carry at least ``event``; emitters add whatever
fields describe the step (counts, paths, durations).
"""

from __future__ import annotations

import json
import sys
import time


class Progress:
    def __init__(self, stream=None, clock=time.monotonic):
        self.stream = stream if stream is not None else sys.stdout
        self._clock = clock
        self._start = clock()

    def emit(self, event: str, **fields) -> None:
        doc = {"event": event, "elapsed_s": round(self._clock() - self._start, 3)}
        doc.update(fields)
        self.stream.write(json.dumps(doc) + "\n")
        self.stream.flush()
