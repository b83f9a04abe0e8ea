import io
import json

from modelrunner.progress import Progress


def test_events_are_json_lines():
    stream = io.StringIO()
    ticks = iter([0.0, 1.5, 2.0])
    p = Progress(stream=stream, clock=lambda: next(ticks))
    p.emit("start", kind="generate")
    p.emit("done", n=3)
    lines = stream.getvalue().splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    second = json.loads(lines[1])
    assert first == {"event": "start", "elapsed_s": 1.5, "kind": "generate"}
    assert second["event"] == "done"
    assert second["n"] == 3
    assert second["elapsed_s"] == 2.0
