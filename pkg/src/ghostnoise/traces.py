"""Per-layer, per-epoch recordings of injected ghost noise."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .noise import NoiseDraw

KINDS = ("shift", "scale")
DEFAULT_CAPACITY = 100_000


class Reservoir:
    """Uniform fixed-size subsample of a stream (Algorithm R, vectorized per chunk)."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self.seen = 0
        self._buf = np.empty(0)

    def extend(self, values):
        values = np.asarray(values, dtype=np.float64).ravel()
        room = self.capacity - self._buf.size
        if room > 0:
            head, values = values[:room], values[room:]
            self._buf = np.concatenate([self._buf, head])
            self.seen += head.size
        if values.size:
            t = self.seen + np.arange(values.size)
            slot = self.rng.integers(0, t + 1)
            keep = slot < self.capacity
            # fancy assignment keeps the last write per slot, as sequential replacement would
            self._buf[slot[keep]] = values[keep]
            self.seen += values.size

    @property
    def values(self) -> np.ndarray:
        return self._buf


@dataclass
class NoiseTrace:
    layer: str
    epoch: int
    channel: Optional[int] = None
    capacity: int = DEFAULT_CAPACITY
    seed: int = 0
    _shift: Reservoir = field(init=False, repr=False)
    _scale: Reservoir = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(self.seed)
        a, b = (np.random.default_rng(s) for s in ss.spawn(2))
        self._shift = Reservoir(self.capacity, a)
        self._scale = Reservoir(self.capacity, b)

    @property
    def shift(self) -> np.ndarray:
        return self._shift.values

    @property
    def scale(self) -> np.ndarray:
        return self._scale.values

    def values(self, kind: str) -> np.ndarray:
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        return self.shift if kind == "shift" else self.scale

    def __len__(self):
        return self._shift.values.size


def record_noise(trace: NoiseTrace, draw: NoiseDraw) -> NoiseTrace:
    """Append the flattened (B, C) shift and scale values of ``draw`` to ``trace``."""
    shift, scale = draw.shift, draw.scale
    if trace.channel is not None:
        shift, scale = shift[:, trace.channel], scale[:, trace.channel]
    if not (np.all(np.isfinite(shift)) and np.all(np.isfinite(scale))):
        raise ValueError("noise draw contains non-finite values")
    trace._shift.extend(shift)
    trace._scale.extend(scale)
    return trace


def trace_document(trace: NoiseTrace, kind: str) -> dict:
    return {"layer": trace.layer, "epoch": trace.epoch, "kind": kind, "values": trace.values(kind).tolist()}


def trace_filename(trace: NoiseTrace, kind: str, fmt: str) -> str:
    return f"trace_{trace.layer}_epoch{trace.epoch}_{kind}.{fmt}"


def write_trace(trace: NoiseTrace, kind: str, path, fmt: str = "json") -> Path:
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(trace_document(trace, kind)))
    elif fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["layer", "epoch", "kind", "value"])
            for v in trace.values(kind):
                w.writerow([trace.layer, trace.epoch, kind, repr(float(v))])
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    return path


def write_traces(traces, out_dir, fmt: str = "json") -> list[Path]:
    """Write one file per (trace, kind) into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [write_trace(t, kind, out_dir / trace_filename(t, kind, fmt), fmt) for t in traces for kind in KINDS]


def read_trace(path) -> dict:
    """Load a trace file back as ``{layer, epoch, kind, values}`` with ``values`` a float64 array."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        doc["values"] = np.asarray(doc["values"], dtype=np.float64)
        return doc
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    return {
        "layer": rows[0]["layer"],
        "epoch": int(rows[0]["epoch"]),
        "kind": rows[0]["kind"],
        "values": np.array([float(r["value"]) for r in rows]),
    }
