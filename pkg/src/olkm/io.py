"""Instance files (JSON Lines) and serialization helpers.

An instance file has one JSON object per line.  An optional header object
``{"matrix": [[...]]}`` declares an explicit metric; subsequent round
objects then reference point ids.  Without a header, rounds carry raw
coordinate lists: ``{"t": int, "points": [[x, y], ...], "weights": [...]}``
(weights optional, default 1).
"""
from __future__ import annotations

import json
from typing import TextIO

from .metric import MetricError, MetricRegistry, WeightedInstance


def read_instance_file(path: str) -> tuple[MetricRegistry, list[WeightedInstance]]:
    with open(path) as fh:
        return read_instance_stream(fh)


def read_instance_stream(fh: TextIO) -> tuple[MetricRegistry, list[WeightedInstance]]:
    reg: MetricRegistry | None = None
    rounds: list[WeightedInstance] = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if "matrix" in obj:
            if reg is not None:
                raise MetricError("matrix header must precede all rounds")
            reg = MetricRegistry.from_matrix(obj["matrix"])
            continue
        if reg is None:
            reg = MetricRegistry(mode="euclidean")
        t = int(obj["t"])
        pts = obj["points"]
        if reg.mode == "explicit":
            ids = [int(p) for p in pts]
        else:
            ids = reg.add_points(pts)
        weights = obj.get("weights")
        if weights is None:
            rounds.append(WeightedInstance.unit(ids, round=t))
        else:
            if len(weights) != len(ids):
                raise MetricError("weights length mismatch")
            rounds.append(
                WeightedInstance(list(zip(ids, map(float, weights))), round=t)
            )
    if reg is None or not rounds:
        raise MetricError("instance file contains no rounds")
    return reg, rounds


def write_rounds(fh: TextIO, reg: MetricRegistry, rounds) -> None:
    """Serialize rounds in the same schema; explicit metrics get a header."""
    if reg.mode == "explicit":
        fh.write(json.dumps({"matrix": reg.dist_matrix(range(len(reg)), range(len(reg))).tolist()}) + "\n")
    for R in rounds:
        if reg.mode == "explicit":
            pts = [int(i) for i in R.ids]
        else:
            pts = [reg.coords(int(i)).tolist() for i in R.ids]
        obj = {"t": R.round, "points": pts, "weights": [float(w) for w in R.weights]}
        fh.write(json.dumps(obj) + "\n")
