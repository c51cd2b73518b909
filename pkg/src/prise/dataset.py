"""On-disk pair datasets: F32T images, an omega table and the generating spec.

Layout of a dataset directory::

    spec.json             PairSpec fields plus the base-image description
    omega.csv             index, w0..w7 (repr floats, exact round trip)
    source_00000.f32t     (1, canvas, canvas)
    target_00000.f32t     (1, template, template)
"""

import csv
import json
import os
from dataclasses import asdict

import numpy as np

from .errors import CorruptFile, InvalidSpec
from .imaging import PairSpec, as_array, generate_pair, smooth_image
from .tensorio import load_tensor, read_pgm, save_tensor
from .training import TrainSample


def load_base(path):
    """Base image from a PGM (P5) or F32T/F64T file."""
    if path.lower().endswith(".pgm"):
        return read_pgm(path)
    return as_array(load_tensor(path))


def spec_from_json(path):
    with open(path) as fh:
        raw = json.load(fh)
    try:
        return PairSpec(**raw).validate()
    except TypeError as exc:
        raise InvalidSpec(f"bad pair spec: {exc}") from None


def generate_dataset(out_dir, spec, count, seed, base=None):
    """Write ``count`` pairs; a missing ``base`` draws a fresh smooth image per pair."""
    spec.validate()
    if count < 1:
        raise InvalidSpec("count must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        img = smooth_image(spec.canvas_size, rng) if base is None else base
        source, template, omega = generate_pair(img, spec, rng)
        save_tensor(os.path.join(out_dir, f"source_{i:05d}.f32t"), source.data)
        save_tensor(os.path.join(out_dir, f"target_{i:05d}.f32t"), template.data)
        rows.append([i] + [repr(float(v)) for v in omega])
    with open(os.path.join(out_dir, "omega.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index"] + [f"w{k}" for k in range(8)])
        writer.writerows(rows)
    meta = {**asdict(spec), "count": count, "seed": seed, "base": "synthetic" if base is None else "file"}
    with open(os.path.join(out_dir, "spec.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return count


def read_spec(data_dir):
    with open(os.path.join(data_dir, "spec.json")) as fh:
        raw = json.load(fh)
    fields = {k: raw[k] for k in ("canvas_size", "box_size", "template_size", "max_offset", "seed") if k in raw}
    return PairSpec(**fields)


def load_dataset(data_dir, indices=None):
    """TrainSamples for the requested (default: all) pair indices."""
    spec = read_spec(data_dir)
    frame = spec.frame()
    with open(os.path.join(data_dir, "omega.csv"), newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    table = {}
    for row in rows:
        if len(row) != 9:
            raise CorruptFile(f"omega.csv row has {len(row)} fields, expected 9")
        table[int(row[0])] = np.array([float(v) for v in row[1:]])
    if indices is None:
        indices = sorted(table)
    out = []
    for i in indices:
        if i not in table:
            raise InvalidSpec(f"pair {i} not in dataset ({len(table)} pairs)")
        source = load_tensor(os.path.join(data_dir, f"source_{i:05d}.f32t"))
        target = load_tensor(os.path.join(data_dir, f"target_{i:05d}.f32t"))
        out.append(TrainSample(source, target, table[i], frame))
    return out
