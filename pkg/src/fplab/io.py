"""Persistence formats: parameter blobs, round logs, generator checkpoints.

Parameter vectors are stored as little-endian float32 preceded by a 16-byte
header (magic "FPLB", u32 version, u64 dimension). Round logs are JSON lines,
one object per round. A generator checkpoint is a blob plus a JSON sidecar
describing how to rebuild the network.
"""

import json
import struct

import numpy as np

from .errors import FplabError
from .psg import PoisonGenerator

MAGIC = b"FPLB"
VERSION = 1
HEADER = struct.Struct("<4sIQ")


def save_param_blob(path, vec):
    vec = np.asarray(vec, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, vec.size))
        fh.write(vec.astype("<f4").tobytes())


def load_param_blob(path):
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
        if len(raw) != HEADER.size:
            raise FplabError(f"{path}: truncated header")
        magic, version, dim = HEADER.unpack(raw)
        if magic != MAGIC:
            raise FplabError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FplabError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(dim * 4), dtype="<f4")
        if data.size != dim:
            raise FplabError(f"{path}: expected {dim} floats, found {data.size}")
    return data.astype(np.float64)


def write_rounds_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            obj = rec.to_json_obj() if hasattr(rec, "to_json_obj") else rec
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def read_rounds_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_generator(path_base, gen):
    """Write <base>.fplb (state) and <base>.json (rebuild metadata)."""
    save_param_blob(path_base + ".fplb", gen.state)
    meta = {
        "target_label": int(gen.target_label),
        "noise_dim": int(gen.noise_dim),
        "iterations": int(gen.training_iterations),
        "arch": gen.arch,
    }
    with open(path_base + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_generator(path_base):
    with open(path_base + ".json") as fh:
        meta = json.load(fh)
    state = load_param_blob(path_base + ".fplb")
    return PoisonGenerator(
        state,
        meta["target_label"],
        meta["noise_dim"],
        meta["iterations"],
        meta["arch"],
    )
