"""Binary parameter blobs, round logs, generator checkpoints."""

import struct

import numpy as np
import pytest

from fplab.errors import FplabError
from fplab.fl_core import RoundRecord
from fplab.io import (
    load_generator,
    load_param_blob,
    read_rounds_jsonl,
    save_generator,
    save_param_blob,
    write_rounds_jsonl,
)


def test_blob_header_layout(tmp_path, rng):
    vec = rng.normal(size=17)
    path = str(tmp_path / "m.fplb")
    save_param_blob(path, vec)
    raw = open(path, "rb").read()
    magic, version, dim = struct.unpack("<4sIQ", raw[:16])
    assert magic == b"FPLB"
    assert version == 1
    assert dim == 17
    assert len(raw) == 16 + 17 * 4


def test_blob_roundtrip_f32_precision(tmp_path, rng):
    vec = rng.normal(size=100)
    path = str(tmp_path / "m.fplb")
    save_param_blob(path, vec)
    back = load_param_blob(path)
    assert back.dtype == np.float64
    np.testing.assert_allclose(back, vec, atol=1e-6)
    np.testing.assert_array_equal(back, vec.astype("<f4").astype(np.float64))


def test_blob_rejects_garbage(tmp_path):
    path = str(tmp_path / "bad.fplb")
    with open(path, "wb") as fh:
        fh.write(b"NOPE" + b"\0" * 12)
    with pytest.raises(FplabError):
        load_param_blob(path)
    with open(path, "wb") as fh:
        fh.write(b"FPLB")
    with pytest.raises(FplabError):
        load_param_blob(path)


def test_rounds_jsonl_roundtrip(tmp_path):
    records = [
        RoundRecord(0, [1, 2], 0.5, 0.0, {"krum_selected": 1}),
        RoundRecord(1, [0, 3], 0.75, 0.25, {}),
    ]
    path = str(tmp_path / "rounds.jsonl")
    write_rounds_jsonl(path, records)
    back = read_rounds_jsonl(path)
    assert back == [r.to_json_obj() for r in records]
    assert set(back[0]) == {"round", "selected_ids", "acc", "asr", "defense_diagnostics"}


def test_generator_checkpoint_roundtrip(tmp_path, rng):
    from fplab.data import synth_texture_dataset
    from fplab.psg import PsgConfig, train_psg

    ds = synth_texture_dataset(3, 10, 8, seed=2)
    gen = train_psg(ds, PsgConfig(iterations=2, batch_size=4, noise_dim=4, source=0,
                                  target=1, arch_scale=1, seed=3))
    base = str(tmp_path / "gen")
    save_generator(base, gen)
    back = load_generator(base)
    assert back.target_label == gen.target_label
    assert back.noise_dim == gen.noise_dim
    assert back.training_iterations == gen.training_iterations
    assert back.arch == gen.arch
    # f32 storage: samples match to f32 precision
    a = gen.sample(6, seed=9)
    b = back.sample(6, seed=9)
    np.testing.assert_allclose(a, b, atol=1e-5)
