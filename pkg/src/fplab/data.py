"""Dataset construction, image-folder IO, client partitioning, poison mixing.

Images are float64 tensors of shape (H, W, C) with values in [-1, 1]; labels
are integer class ids. A Shard is simply a Dataset restricted to one client.
All operations are deterministic under a fixed seed and never mutate samples.
"""

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import InvalidConfigError, InvalidDatasetError

SEED_TAG_SYNTH = 0x5D47A


@dataclass
class LabeledSample:
    image: np.ndarray  # (H, W, C) in [-1, 1]
    label: int


@dataclass
class Dataset:
    samples: list
    num_classes: int
    class_names: list = None

    def __len__(self):
        return len(self.samples)

    def labels(self):
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def images_nchw(self):
        """Stack images into an (N, C, H, W) float64 batch for the conv nets."""
        return np.stack([s.image for s in self.samples]).transpose(0, 3, 1, 2)

    def image_shape(self):
        return self.samples[0].image.shape


Shard = Dataset


@dataclass
class PoisonedDataset(Dataset):
    provenance: str = ""


def synth_texture_dataset(num_classes, per_class, size, seed):
    """Balanced procedural texture dataset: one oriented grating per class.

    Each class gets a distinct orientation/frequency sinusoidal grating; samples
    vary by small phase/amplitude jitter plus seeded pixel noise.
    """
    if num_classes < 2:
        raise InvalidConfigError(f"num_classes must be >= 2, got {num_classes}")
    if size < 8:
        raise InvalidConfigError(f"size must be >= 8, got {size}")
    rng = np.random.default_rng(np.random.SeedSequence([SEED_TAG_SYNTH, seed]))
    coords = (np.arange(size) + 0.5) / size
    uu, vv = np.meshgrid(coords, coords, indexing="xy")
    samples = []
    for c in range(num_classes):
        theta = np.pi * c / num_classes
        freq = 2.0 + (c % max(2, size // 4 - 2))
        ramp = uu * np.cos(theta) + vv * np.sin(theta)
        for _ in range(per_class):
            phase = rng.uniform(-0.8, 0.8)
            amp = rng.uniform(0.5, 0.9)
            noise = rng.normal(0.0, 0.18, (size, size))
            img = np.clip(amp * np.sin(2 * np.pi * freq * ramp + phase) + noise, -1.0, 1.0)
            samples.append(LabeledSample(img[:, :, None], c))
    return Dataset(samples, num_classes, [f"class_{c:03d}" for c in range(num_classes)])


def save_image_folder(dataset, path):
    """Export to one subdirectory per class (8-bit PNG, lexicographic label order)."""
    os.makedirs(path, exist_ok=True)
    counters = {}
    names = dataset.class_names or [f"class_{c:03d}" for c in range(dataset.num_classes)]
    entries = []
    for s in dataset.samples:
        sub = f"{s.label:03d}_{names[s.label]}" if dataset.class_names else f"class_{s.label:03d}"
        os.makedirs(os.path.join(path, sub), exist_ok=True)
        i = counters.get(s.label, 0)
        counters[s.label] = i + 1
        arr = np.clip(np.round((s.image + 1.0) * 127.5), 0, 255).astype(np.uint8)
        if arr.shape[2] == 1:
            pil = Image.fromarray(arr[:, :, 0], mode="L")
        else:
            pil = Image.fromarray(arr, mode="RGB")
        rel = os.path.join(sub, f"{i:05d}.png")
        pil.save(os.path.join(path, rel))
        entries.append({"path": rel, "label": int(s.label)})
    for e in entries:
        with open(os.path.join(path, e["path"]), "rb") as fh:
            e["sha256"] = hashlib.sha256(fh.read()).hexdigest()
    manifest = {"num_classes": dataset.num_classes, "samples": entries}
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def load_image_folder(path, size, channels=None):
    """Load one-subdirectory-per-class image folders.

    Images are resized to size x size and normalized to [-1, 1]; labels follow
    lexicographic subdirectory order. Unreadable files are skipped with a
    warning; a class directory with no readable image is a hard error.
    """
    subdirs = sorted(
        d for d in os.listdir(path) if os.path.isdir(os.path.join(path, d))
    )
    if not subdirs:
        raise InvalidDatasetError(f"no class subdirectories under {path}")
    samples = []
    for label, sub in enumerate(subdirs):
        full = os.path.join(path, sub)
        loaded = 0
        for fname in sorted(os.listdir(full)):
            fpath = os.path.join(full, fname)
            if not os.path.isfile(fpath):
                continue
            try:
                with Image.open(fpath) as pil:
                    if channels is None:
                        channels = 1 if pil.mode in ("L", "1", "I", "I;16") else 3
                    pil = pil.convert("L" if channels == 1 else "RGB")
                    if pil.size != (size, size):
                        pil = pil.resize((size, size), Image.BILINEAR)
                    arr = np.asarray(pil, dtype=np.float64)
            except Exception as err:
                warnings.warn(f"skipping unreadable image {fpath}: {err}")
                continue
            if arr.ndim == 2:
                arr = arr[:, :, None]
            samples.append(LabeledSample(arr / 127.5 - 1.0, label))
            loaded += 1
        if loaded == 0:
            raise InvalidDatasetError(f"class directory {full} has no readable image")
    return Dataset(samples, len(subdirs), subdirs)


def partition_dataset(dataset, n_clients, scheme="iid", seed=0):
    """Split a dataset into disjoint, exhaustive per-client shards."""
    if scheme != "iid":
        raise InvalidConfigError(f"unsupported partition scheme {scheme!r}")
    if n_clients > len(dataset):
        raise InvalidConfigError(
            f"cannot split {len(dataset)} samples across {n_clients} clients"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B11D]))
    order = rng.permutation(len(dataset))
    return [
        Dataset([dataset.samples[i] for i in chunk], dataset.num_classes, dataset.class_names)
        for chunk in np.array_split(order, n_clients)
    ]


def mix_poison(clean, poison, ratio, seed):
    """Replace a seeded fraction of a shard with poisoned samples.

    Output has the same cardinality as the clean shard: round(ratio * size)
    poisoned samples, the remainder drawn from the clean shard, shuffled.
    """
    if not 0.0 <= ratio <= 1.0:
        raise InvalidConfigError(f"poison ratio must be in [0, 1], got {ratio}")
    n = len(clean)
    n_poi = round(ratio * n)
    if n_poi > 0 and len(poison) == 0:
        raise InvalidDatasetError("poison set is empty but ratio > 0")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x31BED]))
    picked = []
    if n_poi > 0:
        idx = rng.choice(len(poison), size=n_poi, replace=len(poison) < n_poi)
        picked.extend(poison.samples[i] for i in idx)
    if n - n_poi > 0:
        idx = rng.choice(n, size=n - n_poi, replace=False)
        picked.extend(clean.samples[i] for i in idx)
    rng.shuffle(picked)
    return Dataset(picked, clean.num_classes, clean.class_names)
