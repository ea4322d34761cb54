"""Labeled voxel dataset: perturbed tetrahedra/prisms/cubes plus
Voronoi-cell "other" samples, stratified 60/20/20.

Perturbation magnitudes (per-axis stretch in [0.6, 1.6], vertex jitter
within 5% of the diameter, uniform rotations, reflection with
probability 0.5) are large enough to force invariance learning while
keeping the class labels semantically correct. Each sample draws its
own RNG stream from (rng_seed, class, index) so generation order never
matters.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from . import geometry, grid_gen
from .cnn import CLASS_NAMES, TrainTensors
from .errors import FormatError, MalformedInputError
from .voxel import RESOLUTION, BinaryImage, voxelize

GENERATOR_VERSION = 1
SPLIT_NAMES = ("train", "validation", "test")
SPLIT_RATIOS = (0.6, 0.2, 0.2)
MIN_OCCUPANCY = 32

STRETCH_RANGE = (0.6, 1.6)
JITTER_FRACTION = 0.05
REFLECT_PROBABILITY = 0.5

# Desk-scale class sizes; the full-scale run uses 10x these.
DESK_COUNTS = (600, 600, 600, 450)
FULL_COUNTS = (6000, 6000, 6000, 4500)

_OTHER_GRID_SEEDS = 30


@dataclass
class LabeledDataset:
    images: list                 # BinaryImage per sample
    labels: np.ndarray           # (N,) int in [0, 4)
    split: np.ndarray            # (N,) int index into SPLIT_NAMES
    rng_seed: int = 0

    def __len__(self):
        return len(self.images)

    def counts(self):
        out = {}
        for li, name in enumerate(CLASS_NAMES):
            out[name] = int((self.labels == li).sum())
        return out

    def split_counts(self):
        out = {}
        for si, name in enumerate(SPLIT_NAMES):
            out[name] = int((self.split == si).sum())
        return out

    def to_tensors(self) -> TrainTensors:
        x = np.stack([im.voxels for im in self.images]).astype(np.float64)
        x = x[:, None]
        y = self.labels
        parts = {}
        for si in range(3):
            mask = self.split == si
            parts[si] = (x[mask], y[mask])
        return TrainTensors(*parts[0], *parts[1], *parts[2])


def base_shape(name: str) -> geometry.Polyhedron:
    """Regular representative of a shape class, unit-ish scale."""
    if name == "cube":
        return geometry.box((0, 0, 0), (1, 1, 1))
    if name == "tetrahedron":
        return geometry.tetrahedron(
            (0, 0, 0), (1, 0, 0),
            (0.5, math.sqrt(3) / 2, 0),
            (0.5, math.sqrt(3) / 6, math.sqrt(2.0 / 3.0)))
    if name == "prism":
        tri = [(0, 0, 0), (1, 0, 0), (0.5, math.sqrt(3) / 2, 0)]
        verts = np.array(tri + [(x, y, z + 1.0) for x, y, z in tri])
        faces = geometry.orient_outward(
            verts, [(0, 1, 2), (3, 4, 5), (0, 1, 4, 3), (1, 2, 5, 4),
                    (2, 0, 3, 5)])
        return geometry.Polyhedron(verts, faces)
    raise MalformedInputError(f"no base shape for class {name!r}")


def _random_rotation(rng) -> np.ndarray:
    """Uniform rotation matrix from a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def perturbed_shape(base: geometry.Polyhedron, rng, *,
                    stretch=STRETCH_RANGE, jitter=JITTER_FRACTION,
                    reflect=REFLECT_PROBABILITY,
                    rotate=True) -> geometry.Polyhedron:
    """Stretch, rotate, maybe reflect, then jitter the vertices."""
    verts = base.vertices * rng.uniform(*stretch, size=3)
    if rotate:
        verts = verts @ _random_rotation(rng).T
    flip = rng.uniform() < reflect
    if flip:
        verts = verts * np.array([-1.0, 1.0, 1.0])
    faces = [f[::-1] for f in base.faces] if flip else base.faces
    if jitter > 0:
        d2 = np.sum((verts[:, None] - verts[None, :]) ** 2, axis=2)
        diam = math.sqrt(float(d2.max()))
        verts = verts + rng.uniform(-jitter * diam, jitter * diam,
                                    size=verts.shape)
    return geometry.Polyhedron(verts, faces)


def gen_shape_samples(shape_class: str, count: int, rng_seed: int):
    """(BinaryImage, label) samples of one perturbed shape class."""
    if count < 1:
        raise MalformedInputError("count must be >= 1")
    label = CLASS_NAMES.index(shape_class)
    base = base_shape(shape_class)
    out = []
    for i in range(count):
        rng = np.random.default_rng([rng_seed, label, i])
        for _attempt in range(20):
            p = perturbed_shape(base, rng)
            img = voxelize(p)
            if img.occupancy() >= MIN_OCCUPANCY:
                break
        out.append((img, label))
    return out


def gen_other_samples(count: int, rng_seed: int):
    """Cells of fresh random-seed Voronoi grids, labeled "other"."""
    if count < 1:
        raise MalformedInputError("count must be >= 1")
    label = CLASS_NAMES.index("other")
    out = []
    grid_index = 0
    while len(out) < count:
        sub = np.random.default_rng([rng_seed, label, grid_index])
        seeds = sub.uniform(0, 1, size=(_OTHER_GRID_SEEDS, 3))
        m = grid_gen.voronoi_grid(
            grid_gen.GridSpec("voronoi", _OTHER_GRID_SEEDS), seeds=seeds)
        for p in m:
            img = voxelize(p)
            if img.occupancy() >= MIN_OCCUPANCY:
                out.append((img, label))
            if len(out) == count:
                break
        grid_index += 1
    return out


def split(samples, rng_seed: int) -> LabeledDataset:
    """Stratified 60/20/20 assignment with a seeded shuffle per class."""
    labels = np.array([s[1] for s in samples], dtype=np.int64)
    assignment = np.empty(len(samples), dtype=np.int64)
    rng = np.random.default_rng([rng_seed, 97])
    for li in range(len(CLASS_NAMES)):
        idx = np.nonzero(labels == li)[0]
        if not len(idx):
            continue
        if len(idx) < 5:
            raise MalformedInputError(
                f"class {CLASS_NAMES[li]!r} has fewer than 5 samples")
        idx = idx[rng.permutation(len(idx))]
        n = len(idx)
        n_train = int(round(SPLIT_RATIOS[0] * n))
        n_val = int(round(SPLIT_RATIOS[1] * n))
        assignment[idx[:n_train]] = 0
        assignment[idx[n_train:n_train + n_val]] = 1
        assignment[idx[n_train + n_val:]] = 2
    return LabeledDataset(
        images=[s[0] for s in samples], labels=labels,
        split=assignment, rng_seed=rng_seed)


def generate(counts=DESK_COUNTS, rng_seed: int = 0) -> LabeledDataset:
    """Full dataset: three perturbed shape classes plus Voronoi cells."""
    samples = []
    for name, count in zip(CLASS_NAMES[:3], counts[:3]):
        samples.extend(gen_shape_samples(name, count, rng_seed))
    samples.extend(gen_other_samples(counts[3], rng_seed))
    return split(samples, rng_seed)


# ---------------------------------------------------------------------------
# Dataset file: per sample a 4096-byte voxel stream (z-major), one
# label byte, one split byte; counts and provenance in a JSON manifest.

_RECORD = RESOLUTION ** 3 + 2


def save(ds: LabeledDataset, data_path, manifest_path=None):
    data_path = str(data_path)
    if manifest_path is None:
        manifest_path = data_path + ".manifest.json"
    with open(data_path, "wb") as fh:
        for img, label, sp in zip(ds.images, ds.labels, ds.split):
            fh.write(img.to_bytes())
            fh.write(bytes([int(label), int(sp)]))
    manifest = {
        "generator_version": GENERATOR_VERSION,
        "rng_seed": int(ds.rng_seed),
        "n_samples": len(ds),
        "counts": ds.counts(),
        "split_counts": ds.split_counts(),
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load(data_path) -> LabeledDataset:
    with open(data_path, "rb") as fh:
        raw = fh.read()
    if len(raw) % _RECORD:
        raise FormatError(
            f"dataset length {len(raw)} is not a multiple of {_RECORD}")
    images = []
    labels = []
    splits = []
    for off in range(0, len(raw), _RECORD):
        images.append(BinaryImage.from_bytes(raw[off:off + RESOLUTION ** 3]))
        label, sp = raw[off + RESOLUTION ** 3:off + _RECORD]
        if label >= len(CLASS_NAMES) or sp >= len(SPLIT_NAMES):
            raise FormatError(f"bad label/split byte at offset {off}")
        labels.append(label)
        splits.append(sp)
    return LabeledDataset(images, np.array(labels, dtype=np.int64),
                          np.array(splits, dtype=np.int64))
