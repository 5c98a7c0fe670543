"""Labeled sequence data: a synthetic generator, a frame-folder reader, and splits."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

FRAME_SUFFIXES = (".npy", ".txt", ".csv")
VIDEO_MATRIX = "features.npy"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSequence:
    features: np.ndarray  # (T, D)
    label: int
    source_id: str

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise DatasetError(f"{self.source_id}: features must be (T >= 1, D)")
        if not np.isfinite(self.features).all():
            raise DatasetError(f"{self.source_id}: non-finite features")


@dataclass
class Dataset:
    sequences: list[LabeledSequence]
    class_names: list[str]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def feature_dim(self) -> int:
        return self.sequences[0].features.shape[1]

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    def subset(self, order: Sequence[int]) -> "Dataset":
        return Dataset([self.sequences[i] for i in order], list(self.class_names))


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 5
    sequences_per_class: int | tuple[int, ...] = 40
    timesteps: int = 30
    feature_dim: int = 16
    redundancy: float = 0.9
    noise_scale: float = 1.0
    seed: int = 0

    def counts(self) -> list[int]:
        if isinstance(self.sequences_per_class, int):
            return [self.sequences_per_class] * self.num_classes
        counts = list(self.sequences_per_class)
        if len(counts) != self.num_classes:
            raise DatasetError("sequences_per_class needs one count per class")
        return counts


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Class-conditioned sequences with tunable frame-to-frame redundancy.

    Each class owns a base pattern ``p ~ N(0, I)``. A sequence starts at
    ``p + s * eps_0`` and evolves as

        x_t = r * x_{t-1} + (1 - r) * (p + s * eps_t)

    so ``r = 1`` repeats the first frame and ``r = 0`` gives independent noisy
    draws around the pattern.
    """
    r = spec.redundancy
    if not 0.0 <= r <= 1.0:
        raise DatasetError("redundancy must lie in [0, 1]")
    counts = spec.counts()
    if spec.num_classes < 1 or spec.timesteps < 1 or spec.feature_dim < 1 or min(counts) < 1:
        raise DatasetError("sizes must be positive")
    rng = np.random.default_rng(spec.seed)
    T, D, s = spec.timesteps, spec.feature_dim, spec.noise_scale
    patterns = rng.standard_normal((spec.num_classes, D))
    seqs = []
    for label, count in enumerate(counts):
        for j in range(count):
            eps = rng.standard_normal((T, D))
            x = np.empty((T, D))
            x[0] = patterns[label] + s * eps[0]
            for t in range(1, T):
                x[t] = r * x[t - 1] + (1.0 - r) * (patterns[label] + s * eps[t])
            seqs.append(LabeledSequence(x, label, f"class{label}_{j + 1}"))
    names = [f"class{k}" for k in range(spec.num_classes)]
    return Dataset(seqs, names)


def write_manifest(spec: SyntheticSpec, path: str | Path) -> None:
    doc = {"generator": "synthetic", **asdict(spec)}
    if isinstance(spec.sequences_per_class, tuple):
        doc["sequences_per_class"] = list(spec.sequences_per_class)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> SyntheticSpec:
    doc = json.loads(Path(path).read_text())
    doc.pop("generator", None)
    if isinstance(doc.get("sequences_per_class"), list):
        doc["sequences_per_class"] = tuple(doc["sequences_per_class"])
    return SyntheticSpec(**doc)


def save_frame_folders(dataset: Dataset, root: str | Path) -> None:
    """Write one ``<Label>_<serial>`` folder per sequence, one ``.npy`` per frame."""
    root = Path(root)
    serial: dict[str, int] = {}
    for seq in dataset:
        name = dataset.class_names[seq.label]
        serial[name] = serial.get(name, 0) + 1
        folder = root / f"{name}_{serial[name]}"
        folder.mkdir(parents=True, exist_ok=True)
        width = max(3, len(str(seq.features.shape[0])))
        for t, frame in enumerate(seq.features):
            np.save(folder / f"{t + 1:0{width}d}.npy", frame)


def _read_frame(path: Path) -> np.ndarray:
    try:
        if path.suffix == ".npy":
            v = np.load(path)
        else:
            v = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=1)
    except Exception as exc:  # noqa: BLE001 - any reader failure is an unreadable frame
        raise DatasetError(f"unreadable frame {path}: {exc}") from exc
    return np.asarray(v, dtype=np.float64).ravel()


def label_of(folder_name: str) -> str:
    head, sep, tail = folder_name.rpartition("_")
    if not sep or not head or not tail.isdigit():
        raise DatasetError(f"folder {folder_name!r} is not <label>_<serial>")
    return head


def load_frame_folders(root: str | Path) -> Dataset:
    """One sequence per ``<label>_<serial>`` directory under ``root``.

    A folder holds either ``features.npy`` (a T x D matrix) or one file per
    frame (``.npy``, ``.txt`` or ``.csv``), read in lexicographic name order.
    Class indices follow the sorted unique labels.
    """
    root = Path(root)
    folders = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not folders:
        raise DatasetError(f"empty root: no video folders under {root}")
    labels = [label_of(f.name) for f in folders]
    names = sorted(set(labels))
    index = {n: k for k, n in enumerate(names)}
    seqs = []
    dim = None
    for folder, label in zip(folders, labels):
        matrix = folder / VIDEO_MATRIX
        if matrix.exists():
            try:
                feats = np.atleast_2d(np.load(matrix)).astype(np.float64)
            except Exception as exc:  # noqa: BLE001
                raise DatasetError(f"unreadable frame matrix {matrix}: {exc}") from exc
        else:
            frames = sorted(p for p in folder.iterdir() if p.suffix in FRAME_SUFFIXES)
            if not frames:
                raise DatasetError(f"{folder}: no frame files")
            rows = [_read_frame(p) for p in frames]
            if len({r.shape[0] for r in rows}) != 1:
                raise DatasetError(f"inconsistent feature dim inside {folder}")
            feats = np.stack(rows)
        if dim is None:
            dim = feats.shape[1]
        elif feats.shape[1] != dim:
            raise DatasetError(f"inconsistent feature dim: {folder} has {feats.shape[1]}, expected {dim}")
        seqs.append(LabeledSequence(feats, index[label], folder.name))
    return Dataset(seqs, names)


@dataclass(frozen=True)
class SplitSpec:
    seed: int = 0
    train_fraction: Fraction = Fraction(3, 4)
    stratified: bool = False  # per-class split; not part of the reference protocol


def train_size(total: int, fraction: Fraction = Fraction(3, 4)) -> int:
    # round half up
    return math.floor(fraction * total + Fraction(1, 2))


def split_train_test(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    if len(dataset) == 0:
        raise DatasetError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        order = rng.permutation(len(dataset))
        n = train_size(len(dataset), spec.train_fraction)
        return dataset.subset(order[:n].tolist()), dataset.subset(order[n:].tolist())
    train, test = [], []
    for label in range(dataset.num_classes):
        members = [i for i, s in enumerate(dataset) if s.label == label]
        members = [members[j] for j in rng.permutation(len(members))]
        n = train_size(len(members), spec.train_fraction)
        train += members[:n]
        test += members[n:]
    return dataset.subset(train), dataset.subset(test)


def shuffle_test(test: Dataset, seed: int) -> Dataset:
    order = np.random.default_rng(seed).permutation(len(test))
    return test.subset(order.tolist())


def dataset_digest(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for s in dataset:
        h.update(s.source_id.encode())
        h.update(int(s.label).to_bytes(4, "little"))
        h.update(np.ascontiguousarray(s.features).tobytes())
    return h.hexdigest()
