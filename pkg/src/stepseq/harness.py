"""Experiment runner: plain batch sampler vs stepped sampler on one task.

Each training sequence (a video's frames) is cut into batches of ``L``
consecutive frames. The plain sampler feeds every batch to the model as one
input sequence. The stepped sampler cuts each batch into overlapping windows
of ``m`` frames and feeds each window; every window carries the video label.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .adam import AdamState, adam_step
from .datasets import (
    Dataset,
    SplitSpec,
    SyntheticSpec,
    dataset_digest,
    generate_synthetic,
    load_frame_folders,
    shuffle_test,
    split_train_test,
)
from .sampler import SamplerConfig, batch_stream, stepped_stream, validate_config
from .seqnet import ModelSpec, forward, init_params, loss_and_grads

UPDATE_MODES = ("per_sub_batch", "per_batch_accumulate")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerChoice:
    kind: str = "plain"  # "plain" or "stepped"
    batch_size: int = 25
    step_size: int | None = None
    step_stride: int | None = None
    drop_last: bool = False

    def stepped_config(self) -> SamplerConfig:
        return SamplerConfig(self.batch_size, self.step_size, self.step_stride)

    @property
    def label(self) -> str:
        if self.kind == "plain":
            return f"BatchSampler L={self.batch_size}"
        return f"stride {self.step_stride} stepped L={self.batch_size} m={self.step_size}"


@dataclass(frozen=True)
class ModelConfig:
    """Model widths; input and class counts come from the data."""

    embed_dim: int = 32
    hidden_dim: int = 32
    num_lstm_layers: int = 1
    head_dims: tuple[int, ...] = (32,)
    dropout_rate: float = 0.3

    def build(self, input_dim: int, num_classes: int) -> ModelSpec:
        return ModelSpec(
            input_dim, self.embed_dim, self.hidden_dim, self.num_lstm_layers,
            tuple(self.head_dims), num_classes, self.dropout_rate,
        )


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # "synthetic" or "folders"
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    root: str | None = None

    def load(self) -> Dataset:
        if self.source == "synthetic":
            return generate_synthetic(self.synthetic)
        if self.source == "folders":
            if not self.root:
                raise ConfigError("folders source needs a root directory")
            return load_frame_folders(self.root)
        raise ConfigError(f"unknown data source {self.source!r}")


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    sampler: SamplerChoice = field(default_factory=SamplerChoice)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 100
    seed: int = 0
    update_mode: str = "per_sub_batch"

    def validate(self) -> None:
        s = self.sampler
        if s.kind == "stepped":
            validate_config(s.stepped_config())
        elif s.kind == "plain":
            if s.batch_size < 1:
                raise ConfigError("batch_size must be positive")
        else:
            raise ConfigError(f"unknown sampler kind {s.kind!r}")
        if self.update_mode not in UPDATE_MODES:
            raise ConfigError(f"update_mode must be one of {UPDATE_MODES}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "sampler" in d:
            d["sampler"] = SamplerChoice(**d["sampler"])
        if "model" in d:
            m = dict(d["model"])
            if "head_dims" in m:
                m["head_dims"] = tuple(m["head_dims"])
            d["model"] = ModelConfig(**m)
        if "data" in d:
            data = dict(d["data"])
            if "synthetic" in data:
                syn = dict(data["synthetic"])
                if isinstance(syn.get("sequences_per_class"), list):
                    syn["sequences_per_class"] = tuple(syn["sequences_per_class"])
                data["synthetic"] = SyntheticSpec(**syn)
            d["data"] = DataConfig(**data)
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        return cls(**d)


@dataclass(frozen=True)
class TrainingRecord:
    epoch: int  # 1-based
    train_loss: float
    test_accuracy: float


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[TrainingRecord]
    fingerprints: dict[str, str]
    params: dict[str, np.ndarray]
    updates_per_epoch: int = 0


@dataclass(frozen=True)
class ConvergenceSummary:
    epoch_to_loss_threshold: int | None
    threshold: float
    post_convergence_jitter: float
    tail_window: int
    best_test_accuracy: float
    best_epoch: int


def _digest_arrays(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for k in sorted(arrays):
        h.update(k.encode())
        h.update(np.ascontiguousarray(arrays[k]).tobytes())
    return h.hexdigest()


def _window_groups(T: int, sampler: SamplerChoice) -> list[list[tuple[int, int]]]:
    """Frame spans ``(lo, hi)`` grouped by batch, for a sequence of length T."""
    groups: dict[int, list[tuple[int, int]]] = {}
    if sampler.kind == "plain":
        stream = batch_stream(T, sampler.batch_size, sampler.drop_last)
    else:
        stream = stepped_stream(T, sampler.stepped_config(), sampler.drop_last)
    for b, idx in stream:
        groups.setdefault(b, []).append((idx[0], idx[-1] + 1))
    return [groups[b] for b in sorted(groups)]


def _seeds(seed: int) -> tuple[int, int, np.random.SeedSequence]:
    init_ss, drop_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(3)
    return int(init_ss.generate_state(1)[0]), drop_ss, shuffle_ss


def evaluate(dataset: Iterable, spec: ModelSpec, params) -> float:
    seqs = list(dataset)
    if not seqs:
        return 0.0
    correct = sum(int(np.argmax(forward(s.features, spec, params)[0]) == s.label) for s in seqs)
    return correct / len(seqs)


def run_experiment_detailed(config: ExperimentConfig, dataset: Dataset | None = None) -> RunResult:
    config.validate()
    data = dataset if dataset is not None else config.data.load()
    train, test = split_train_test(data, SplitSpec(seed=config.seed))
    spec = config.model.build(data.feature_dim, data.num_classes)
    init_seed, drop_ss, shuffle_ss = _seeds(config.seed)
    params = init_params(spec, init_seed)
    fingerprints = {
        "dataset": dataset_digest(data),
        "train": dataset_digest(train),
        "test": dataset_digest(test),
        "init_params": _digest_arrays(params),
    }
    opt = config.optimizer
    state = AdamState(lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)
    drop_rng = np.random.default_rng(drop_ss)
    shuffle_seeds = shuffle_ss.spawn(max(config.epochs, 1))

    plans: dict[int, list] = {}
    for s in train:
        T = s.features.shape[0]
        if T not in plans:
            plans[T] = _window_groups(T, config.sampler)
    updates = sum(len(plans[s.features.shape[0]]) if config.update_mode == "per_batch_accumulate"
                  else sum(len(g) for g in plans[s.features.shape[0]]) for s in train)
    if config.epochs and updates == 0:
        raise ConfigError("sampler yields no training windows for these sequence lengths")

    records = []
    eval_hash = hashlib.sha256()
    for epoch in range(1, config.epochs + 1):
        losses = []
        for s in train:
            for group in plans[s.features.shape[0]]:
                if config.update_mode == "per_sub_batch":
                    for lo, hi in group:
                        loss, grads = loss_and_grads(s.features[lo:hi], s.label, spec, params, drop_rng)
                        adam_step(params, grads, state)
                        losses.append(loss)
                else:
                    total, acc = 0.0, None
                    for lo, hi in group:
                        loss, grads = loss_and_grads(s.features[lo:hi], s.label, spec, params, drop_rng)
                        total += loss
                        if acc is None:
                            acc = grads
                        else:
                            for k in acc:
                                acc[k] += grads[k]
                    k_win = len(group)
                    adam_step(params, {k: g / k_win for k, g in acc.items()}, state)
                    losses.append(total / k_win)
        order = shuffle_test(test, int(shuffle_seeds[epoch - 1].generate_state(1)[0]))
        for s in order:
            eval_hash.update(s.source_id.encode() + b"\0")
        accuracy = evaluate(order, spec, params)
        records.append(TrainingRecord(epoch, float(np.mean(losses)), accuracy))
    fingerprints["eval_order"] = eval_hash.hexdigest()
    return RunResult(config, records, fingerprints, params, updates)


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> list[TrainingRecord]:
    return run_experiment_detailed(config, dataset).records


def convergence_metrics(
    records: Sequence[TrainingRecord], tau: float | None = None, tail: int = 20
) -> ConvergenceSummary:
    """Loss-threshold crossing, tail jitter (population std), best accuracy.

    ``tau`` defaults to 1.2 x the minimum epoch loss.
    """
    if not records:
        raise ValueError("no records")
    if tail > len(records) or tail < 1:
        raise ValueError(f"window_too_large: tail {tail} for {len(records)} records")
    losses = np.array([r.train_loss for r in records])
    if tau is None:
        tau = 1.2 * float(losses.min())
    hit = np.nonzero(losses <= tau)[0]
    best = max(records, key=lambda r: (r.test_accuracy, -r.epoch))
    return ConvergenceSummary(
        epoch_to_loss_threshold=int(records[hit[0]].epoch) if hit.size else None,
        threshold=tau,
        post_convergence_jitter=float(np.std(losses[-tail:])),
        tail_window=tail,
        best_test_accuracy=best.test_accuracy,
        best_epoch=best.epoch,
    )


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def records_csv(records: Iterable[TrainingRecord]) -> str:
    lines = ["epoch,train_loss,test_accuracy"]
    lines += [f"{r.epoch},{r.train_loss:.6f},{r.test_accuracy:.6f}" for r in records]
    return "\n".join(lines) + "\n"


def emit_csv(records: Iterable[TrainingRecord], path: str | Path) -> Path:
    path = Path(path)
    _atomic_write(path, records_csv(records))
    return path


def read_csv(path: str | Path) -> list[TrainingRecord]:
    with open(path, newline="") as fh:
        return [
            TrainingRecord(int(row["epoch"]), float(row["train_loss"]), float(row["test_accuracy"]))
            for row in csv.DictReader(fh)
        ]


def gnuplot_script(csv_name: str, title: str) -> str:
    return (
        "set datafile separator ','\n"
        f"set title '{title}'\n"
        "set xlabel 'epoch'\n"
        "set ylabel 'train loss'\n"
        "set y2label 'test accuracy'\n"
        "set y2range [0:1]\n"
        "set ytics nomirror\n"
        "set y2tics\n"
        f"plot '{csv_name}' using 1:2 skip 1 with lines title 'train loss' axes x1y1, \\\n"
        f"     '{csv_name}' using 1:3 skip 1 with lines title 'test accuracy' axes x1y2\n"
    )


def write_run(result: RunResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    stem = _slug(result.config.name)
    paths = {
        "csv": emit_csv(result.records, out / f"{stem}.csv"),
        "gnuplot": out / f"{stem}.gp",
        "config": out / f"{stem}.config.json",
    }
    _atomic_write(paths["gnuplot"], gnuplot_script(f"{stem}.csv", result.config.name))
    _atomic_write(paths["config"], json.dumps(result.config.to_dict(), indent=2) + "\n")
    return paths


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name) or "run"


SHARED_ARTIFACTS = ("dataset", "train", "test", "init_params", "eval_order")


@dataclass
class Comparison:
    checkpoints: list[int]
    rows: list[tuple[str, list[float | None]]]
    results: list[RunResult]

    def to_csv(self) -> str:
        lines = [",".join(["model"] + [f"epoch {c}" for c in self.checkpoints])]
        for name, values in self.rows:
            cells = ["" if v is None else f"{v:.3f}" for v in values]
            lines.append(",".join([name] + cells))
        return "\n".join(lines) + "\n"


def compare(
    configs: Sequence[ExperimentConfig],
    checkpoints: Sequence[int],
    dataset: Dataset | None = None,
) -> Comparison:
    """Run sampler variants on one task and tabulate test accuracy at checkpoints.

    Raises ``ConfigError`` if the variants differ in anything shared (data,
    split, initial parameters, evaluation order).
    """
    configs = list(configs)
    if not configs:
        raise ConfigError("nothing to compare")
    base = configs[0]
    for c in configs[1:]:
        if (c.model, c.data, c.seed, c.epochs) != (base.model, base.data, base.seed, base.epochs):
            raise ConfigError(f"config {c.name!r} differs from {base.name!r} beyond the sampler")
    data = dataset if dataset is not None else base.data.load()
    results = [run_experiment_detailed(c, data) for c in configs]
    for r in results[1:]:
        for key in SHARED_ARTIFACTS:
            if r.fingerprints[key] != results[0].fingerprints[key]:
                raise ConfigError(f"shared artifact {key!r} differs between variants")
    rows = []
    for r in results:
        by_epoch = {rec.epoch: rec.test_accuracy for rec in r.records}
        rows.append((r.config.name, [by_epoch.get(c) for c in checkpoints]))
    return Comparison(list(checkpoints), rows, results)


def stride_sweep(
    base: ExperimentConfig, batch_size: int, step_size: int, strides: Sequence[int]
) -> list[ExperimentConfig]:
    """The plain batch sampler plus one stepped variant per stride."""
    plain = replace(base, name="BatchSampler", sampler=SamplerChoice("plain", batch_size))
    out = [plain]
    for n in strides:
        out.append(
            replace(
                base,
                name=f"stride {n} stepped",
                sampler=SamplerChoice("stepped", batch_size, step_size, n),
            )
        )
    return out
