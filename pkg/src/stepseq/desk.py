"""The desk-scale sampler comparison: a small synthetic stand-in for the video task."""

from __future__ import annotations

from .datasets import SyntheticSpec
from .harness import DataConfig, ExperimentConfig, ModelConfig, OptimizerConfig, stride_sweep

BATCH_SIZE = 25
STEP_SIZE = 20
STRIDES = (1, 2, 5)
# 267 sequences -> 200 train / 67 test under the 3:1 split
COUNTS = (54, 54, 53, 53, 53)


def desk_base(seed: int, epochs: int = 100) -> ExperimentConfig:
    return ExperimentConfig(
        name="desk",
        model=ModelConfig(embed_dim=16, hidden_dim=32, num_lstm_layers=1, head_dims=(32,), dropout_rate=0.3),
        data=DataConfig(
            synthetic=SyntheticSpec(
                num_classes=5,
                sequences_per_class=COUNTS,
                timesteps=30,
                feature_dim=16,
                redundancy=0.9,
                noise_scale=3.0,
                seed=seed,
            )
        ),
        optimizer=OptimizerConfig(lr=1e-4),
        epochs=epochs,
        seed=seed,
    )


def desk_variants(seed: int, epochs: int = 100, strides=STRIDES) -> list[ExperimentConfig]:
    """Plain batch sampler (L=25) plus stepped (L=25, m=20) at each stride."""
    return stride_sweep(desk_base(seed, epochs), BATCH_SIZE, STEP_SIZE, strides)
