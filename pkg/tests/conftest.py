import pytest

from stepseq.datasets import SyntheticSpec
from stepseq.harness import DataConfig, ExperimentConfig, ModelConfig, OptimizerConfig, SamplerChoice


@pytest.fixture
def tiny_config():
    """A seconds-scale experiment: 24 sequences of 12 frames, 3 classes."""
    return ExperimentConfig(
        name="tiny",
        sampler=SamplerChoice("stepped", 6, 4, 1),
        model=ModelConfig(embed_dim=4, hidden_dim=6, num_lstm_layers=1, head_dims=(8,), dropout_rate=0.3),
        data=DataConfig(synthetic=SyntheticSpec(3, 8, 12, 4, 0.8, 2.0, seed=1)),
        optimizer=OptimizerConfig(lr=1e-2),
        epochs=3,
        seed=5,
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
