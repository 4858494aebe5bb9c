"""
Pytest configuration and shared fixtures for the test suite.

This module provides:
- Hypothesis profiles
- Trace fixtures (the worked "aaabababca" example, cyclic traces)
- Trace strategies for property-based tests
- Small model and dataset factories
"""
import os
from pathlib import Path
from typing import List

import numpy as np
import pytest
from hypothesis import Verbosity, settings
from hypothesis import strategies as st

from src.services.trace_io.schemas import Trace
from src.services.trace_io.synthetic import cyclic_trace
from src.services.clustering.schemas import ClusterModel
from src.services.dataset.schemas import Dataset, ScalerParams
from src.services.rnn.schemas import TrainConfig
from src.services.rnn.service import init_params


# ============================================================================
# Pytest Configuration
# ============================================================================

def pytest_configure(config):
    """Configure pytest with custom markers and settings."""
    config.addinivalue_line(
        "markers", "property_test: mark test as a property-based test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers", "unit: mark test as a unit test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )
    config.addinivalue_line(
        "markers", "smoke: mark test as a quick end-to-end check"
    )


# Configure Hypothesis for property-based testing
settings.register_profile("default", max_examples=100, deadline=None, verbosity=Verbosity.normal)
settings.register_profile("ci", max_examples=200, deadline=None, verbosity=Verbosity.verbose)
settings.register_profile("dev", max_examples=10, deadline=None, verbosity=Verbosity.normal)
settings.register_profile("debug", max_examples=10, deadline=None, verbosity=Verbosity.verbose)

# Load profile from environment or use default
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


# ============================================================================
# Trace Fixtures
# ============================================================================

WORKED_TOKENS = list("aaabababca")


def trace_of(tokens: List[str]) -> Trace:
    """Symbolic trace with dense IDs in first-seen order."""
    table: dict[str, int] = {}
    blocks = [table.setdefault(token, len(table)) for token in tokens]
    return Trace(blocks=blocks, symbols=list(table))


@pytest.fixture
def worked_trace() -> Trace:
    """The ten-access worked example a a a b a b a b c a."""
    return trace_of(WORKED_TOKENS)


@pytest.fixture
def worked_file(tmp_path: Path) -> Path:
    path = tmp_path / "worked.trace"
    path.write_text("".join(f"{token}\n" for token in WORKED_TOKENS))
    return path


@pytest.fixture
def cyclic_300() -> Trace:
    return cyclic_trace(300, period=3)


@pytest.fixture
def msr_file(tmp_path: Path) -> Path:
    """Three MSR Cambridge rows on two disks."""
    path = tmp_path / "msr.csv"
    path.write_text(
        "128166372003061629,hm,0,Read,8192,4096,1331\n"
        "128166372016382155,hm,0,Write,0,8192,1100\n"
        "128166372026382245,hm,1,Read,8192,512,900\n"
    )
    return path


# ============================================================================
# Model Fixtures
# ============================================================================

@pytest.fixture
def small_train_config() -> TrainConfig:
    return TrainConfig(
        epochs=5,
        learning_rate=0.01,
        batch_size=16,
        dropout=0.2,
        seed=7,
        patience=5,
        lstm_width=6,
        lstm_layers=2,
    )


@pytest.fixture
def tiny_params():
    """Two-layer width-4 model over 3-step samples."""
    return init_params(width=4, layers=2, seq_len=3, rng=np.random.default_rng(42))


def random_dataset(count: int, sequence_length: int, seed: int = 0) -> Dataset:
    """Scaled-looking random samples with a unit scaler."""
    rng = np.random.default_rng(seed)
    return Dataset(
        features=rng.uniform(-1, 1, size=(count, sequence_length, 6)).astype(np.float32),
        targets=rng.uniform(-1, 1, size=count).astype(np.float32),
        origin_times=np.arange(sequence_length - 1, sequence_length - 1 + count, dtype=np.int64),
        sequence_length=sequence_length,
        scaler=ScalerParams(mins=[0.0] * 7, maxs=[1.0] * 7),
        cluster_model=ClusterModel(centroids=[0.0], k=1),
    )


# ============================================================================
# Property-Based Testing Strategies
# ============================================================================

def traces(min_size: int = 1, max_size: int = 200, max_alphabet: int = 20) -> st.SearchStrategy[Trace]:
    """Random traces over a small block alphabet."""
    return st.integers(min_value=1, max_value=max_alphabet).flatmap(
        lambda alphabet: st.lists(
            st.integers(min_value=0, max_value=alphabet - 1),
            min_size=min_size,
            max_size=max_size,
        ).map(lambda blocks: Trace(blocks=blocks))
    )


def small_instances() -> st.SearchStrategy[tuple[Trace, int]]:
    """(trace of at most 30 accesses, cache size 1..3) for exhaustive search."""
    return st.tuples(traces(min_size=1, max_size=30, max_alphabet=6), st.integers(1, 3))
