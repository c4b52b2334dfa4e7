from pathlib import Path

import numpy as np
import pytest

from glassbox.data import load_census, train_test_split
from glassbox.models import GbtConfig, train_gbt

ROOT = Path(__file__).resolve().parents[1]
SAMPLE = ROOT / "data" / "adult_sample.csv"
FULL = ROOT / "data" / "adult.csv"


@pytest.fixture(scope="session")
def sample_path():
    return SAMPLE


@pytest.fixture(scope="session")
def sample():
    return load_census(SAMPLE)


@pytest.fixture(scope="session")
def sample_split(sample):
    return train_test_split(sample[1], 0.8, 42)


@pytest.fixture(scope="session")
def sample_model(sample_split):
    tr = sample_split.train
    return train_gbt(tr.matrix, tr.labels, GbtConfig(n_trees=40, max_depth=3), tr.feature_names)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def _reproduce(factory, name, threads):
    from glassbox.pipeline import PipelineConfig, reproduce

    if not FULL.exists():
        pytest.skip("data/adult.csv not present")
    out = factory.mktemp(name)
    return out, reproduce(FULL, out, PipelineConfig(seed=42), threads=threads, log=lambda *a: None)


@pytest.fixture(scope="session")
def adult_run(tmp_path_factory):
    """Full pipeline on the Adult file: (output dir, manifest)."""
    return _reproduce(tmp_path_factory, "reproduce_t1", 1)


@pytest.fixture(scope="session")
def adult_run_threaded(tmp_path_factory):
    return _reproduce(tmp_path_factory, "reproduce_t2", 2)
