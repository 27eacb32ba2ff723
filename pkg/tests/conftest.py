import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from _synth import build_corpus, gaussian_fixture, synth_dataset  # noqa: E402


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    """Small on-disk PNG corpus with both variants and a correct manifest."""
    root = tmp_path_factory.mktemp("corpus")
    return build_corpus(
        root, n_per_class=12, seed=7, variants=("original", "segmented"), manifest=True
    )


@pytest.fixture(scope="session")
def mem_dataset():
    """In-memory 36-image corpus matching corpus_dir's original variant."""
    return synth_dataset(n_per_class=12, seed=7)


@pytest.fixture(scope="session")
def gauss150():
    """150-sample, 3-class separable Gaussian fixture (X, y)."""
    return gaussian_fixture(n_per_class=50, dim=2, spread=0.5, seed=3)
