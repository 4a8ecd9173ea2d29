import numpy as np
import pytest

from attngraph.data_io import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def toy_classification():
    """Small separable 3-class corpus shared by fast tests."""
    spec = SyntheticSpec(num_docs=60, num_classes=3, min_sentences=3, max_sentences=8,
                         embedding_dim=16, separation=4.0, noise=1.0, seed=11, name="toy")
    return generate_synthetic(spec)


@pytest.fixture(scope="session")
def toy_summarization():
    spec = SyntheticSpec(num_docs=40, num_classes=2, min_sentences=4, max_sentences=10,
                         embedding_dim=16, separation=4.0, noise=1.0, seed=13,
                         mode="summarization", positive_fraction=0.25, name="toysum")
    return generate_synthetic(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
