import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("gaitlab", deadline=None, max_examples=60)
settings.load_profile("gaitlab")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blob(shape=(240, 240), center=(120, 120), radii=(60, 30)):
    """Filled axis-aligned ellipse."""
    r, c = np.ogrid[:shape[0], :shape[1]]
    return ((((r - center[0]) / radii[0]) ** 2 + ((c - center[1]) / radii[1]) ** 2) <= 1).astype(np.uint8)


@pytest.fixture(scope="session")
def gender_corpus():
    from gaitlab.synth import generate_gender_corpus

    return generate_gender_corpus(n_subjects=150, sequences_per_subject=1, seed=0)


@pytest.fixture(scope="session")
def pbv_sweep(gender_corpus):
    """Five-fold RCS-PBV and GEI-baseline rows on the 150-subject corpus, with wall time."""
    import time

    from gaitlab.pbv import partial_sweep

    t = time.perf_counter()
    rows = partial_sweep(list(gender_corpus.sequences.values()), gender_corpus.genders, n_folds=5, seed=0)
    return rows, time.perf_counter() - t
