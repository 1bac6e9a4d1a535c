import logging
import warnings

import numpy as np
import pytest

from gaitlab.subspace import (CdaModel, LdaModel, PcaModel, SingularScatterWarning, SubspaceError, cda_fit,
                              cda_transform, lda_fit, lda_transform, pca_fit, pca_transform)
from gaitlab.synth import SynthSpec, generate_synthetic_dataset
from gaitlab.templates import compute_gei, flatten

log = logging.getLogger(__name__)


# --- PCA ---

def test_points_on_a_line(rng):
    t = rng.normal(size=40)
    X = np.column_stack([t, 2 * t + 1])
    assert pca_fit(X, 0.99).n_components == 1


def test_full_retention_keeps_rank(rng):
    X = rng.normal(size=(20, 4)) @ rng.normal(size=(4, 9))
    assert pca_fit(X, 1.0).n_components == np.linalg.matrix_rank(X - X.mean(0))


@pytest.mark.parametrize("retention", [0.5, 0.8, 0.95, 0.99])
def test_retained_variance_against_eigendecomposition(rng, retention):
    X = rng.normal(size=(50, 30)) * np.linspace(3, 0.1, 30)
    m = pca_fit(X, retention)
    Xc = X - X.mean(0)
    w = np.linalg.eigvalsh(np.cov(Xc.T))[::-1]
    assert np.allclose(m.explained_variance, w[:m.n_components], rtol=1e-9)
    resid = Xc - (Xc @ m.components.T) @ m.components
    total = np.sum(Xc ** 2)
    assert np.sum(resid ** 2) <= (1 - retention) * total + 1e-9


def test_pca_transform_properties(rng):
    X = rng.normal(size=(60, 8)) @ rng.normal(size=(8, 8))
    m = pca_fit(X, 1.0)
    assert np.allclose(pca_transform(m, m.mean), 0)
    Z = pca_transform(m, X)
    assert np.allclose(Z.var(axis=0, ddof=1), m.explained_variance, atol=1e-6)
    assert np.allclose(pca_transform(m, X[3]), Z[3])


def test_wide_data_uses_gram_route(rng):
    X = rng.normal(size=(10, 5000))
    m = pca_fit(X, 1.0)
    assert m.n_components == 9
    assert np.allclose(m.components @ m.components.T, np.eye(9), atol=1e-10)


def test_pca_errors(rng):
    with pytest.raises(SubspaceError):
        pca_fit(np.ones((5, 3)))
    with pytest.raises(SubspaceError):
        pca_fit(rng.normal(size=(1, 3)))
    with pytest.raises(SubspaceError):
        pca_fit(rng.normal(size=(5, 3)), 0.0)


# --- LDA ---

def _fisher_separation(Z, y):
    a, b = Z[y == 0, 0], Z[y == 1, 0]
    sd = np.sqrt(((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / np.sqrt(len(Z) - 2)
    return abs(a.mean() - b.mean()) / sd


def test_two_one_d_classes(rng):
    X = np.concatenate([rng.normal(0, 1, 100), rng.normal(10, 1, 100)])[:, None]
    y = np.repeat([0, 1], 100)
    m = lda_fit(X, y)
    assert _fisher_separation(lda_transform(m, X), y) >= 5


def test_three_classes_two_axes(rng):
    X = rng.normal(size=(60, 6)) + np.repeat(np.eye(6)[:3] * 4, 20, axis=0)
    y = np.repeat([0, 1, 2], 20)
    assert lda_fit(X, y).n_components <= 2


def test_duplication_invariance(rng):
    X = rng.normal(size=(45, 5)) + np.repeat(rng.normal(size=(3, 5)) * 3, 15, axis=0)
    y = np.repeat([0, 1, 2], 15)
    a = lda_fit(X, y).scalings
    b = lda_fit(np.vstack([X, X]), np.concatenate([y, y])).scalings
    cos = np.abs(np.sum(a * b, axis=0)) / (np.linalg.norm(a, axis=0) * np.linalg.norm(b, axis=0))
    assert np.allclose(cos, 1, atol=1e-8)


def test_lda_transform_contracts(rng):
    X = rng.normal(size=(40, 4)) + np.repeat(rng.normal(size=(4, 4)) * 3, 10, axis=0)
    y = np.repeat(list("abcd"), 10)
    m = lda_fit(X, y)
    for k, c in enumerate(m.classes):
        assert np.allclose(lda_transform(m, X[y == c].mean(0)), m.class_means[k])
    assert np.allclose(lda_transform(m, X[:1])[0], lda_transform(m, X[0]))
    with pytest.raises(SubspaceError):
        lda_transform(m, np.zeros((1, 3)))


def test_coincident_means_raise():
    X = np.array([[0.0, 1], [0, -1], [1, 0], [-1, 0]])
    with pytest.raises(SubspaceError):
        lda_fit(X, [0, 0, 1, 1])


def test_single_class_raises(rng):
    with pytest.raises(SubspaceError):
        lda_fit(rng.normal(size=(5, 2)), [1] * 5)


def test_underdetermined_scatter_warns(rng):
    X = rng.normal(size=(6, 40))
    with pytest.warns(SingularScatterWarning):
        lda_fit(X, [0, 0, 1, 1, 2, 3])


def test_constant_features_are_harmless(rng):
    X = np.hstack([rng.normal(size=(30, 3)), np.ones((30, 50))])
    y = np.repeat([0, 1, 2], 10)
    X[:, 0] += y * 3
    with warnings.catch_warnings():
        warnings.simplefilter("error", SingularScatterWarning)
        lda_fit(X, y)


# --- CDA ---

def test_cda_is_composition(rng):
    X = rng.normal(size=(30, 12)) + np.repeat(rng.normal(size=(3, 12)), 10, axis=0)
    y = np.repeat([0, 1, 2], 10)
    m = cda_fit(X, y, 0.95)
    P = pca_transform(pca_fit(X, 0.95), X)
    seq = lda_transform(lda_fit(P, y), P)
    assert np.allclose(cda_transform(m, X), seq)


def test_cda_on_synthetic_templates():
    ds = generate_synthetic_dataset(SynthSpec(subjects=6, frames=30, runs={"nm": 4}), 3)
    keys = sorted(ds.sequences)
    X = np.array([flatten(compute_gei(ds.sequences[k].frames)) for k in keys])
    y = np.array([k.subject for k in keys])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularScatterWarning)
        m = cda_fit(X, y, 0.99)
    log.info("retained PCA components on 24 synthetic GEIs: %d", m.pca.n_components)
    assert cda_transform(m, X).shape == (24, 5)


def test_model_dict_round_trips(rng):
    X = rng.normal(size=(30, 6)) + np.repeat(rng.normal(size=(3, 6)) * 2, 10, axis=0)
    y = np.repeat(["x", "y", "z"], 10)
    m = cda_fit(X, y)
    back = CdaModel.from_dict(m.to_dict())
    assert np.array_equal(cda_transform(back, X), cda_transform(m, X))
    assert isinstance(PcaModel.from_dict(m.pca.to_dict()), PcaModel)
    assert isinstance(LdaModel.from_dict(m.lda.to_dict()), LdaModel)
    with pytest.raises(SubspaceError):
        CdaModel.from_dict({**m.to_dict(), "format_version": 99})
