import numpy as np
import pytest

from pbceit.errors import ValidationError
from pbceit.features import DegenerateDataError, PcaModel, back_project, fit_pca, project

HAND = np.array([[1.0, 0.1], [-1.0, 0.1], [1.0, -0.1], [-1.0, -0.1]])


def test_hand_example():
    m = fit_pca(HAND, k=2)
    np.testing.assert_allclose(m.explained_variance, [4 / 3, 0.04 / 3])
    assert m.explained_ratio[0] == pytest.approx(2 / 2.02, abs=1e-15)
    np.testing.assert_allclose(m.components, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(project(m, HAND), HAND)


def test_components_are_orthonormal_and_sorted(rng):
    X = rng.normal(size=(60, 9)) @ rng.normal(size=(9, 9))
    m = fit_pca(X, k=9)
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(9), atol=1e-12)
    assert np.all(np.diff(m.explained_variance) <= 0)
    assert m.all_ratios.sum() == pytest.approx(1.0)
    # sign convention: the largest-magnitude entry of each component is positive
    pivot = np.argmax(np.abs(m.components), axis=1)
    assert np.all(m.components[np.arange(9), pivot] > 0)


def test_scores_have_the_explained_variance(rng):
    X = rng.normal(size=(80, 5)) * [5, 3, 2, 1, 0.5]
    m = fit_pca(X, k=3)
    np.testing.assert_allclose(project(m, X).var(axis=0, ddof=1), m.explained_variance,
                               rtol=1e-10)


def test_full_rank_back_projection_is_exact(rng):
    X = rng.normal(size=(20, 6))
    for standardize in (False, True):
        m = fit_pca(X, k=6, standardize=standardize)
        np.testing.assert_allclose(back_project(m, project(m, X)), X, atol=1e-12)


def test_threshold_selects_smallest_k(rng):
    X = rng.normal(size=(100, 6)) * [10, 5, 1, 0.5, 0.1, 0.1]
    m = fit_pca(X, threshold=0.95)
    cum = np.cumsum(m.all_ratios)
    assert cum[m.k - 1] >= 0.95 > (cum[m.k - 2] if m.k > 1 else 0)
    assert fit_pca(X, threshold=1.0).k == 6


def test_model_depends_only_on_training_rows(rng):
    train = rng.normal(size=(30, 4))
    a = fit_pca(train, k=2)
    test_rows = rng.normal(size=(5, 4))
    before = project(a, test_rows)
    b = fit_pca(train.copy(), k=2)
    np.testing.assert_array_equal(project(b, test_rows * 1.0), before)
    # row order of the training data does not matter
    c = fit_pca(train[rng.permutation(30)], k=2)
    np.testing.assert_allclose(c.components, a.components, atol=1e-12)


def test_json_round_trip(rng):
    m = fit_pca(rng.normal(size=(10, 3)), k=2, standardize=True)
    back = PcaModel.from_json(m.to_json())
    for name in ("mean", "components", "explained_variance", "explained_ratio", "all_ratios",
                 "scale"):
        np.testing.assert_array_equal(getattr(back, name), getattr(m, name))


def test_errors():
    with pytest.raises(DegenerateDataError):
        fit_pca(np.ones((5, 3)), k=None, threshold=0.9)
    with pytest.raises(ValidationError):
        fit_pca(np.ones((1, 3)))
    with pytest.raises(ValidationError):
        fit_pca(HAND, k=3)
    with pytest.raises(ValidationError):
        fit_pca(HAND, k=1, threshold=0.5)
    with pytest.raises(ValidationError):
        project(fit_pca(HAND, k=1), np.ones((2, 3)))
    # constant data with a fixed k is allowed and has zero ratios
    assert fit_pca(np.ones((5, 3)), k=1).explained_ratio[0] == 0.0
