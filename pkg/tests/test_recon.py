import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pbceit.errors import NumericalError, ValidationError
from pbceit.phantom import Scenario
from pbceit.recon import (ReconConfig, blob_centroid, build_reconstructor, colormap_position,
                          colors_for, nearest_centroid_fit, nearest_centroid_predict,
                          render_heatmap)


@pytest.fixture(scope="module")
def rec(mesh, protocol):
    return build_reconstructor(mesh, protocol, ReconConfig())


@pytest.mark.parametrize("prior", ["identity", "sensitivity"])
def test_dual_form_matches_normal_equations(mesh, rng, prior):
    J = rng.normal(size=(12, 40))
    lam = 0.3
    r = build_reconstructor(mesh, None, ReconConfig(lam=lam, prior=prior), J=J)
    P = np.diag(np.sum(J * J, axis=0)) if prior == "sensitivity" else np.eye(40)
    primal = np.linalg.solve(J.T @ J + lam ** 2 * P, J.T)
    np.testing.assert_allclose(r.operator, primal, rtol=1e-9, atol=1e-12)


def test_unregularised_full_rank(mesh, rng):
    J = rng.normal(size=(30, 8))
    r = build_reconstructor(mesh, None, ReconConfig(lam=0.0), J=J)
    np.testing.assert_allclose(r.operator, np.linalg.pinv(J), atol=1e-10)


def test_unregularised_rank_deficient_raises(mesh, protocol, rec):
    with pytest.raises(NumericalError):
        build_reconstructor(mesh, protocol, ReconConfig(lam=0.0), J=rec.J)


def test_zero_and_linearity(rec, rng):
    assert np.all(rec(np.zeros(208)) == 0)
    a, b = rng.normal(size=208), rng.normal(size=208)
    np.testing.assert_allclose(rec(2 * a - 3 * b), 2 * rec(a) - 3 * rec(b), rtol=1e-9,
                               atol=1e-12 * np.abs(rec(a)).max())
    rows = rec(np.vstack([a, b]))
    np.testing.assert_allclose(rows[1], rec(b))


def test_wrong_channel_count(rec):
    with pytest.raises(ValidationError):
        rec(np.zeros(207))


@pytest.mark.parametrize("kwargs", [{"lam": -1.0}, {"prior": "noser"}, {"lam": float("nan")}])
def test_invalid_config(kwargs):
    with pytest.raises(ValidationError):
        ReconConfig(**kwargs)


def test_conductive_target_reconstructs_positive_near_truth(mesh, quiet_simulator, rec):
    sc = Scenario("LOC", r=0.04, theta=120.0)
    dv = quiet_simulator.simulate_frame(sc).v - quiet_simulator.baseline()
    ds = rec(dv)
    c = blob_centroid(mesh, ds)
    truth = np.array(sc.center)
    assert np.hypot(*(c - truth)) < 0.015
    top = np.argsort(-np.abs(ds))[:20]
    assert np.all(ds[top] > 0)


def test_blob_centroid_picks_largest_elements(mesh):
    ds = np.zeros(mesh.n_elements)
    ds[17] = -5.0
    np.testing.assert_allclose(blob_centroid(mesh, ds, fraction=1 / mesh.n_elements),
                               mesh.geometry.centroid[17])


def test_nearest_centroid():
    maps = np.array([[0.0, 0.0], [0.2, 0.0], [5.0, 5.0], [5.2, 5.0]])
    model = nearest_centroid_fit(maps, ["a", "a", "b", "b"])
    assert nearest_centroid_predict(model, [[0.1, 0.3], [4.0, 4.0]]).tolist() == ["a", "b"]


def test_colormap_midpoint_and_symmetry(rng):
    x = rng.normal(size=50)
    np.testing.assert_allclose(colormap_position(x) + colormap_position(-x), 1.0)
    assert colors_for(np.array([0.0, 1.0]))[0].tolist() == [247, 247, 247]
    assert colormap_position(np.zeros(3)).tolist() == [0.5, 0.5, 0.5]
    ends = colors_for(np.array([-1.0, 1.0]))
    assert ends[0].tolist() == [5, 48, 97] and ends[1].tolist() == [103, 0, 31]


def test_heatmap_svg(mesh, rng):
    ds = rng.normal(size=mesh.n_elements)
    svg = render_heatmap(mesh, ds, title="t<1>")
    assert svg == render_heatmap(mesh, ds, title="t<1>")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    polys = [el for el in root.iter() if el.tag.endswith("polygon")]
    assert len(polys) == mesh.n_elements
