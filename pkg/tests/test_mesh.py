import numpy as np
import pytest

from pbceit.mesh import (Mesh, MeshError, N_ELECTRODES, annulus, build_mesh, disc,
                         elements_in_region, region_coverage, rotation_permutations, slit)


def test_default_mesh_size(mesh):
    assert mesh.n_elements == 2432
    assert mesh.n_nodes == 1345
    # Euler characteristic of a triangulated disc
    edges = {tuple(sorted(e)) for t in mesh.elements.tolist()
             for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
    assert mesh.n_nodes - len(edges) + mesh.n_elements == 1


def test_elements_positive_and_area_sums_to_polygon(mesh):
    area = mesh.geometry.area
    assert np.all(area > 0)
    b = mesh.nodes[mesh.boundary_nodes]
    shoelace = 0.5 * np.sum(b[:, 0] * np.roll(b[:, 1], -1) - np.roll(b[:, 0], -1) * b[:, 1])
    assert area.sum() == pytest.approx(shoelace, rel=1e-12)
    assert area.sum() == pytest.approx(np.pi * mesh.tank_radius ** 2, rel=2e-3)


def test_boundary_nodes_lie_on_the_wall(mesh):
    r = np.hypot(*mesh.nodes[mesh.boundary_nodes].T)
    np.testing.assert_allclose(r, mesh.tank_radius, rtol=1e-12)


def test_electrodes_cover_the_requested_fraction(mesh):
    pitch = 2 * np.pi * mesh.tank_radius / N_ELECTRODES
    assert len(mesh.electrode_edges) == N_ELECTRODES
    for e, edges in enumerate(mesh.electrode_edges):
        p, q = mesh.nodes[edges[:, 0]], mesh.nodes[edges[:, 1]]
        mid = p + q
        ang = np.arctan2(mid[:, 1], mid[:, 0])
        arc = np.sum(2 * mesh.tank_radius * np.arcsin(np.hypot(*(q - p).T) / (2 * mesh.tank_radius)))
        assert arc == pytest.approx(mesh.electrode_coverage * pitch, rel=1e-12)
        centre = np.angle(np.mean(np.exp(1j * ang)))
        assert np.angle(np.exp(1j * (centre - 2 * np.pi * e / N_ELECTRODES))) == pytest.approx(0, abs=1e-9)


def test_rotation_maps_mesh_onto_itself(mesh):
    node_perm, el_perm = rotation_permutations(mesh, 1)
    assert sorted(node_perm.tolist()) == list(range(mesh.n_nodes))
    assert sorted(el_perm.tolist()) == list(range(mesh.n_elements))
    np.testing.assert_allclose(mesh.geometry.area[el_perm], mesh.geometry.area, rtol=1e-12)


def test_json_round_trip(tmp_path):
    m = build_mesh(refinement_level=1)
    m.save(tmp_path / "m.json")
    back = Mesh.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.nodes, m.nodes)
    np.testing.assert_array_equal(back.elements, m.elements)
    assert back.tank_radius == m.tank_radius
    for a, b in zip(back.electrode_edges, m.electrode_edges):
        np.testing.assert_array_equal(a, b)


def test_malformed_json_is_rejected():
    with pytest.raises(MeshError):
        Mesh.from_json('{"nodes": []}')


@pytest.mark.parametrize("kwargs", [{"tank_radius": -1.0}, {"tank_radius": float("nan")},
                                    {"refinement_level": 0}, {"refinement_level": 1.5},
                                    {"electrode_coverage": 1.0}, {"grading": 0.0}])
def test_invalid_parameters(kwargs):
    with pytest.raises(MeshError):
        build_mesh(**kwargs)


def test_refinement_grows_mesh():
    sizes = [build_mesh(refinement_level=k).n_elements for k in (1, 2, 3)]
    assert sizes[0] < sizes[1] < sizes[2]


def test_region_predicates():
    d = disc((0.0, 0.0), 1.0)
    assert d.contains([[0.5, 0.0], [1.5, 0.0]]).tolist() == [True, False]
    a = annulus((0.0, 0.0), 1.0, 2.0)
    assert a.contains([[0.5, 0.0], [1.5, 0.0]]).tolist() == [False, True]
    s = slit((0.0, 0.0), 90.0, 1.0, 0.1)
    assert s.contains([[0.0, 0.5], [0.5, 0.0]]).tolist() == [True, False]


def test_coverage_integrates_region_area(mesh):
    region = disc((0.01, -0.02), 0.02)
    cov = region_coverage(mesh, region)
    assert np.all((cov >= 0) & (cov <= 1))
    assert np.sum(cov * mesh.geometry.area) == pytest.approx(np.pi * 0.02 ** 2, rel=0.02)
    inside = elements_in_region(mesh, region)
    assert np.all(cov[inside] > 0)
