import numpy as np
import pytest

from oracles import concentric_cem_frame
from pbceit.errors import NumericalError, ValidationError
from pbceit.forward import (N_ELECTRODES, CemModel, FieldMismatchError, SingularSystemError,
                            adjacent_protocol, assemble_and_solve, jacobian, measure)
from pbceit.mesh import rotation_permutations

# Pattern-0 row of the spectral oracle for homogeneous 2e-4 S/m water in the
# default tank (0.075 m, z = 1e-3 Ohm m^2, 1 mA, half-perimeter electrodes),
# extrapolated in the number of Fourier modes.
HOMOGENEOUS_ROW = np.array([
    -0.44555407, -0.20386859, -0.12432163, -0.08942797, -0.07223919, -0.06401747,
    -0.06155729, -0.06401747, -0.07223919, -0.08942797, -0.12432163, -0.20386859,
    -0.44555407])
SIGMA_W = 2e-4


@pytest.fixture(scope="module")
def homogeneous(mesh, protocol, cem):
    return measure(mesh, np.full(mesh.n_elements, SIGMA_W), protocol, model=cem).v


def test_protocol_shape(protocol):
    assert protocol.n_channels == 208
    for (s, t), pairs in zip(protocol.patterns, protocol.measurement_pairs):
        assert len(pairs) == 13
        assert all(s not in p and t not in p for p in pairs.tolist())
        # first measured pair starts just past the sink
        assert pairs[0, 0] == (t + 1) % N_ELECTRODES


def test_protocol_rejects_bad_amplitude():
    with pytest.raises(ValidationError):
        adjacent_protocol(amplitude=0.0)


def test_homogeneous_matches_spectral_oracle(homogeneous):
    row = homogeneous.reshape(N_ELECTRODES, -1)[0]
    top = np.argsort(-np.abs(HOMOGENEOUS_ROW))[:2]
    rel = np.abs(row[top] - HOMOGENEOUS_ROW[top]) / np.abs(HOMOGENEOUS_ROW[top])
    assert rel.max() < 0.02
    # smaller channels carry the discretisation error of the coarse interior
    np.testing.assert_allclose(row, HOMOGENEOUS_ROW, rtol=0.05)


def test_oracle_reproduces_frozen_row():
    # the frozen row is the mode-extrapolated limit; 400 modes sits within 1%
    live = concentric_cem_frame(0.075, 0.01, SIGMA_W, SIGMA_W, 1e-3, 1e-3)[0]
    np.testing.assert_allclose(live, HOMOGENEOUS_ROW, rtol=0.01)


def test_homogeneous_frame_is_mirror_symmetric(homogeneous):
    row = homogeneous.reshape(N_ELECTRODES, -1)[0]
    np.testing.assert_allclose(row, row[::-1], rtol=1e-9)


def test_rotated_field_rotates_frame(mesh, protocol, cem, rng):
    sigma = SIGMA_W * np.exp(rng.normal(0, 0.5, mesh.n_elements))
    _, el_perm = rotation_permutations(mesh, 1)
    rotated = np.empty_like(sigma)
    rotated[el_perm] = sigma
    v = measure(mesh, sigma, protocol, model=cem).v.reshape(N_ELECTRODES, -1)
    w = measure(mesh, rotated, protocol, model=cem).v.reshape(N_ELECTRODES, -1)
    np.testing.assert_allclose(np.roll(v, 1, axis=0), w, rtol=1e-7, atol=1e-12)


def test_swapping_source_and_sink_negates_potentials(mesh, cem, rng):
    sigma = SIGMA_W * np.exp(rng.normal(0, 0.3, mesh.n_elements))
    a = assemble_and_solve(mesh, sigma, (2, 9), model=cem)
    b = assemble_and_solve(mesh, sigma, (9, 2), model=cem)
    np.testing.assert_allclose(a.electrode_potentials, -b.electrode_potentials, atol=1e-12)
    assert abs(a.electrode_potentials.sum()) < 1e-9
    np.testing.assert_array_equal(a.electrode_currents, -b.electrode_currents)


def test_frame_is_linear_in_amplitude(mesh, cem):
    sigma = np.full(mesh.n_elements, SIGMA_W)
    v1 = measure(mesh, sigma, adjacent_protocol(1e-3), model=cem).v
    v2 = measure(mesh, sigma, adjacent_protocol(2e-3), model=cem).v
    np.testing.assert_allclose(v2, 2 * v1, rtol=1e-10)


def test_frame_scales_inversely_with_conductivity(mesh, protocol):
    # with the contact impedance scaled too, the problem is exactly similar
    sigma = np.full(mesh.n_elements, SIGMA_W)
    v1 = measure(mesh, sigma, protocol, contact_impedance=1e-3).v
    v2 = measure(mesh, 10 * sigma, protocol, contact_impedance=1e-4).v
    np.testing.assert_allclose(v2, v1 / 10, rtol=1e-9)


def test_jacobian_matches_finite_differences(mesh, protocol, cem, rng):
    sigma = SIGMA_W * np.exp(rng.normal(0, 0.5, mesh.n_elements))
    J = jacobian(mesh, sigma, protocol, model=cem)
    assert J.shape == (208, mesh.n_elements)
    for k in rng.choice(mesh.n_elements, 5, replace=False):
        h = 1e-4 * sigma[k]
        sp, sm = sigma.copy(), sigma.copy()
        sp[k] += h
        sm[k] -= h
        fd = (measure(mesh, sp, protocol, model=cem).v - measure(mesh, sm, protocol, model=cem).v) / (2 * h)
        assert np.linalg.norm(fd - J[:, k]) <= 1e-4 * np.linalg.norm(J[:, k])


def test_field_length_mismatch(mesh, protocol, cem):
    with pytest.raises(FieldMismatchError):
        measure(mesh, np.ones(mesh.n_elements - 1), protocol, model=cem)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_non_positive_conductivity_is_numerical_error(mesh, protocol, cem, bad):
    sigma = np.full(mesh.n_elements, SIGMA_W)
    sigma[7] = bad
    with pytest.raises(SingularSystemError):
        measure(mesh, sigma, protocol, model=cem)
    assert issubclass(SingularSystemError, NumericalError)


@pytest.mark.parametrize("pattern", [(3, 3), (0, 16), (-1, 2)])
def test_invalid_drive_pattern(mesh, cem, pattern):
    with pytest.raises(ValidationError):
        assemble_and_solve(mesh, np.full(mesh.n_elements, SIGMA_W), pattern, model=cem)


def test_non_positive_contact_impedance(mesh):
    with pytest.raises(ValidationError):
        CemModel(mesh, contact_impedance=0.0)
