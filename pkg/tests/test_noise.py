import math

import numpy as np
import pytest

from meshcvae import shapes
from meshcvae.noise import NoiseSpec, add_gaussian_noise, noise_offsets, standard_normal


@pytest.fixture(scope="module")
def sphere():
    return shapes.icosphere(5)  # 10242 vertices


def test_zero_noise_is_identity(sphere):
    out = add_gaussian_noise(sphere, NoiseSpec(0.0, 0.0, 7))
    np.testing.assert_array_equal(out.vertices, sphere.vertices)


def test_same_seed_bitwise(sphere):
    a = add_gaussian_noise(sphere, NoiseSpec(0.0, 0.1, 3))
    b = add_gaussian_noise(sphere, NoiseSpec(0.0, 0.1, 3))
    assert a.vertices.tobytes() == b.vertices.tobytes()
    c = add_gaussian_noise(sphere, NoiseSpec(0.0, 0.1, 4))
    assert not np.array_equal(a.vertices, c.vertices)


def test_half_normal_mean_and_std(sphere):
    assert sphere.n_vertices >= 10_000
    out = add_gaussian_noise(sphere, NoiseSpec(0.0, 0.1, 11))
    d = np.einsum("ij,ij->i", out.vertices - sphere.vertices, sphere.vertex_normals)
    L = sphere.average_edge_length
    assert np.mean(np.abs(d)) / L == pytest.approx(0.1 * math.sqrt(2 / math.pi), rel=0.05)
    assert np.std(d) / L == pytest.approx(0.1, rel=0.05)


def test_displacement_parallel_to_vertex_normal(sphere):
    out = add_gaussian_noise(sphere, NoiseSpec(0.2, 0.3, 1))
    disp = out.vertices - sphere.vertices
    d = np.linalg.norm(disp, axis=1)
    cross = np.linalg.norm(np.cross(disp, sphere.vertex_normals), axis=1)
    assert np.all(cross <= 1e-9 * np.maximum(d, 1e-300) + 1e-300)


def test_mu_shifts_offsets(sphere):
    off = noise_offsets(sphere, NoiseSpec(-0.18, 0.0, 0))
    np.testing.assert_allclose(off, -0.18 * sphere.average_edge_length)


def test_standard_normal_moments_and_determinism():
    x = standard_normal(5, 200_001)
    assert abs(x.mean()) < 0.01 and abs(x.std() - 1) < 0.01
    np.testing.assert_array_equal(x, standard_normal(5, 200_001))
    assert len(standard_normal(5, 3)) == 3


def test_negative_beta_rejected():
    with pytest.raises(ValueError):
        NoiseSpec(beta=-1)
