from dataclasses import replace

import numpy as np
import pytest

from meshcvae import shapes
from meshcvae.errors import ConfigMismatch
from meshcvae.metrics import normal_angle_alpha
from meshcvae.mesh import Mesh
from meshcvae.noise import NoiseSpec, add_gaussian_noise
from meshcvae.pipeline import (
    STAGES, DenoiseConfig, ModelBundle, build_training_set, denoise, denoise_mesh, identity_bundle,
)


def test_pair_count_is_face_count():
    sphere = shapes.icosphere(3)
    ts, km = build_training_set([sphere], NoiseSpec(0, 0.1, 0), n=8, K=4)
    assert len(ts) == 1280 == sphere.n_faces
    assert ts.x_noisy.shape == ts.x_clean.shape == (1280, 27)
    assert ts.labels.shape == (1280,) and km.K == 4
    ts2, _ = build_training_set([sphere, shapes.cube(3), shapes.torus(10, 6)], NoiseSpec(0, 0.1, 0), n=8, K=4)
    assert len(ts2) == 1280 + 108 + 120


def test_zero_noise_pairs_are_equal():
    ts, _ = build_training_set([shapes.torus(16, 8)], NoiseSpec(0, 0.0, 0), n=8, K=3)
    np.testing.assert_array_equal(ts.x_noisy, ts.x_clean)


def test_identity_without_filtering_is_identity():
    m = add_gaussian_noise(shapes.icosphere(2), NoiseSpec(0, 0.1, 1))
    cfg = DenoiseConfig(n=8, K=3, N_B=0, N_V=0)
    out = denoise_mesh(m, identity_bundle(cfg), cfg)
    np.testing.assert_array_equal(out.vertices, m.vertices)
    np.testing.assert_array_equal(out.faces, m.faces)


def test_toy_bundle_lowers_alpha(toy_bundle):
    clean = shapes.icosphere(3)
    noisy = add_gaussian_noise(clean, NoiseSpec(0, 0.1, 77))
    res = denoise(noisy, toy_bundle)
    assert set(res.timings) == set(STAGES)
    assert normal_angle_alpha(res.mesh, clean)[0] < normal_angle_alpha(noisy, clean)[0]
    np.testing.assert_array_equal(res.mesh.faces, noisy.faces)


def test_config_mismatch(toy_bundle):
    noisy = shapes.icosphere(2)
    for bad in (replace(toy_bundle.config, n=20), replace(toy_bundle.config, K=7),
                replace(toy_bundle.config, twist=False), replace(toy_bundle.config, a_c=(1.0, 0.0, 0.0))):
        with pytest.raises(ConfigMismatch):
            denoise(noisy, toy_bundle, bad)


def test_bundle_shape_validation(toy_bundle):
    with pytest.raises(ConfigMismatch):
        ModelBundle("cvae", replace(toy_bundle.config, K=9), toy_bundle.params, toy_bundle.cluster)


def test_small_component_keeps_input_normals(toy_bundle):
    big = shapes.icosphere(2)
    tri = np.array([[5, 5, 5], [6, 5, 5], [5, 6, 5]], float)
    m = Mesh(np.vstack([big.vertices, tri]), np.vstack([big.faces, [[big.n_vertices + i for i in range(3)]]]))
    res = denoise(m, toy_bundle, replace(toy_bundle.config, N_V=0))
    assert res.skipped_faces.tolist() == [big.n_faces]
    np.testing.assert_array_equal(res.cvae_normals[-1], m.face_normals[-1])


def test_threads_bitwise_identical(toy_bundle):
    noisy = add_gaussian_noise(shapes.icosphere(4), NoiseSpec(0, 0.1, 5))
    outs = [denoise(noisy, toy_bundle, replace(toy_bundle.config, threads=t), chunk=512).mesh.vertices
            for t in (1, 3)]
    assert outs[0].tobytes() == outs[1].tobytes()


def test_config_validation():
    with pytest.raises(ValueError):
        DenoiseConfig(n=0)
    with pytest.raises(ValueError):
        DenoiseConfig(a_c=(0, 0, 2))
    with pytest.raises(ValueError):
        DenoiseConfig(threads=0)
    assert DenoiseConfig(n=20).descriptor_length == 63
