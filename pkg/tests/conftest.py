import numpy as np
import pytest

from meshcvae.mesh import Mesh

UNIT_CUBE_OFF = """OFF
8 12 0
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
3 0 2 1
3 0 3 2
3 4 5 6
3 4 6 7
3 0 1 5
3 0 5 4
3 1 2 6
3 1 6 5
3 2 3 7
3 2 7 6
3 3 0 4
3 3 4 7
"""


def one_triangle():
    return Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def fan(k=6, radius=1.0, z=0.0):
    """``k`` triangles around a center vertex at the origin."""
    ang = 2 * np.pi * np.arange(k) / k
    rim = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.full(k, z)])
    v = np.vstack([[0.0, 0.0, z], rim])
    f = [[0, 1 + i, 1 + (i + 1) % k] for i in range(k)]
    return Mesh(v, f)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_bundle():
    from meshcvae import shapes
    from meshcvae.neural import TrainConfig
    from meshcvae.noise import NoiseSpec
    from meshcvae.pipeline import DenoiseConfig, build_training_set, train_bundle

    noise = NoiseSpec(0.0, 0.1, 10)
    ts, km = build_training_set([shapes.uv_sphere(16, 32), shapes.cube(6), shapes.torus(24, 12)],
                                noise, n=8, K=5)
    tc = TrainConfig(learning_rate=3e-3, epochs=15, batch_size=128, latent_dim=16,
                     enc_widths=(64, 64), dec_widths=(64, 64))
    return train_bundle(ts, km, DenoiseConfig(n=8, K=5), tc, noise=noise)
