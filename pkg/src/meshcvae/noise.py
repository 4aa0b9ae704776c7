"""Synthetic Gaussian noise along vertex normals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


@dataclass(frozen=True)
class NoiseSpec:
    """Offsets ``d ~ Normal(mu * L, (beta * L)**2)`` with ``L`` the mean edge length."""

    mu: float = 0.0
    beta: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


def standard_normal(seed: int, size: int) -> np.ndarray:
    """Reproducible N(0, 1) draws.

    PCG64 uniforms in [0, 1) fed through the Box-Muller transform, consumed in
    pairs; draw ``i`` depends only on ``(seed, i)``, never on the platform's
    Gaussian sampler.
    """
    m = (size + 1) // 2
    u = np.random.Generator(np.random.PCG64(seed)).random((m, 2))
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    t = 2.0 * np.pi * u[:, 1]
    out = np.empty(2 * m)
    out[0::2] = r * np.cos(t)
    out[1::2] = r * np.sin(t)
    return out[:size]


def noise_offsets(mesh: Mesh, spec: NoiseSpec) -> np.ndarray:
    """Signed per-vertex offsets, in model units, ordered by vertex index."""
    scale = mesh.average_edge_length
    return spec.mu * scale + spec.beta * scale * standard_normal(spec.seed, mesh.n_vertices)


def add_gaussian_noise(mesh: Mesh, spec: NoiseSpec) -> Mesh:
    """Displace every vertex along its clean-mesh vertex normal."""
    if spec.beta == 0 and spec.mu == 0:
        return mesh.with_vertices(mesh.vertices)
    normals = mesh.vertex_normals
    d = noise_offsets(mesh, spec)
    return mesh.with_vertices(mesh.vertices + d[:, None] * normals)
