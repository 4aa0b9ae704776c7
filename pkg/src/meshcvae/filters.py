"""Bilateral fine-tuning of face normals and normal-driven vertex update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyNeighborhood, IsolatedVertex, ShapeMismatch, ZeroAccumulator
from .mesh import Adjacency, Mesh
from .parallel import chunked_map

_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class BilateralConfig:
    sigma2: float = 0.15
    iterations: int = 1
    # "squared": sigma1 = mean squared centroid distance (literal form);
    # "distance": sigma1 = mean centroid distance
    sigma1_mode: str = "squared"

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.sigma1_mode not in ("squared", "distance"):
            raise ValueError(f"unknown sigma1_mode {self.sigma1_mode!r}")


@dataclass(frozen=True)
class VertexUpdateConfig:
    iterations: int = 20

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def sigma1_estimate(mesh: Mesh, adj: Adjacency, face: int, neighbors=None, mode: str = "squared") -> float:
    """Mean (squared) centroid distance from ``face`` to its neighbours.

    ``neighbors`` defaults to the shared-vertex face ring from ``adj``.
    """
    face = mesh._check_face(face)
    nb = adj.face_to_faces(face) if neighbors is None else np.asarray(neighbors, dtype=np.int64)
    if len(nb) == 0:
        raise EmptyNeighborhood(f"face {face} has no neighbours")
    d = mesh.face_centroids[nb] - mesh.face_centroids[face]
    d2 = np.einsum("ij,ij->i", d, d)
    return float(np.mean(d2) if mode == "squared" else np.mean(np.sqrt(d2)))


def sigma1_all(mesh: Mesh, neighborhoods: np.ndarray, mode: str = "squared") -> np.ndarray:
    """Vectorized sigma1 for ``(F, n+1)`` neighbourhoods whose column 0 is the face itself."""
    c = mesh.face_centroids
    d = c[neighborhoods[:, 1:]] - c[neighborhoods[:, :1]]
    d2 = np.einsum("rkj,rkj->rk", d, d)
    return d2.mean(axis=1) if mode == "squared" else np.sqrt(d2).mean(axis=1)


def bilateral_filter(mesh: Mesh, normals, neighborhoods: np.ndarray, cfg: BilateralConfig,
                     threads: int = 1) -> np.ndarray:
    """Iterated area-, distance- and normal-weighted averaging of face normals.

    ``neighborhoods`` is ``(F, m)``: row ``i`` lists the faces averaged into face
    ``i`` with ``i`` itself first (the patch of face ``i``). Faces whose row
    starts with -1 are left untouched.
    """
    n_cur = np.array(normals, dtype=np.float64)
    if cfg.iterations == 0 or len(n_cur) == 0:
        return n_cur
    if neighborhoods.shape[0] != len(n_cur):
        raise ShapeMismatch("one neighbourhood row per face expected")
    rows = np.flatnonzero(neighborhoods[:, 0] >= 0)
    nb = neighborhoods[rows]
    if np.any(nb[:, 0] != rows):
        raise ShapeMismatch("neighbourhood row i must start with face i")
    if nb.shape[1] < 2:
        raise EmptyNeighborhood("bilateral filter needs at least one neighbour per face")
    c = mesh.face_centroids
    A = mesh.face_areas
    d = c[nb] - c[nb[:, :1]]
    dist2 = np.einsum("rkj,rkj->rk", d, d)
    s1 = sigma1_all(mesh, nb, cfg.sigma1_mode)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w1 = np.exp(-dist2 / (2.0 * s1[:, None] ** 2))
    # coincident centroids give 0/0; treat them as zero distance
    w1 = np.where(np.isfinite(w1), w1, 1.0)
    aw1 = A[nb] * w1

    def step(lo, hi, src, dst):
        nj = src[nb[lo:hi]]
        diff = nj - src[rows[lo:hi], None, :]
        w2 = np.exp(-np.einsum("rkj,rkj->rk", diff, diff) / (2.0 * cfg.sigma2 ** 2))
        acc = np.einsum("rk,rkj->rj", aw1[lo:hi] * w2, nj)
        norm = np.linalg.norm(acc, axis=1)
        if np.any(norm <= _ZERO_TOL):
            raise ZeroAccumulator("bilateral weighted sum vanished")
        dst[rows[lo:hi]] = acc / norm[:, None]

    for _ in range(cfg.iterations):
        nxt = n_cur.copy()
        chunked_map(lambda lo, hi: step(lo, hi, n_cur, nxt), len(rows), threads)
        n_cur = nxt
    return n_cur


def update_vertices(mesh: Mesh, adj: Adjacency, normals, cfg: VertexUpdateConfig,
                    threads: int = 1) -> Mesh:
    """Jacobi vertex update toward the planes given by target face normals.

    Each iteration moves every vertex by the mean over its incident faces of
    ``n_j <n_j, c_j - v_i>``, with centroids taken from the previous iterate.
    """
    if cfg.iterations == 0:
        return mesh.with_vertices(mesh.vertices)
    if mesh.n_vertices and np.any(np.diff(adj.vertex_faces_ptr) == 0):
        bad = int(np.flatnonzero(np.diff(adj.vertex_faces_ptr) == 0)[0])
        raise IsolatedVertex(f"vertex {bad} has no incident face")
    nrm = np.asarray(normals, dtype=np.float64)
    faces = mesh.faces
    ptr, fidx = adj.vertex_faces_ptr, adj.vertex_faces_idx
    owner = np.repeat(np.arange(mesh.n_vertices), np.diff(ptr))
    n_inc = nrm[fidx]
    deg = np.diff(ptr).astype(np.float64)
    v = mesh.vertices.copy()

    def step(lo, hi, src, dst, cent):
        a, b = ptr[lo], ptr[hi]
        nj = n_inc[a:b]
        h = np.einsum("kj,kj->k", nj, cent[fidx[a:b]] - src[owner[a:b]])
        s = np.add.reduceat(nj * h[:, None], ptr[lo:hi] - a, axis=0)
        dst[lo:hi] = src[lo:hi] + s / deg[lo:hi, None]

    for _ in range(cfg.iterations):
        cent = v[faces].mean(axis=1)
        nxt = np.empty_like(v)
        chunked_map(lambda lo, hi: step(lo, hi, v, nxt, cent), mesh.n_vertices, threads)
        v = nxt
    return mesh.with_vertices(v)
