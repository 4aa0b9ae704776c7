"""Indexed triangle meshes, per-face/per-vertex geometry and adjacency."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateFace,
    IndexOutOfRange,
    IsolatedVertex,
    NoEdges,
    ParseError,
)

# cross-product norms below this fraction of the squared longest edge are degenerate
_DEGENERATE_RTOL = 1e-12


class Mesh:
    """Immutable triangle mesh.

    Derived quantities (centroids, normals, areas, ...) are computed lazily and
    cached. Both the vertex and face arrays are made read-only so that a mesh can
    be shared between threads without copying.
    """

    def __init__(self, vertices, faces):
        v = np.array(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise IndexOutOfRange(
                    f"face index out of range for {len(v)} vertices"
                )
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ParseError("face with repeated vertex index")
        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.faces = f

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices) -> "Mesh":
        """Same connectivity, new positions."""
        return Mesh(vertices, self.faces)

    def _check_face(self, face: int) -> int:
        if not 0 <= face < self.n_faces:
            raise IndexOutOfRange(f"face {face} out of range [0, {self.n_faces})")
        return int(face)

    def _check_vertex(self, vertex: int) -> int:
        if not 0 <= vertex < self.n_vertices:
            raise IndexOutOfRange(f"vertex {vertex} out of range [0, {self.n_vertices})")
        return int(vertex)

    # --- per-face geometry -------------------------------------------------

    @cached_property
    def _corners(self):
        f = self.faces
        return self.vertices[f[:, 0]], self.vertices[f[:, 1]], self.vertices[f[:, 2]]

    @cached_property
    def _cross(self) -> np.ndarray:
        v1, v2, v3 = self._corners
        return np.cross(v2 - v1, v3 - v1)

    @cached_property
    def face_centroids(self) -> np.ndarray:
        v1, v2, v3 = self._corners
        c = (v1 + v2 + v3) / 3.0
        c.setflags(write=False)
        return c

    @cached_property
    def face_areas(self) -> np.ndarray:
        a = 0.5 * np.linalg.norm(self._cross, axis=1)
        a.setflags(write=False)
        return a

    @cached_property
    def degenerate_faces(self) -> np.ndarray:
        """Boolean mask of faces whose normal is not trustworthy."""
        v1, v2, v3 = self._corners
        scale = np.maximum.reduce([
            np.einsum("ij,ij->i", v2 - v1, v2 - v1),
            np.einsum("ij,ij->i", v3 - v1, v3 - v1),
            np.einsum("ij,ij->i", v3 - v2, v3 - v2),
        ])
        cn = np.linalg.norm(self._cross, axis=1)
        mask = (cn == 0.0) | (cn <= _DEGENERATE_RTOL * scale)
        mask.setflags(write=False)
        return mask

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals; rows of exactly-zero-area faces are left at zero."""
        cr = self._cross
        cn = np.linalg.norm(cr, axis=1)
        n = np.zeros_like(cr)
        ok = cn > 0
        n[ok] = cr[ok] / cn[ok, None]
        n.setflags(write=False)
        return n

    # --- per-vertex geometry -----------------------------------------------

    @cached_property
    def _vertex_normal_sums(self) -> np.ndarray:
        # area weighting: the raw cross product has length 2*A, direction n
        cr = np.where(self.degenerate_faces[:, None], 0.0, self._cross)
        acc = np.zeros((self.n_vertices, 3))
        for k in range(3):
            idx = self.faces[:, k]
            for d in range(3):
                acc[:, d] += np.bincount(idx, weights=cr[:, d], minlength=self.n_vertices)
        return acc

    @cached_property
    def isolated_vertices(self) -> np.ndarray:
        """Vertices without any incident non-degenerate face."""
        used = np.zeros(self.n_vertices, dtype=bool)
        good = self.faces[~self.degenerate_faces]
        used[good.ravel()] = True
        norms = np.linalg.norm(self._vertex_normal_sums, axis=1)
        mask = ~used | (norms == 0)
        mask.setflags(write=False)
        return mask

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted unit vertex normals.

        Raises IsolatedVertex if any vertex has no usable incident face; use
        `vertex_normal` for single lookups on meshes with stray vertices.
        """
        if np.any(self.isolated_vertices):
            bad = int(np.flatnonzero(self.isolated_vertices)[0])
            raise IsolatedVertex(f"vertex {bad} has no incident non-degenerate face")
        s = self._vertex_normal_sums
        n = s / np.linalg.norm(s, axis=1)[:, None]
        n.setflags(write=False)
        return n

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted (i, j) pairs, i < j."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def average_edge_length(self) -> float:
        e = self.edges
        if len(e) == 0:
            raise NoEdges("mesh has no edges")
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return float(np.mean(np.linalg.norm(d, axis=1)))

    @cached_property
    def adjacency(self) -> "Adjacency":
        return build_adjacency(self)


def face_centroid(mesh: Mesh, face: int) -> np.ndarray:
    return mesh.face_centroids[mesh._check_face(face)].copy()


def face_normal(mesh: Mesh, face: int) -> np.ndarray:
    face = mesh._check_face(face)
    if mesh.degenerate_faces[face]:
        raise DegenerateFace(f"face {face} has zero area")
    return mesh.face_normals[face].copy()


def face_area(mesh: Mesh, face: int) -> float:
    return float(mesh.face_areas[mesh._check_face(face)])


def vertex_normal(mesh: Mesh, vertex: int) -> np.ndarray:
    vertex = mesh._check_vertex(vertex)
    if mesh.isolated_vertices[vertex]:
        raise IsolatedVertex(f"vertex {vertex} has no incident non-degenerate face")
    s = mesh._vertex_normal_sums[vertex]
    return s / np.linalg.norm(s)


def average_edge_length(mesh: Mesh) -> float:
    return mesh.average_edge_length


@dataclass(frozen=True)
class Adjacency:
    """CSR neighbourhood maps.

    Each map is a pair ``(indptr, indices)``: the neighbours of item ``i`` are
    ``indices[indptr[i]:indptr[i+1]]``, sorted ascending.
    """

    vertex_faces_ptr: np.ndarray
    vertex_faces_idx: np.ndarray
    vertex_vertices_ptr: np.ndarray
    vertex_vertices_idx: np.ndarray
    face_faces_ptr: np.ndarray
    face_faces_idx: np.ndarray

    def vertex_to_faces(self, v: int) -> np.ndarray:
        return self.vertex_faces_idx[self.vertex_faces_ptr[v]:self.vertex_faces_ptr[v + 1]]

    def vertex_to_vertices(self, v: int) -> np.ndarray:
        return self.vertex_vertices_idx[self.vertex_vertices_ptr[v]:self.vertex_vertices_ptr[v + 1]]

    def face_to_faces(self, f: int) -> np.ndarray:
        return self.face_faces_idx[self.face_faces_ptr[f]:self.face_faces_ptr[f + 1]]

    @property
    def n_faces(self) -> int:
        return len(self.face_faces_ptr) - 1

    def face_graph(self) -> sp.csr_matrix:
        """Face-to-face adjacency as a boolean CSR matrix (no diagonal)."""
        n = self.n_faces
        data = np.ones(len(self.face_faces_idx), dtype=bool)
        return sp.csr_matrix((data, self.face_faces_idx, self.face_faces_ptr), shape=(n, n))

    def vertex_face_matrix(self) -> sp.csr_matrix:
        """Vertex-by-face incidence (rows: vertices) with unit entries."""
        nv = len(self.vertex_faces_ptr) - 1
        data = np.ones(len(self.vertex_faces_idx))
        return sp.csr_matrix(
            (data, self.vertex_faces_idx, self.vertex_faces_ptr), shape=(nv, self.n_faces)
        )


def _pattern(m: sp.spmatrix) -> tuple[np.ndarray, np.ndarray]:
    m = sp.csr_matrix(m)
    m.sum_duplicates()
    m.sort_indices()
    return m.indptr.astype(np.int64), m.indices.astype(np.int64)


def build_adjacency(mesh: Mesh) -> Adjacency:
    nv, nf = mesh.n_vertices, mesh.n_faces
    rows = mesh.faces.ravel()
    cols = np.repeat(np.arange(nf), 3)
    inc = sp.csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(nv, nf))
    vf_ptr, vf_idx = _pattern(inc)

    e = mesh.edges
    vv = sp.coo_matrix(
        (np.ones(2 * len(e), dtype=np.int8), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
        shape=(nv, nv),
    )
    vv_ptr, vv_idx = _pattern(vv)

    ff = (inc.T @ inc).tocsr()
    ff.setdiag(0)
    ff.eliminate_zeros()
    ff_ptr, ff_idx = _pattern(ff)
    return Adjacency(vf_ptr, vf_idx, vv_ptr, vv_idx, ff_ptr, ff_idx)
