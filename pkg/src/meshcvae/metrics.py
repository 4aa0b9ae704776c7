"""Reconstruction quality: one-sided surface distance and normal-angle error."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConnectivityMismatch, EmptyMesh, LengthMismatch
from .mesh import Mesh

# brute force below this face count, kd-tree pruning above
BRUTE_FORCE_MAX_FACES = 256
_PAIR_BUDGET = 2_000_000


def _dot(a, b):
    return np.einsum("...j,...j->...", a, b)


def _segment_sq_dist(p, a, b):
    ab = b - a
    den = _dot(ab, ab)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(den > 0, _dot(p - a, ab) / den, 0.0)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[..., None] * ab
    return _dot(p - q, p - q)


def closest_point_on_triangle(p, a, b, c) -> np.ndarray:
    """Exact closest point by Voronoi-region classification; all inputs (..., 3)."""
    p, a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (p, a, b, c)))
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    bp = p - b
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    cp = p - c
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    out = np.empty_like(p)
    todo = np.ones(p.shape[:-1], dtype=bool)

    def take(mask, value):
        nonlocal todo
        m = mask & todo
        out[m] = value[m] if np.ndim(value) == out.ndim else value
        todo = todo & ~m

    with np.errstate(divide="ignore", invalid="ignore"):
        take((d1 <= 0) & (d2 <= 0), a)
        take((d3 >= 0) & (d4 <= d3), b)
        take((d6 >= 0) & (d5 <= d6), c)
        v = d1 / (d1 - d3)
        take((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[..., None] * ab)
        w = d2 / (d2 - d6)
        take((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[..., None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[..., None] * (c - b))
        den = 1.0 / (va + vb + vc)
        inner = a + (vb * den)[..., None] * ab + (vc * den)[..., None] * ac
        out[todo] = inner[todo]
    return out


def point_triangle_sq_dist(p, a, b, c) -> np.ndarray:
    q = closest_point_on_triangle(p, a, b, c)
    d = _dot(p - q, p - q)
    bad = ~np.isfinite(d)
    if np.any(bad):
        # zero-area triangles: distance to the three edges
        pb, ab_, bb, cb = (np.broadcast_to(x, q.shape)[bad] for x in (p, a, b, c))
        d[bad] = np.minimum.reduce([
            _segment_sq_dist(pb, ab_, bb), _segment_sq_dist(pb, bb, cb), _segment_sq_dist(pb, cb, ab_),
        ])
    return d


def _brute_force(points, tri):
    F = len(tri)
    step = max(1, _PAIR_BUDGET // max(F, 1))
    out = np.empty(len(points))
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    for s in range(0, len(points), step):
        p = points[s:s + step, None, :]
        out[s:s + step] = point_triangle_sq_dist(p, a[None], b[None], c[None]).min(axis=1)
    return out


def _tree_search(points, tri):
    cent = tri.mean(axis=1)
    radius = np.sqrt(_dot(tri - cent[:, None], tri - cent[:, None]).max())
    tree = cKDTree(cent)
    _, near = tree.query(points)
    ub = np.sqrt(point_triangle_sq_dist(points, tri[near, 0], tri[near, 1], tri[near, 2]))
    out = ub * ub
    # any triangle within ub of p has its centroid within ub + radius of p
    cands = tree.query_ball_point(points, ub + radius + 1e-12)
    lens = np.fromiter((len(c) for c in cands), dtype=np.int64, count=len(points))
    qi = np.repeat(np.arange(len(points)), lens)
    ti = np.fromiter((t for c in cands for t in c), dtype=np.int64, count=int(lens.sum()))
    for s in range(0, len(qi), _PAIR_BUDGET):
        q, t = qi[s:s + _PAIR_BUDGET], ti[s:s + _PAIR_BUDGET]
        d = point_triangle_sq_dist(points[q], tri[t, 0], tri[t, 1], tri[t, 2])
        np.minimum.at(out, q, d)
    return out


def point_to_mesh_distance(points, reference: Mesh) -> np.ndarray:
    """Exact unsigned distance from each point to the reference surface."""
    if reference.n_faces == 0:
        raise EmptyMesh("reference mesh has no faces")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = reference.vertices[reference.faces]
    if reference.n_faces <= BRUTE_FORCE_MAX_FACES:
        d2 = _brute_force(pts, tri)
    else:
        d2 = _tree_search(pts, tri)
    return np.sqrt(d2)


def one_sided_distance(reconstructed: Mesh, reference: Mesh) -> tuple[float, np.ndarray]:
    """Mean over reconstructed vertices of the distance to the reference surface."""
    if reconstructed.n_vertices == 0:
        raise EmptyMesh("reconstructed mesh has no vertices")
    per_vertex = point_to_mesh_distance(reconstructed.vertices, reference)
    return float(per_vertex.mean()), per_vertex


def normal_angle_alpha(reconstructed: Mesh, reference: Mesh) -> tuple[float, np.ndarray]:
    """Mean angle in degrees between corresponding face normals."""
    if reconstructed.faces.shape != reference.faces.shape or not np.array_equal(
        reconstructed.faces, reference.faces
    ):
        raise ConnectivityMismatch("meshes do not share connectivity")
    if reconstructed.n_faces == 0:
        raise EmptyMesh("no faces to compare")
    a, b = reconstructed.face_normals, reference.face_normals
    # atan2 form stays exact near 0 and 180 degrees, unlike arccos of the dot product
    per_face = np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), _dot(a, b)))
    return float(per_face.mean()), per_face


@dataclass
class MetricsReport:
    mean_one_sided_distance: float
    max_one_sided_distance: float
    alpha_mean_deg: float
    alpha_histogram: tuple[np.ndarray, np.ndarray]
    per_vertex_distance: np.ndarray
    per_face_alpha: np.ndarray

    def summary(self) -> dict[str, float]:
        return {
            "mean_one_sided_distance": self.mean_one_sided_distance,
            "max_one_sided_distance": self.max_one_sided_distance,
            "alpha_mean_deg": self.alpha_mean_deg,
        }


def evaluate(reconstructed: Mesh, reference: Mesh, bins: int = 36) -> MetricsReport:
    mean_d, per_v = one_sided_distance(reconstructed, reference)
    alpha, per_f = normal_angle_alpha(reconstructed, reference)
    hist = np.histogram(per_f, bins=bins, range=(0.0, 180.0))
    return MetricsReport(mean_d, float(per_v.max()), alpha, hist, per_v, per_f)


def error_colors(values) -> np.ndarray:
    """Linear blue (min) to red (max) RGBA bytes, shape (V, 4)."""
    v = np.asarray(values, dtype=np.float64)
    span = v.max() - v.min() if v.size else 0.0
    t = (v - v.min()) / span if span > 0 else np.zeros_like(v)
    rgba = np.empty((len(v), 4), dtype=np.int64)
    rgba[:, 0] = np.rint(255 * t)
    rgba[:, 1] = 0
    rgba[:, 2] = np.rint(255 * (1.0 - t))
    rgba[:, 3] = 255
    return rgba


def export_error_colormap(mesh: Mesh, per_vertex) -> tuple[bytes, bytes]:
    """COFF mesh coloured by per-vertex error, plus ``vertex_index,distance`` CSV."""
    vals = np.asarray(per_vertex, dtype=np.float64)
    if vals.shape != (mesh.n_vertices,):
        raise LengthMismatch(f"{len(vals)} values for {mesh.n_vertices} vertices")
    rgba = error_colors(vals)
    off = io.StringIO()
    off.write("COFF\n")
    off.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
    for p, col in zip(mesh.vertices, rgba):
        off.write("%.17g %.17g %.17g %d %d %d %d\n" % (*p, *col))
    for f in mesh.faces:
        off.write("3 %d %d %d\n" % tuple(f))
    csv = io.StringIO()
    csv.write("vertex_index,distance\n")
    for i, d in enumerate(vals):
        csv.write(f"{i},{float(d)!r}\n")
    return off.getvalue().encode(), csv.getvalue().encode()
