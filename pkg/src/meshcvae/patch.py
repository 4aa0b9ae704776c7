"""Rotation-aligned face-normal patch descriptors.

A patch is a face plus its ``n`` nearest topological neighbours (by centroid
distance). Its area-weighted mean normal is rotated onto a fixed target axis,
the rotated normals are mapped from [-1, 1] to [0, 1] and flattened center
first. The stored rotation is undone on the network output.

Aligning the mean normal alone leaves a free spin about the target axis, so
descriptors of a rotated copy of a patch would differ. With ``twist`` enabled
the patch is additionally spun about the target until the direction to the
nearest neighbour centroid points along a fixed reference axis. The combined
rotation is still stored as one (axis, angle) pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.transform import Rotation

from .errors import DegenerateFace, DegenerateMeanNormal, InsufficientNeighbors, ZeroVector
from .mesh import Adjacency, Mesh

DEFAULT_TARGET = np.array([0.0, 0.0, 1.0])

_PARALLEL_TOL = 1e-8
_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Patch:
    center_face: int
    member_faces: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray | None = None

    @property
    def faces(self) -> np.ndarray:
        return np.r_[self.center_face, self.member_faces]


@dataclass(frozen=True)
class PatchAlignment:
    axis: np.ndarray
    angle: float


@dataclass(frozen=True)
class PatchDescriptor:
    values: np.ndarray
    alignment: PatchAlignment
    center_face: int


@dataclass(frozen=True)
class PatchSet:
    """Patches of every face of a mesh.

    ``members[i]`` lists the ``n`` neighbours of face ``i`` nearest first;
    rows of faces without a full neighbourhood are ``-1`` and ``valid[i]`` is
    False for them.
    """

    n: int
    members: np.ndarray
    valid: np.ndarray

    def faces(self, rows=None) -> np.ndarray:
        """``(len(rows), n+1)`` face indices, center face in column 0."""
        rows = np.flatnonzero(self.valid) if rows is None else np.asarray(rows)
        return np.column_stack([rows, self.members[rows]])


# --- neighbourhoods ----------------------------------------------------------


def _sort_key(mesh: Mesh, center: int, cands: np.ndarray) -> np.ndarray:
    d = mesh.face_centroids[cands] - mesh.face_centroids[center]
    return np.einsum("ij,ij->i", d, d)


def build_patch(mesh: Mesh, adj: Adjacency, face: int, n: int) -> Patch:
    """Breadth-first ring growth over shared-vertex neighbours, then nearest ``n``.

    Rings are added whole until at least ``n`` candidates are collected; the
    candidates are sorted by squared centroid distance (ties: lower face index).
    Degenerate faces are never patch members.
    """
    face = mesh._check_face(face)
    if mesh.degenerate_faces[face]:
        raise DegenerateFace(f"face {face} is degenerate")
    bad = mesh.degenerate_faces
    seen = {face}
    frontier = [face]
    cands: list[int] = []
    while len(cands) < n and frontier:
        nxt = []
        for f in frontier:
            for g in adj.face_to_faces(f):
                g = int(g)
                if g not in seen and not bad[g]:
                    seen.add(g)
                    nxt.append(g)
        cands.extend(nxt)
        frontier = nxt
    if len(cands) < n:
        raise InsufficientNeighbors(
            f"face {face}: only {len(cands)} reachable neighbours, need {n}"
        )
    cands_arr = np.array(sorted(cands), dtype=np.int64)
    order = np.lexsort((cands_arr, _sort_key(mesh, face, cands_arr)))
    members = cands_arr[order[:n]]
    idx = np.r_[face, members]
    return Patch(face, members, mesh.face_normals[idx].copy(), mesh.face_areas[idx].copy(),
                 mesh.face_centroids[idx].copy())


def build_patches(mesh: Mesh, adj: Adjacency, n: int) -> PatchSet:
    """Vectorized `build_patch` for every face; same result face by face."""
    nf = mesh.n_faces
    bad = mesh.degenerate_faces
    members = np.full((nf, n), -1, dtype=np.int64)
    valid = np.zeros(nf, dtype=bool)
    if nf == 0:
        return PatchSet(n, members, valid)
    if n == 0:
        valid[:] = ~bad
        return PatchSet(n, members, valid)

    keep = sp.diags((~bad).astype(np.float64)).tocsr()
    graph = (keep @ adj.face_graph().astype(np.float64) @ keep).tocsr()
    graph.eliminate_zeros()
    graph.data[:] = 1.0

    done_rows, done_cols = [], []
    counts = np.diff(graph.indptr)
    ok = (counts >= n) & ~bad
    coo = graph.tocoo()
    sel = ok[coo.row]
    done_rows.append(coo.row[sel].astype(np.int64))
    done_cols.append(coo.col[sel].astype(np.int64))

    pending = np.flatnonzero(~ok & ~bad & (counts > 0))
    reach = graph[pending]
    prev = counts[pending]
    while len(pending):
        grown = (reach + reach @ graph).tocoo()
        # drop the center face itself
        keep_e = grown.col != pending[grown.row]
        r = grown.row[keep_e]
        c = grown.col[keep_e]
        reach = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(len(pending), nf))
        cnt = np.diff(reach.indptr)
        fin = cnt >= n
        stuck = ~fin & (cnt == prev)
        if np.any(fin):
            sub = reach[np.flatnonzero(fin)].tocoo()
            done_rows.append(pending[fin][sub.row])
            done_cols.append(sub.col.astype(np.int64))
        more = ~fin & ~stuck
        pending, reach, prev = pending[more], reach[np.flatnonzero(more)], cnt[more]

    rows = np.concatenate(done_rows)
    cols = np.concatenate(done_cols)
    d = mesh.face_centroids[cols] - mesh.face_centroids[rows]
    key = np.einsum("ij,ij->i", d, d)
    order = np.lexsort((cols, key, rows))
    rows, cols = rows[order], cols[order]
    centers, starts = np.unique(rows, return_index=True)
    members[centers] = cols[starts[:, None] + np.arange(n)]
    valid[centers] = True
    return PatchSet(n, members, valid)


# --- alignment ---------------------------------------------------------------


def mean_normals(normals: np.ndarray, areas: np.ndarray) -> np.ndarray:
    """Area-weighted mean normal ``(1/N) sum A_i n_i`` per patch, shape (R, 3)."""
    return np.einsum("rk,rkj->rj", areas, normals) / normals.shape[1]


def alignments(mean: np.ndarray, target=DEFAULT_TARGET) -> tuple[np.ndarray, np.ndarray]:
    """Axis/angle pairs rotating each mean normal direction onto ``target``.

    Returns ``(axes (R, 3), angles (R,))``. Nearly parallel means use axis
    (1, 0, 0) and angle 0; nearly antiparallel ones rotate by pi about
    ``normalize(m x e)`` with ``e`` the first of x, y not parallel to ``m``.
    """
    target = np.asarray(target, dtype=np.float64)
    mean = np.atleast_2d(mean)
    norm = np.linalg.norm(mean, axis=1)
    if np.any(norm <= _ZERO_TOL):
        raise DegenerateMeanNormal("area-weighted mean normal vanishes")
    m = mean / norm[:, None]
    cos = np.clip(m @ target, -1.0, 1.0)
    cross = np.cross(m, target)
    cn = np.linalg.norm(cross, axis=1)
    angles = np.arccos(cos)
    axes = np.empty_like(m)
    gen = cn > _PARALLEL_TOL
    axes[gen] = cross[gen] / cn[gen, None]
    same = ~gen & (cos > 0)
    axes[same] = (1.0, 0.0, 0.0)
    angles[same] = 0.0
    anti = ~gen & (cos <= 0)
    if np.any(anti):
        ma = m[anti]
        ex = np.abs(ma[:, 0]) < 1.0 - _PARALLEL_TOL
        e = np.where(ex[:, None], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        ax = np.cross(ma, e)
        axes[anti] = ax / np.linalg.norm(ax, axis=1)[:, None]
        angles[anti] = np.pi
    return axes, angles


def rotation_matrices(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues matrices ``I + sin(t) K + (1 - cos(t)) K^2``, shape (R, 3, 3)."""
    axes = np.atleast_2d(axes)
    angles = np.atleast_1d(angles)
    x, y, z = axes[:, 0], axes[:, 1], axes[:, 2]
    zero = np.zeros_like(x)
    K = np.stack([
        np.stack([zero, -z, y], axis=-1),
        np.stack([z, zero, -x], axis=-1),
        np.stack([-y, x, zero], axis=-1),
    ], axis=1)
    s = np.sin(angles)[:, None, None]
    c = np.cos(angles)[:, None, None]
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def compute_alignment(patch: Patch, a_c=DEFAULT_TARGET) -> PatchAlignment:
    m = mean_normals(patch.normals[None], patch.areas[None])
    axes, angles = alignments(m, a_c)
    return PatchAlignment(axes[0], float(angles[0]))


def rotate_vectors(vectors, alignment: PatchAlignment, inverse: bool = False) -> np.ndarray:
    angle = -alignment.angle if inverse else alignment.angle
    R = rotation_matrices(alignment.axis[None], np.array([angle]))[0]
    return np.asarray(vectors, dtype=np.float64) @ R.T


# --- descriptors -------------------------------------------------------------


def encode_normals(normals: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Rotate ``(R, N, 3)`` normals by per-patch matrices and map to [0, 1], flattened."""
    rotated = np.einsum("rij,rkj->rki", rotations, normals)
    u = (rotated + 1.0) / 2.0
    np.clip(u, 0.0, 1.0, out=u)
    return u.reshape(len(normals), -1)


def reference_axis(target=DEFAULT_TARGET) -> np.ndarray:
    """Unit vector perpendicular to ``target``: x (or y) with its target component removed."""
    t = np.asarray(target, dtype=np.float64)
    e = np.array([1.0, 0.0, 0.0]) if abs(t[0]) < 1.0 - _PARALLEL_TOL else np.array([0.0, 1.0, 0.0])
    r = e - (e @ t) * t
    return r / np.linalg.norm(r)


def twist_angles(offsets: np.ndarray, rotations: np.ndarray, target=DEFAULT_TARGET) -> np.ndarray:
    """Spin about ``target`` bringing the first usable neighbour offset onto `reference_axis`.

    ``offsets`` are ``(R, M, 3)`` member-minus-center centroid vectors in patch
    order. A member is usable when its rotated offset has a component
    perpendicular to ``target``; patches with none get angle 0.
    """
    t = np.asarray(target, dtype=np.float64)
    d = np.einsum("rij,rkj->rki", rotations, offsets)
    p = d - (d @ t)[..., None] * t
    pn = np.linalg.norm(p, axis=2)
    ok = pn > 1e-9 * np.linalg.norm(offsets, axis=2)
    first = np.argmax(ok, axis=1)
    pf = p[np.arange(len(p)), first]
    e = reference_axis(t)
    ang = -np.arctan2(np.cross(e, pf) @ t, pf @ e)
    ang[~ok.any(axis=1)] = 0.0
    return ang


def _as_axis_angle(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rv = Rotation.from_matrix(mats).as_rotvec()
    angles = np.linalg.norm(rv, axis=1)
    axes = np.tile([1.0, 0.0, 0.0], (len(rv), 1))
    nz = angles > 0
    axes[nz] = rv[nz] / angles[nz, None]
    return axes, angles


def encode_batch(normals: np.ndarray, areas: np.ndarray, a_c=DEFAULT_TARGET, offsets=None):
    """Descriptors for a batch of patches.

    ``offsets`` ``(R, n, 3)`` (member centroids minus center centroid) enables
    the canonical twist. Returns ``(values (R, 3N), axes (R, 3), angles (R,))``.
    """
    axes, angles = alignments(mean_normals(normals, areas), a_c)
    rot = rotation_matrices(axes, angles)
    if offsets is not None and np.shape(offsets)[1] > 0:
        t = np.asarray(a_c, dtype=np.float64)
        psi = twist_angles(np.asarray(offsets, dtype=np.float64), rot, t)
        rot = rotation_matrices(np.broadcast_to(t, (len(psi), 3)), psi) @ rot
        axes, angles = _as_axis_angle(rot)
        # rebuild from (axis, angle) so encoding matches what is stored and inverted
        rot = rotation_matrices(axes, angles)
    return encode_normals(normals, rot), axes, angles


def decode_batch(outputs: np.ndarray, axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Center normals from network outputs, rotated back into model space."""
    v = 2.0 * np.asarray(outputs)[:, :3] - 1.0
    norm = np.linalg.norm(v, axis=1)
    if np.any(norm <= _ZERO_TOL):
        raise ZeroVector("decoded center normal vanishes")
    v = v / norm[:, None]
    R = rotation_matrices(axes, -np.asarray(angles))
    return np.einsum("rij,rj->ri", R, v)


def encode_descriptor(patch: Patch, a_c=DEFAULT_TARGET, twist: bool = True) -> PatchDescriptor:
    offsets = None
    if twist and patch.centroids is not None:
        offsets = (patch.centroids[1:] - patch.centroids[0])[None]
    values, axes, angles = encode_batch(patch.normals[None], patch.areas[None], a_c, offsets)
    return PatchDescriptor(values[0], PatchAlignment(axes[0], float(angles[0])), patch.center_face)


def decode_center_normal(output, alignment: PatchAlignment) -> np.ndarray:
    out = np.asarray(output, dtype=np.float64)[None]
    return decode_batch(out, alignment.axis[None], np.array([alignment.angle]))[0]
