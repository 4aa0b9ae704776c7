"""Procedural test shapes used for synthetic training sets and benchmarks."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def icosahedron(radius: float = 1.0) -> Mesh:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    v *= radius / np.linalg.norm(v[0])
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return Mesh(v, f)


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> Mesh:
    """Loop-style midpoint subdivision of the icosahedron projected to the sphere.

    Face count is ``20 * 4**subdivisions``.
    """
    base = icosahedron(1.0)
    verts = [tuple(p) for p in base.vertices]
    faces = base.faces.tolist()
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = (np.asarray(verts[a]) + np.asarray(verts[b])) / 2.0
                p /= np.linalg.norm(p)
                verts.append(tuple(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new
    v = np.array(verts) * radius
    return Mesh(v, np.array(faces))


def uv_sphere(n_lat: int = 30, n_lon: int = 60, radius: float = 1.0) -> Mesh:
    """Latitude/longitude sphere with pole fans; ``2*n_lon*(n_lat-1)`` faces."""
    verts = [(0.0, 0.0, radius)]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append((radius * np.sin(th) * np.cos(ph), radius * np.sin(th) * np.sin(ph), radius * np.cos(th)))
    verts.append((0.0, 0.0, -radius))
    south = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces += [(a, c, d), (a, d, b)]
    for j in range(n_lon):
        faces.append((south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    return Mesh(np.array(verts), np.array(faces))


def grid(nx: int = 20, ny: int = 20, size: float = 1.0, z: float = 0.0) -> Mesh:
    """Planar ``nx`` x ``ny`` quad grid split into ``2*nx*ny`` triangles, normals +z."""
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return Mesh(v, f)


def cube(divisions: int = 1, size: float = 1.0) -> Mesh:
    """Axis-aligned cube ``[0, size]^3`` with each side split into ``divisions^2`` quads.

    Vertices along shared edges are welded, so the surface is closed and
    outward-oriented. ``divisions=1`` gives the classic 8-vertex, 12-face cube.
    """
    d = divisions
    lookup: dict[tuple[int, int, int], int] = {}
    verts = []

    def vid(i, j, k):
        key = (i, j, k)
        if key not in lookup:
            lookup[key] = len(verts)
            verts.append((i * size / d, j * size / d, k * size / d))
        return lookup[key]

    faces = []
    for axis in range(3):
        for side in (0, d):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            for u in range(d):
                for w in range(d):
                    def p(du, dw):
                        c = [0, 0, 0]
                        c[axis], c[u_ax], c[v_ax] = side, u + du, w + dw
                        return vid(*c)
                    q = [p(0, 0), p(1, 0), p(1, 1), p(0, 1)]
                    tri = [(q[0], q[1], q[2]), (q[0], q[2], q[3])]
                    # (u_ax, v_ax, axis) is right-handed for axis 0 and 2 but not 1
                    flip = (side == 0) ^ (axis == 1)
                    for t in tri:
                        faces.append(t[::-1] if flip else t)
    return Mesh(np.array(verts), np.array(faces))


def cylinder(n_around: int = 40, n_height: int = 20, radius: float = 0.5, height: float = 1.0) -> Mesh:
    """Closed cylinder along z with fan caps."""
    verts = []
    for i in range(n_height + 1):
        zc = height * i / n_height
        for j in range(n_around):
            a = 2 * np.pi * j / n_around
            verts.append((radius * np.cos(a), radius * np.sin(a), zc))

    def r(i, j):
        return i * n_around + (j % n_around)

    faces = []
    for i in range(n_height):
        for j in range(n_around):
            a, b, c, d = r(i, j), r(i, j + 1), r(i + 1, j + 1), r(i + 1, j)
            faces += [(a, b, c), (a, c, d)]
    bottom = len(verts)
    verts.append((0.0, 0.0, 0.0))
    top = len(verts)
    verts.append((0.0, 0.0, height))
    for j in range(n_around):
        faces.append((bottom, r(0, j + 1), r(0, j)))
        faces.append((top, r(n_height, j), r(n_height, j + 1)))
    return Mesh(np.array(verts), np.array(faces))


def torus(n_major: int = 48, n_minor: int = 24, major: float = 1.0, minor: float = 0.35) -> Mesh:
    verts = []
    for i in range(n_major):
        u = 2 * np.pi * i / n_major
        for j in range(n_minor):
            w = 2 * np.pi * j / n_minor
            rr = major + minor * np.cos(w)
            verts.append((rr * np.cos(u), rr * np.sin(u), minor * np.sin(w)))

    def r(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b, c, d = r(i, j), r(i + 1, j), r(i + 1, j + 1), r(i, j + 1)
            faces += [(a, b, c), (a, c, d)]
    return Mesh(np.array(verts), np.array(faces))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed proper rotation matrix (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
