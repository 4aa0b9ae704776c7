"""Text OBJ / OFF reading and writing."""

from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

from .errors import NonTriangular, ParseError
from .mesh import Mesh


class MeshFormat(str, enum.Enum):
    OBJ = "obj"
    OFF = "off"

    @classmethod
    def from_path(cls, path) -> "MeshFormat":
        suffix = Path(path).suffix.lower().lstrip(".")
        try:
            return cls(suffix)
        except ValueError:
            raise ParseError(f"cannot infer mesh format from {path!r}") from None


def _floats(tokens, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f"line {lineno}: bad number in {' '.join(tokens)!r}") from None


def _parse_obj(text: str) -> Mesh:
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "v":
            xyz = _floats(tok[1:4], lineno)
            if len(xyz) != 3:
                raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
            verts.append(xyz)
        elif tok[0] == "f":
            refs = tok[1:]
            if len(refs) != 3:
                raise NonTriangular(f"line {lineno}: face with {len(refs)} vertices")
            idx = []
            for r in refs:
                head = r.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ParseError(f"line {lineno}: bad face index {r!r}") from None
                # OBJ negative indices count back from the latest vertex
                i = i - 1 if i > 0 else len(verts) + i
                if not 0 <= i < len(verts):
                    raise ParseError(f"line {lineno}: face index {head} out of range")
                idx.append(i)
            faces.append(idx)
        # vt, vn, o, g, s, usemtl, mtllib: ignored
    return Mesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def _parse_off(text: str) -> Mesh:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line.split()))
    if not lines:
        raise ParseError("empty OFF file")
    lineno, head = lines[0]
    if not head[0].upper().endswith("OFF"):
        raise ParseError(f"line {lineno}: missing OFF header")
    rest = head[1:]
    pos = 1
    if not rest:
        if len(lines) < 2:
            raise ParseError("OFF file missing counts line")
        lineno, rest = lines[1]
        pos = 2
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError):
        raise ParseError(f"line {lineno}: bad counts line") from None
    if len(lines) < pos + nv + nf:
        raise ParseError("OFF file truncated")
    verts = np.empty((nv, 3))
    for k in range(nv):
        lineno, tok = lines[pos + k]
        xyz = _floats(tok[:3], lineno)
        if len(xyz) != 3:
            raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
        verts[k] = xyz
    pos += nv
    faces = np.empty((nf, 3), dtype=np.int64)
    for k in range(nf):
        lineno, tok = lines[pos + k]
        try:
            cnt = int(tok[0])
            if cnt != 3:
                raise NonTriangular(f"line {lineno}: face with {cnt} vertices")
            idx = [int(t) for t in tok[1:4]]
        except ValueError:
            raise ParseError(f"line {lineno}: bad face record") from None
        if len(idx) != 3 or min(idx) < 0 or max(idx) >= nv:
            raise ParseError(f"line {lineno}: face index out of range")
        faces[k] = idx
    return Mesh(verts, faces)


def load_mesh(data: bytes | str, format: MeshFormat | str) -> Mesh:
    """Parse OBJ or OFF text. Vertex and face order are preserved."""
    fmt = MeshFormat(format.lower() if isinstance(format, str) else format)
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    return _parse_obj(text) if fmt is MeshFormat.OBJ else _parse_off(text)


def save_mesh(mesh: Mesh, format: MeshFormat | str) -> bytes:
    """Serialize with round-trip float precision (``%.17g``)."""
    fmt = MeshFormat(format.lower() if isinstance(format, str) else format)
    out = []
    if fmt is MeshFormat.OBJ:
        out.extend("v %.17g %.17g %.17g" % tuple(p) for p in mesh.vertices)
        out.extend("f %d %d %d" % tuple(f + 1) for f in mesh.faces)
    else:
        out.append("OFF")
        out.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        out.extend("%.17g %.17g %.17g" % tuple(p) for p in mesh.vertices)
        out.extend("3 %d %d %d" % tuple(f) for f in mesh.faces)
    return ("\n".join(out) + "\n").encode("utf-8")


def read_mesh(path) -> Mesh:
    return load_mesh(Path(path).read_bytes(), MeshFormat.from_path(path))


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_bytes(save_mesh(mesh, MeshFormat.from_path(path)))
