"""
fileio.py
---------

Readers and writers for STL (ASCII and binary), OBJ and PLY (ASCII and
binary little endian). Loaded meshes are welded so that triangles stored
independently share their vertices.
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import DegenerateMeshError, MeshParseError
from .mesh import MERGE_TOL, TriangleMesh, face_normals, weld_vertices

FORMATS = ("stl", "obj", "ply")

_STL_HEADER = b"spinemorph binary STL".ljust(80, b" ")


def _detect_format(path: Path) -> str:
    ext = path.suffix.lower().lstrip(".")
    if ext not in FORMATS:
        raise MeshParseError(f"{path}: cannot infer mesh format from extension {path.suffix!r}")
    return ext


def load_mesh(path, format: str = "auto") -> TriangleMesh:
    """
    Load a triangle mesh from disk.

    Parameters
    ----------
    path : str or Path
    format : {'auto', 'stl', 'obj', 'ply'}

    Raises
    ------
    FileNotFoundError
    MeshParseError
      Malformed or truncated file.
    DegenerateMeshError
      Fewer than 3 unique vertices or no faces.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mesh file not found: {path}")
    fmt = _detect_format(path) if format == "auto" else format.lower()
    data = path.read_bytes()
    if fmt == "stl":
        vertices, faces = _read_stl(data, path)
    elif fmt == "obj":
        vertices, faces = _read_obj(data, path)
    elif fmt == "ply":
        vertices, faces = _read_ply(data, path)
    else:
        raise MeshParseError(f"unsupported mesh format {format!r}")

    vertices, faces = weld_vertices(vertices, faces, MERGE_TOL)
    if len(faces) == 0 or len(np.unique(faces)) < 3:
        raise DegenerateMeshError(f"{path}: mesh has no usable faces")
    used = np.zeros(len(vertices), dtype=bool)
    used[faces.ravel()] = True
    if not used.all():
        remap = np.cumsum(used) - 1
        vertices, faces = vertices[used], remap[faces]
    return TriangleMesh(vertices, faces)


def _float32_exact(vertices: np.ndarray) -> bool:
    return bool(np.all(vertices.astype(np.float32).astype(np.float64) == vertices))


def save_mesh(mesh: TriangleMesh, path, format: str = "auto", binary: bool | None = None) -> None:
    """
    Write a mesh; the file is written to a temporary name then renamed.

    For STL, ``binary=None`` picks binary when every coordinate is exactly
    representable as float32 and full-precision ASCII otherwise, so that
    reloading always reproduces the geometry.
    """
    path = Path(path)
    fmt = _detect_format(path) if format == "auto" else format.lower()
    if mesh.is_empty or len(np.unique(mesh.faces)) < 3:
        raise DegenerateMeshError("refusing to write a mesh without faces")
    if fmt == "stl":
        if binary is None:
            binary = _float32_exact(mesh.vertices)
        payload = _write_stl_binary(mesh) if binary else _write_stl_ascii(mesh)
    elif fmt == "obj":
        payload = _write_obj(mesh)
    elif fmt == "ply":
        payload = _write_ply(mesh, binary=True if binary is None else binary)
    else:
        raise ValueError(f"unsupported mesh format {format!r}")
    atomic_write_bytes(path, payload)


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- STL -------------------------------------------------------------------


def _is_ascii_stl(data: bytes) -> bool:
    if not data.lstrip().lower().startswith(b"solid"):
        return False
    # binary files may also start with "solid"; trust the size check
    if len(data) >= 84:
        count = struct.unpack("<I", data[80:84])[0]
        if 84 + 50 * count == len(data):
            return False
    return b"facet" in data[:4096].lower() or b"endsolid" in data.lower()


def _read_stl(data: bytes, path: Path):
    if _is_ascii_stl(data):
        return _read_stl_ascii(data, path)
    return _read_stl_binary(data, path)


def _read_stl_binary(data: bytes, path: Path):
    if len(data) < 84:
        raise MeshParseError(f"{path}: binary STL shorter than its 84-byte header")
    count = struct.unpack("<I", data[80:84])[0]
    expected = 84 + 50 * count
    if len(data) < expected:
        raise MeshParseError(
            f"{path}: binary STL declares {count} triangles but holds only "
            f"{(len(data) - 84) // 50}"
        )
    record = np.dtype(
        [("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]
    )
    tris = np.frombuffer(data, dtype=record, count=count, offset=84)["v"].astype(np.float64)
    vertices = tris.reshape((-1, 3))
    faces = np.arange(len(vertices)).reshape((-1, 3))
    return vertices, faces


def _read_stl_ascii(data: bytes, path: Path):
    vertices = []
    in_loop = 0
    for lineno, raw in enumerate(data.decode("ascii", errors="replace").splitlines(), 1):
        tokens = raw.split()
        if not tokens:
            continue
        key = tokens[0].lower()
        if key == "vertex":
            if len(tokens) != 4:
                raise MeshParseError(f"{path}:{lineno}: malformed vertex record")
            try:
                vertices.append([float(t) for t in tokens[1:]])
            except ValueError:
                raise MeshParseError(f"{path}:{lineno}: non-numeric vertex coordinate") from None
            in_loop += 1
        elif key == "outer":
            in_loop = 0
        elif key == "endloop":
            if in_loop != 3:
                raise MeshParseError(f"{path}:{lineno}: facet loop with {in_loop} vertices")
        elif key not in ("solid", "facet", "endfacet", "endsolid"):
            raise MeshParseError(f"{path}:{lineno}: unexpected token {tokens[0]!r}")
    if len(vertices) % 3:
        raise MeshParseError(f"{path}: truncated ASCII STL")
    vertices = np.array(vertices, dtype=np.float64).reshape((-1, 3))
    return vertices, np.arange(len(vertices)).reshape((-1, 3))


def _write_stl_binary(mesh: TriangleMesh) -> bytes:
    record = np.dtype(
        [("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")]
    )
    out = np.zeros(len(mesh.faces), dtype=record)
    out["normal"] = face_normals(mesh)
    out["v"] = mesh.vertices[mesh.faces]
    return _STL_HEADER + struct.pack("<I", len(mesh.faces)) + out.tobytes()


def _write_stl_ascii(mesh: TriangleMesh) -> bytes:
    lines = ["solid spinemorph"]
    normals = face_normals(mesh)
    for n, tri in zip(normals, mesh.vertices[mesh.faces]):
        lines.append("  facet normal %r %r %r" % tuple(float(c) for c in n))
        lines.append("    outer loop")
        for p in tri:
            lines.append("      vertex %r %r %r" % tuple(float(c) for c in p))
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append("endsolid spinemorph")
    return ("\n".join(lines) + "\n").encode("ascii")


# --- OBJ -------------------------------------------------------------------


def _read_obj(data: bytes, path: Path):
    vertices = []
    faces = []
    for lineno, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        if tokens[0] == "v":
            if len(tokens) < 4:
                raise MeshParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError:
                raise MeshParseError(f"{path}:{lineno}: non-numeric vertex coordinate") from None
        elif tokens[0] == "f":
            if len(tokens) < 4:
                raise MeshParseError(f"{path}:{lineno}: face needs at least 3 vertices")
            idx = []
            for tok in tokens[1:]:
                try:
                    i = int(tok.split("/")[0])
                except ValueError:
                    raise MeshParseError(f"{path}:{lineno}: bad face index {tok!r}") from None
                if i < 0:
                    i = len(vertices) + i
                else:
                    i -= 1
                if not 0 <= i < len(vertices):
                    raise MeshParseError(f"{path}:{lineno}: face index {tok!r} out of range")
                idx.append(i)
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
    vertices = np.array(vertices, dtype=np.float64).reshape((-1, 3))
    faces = np.array(faces, dtype=np.int64).reshape((-1, 3))
    return vertices, faces


def _write_obj(mesh: TriangleMesh) -> bytes:
    lines = ["# spinemorph"]
    lines.extend("v %r %r %r" % tuple(float(c) for c in v) for v in mesh.vertices)
    lines.extend("f %d %d %d" % tuple(int(i) + 1 for i in f) for f in mesh.faces)
    return ("\n".join(lines) + "\n").encode("ascii")


# --- PLY -------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_ply_header(data: bytes, path: Path):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MeshParseError(f"{path}: missing PLY magic or end_header")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []
    for lineno, line in enumerate(header, 1):
        tokens = line.split()
        if not tokens or tokens[0] in ("ply", "comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append({"name": tokens[1], "count": int(tokens[2]), "props": []})
        elif tokens[0] == "property":
            if not elements:
                raise MeshParseError(f"{path}:{lineno}: property before element")
            try:
                if tokens[1] == "list":
                    prop = (tokens[4], "list", _PLY_TYPES[tokens[2]], _PLY_TYPES[tokens[3]])
                else:
                    prop = (tokens[2], "scalar", _PLY_TYPES[tokens[1]], None)
            except (KeyError, IndexError):
                raise MeshParseError(f"{path}:{lineno}: bad property line {line!r}") from None
            elements[-1]["props"].append(prop)
        else:
            raise MeshParseError(f"{path}:{lineno}: unexpected header line {line!r}")
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshParseError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements, body_start


def _read_ply(data: bytes, path: Path):
    fmt, elements, offset = _parse_ply_header(data, path)
    if fmt == "ascii":
        tokens = data[offset:].split()
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(tokens):
                raise MeshParseError(f"{path}: PLY body ends early")
            out = tokens[pos:pos + n]
            pos += n
            return out

    vertices = None
    faces = []
    for el in elements:
        props = el["props"]
        if fmt == "binary_little_endian" and all(p[1] == "scalar" for p in props):
            dtype = np.dtype([(p[0], "<" + p[2]) for p in props])
            size = dtype.itemsize * el["count"]
            if offset + size > len(data):
                raise MeshParseError(f"{path}: PLY element {el['name']!r} truncated")
            arr = np.frombuffer(data, dtype=dtype, count=el["count"], offset=offset)
            offset += size
            if el["name"] == "vertex":
                vertices = np.column_stack([arr[c].astype(np.float64) for c in "xyz"])
            continue
        if (
            fmt == "binary_little_endian"
            and el["name"] == "face"
            and len(props) == 1
            and props[0][1] == "list"
        ):
            tri_dtype = np.dtype([("n", "<" + props[0][2]), ("idx", "<" + props[0][3], 3)])
            size = tri_dtype.itemsize * el["count"]
            if offset + size <= len(data):
                arr = np.frombuffer(data, dtype=tri_dtype, count=el["count"], offset=offset)
                if np.all(arr["n"] == 3):
                    faces.extend(map(tuple, arr["idx"].astype(np.int64)))
                    offset += size
                    continue
        rows = []
        for _ in range(el["count"]):
            row = {}
            for name, kind, t1, t2 in props:
                if fmt == "ascii":
                    if kind == "list":
                        n = int(take(1)[0])
                        row[name] = [float(x) for x in take(n)]
                    else:
                        row[name] = float(take(1)[0])
                else:
                    if kind == "list":
                        cdt = np.dtype("<" + t1)
                        if offset + cdt.itemsize > len(data):
                            raise MeshParseError(f"{path}: PLY body ends early")
                        n = int(np.frombuffer(data, cdt, 1, offset)[0])
                        offset += cdt.itemsize
                        idt = np.dtype("<" + t2)
                        if offset + n * idt.itemsize > len(data):
                            raise MeshParseError(f"{path}: PLY body ends early")
                        row[name] = np.frombuffer(data, idt, n, offset).tolist()
                        offset += n * idt.itemsize
                    else:
                        sdt = np.dtype("<" + t1)
                        if offset + sdt.itemsize > len(data):
                            raise MeshParseError(f"{path}: PLY body ends early")
                        row[name] = float(np.frombuffer(data, sdt, 1, offset)[0])
                        offset += sdt.itemsize
            rows.append(row)
        if el["name"] == "vertex":
            try:
                vertices = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64)
            except KeyError:
                raise MeshParseError(f"{path}: PLY vertex element lacks x/y/z") from None
        elif el["name"] == "face":
            key = next((p[0] for p in props if p[1] == "list"), None)
            if key is None:
                raise MeshParseError(f"{path}: PLY face element has no index list")
            for r in rows:
                idx = [int(i) for i in r[key]]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    if vertices is None:
        raise MeshParseError(f"{path}: PLY file has no vertex element")
    faces = np.array(faces, dtype=np.int64).reshape((-1, 3))
    if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
        raise MeshParseError(f"{path}: PLY face index out of range")
    return vertices.reshape((-1, 3)), faces


def _write_ply(mesh: TriangleMesh, binary: bool = True) -> bytes:
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        "comment spinemorph",
        f"element vertex {len(mesh.vertices)}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {len(mesh.faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    head = ("\n".join(header) + "\n").encode("ascii")
    if not binary:
        lines = ["%r %r %r" % tuple(float(c) for c in v) for v in mesh.vertices]
        lines += ["3 %d %d %d" % tuple(int(i) for i in f) for f in mesh.faces]
        return head + ("\n".join(lines) + "\n").encode("ascii")
    face_rec = np.zeros(len(mesh.faces), dtype=[("n", "u1"), ("idx", "<i4", 3)])
    face_rec["n"] = 3
    face_rec["idx"] = mesh.faces
    return head + mesh.vertices.astype("<f8").tobytes() + face_rec.tobytes()
