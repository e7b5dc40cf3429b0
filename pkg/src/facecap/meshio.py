"""Mesh file I/O: Wavefront-style ASCII and the FWB1 binary container.

ASCII files carry ``v x y z`` and ``f i j k`` records (1-based indices,
``#`` comments). Floats are printed with shortest round-trip repr, so an
ASCII round trip reproduces coordinates exactly. The binary form stores
``vertices``/``faces`` chunks plus one ``attr:<name>`` chunk per attribute
channel and round-trips bitwise.
"""

import numpy as np

from .container import read_container, write_container
from .errors import ParseError
from .mesh import MeshError, TriMesh


def save_mesh_ascii(path, mesh):
    lines = ["# facecap mesh"]
    for x, y, z in mesh.vertices:
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    for i, j, k in mesh.faces + 1:
        lines.append(f"f {i} {j} {k}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh_ascii(path):
    verts = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag, args = parts[0], parts[1:]
            if tag == "v":
                if len(args) != 3:
                    raise ParseError(path, lineno, f"vertex needs 3 coordinates, got {len(args)}")
                try:
                    verts.append([float(a) for a in args])
                except ValueError as exc:
                    raise ParseError(path, lineno, f"bad vertex coordinate: {exc}") from None
            elif tag == "f":
                if len(args) != 3:
                    raise ParseError(path, lineno, f"face needs 3 indices, got {len(args)}")
                try:
                    idx = [int(a) for a in args]
                except ValueError as exc:
                    raise ParseError(path, lineno, f"bad face index: {exc}") from None
                if any(i < 1 for i in idx):
                    raise ParseError(path, lineno, f"face index {min(idx)} (indices are 1-based)")
                faces.append([i - 1 for i in idx])
            else:
                raise ParseError(path, lineno, f"unknown record '{tag}'")
    try:
        return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                       np.array(faces, dtype=np.int64).reshape(-1, 3))
    except MeshError as exc:
        raise ParseError(path, lineno if verts or faces else 0, str(exc)) from None


def save_mesh_binary(path, mesh):
    chunks = {
        "vertices": mesh.vertices,
        "faces": mesh.faces.astype(np.uint32),
    }
    for name, vals in mesh.attributes.items():
        chunks[f"attr:{name}"] = vals
    write_container(path, chunks)


def load_mesh_binary(path):
    chunks = read_container(path)
    if "vertices" not in chunks or "faces" not in chunks:
        raise MeshError(f"{path}: mesh container needs 'vertices' and 'faces' chunks")
    attrs = {
        name[len("attr:"):]: vals
        for name, vals in chunks.items()
        if name.startswith("attr:")
    }
    return TriMesh(chunks["vertices"], chunks["faces"].astype(np.int64), attrs)


def save_mesh(path, mesh):
    """Dispatch on extension: .fwb -> binary container, anything else ASCII."""
    if str(path).endswith(".fwb"):
        save_mesh_binary(path, mesh)
    else:
        save_mesh_ascii(path, mesh)


def load_mesh(path):
    if str(path).endswith(".fwb"):
        return load_mesh_binary(path)
    return load_mesh_ascii(path)
