"""Polygon-file-format (PLY) I/O for meshes and labeled point clouds.

Supports ascii and binary_little_endian files.  Mesh vertices are read
from the x/y/z properties (extra per-vertex properties are skipped) and
faces must be triangles.
"""

from __future__ import annotations

import numpy as np

from .errors import MalformedFile
from .geometry import PointCloud
from .renderer import TriangleMesh

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


def _parse_header(raw: bytes, path):
    end = raw.find(b"end_header")
    if end < 0:
        raise MalformedFile(path, reason="no end_header")
    end = raw.index(b"\n", end) + 1
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MalformedFile(path, reason="missing ply magic")
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype) or ("list", count_dtype, item_dtype, prop_name)])
    for line in lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MalformedFile(path, reason="property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", _PLY_TYPES[parts[2]],
                                        _PLY_TYPES[parts[3]], parts[4]))
            else:
                elements[-1][2].append((parts[-1], _PLY_TYPES[parts[1]]))
        elif parts[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise MalformedFile(path, reason=f"unsupported format {fmt!r}")
    return fmt, elements, raw[end:]


def _read_elements(fmt, elements, body, path):
    """Return {element_name: {prop_name: array}}; list properties as (N, k) arrays."""
    out = {}
    if fmt == "ascii":
        tokens = body.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            data = {p[-1] if p[0] == "list" else p[0]: [] for p in props}
            for _ in range(count):
                for p in props:
                    if p[0] == "list":
                        n = int(tokens[pos]); pos += 1
                        vals = [float(tokens[pos + j]) for j in range(n)]
                        pos += n
                        data[p[3]].append(vals)
                    else:
                        data[p[0]].append(float(tokens[pos])); pos += 1
            out[name] = {k: np.asarray(v) for k, v in data.items()}
    else:
        offset = 0
        for name, count, props in elements:
            has_list = any(p[0] == "list" for p in props)
            if not has_list:
                dt = np.dtype([(p[0], "<" + p[1]) for p in props])
                arr = np.frombuffer(body, dtype=dt, count=count, offset=offset)
                offset += dt.itemsize * count
                out[name] = {p[0]: arr[p[0]] for p in props}
            else:
                if len(props) != 1:
                    raise MalformedFile(path, reason="mixed list element unsupported")
                _, cnt_t, item_t, pname = props[0]
                cnt_dt = np.dtype("<" + cnt_t)
                item_dt = np.dtype("<" + item_t)
                if count == 0:
                    out[name] = {pname: np.zeros((0, 3), dtype=np.int64)}
                    continue
                first = int(np.frombuffer(body, dtype=cnt_dt, count=1, offset=offset)[0])
                row = np.dtype([("n", cnt_dt), ("idx", item_dt, (first,))])
                arr = np.frombuffer(body, dtype=row, count=count, offset=offset)
                if not (arr["n"] == first).all():
                    raise MalformedFile(path, reason="non-uniform face arity")
                offset += row.itemsize * count
                out[name] = {pname: arr["idx"]}
    return out


def load_mesh_ply(path) -> TriangleMesh:
    """Load a triangle mesh; raises MalformedFile for non-triangular faces."""
    with open(path, "rb") as f:
        raw = f.read()
    fmt, elements, body = _parse_header(raw, path)
    data = _read_elements(fmt, elements, body, path)
    if "vertex" not in data:
        raise MalformedFile(path, reason="no vertex element")
    v = data["vertex"]
    try:
        vertices = np.column_stack([v["x"], v["y"], v["z"]]).astype(np.float64)
    except KeyError as e:
        raise MalformedFile(path, key=str(e), reason="vertex property missing")
    faces = data.get("face", {})
    idx = next(iter(faces.values())) if faces else np.zeros((0, 3), dtype=np.int64)
    idx = np.asarray(idx)
    if idx.size and idx.shape[1] != 3:
        raise MalformedFile(path, reason="faces are not triangles")
    return TriangleMesh(vertices=vertices, triangles=idx.astype(np.int64))


def save_mesh_ply(path, mesh: TriangleMesh, binary: bool = True) -> None:
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            f.write(mesh.vertices.astype("<f4").tobytes())
            rows = np.empty(len(mesh.triangles),
                            dtype=np.dtype([("n", "u1"), ("idx", "<i4", (3,))]))
            rows["n"] = 3
            rows["idx"] = mesh.triangles
            f.write(rows.tobytes())
        else:
            for x, y, z in mesh.vertices:
                f.write(f"{x:.9g} {y:.9g} {z:.9g}\n".encode("ascii"))
            for a, b, c in mesh.triangles:
                f.write(f"3 {a} {b} {c}\n".encode("ascii"))


def save_labeled_cloud_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    """Write points with rgb colors and integer instance labels."""
    n = len(cloud)
    colors = cloud.colors if cloud.colors is not None else np.zeros((n, 3), np.uint8)
    labels = cloud.labels if cloud.labels is not None else np.zeros(n, np.int64)
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {n}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property int label",
        "end_header",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            rows = np.empty(n, dtype=np.dtype(
                [("xyz", "<f4", (3,)), ("rgb", "u1", (3,)), ("label", "<i4")]))
            rows["xyz"] = cloud.points
            rows["rgb"] = colors
            rows["label"] = labels
            f.write(rows.tobytes())
        else:
            for p, c, l in zip(cloud.points, colors, labels):
                f.write((f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} "
                         f"{c[0]} {c[1]} {c[2]} {l}\n").encode("ascii"))


def load_labeled_cloud_ply(path) -> PointCloud:
    with open(path, "rb") as f:
        raw = f.read()
    fmt, elements, body = _parse_header(raw, path)
    data = _read_elements(fmt, elements, body, path)
    v = data["vertex"]
    points = np.column_stack([v["x"], v["y"], v["z"]]).astype(np.float64)
    colors = None
    if "red" in v:
        colors = np.column_stack([v["red"], v["green"], v["blue"]]).astype(np.uint8)
    labels = v["label"].astype(np.int64) if "label" in v else None
    return PointCloud(points=points, colors=colors, labels=labels)
