"""PLY mesh parsing and Gaussian-Splatting point cloud output.

Reads ASCII / binary-little-endian / binary-big-endian PLY 1.0 meshes
(polygonal faces fan-triangulated) and writes binary-little-endian point
PLY files with the fixed property layout x,y,z,nx,ny,nz,red,green,blue
that splatting trainers load directly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyCloud,
    InvalidGeometry,
    MalformedHeader,
    NonTriangulatable,
    TruncatedBody,
)

# Faces with area below this (model units squared) are treated as degenerate.
DEGENERATE_AREA = 1e-12

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle mesh; vertices in model space (meters)."""

    vertices: np.ndarray                 # (V, 3) float64
    faces: np.ndarray                    # (F, 3) int64
    vertex_colors: np.ndarray | None = None  # (V, 3) uint8, parsed but unused

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise InvalidGeometry("face index out of range")
        if self.vertex_colors is not None:
            self.vertex_colors = np.ascontiguousarray(self.vertex_colors, dtype=np.uint8).reshape(-1, 3)
            if len(self.vertex_colors) != len(self.vertices):
                raise InvalidGeometry("vertex color count does not match vertex count")

    @property
    def num_faces(self) -> int:
        return len(self.faces)


@dataclass(eq=False)
class PointCloud:
    """Positions + RGB colors + normals, all the same length.

    Normals are unit length (to 1e-6) or exactly zero; zero marks points
    without an orientation (e.g. SfM points).
    """

    positions: np.ndarray  # (N, 3) float32
    colors: np.ndarray     # (N, 3) uint8
    normals: np.ndarray    # (N, 3) float32

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float32).reshape(-1, 3)
        self.colors = np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float32).reshape(-1, 3)
        n = len(self.positions)
        if len(self.colors) != n or len(self.normals) != n:
            raise ValueError("positions, colors, normals must have identical length")
        if n:
            norms = np.linalg.norm(self.normals.astype(np.float64), axis=1)
            bad = ~((np.abs(norms - 1.0) <= 1e-6) | (norms == 0.0))
            if bad.any():
                raise ValueError(f"{int(bad.sum())} normals are neither unit nor zero")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class ValidationReport:
    triangle_count: int
    degenerate_faces: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# generic PLY parsing
# ---------------------------------------------------------------------------

class _Property:
    __slots__ = ("name", "dtype", "is_list", "count_dtype")

    def __init__(self, name, dtype, is_list=False, count_dtype=None):
        self.name = name
        self.dtype = dtype
        self.is_list = is_list
        self.count_dtype = count_dtype


class _Element:
    __slots__ = ("name", "count", "properties")

    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []


def _parse_header(data: bytes):
    """Split into (format, elements, body bytes)."""
    end = data.find(b"end_header")
    if end < 0:
        raise MalformedHeader("missing end_header")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise MalformedHeader("no newline after end_header")
    try:
        lines = data[:end].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"non-ASCII header: {exc}") from None

    if not lines or lines[0].strip() != "ply":
        raise MalformedHeader("file does not start with 'ply'")

    fmt = None
    elements: list[_Element] = []
    for line in lines[1:]:
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if len(tokens) != 3 or tokens[1] not in (
                "ascii", "binary_little_endian", "binary_big_endian",
            ):
                raise MalformedHeader(f"bad format line: {line!r}")
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise MalformedHeader(f"bad element line: {line!r}")
            try:
                count = int(tokens[2])
            except ValueError:
                raise MalformedHeader(f"bad element count: {line!r}") from None
            if count < 0:
                raise MalformedHeader(f"negative element count: {line!r}")
            elements.append(_Element(tokens[1], count))
        elif tokens[0] == "property":
            if not elements:
                raise MalformedHeader("property declared before any element")
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise MalformedHeader(f"bad list property: {line!r}")
                count_t, item_t, name = tokens[2], tokens[3], tokens[4]
                if count_t not in _SCALAR_TYPES or item_t not in _SCALAR_TYPES:
                    raise MalformedHeader(f"unknown property type: {line!r}")
                elements[-1].properties.append(
                    _Property(name, _SCALAR_TYPES[item_t], True, _SCALAR_TYPES[count_t])
                )
            else:
                if len(tokens) != 3:
                    raise MalformedHeader(f"bad property line: {line!r}")
                if tokens[1] not in _SCALAR_TYPES:
                    raise MalformedHeader(f"unknown property type: {line!r}")
                elements[-1].properties.append(_Property(tokens[2], _SCALAR_TYPES[tokens[1]]))
        else:
            raise MalformedHeader(f"unknown header keyword: {tokens[0]!r}")

    if fmt is None:
        raise MalformedHeader("missing format line")
    return fmt, elements, data[nl + 1:]


def _parse_ascii_body(body: bytes, elements):
    try:
        tokens = body.decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise TruncatedBody(f"non-ASCII body in ascii PLY: {exc}") from None
    pos = 0
    out = {}
    for elem in elements:
        has_list = any(p.is_list for p in elem.properties)
        if not has_list:
            width = len(elem.properties)
            need = elem.count * width
            if len(tokens) - pos < need:
                raise TruncatedBody(f"element {elem.name!r}: expected {need} values")
            try:
                block = np.asarray(tokens[pos:pos + need], dtype=np.float64).reshape(elem.count, width)
            except ValueError as exc:
                raise TruncatedBody(f"element {elem.name!r}: bad numeric value: {exc}") from None
            pos += need
            out[elem.name] = {
                p.name: block[:, j].astype(p.dtype) for j, p in enumerate(elem.properties)
            }
        else:
            columns = {p.name: [] for p in elem.properties}
            for _ in range(elem.count):
                for p in elem.properties:
                    if p.is_list:
                        if pos >= len(tokens):
                            raise TruncatedBody(f"element {elem.name!r}: missing list count")
                        n = int(float(tokens[pos]))
                        pos += 1
                        if len(tokens) - pos < n:
                            raise TruncatedBody(f"element {elem.name!r}: short list")
                        columns[p.name].append(
                            np.asarray(tokens[pos:pos + n], dtype=np.float64).astype(p.dtype)
                        )
                        pos += n
                    else:
                        if pos >= len(tokens):
                            raise TruncatedBody(f"element {elem.name!r}: missing value")
                        columns[p.name].append(np.float64(tokens[pos]).astype(p.dtype))
                        pos += 1
            out[elem.name] = columns
    return out


def _parse_binary_body(body: bytes, elements, endian: str):
    offset = 0
    out = {}
    for elem in elements:
        has_list = any(p.is_list for p in elem.properties)
        if not has_list:
            dtype = np.dtype([(p.name, endian + p.dtype) for p in elem.properties])
            need = dtype.itemsize * elem.count
            if len(body) - offset < need:
                raise TruncatedBody(f"element {elem.name!r}: need {need} bytes")
            rows = np.frombuffer(body, dtype=dtype, count=elem.count, offset=offset)
            offset += need
            out[elem.name] = {p.name: rows[p.name] for p in elem.properties}
        else:
            columns = {p.name: [] for p in elem.properties}
            for _ in range(elem.count):
                for p in elem.properties:
                    if p.is_list:
                        cdt = np.dtype(endian + p.count_dtype)
                        if len(body) - offset < cdt.itemsize:
                            raise TruncatedBody(f"element {elem.name!r}: missing list count")
                        n = int(np.frombuffer(body, dtype=cdt, count=1, offset=offset)[0])
                        offset += cdt.itemsize
                        idt = np.dtype(endian + p.dtype)
                        if len(body) - offset < n * idt.itemsize:
                            raise TruncatedBody(f"element {elem.name!r}: short list")
                        columns[p.name].append(np.frombuffer(body, dtype=idt, count=n, offset=offset).copy())
                        offset += n * idt.itemsize
                    else:
                        sdt = np.dtype(endian + p.dtype)
                        if len(body) - offset < sdt.itemsize:
                            raise TruncatedBody(f"element {elem.name!r}: missing value")
                        columns[p.name].append(np.frombuffer(body, dtype=sdt, count=1, offset=offset)[0])
                        offset += sdt.itemsize
            out[elem.name] = columns
    return out


def _parse_ply(data: bytes):
    fmt, elements, body = _parse_header(data)
    if fmt == "ascii":
        return elements, _parse_ascii_body(body, elements)
    endian = "<" if fmt == "binary_little_endian" else ">"
    return elements, _parse_binary_body(body, elements, endian)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def parse_ply_mesh(data: bytes) -> TriangleMesh:
    """Parse a PLY mesh; polygonal faces are fan-triangulated from the first index."""
    elements, parsed = _parse_ply(data)
    by_name = {e.name: e for e in elements}
    if "vertex" not in by_name:
        raise MalformedHeader("no vertex element")
    vert = parsed["vertex"]
    for axis in ("x", "y", "z"):
        if axis not in vert:
            raise MalformedHeader(f"vertex element lacks property {axis!r}")
    vertices = np.column_stack([
        np.asarray(vert["x"], dtype=np.float64),
        np.asarray(vert["y"], dtype=np.float64),
        np.asarray(vert["z"], dtype=np.float64),
    ])
    colors = None
    if all(c in vert for c in ("red", "green", "blue")):
        colors = np.column_stack([
            np.asarray(vert["red"]), np.asarray(vert["green"]), np.asarray(vert["blue"]),
        ]).astype(np.uint8)

    triangles = []
    if "face" in by_name:
        face_elem = by_name["face"]
        list_props = [p for p in face_elem.properties if p.is_list]
        if not list_props:
            raise MalformedHeader("face element has no list property")
        named = [p for p in list_props if p.name in ("vertex_indices", "vertex_index")]
        prop = named[0] if named else list_props[0]
        for idx, face in enumerate(parsed["face"][prop.name]):
            k = len(face)
            if k < 3:
                raise NonTriangulatable(f"face {idx} has {k} indices")
            face = np.asarray(face, dtype=np.int64)
            for j in range(1, k - 1):
                triangles.append((face[0], face[j], face[j + 1]))
    faces = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    return TriangleMesh(vertices=vertices, faces=faces, vertex_colors=colors)


_POINT_HEADER = (
    "ply\n"
    "format binary_little_endian 1.0\n"
    "element vertex {n}\n"
    "property float x\n"
    "property float y\n"
    "property float z\n"
    "property float nx\n"
    "property float ny\n"
    "property float nz\n"
    "property uchar red\n"
    "property uchar green\n"
    "property uchar blue\n"
    "end_header\n"
)

_POINT_DTYPE = np.dtype([
    ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
    ("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4"),
    ("red", "u1"), ("green", "u1"), ("blue", "u1"),
])


def write_ply_points(cloud: PointCloud) -> bytes:
    """Serialize a point cloud to binary-little-endian PLY (27 bytes per point)."""
    n = len(cloud)
    if n == 0:
        raise EmptyCloud("refusing to write a zero-point PLY")
    rows = np.empty(n, dtype=_POINT_DTYPE)
    for j, name in enumerate(("x", "y", "z")):
        rows[name] = cloud.positions[:, j]
    for j, name in enumerate(("nx", "ny", "nz")):
        rows[name] = cloud.normals[:, j]
    for j, name in enumerate(("red", "green", "blue")):
        rows[name] = cloud.colors[:, j]
    return _POINT_HEADER.format(n=n).encode("ascii") + rows.tobytes()


def read_ply_points(data: bytes) -> PointCloud:
    """Parse a point PLY back into a PointCloud (inverse of write_ply_points)."""
    elements, parsed = _parse_ply(data)
    if "vertex" not in {e.name for e in elements}:
        raise MalformedHeader("no vertex element")
    vert = parsed["vertex"]
    for axis in ("x", "y", "z"):
        if axis not in vert:
            raise MalformedHeader(f"vertex element lacks property {axis!r}")
    n = len(np.asarray(vert["x"]))
    positions = np.column_stack([vert["x"], vert["y"], vert["z"]]).astype(np.float32)
    if all(k in vert for k in ("nx", "ny", "nz")):
        normals = np.column_stack([vert["nx"], vert["ny"], vert["nz"]]).astype(np.float32)
    else:
        normals = np.zeros((n, 3), dtype=np.float32)
    if all(k in vert for k in ("red", "green", "blue")):
        colors = np.column_stack([vert["red"], vert["green"], vert["blue"]]).astype(np.uint8)
    else:
        colors = np.full((n, 3), 128, dtype=np.uint8)
    return PointCloud(positions=positions, colors=colors, normals=normals)


def triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Per-face area: half the cross product norm."""
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def face_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unit face normals (v_b - v_a) x (v_c - v_a); zero for degenerate faces."""
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    n = np.cross(b - a, c - a)
    norms = np.linalg.norm(n, axis=1)
    ok = norms > 0
    n[ok] /= norms[ok, None]
    n[~ok] = 0.0
    return n


def validate_mesh(mesh: TriangleMesh) -> ValidationReport:
    """Report degenerate faces and the paper's triangle-count working range."""
    count = mesh.num_faces
    warnings = []
    degenerate: list[int] = []
    if count:
        areas = triangle_areas(mesh.vertices, mesh.faces)
        degenerate = np.nonzero(areas < DEGENERATE_AREA)[0].tolist()
    if not 100 <= count <= 1000:
        warnings.append(f"triangle count outside [100,1000]: {count}")
    if degenerate:
        warnings.append(f"{len(degenerate)} degenerate faces (area < {DEGENERATE_AREA:g})")
    return ValidationReport(triangle_count=count, degenerate_faces=degenerate, warnings=warnings)
