"""Indexed triangle meshes: topology checks, discrete mean curvature and OBJ/PLY I/O."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .codec import format_real


class MeshError(ValueError):
    pass


class MeshIOError(OSError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def __eq__(self, other):
        if not isinstance(other, TriMesh):
            return NotImplemented
        return (self.vertices.shape == other.vertices.shape and self.faces.shape == other.faces.shape
                and np.array_equal(self.vertices, other.vertices) and np.array_equal(self.faces, other.faces))

    __hash__ = None

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0) if len(e) else e

    def face_areas(self) -> np.ndarray:
        return face_areas(self.vertices, self.faces)

    def area(self) -> float:
        return float(self.face_areas().sum())


def face_areas(v, f) -> np.ndarray:
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def corner_cotangents(v, f) -> np.ndarray:
    """Cotangent of the interior angle at each triangle corner, shape (F, 3)."""
    out = np.empty(f.shape, dtype=float)
    for c in range(3):
        a = v[f[:, c]]
        b = v[f[:, (c + 1) % 3]]
        d = v[f[:, (c + 2) % 3]]
        e1, e2 = b - a, d - a
        cross = np.linalg.norm(np.cross(e1, e2), axis=1)
        dot = np.einsum("ij,ij->i", e1, e2)
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, c] = np.where(cross > 0, dot / cross, 0.0)
    return out


def mixed_areas(v, f, cot=None) -> np.ndarray:
    """Per-vertex mixed Voronoi area (Voronoi for acute triangles, area split otherwise)."""
    if cot is None:
        cot = corner_cotangents(v, f)
    n = len(v)
    tri_area = face_areas(v, f)
    out = np.zeros(n)
    obtuse_any = (cot < 0).any(axis=1)
    for c in range(3):
        a = f[:, c]
        b = f[:, (c + 1) % 3]
        d = f[:, (c + 2) % 3]
        lab = np.sum((v[b] - v[a]) ** 2, axis=1)
        lad = np.sum((v[d] - v[a]) ** 2, axis=1)
        # edge a-b is opposite corner c+2, edge a-d opposite corner c+1
        voronoi = (lab * cot[:, (c + 2) % 3] + lad * cot[:, (c + 1) % 3]) / 8.0
        contrib = np.where(obtuse_any, np.where(cot[:, c] < 0, tri_area / 2, tri_area / 4), voronoi)
        out += np.bincount(a, weights=contrib, minlength=n)
    return out


def cotan_laplacian(v, f, cot=None, clamp=False) -> np.ndarray:
    """sum_j (cot a_ij + cot b_ij) (x_i - x_j) per vertex, shape (V, 3).

    Half of this vector is the gradient of the total area with respect to x_i.
    """
    if cot is None:
        cot = corner_cotangents(v, f)
    if clamp:
        cot = np.maximum(cot, 0.0)
    n = len(v)
    out = np.zeros((n, 3))
    for c in range(3):
        b = f[:, (c + 1) % 3]
        d = f[:, (c + 2) % 3]
        diff = (v[b] - v[d]) * cot[:, c:c + 1]
        for k in range(3):
            out[:, k] += np.bincount(b, weights=diff[:, k], minlength=n)
            out[:, k] -= np.bincount(d, weights=diff[:, k], minlength=n)
    return out


def vertex_normals(v, f) -> np.ndarray:
    """Area-weighted unit vertex normals."""
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    n = np.zeros((len(v), 3))
    for c in range(3):
        for k in range(3):
            n[:, k] += np.bincount(f[:, c], weights=fn[:, k], minlength=len(v))
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(norm > 0, n / norm, 0.0)


def mean_curvature(v, f, clamp=False) -> np.ndarray:
    """Signed scalar mean curvature per vertex (positive on a sphere with outward faces)."""
    return np.einsum("ij,ij->i", mean_curvature_normal(v, f, clamp), vertex_normals(v, f))


def mean_curvature_normal(v, f, clamp=False) -> np.ndarray:
    """Discrete mean-curvature vector H n per vertex (outward normal has H > 0 on a sphere)."""
    cot = corner_cotangents(v, f)
    lap = cotan_laplacian(v, f, cot, clamp)
    area = mixed_areas(v, f, cot)
    with np.errstate(divide="ignore", invalid="ignore"):
        hn = np.where(area[:, None] > 0, lap / (4.0 * area[:, None]), 0.0)
    return hn


@dataclass(frozen=True)
class CurvatureStats:
    mean_abs: float
    max_abs: float
    values: np.ndarray


def mean_curvature_stats(mesh: TriMesh) -> CurvatureStats:
    """Cotangent-formula |H| at each interior vertex, with summary statistics."""
    rep = _topology(mesh)
    if not (rep["edge_manifold"] and rep["vertex_manifold"]):
        raise MeshError("mean curvature needs a manifold mesh")
    v, f = mesh.vertices, mesh.faces
    h = np.linalg.norm(mean_curvature_normal(v, f), axis=1)
    interior = _interior_vertices(mesh)
    vals = h[interior]
    if len(vals) == 0:
        return CurvatureStats(0.0, 0.0, vals)
    return CurvatureStats(float(vals.mean()), float(vals.max()), vals)


def _interior_vertices(mesh: TriMesh) -> np.ndarray:
    f = mesh.faces
    e = np.sort(f[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    used = np.zeros(len(mesh.vertices), dtype=bool)
    used[f.ravel()] = True
    boundary = np.zeros(len(mesh.vertices), dtype=bool)
    boundary[uniq[counts == 1].ravel()] = True
    return np.flatnonzero(used & ~boundary)


@dataclass(frozen=True)
class MeshReport:
    vertices: int
    edges: int
    faces: int
    watertight: bool
    edge_manifold: bool
    vertex_manifold: bool
    oriented: bool
    euler_characteristic: int
    genus: int
    connected_components: int
    degenerate_faces: int
    area: float
    mean_abs_h: float | None
    max_abs_h: float | None

    @property
    def valid_closed_manifold(self) -> bool:
        return self.watertight and self.edge_manifold and self.vertex_manifold and self.oriented

    def to_dict(self) -> dict:
        return asdict(self)


def _topology(mesh: TriMesh) -> dict:
    v, f = mesh.vertices, mesh.faces
    nv, nf = len(v), len(f)
    if nf == 0:
        return dict(edges=0, watertight=False, edge_manifold=True, vertex_manifold=True, oriented=True,
                    components=nv)
    half = f[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    und = np.sort(half, axis=1)
    uniq, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    ne = len(uniq)
    watertight = bool(np.all(counts == 2))
    edge_manifold = bool(np.all(counts <= 2))
    oriented = len(np.unique(half, axis=0)) == len(half)

    # Corners (face, vertex) sharing a mesh edge at that vertex are linked; a vertex is
    # manifold when all of its corners end up in one group (a single fan or cycle).
    order = np.argsort(inverse, kind="stable")
    same = inverse[order][1:] == inverse[order][:-1]
    h0, h1 = order[:-1][same], order[1:][same]
    face0, slot0 = np.divmod(h0, 3)
    face1, slot1 = np.divmod(h1, 3)
    start0 = f[face0, slot0]
    start1 = f[face1, slot1]
    ca0 = 3 * face0 + slot0
    cb0 = 3 * face0 + (slot0 + 1) % 3
    flip = start1 != start0
    ca1 = np.where(flip, 3 * face1 + (slot1 + 1) % 3, 3 * face1 + slot1)
    cb1 = np.where(flip, 3 * face1 + slot1, 3 * face1 + (slot1 + 1) % 3)
    r = np.concatenate([ca0, cb0])
    c = np.concatenate([ca1, cb1])
    g = coo_matrix((np.ones(len(r)), (r, c)), shape=(3 * nf, 3 * nf))
    _, labels = connected_components(g, directed=False)
    corner_vertex = f.ravel()
    pairs = np.unique(np.stack([corner_vertex, labels]), axis=1)
    fans_per_vertex = np.bincount(pairs[0], minlength=nv)
    bad_edge_vertex = np.zeros(nv, dtype=bool)
    bad_edge_vertex[uniq[counts > 2].ravel()] = True
    used = fans_per_vertex > 0
    vertex_manifold = bool(np.all(fans_per_vertex[used] == 1) and not bad_edge_vertex.any())

    vg = coo_matrix((np.ones(len(uniq)), (uniq[:, 0], uniq[:, 1])), shape=(nv, nv))
    ncomp, _ = connected_components(vg, directed=False)
    return dict(edges=ne, watertight=watertight, edge_manifold=edge_manifold,
                vertex_manifold=vertex_manifold, oriented=oriented, components=int(ncomp))


def check_mesh(mesh: TriMesh) -> MeshReport:
    """Topology and quality report; problems are reported, never raised."""
    t = _topology(mesh)
    nv, nf = len(mesh.vertices), len(mesh.faces)
    chi = nv - t["edges"] + nf
    closed = t["watertight"] and t["components"] == 1 and t["oriented"] and t["vertex_manifold"]
    genus = (2 - chi) // 2 if closed and chi % 2 == 0 else -1
    areas = mesh.face_areas() if nf else np.zeros(0)
    mean_h = max_h = None
    if nf and t["edge_manifold"] and t["vertex_manifold"]:
        stats = mean_curvature_stats(mesh)
        mean_h, max_h = stats.mean_abs, stats.max_abs
    return MeshReport(
        vertices=nv, edges=t["edges"], faces=nf, watertight=t["watertight"],
        edge_manifold=t["edge_manifold"], vertex_manifold=t["vertex_manifold"], oriented=t["oriented"],
        euler_characteristic=int(chi), genus=int(genus), connected_components=t["components"],
        degenerate_faces=int(np.sum(areas <= 0)), area=float(areas.sum()),
        mean_abs_h=mean_h, max_abs_h=max_h,
    )


# ---------------------------------------------------------------- file I/O

def _require_nonempty(mesh: TriMesh):
    if len(mesh.vertices) == 0 or len(mesh.faces) == 0:
        raise MeshError("empty mesh")


def _write(destination, text: str):
    if hasattr(destination, "write"):
        destination.write(text)
        return
    try:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise MeshIOError(f"cannot write {os.fspath(destination)}: {exc.strerror}") from exc


def _read(source) -> str:
    if hasattr(source, "read"):
        return source.read()
    try:
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise MeshIOError(f"cannot read {os.fspath(source)}: {exc.strerror}") from exc


def obj_text(mesh: TriMesh) -> str:
    _require_nonempty(mesh)
    lines = [f"v {format_real(x)} {format_real(y)} {format_real(z)}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    return "\n".join(lines) + "\n"


def export_obj(mesh: TriMesh, destination):
    _write(destination, obj_text(mesh))


def ply_text(mesh: TriMesh) -> str:
    _require_nonempty(mesh)
    head = [
        "ply", "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property double x", "property double y", "property double z",
        f"element face {len(mesh.faces)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    body = [f"{format_real(x)} {format_real(y)} {format_real(z)}" for x, y, z in mesh.vertices.tolist()]
    body += [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
    return "\n".join(head + body) + "\n"


def export_ply(mesh: TriMesh, destination):
    _write(destination, ply_text(mesh))


_OBJ_IGNORED = {"vn", "vt", "vp", "o", "g", "s", "mtllib", "usemtl", "l", "#"}


def parse_obj(text: str) -> TriMesh:
    verts, faces = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                verts.append([float(t) for t in rest[:3]])
            except ValueError:
                raise MeshError(f"line {lineno}: non-numeric vertex coordinate") from None
        elif tag == "f":
            if len(rest) < 3:
                raise MeshError(f"line {lineno}: face needs at least 3 vertices")
            idx = []
            for t in rest:
                try:
                    k = int(t.split("/", 1)[0])
                except ValueError:
                    raise MeshError(f"line {lineno}: bad face index {t!r}") from None
                k = k - 1 if k > 0 else len(verts) + k
                if not 0 <= k < len(verts):
                    raise MeshError(f"line {lineno}: face index {t} out of range")
                idx.append(k)
            faces += [[idx[0], idx[m], idx[m + 1]] for m in range(1, len(idx) - 1)]
        elif tag in _OBJ_IGNORED:
            continue
        else:
            raise MeshError(f"line {lineno}: unknown record {tag!r}")
    return TriMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def import_obj(source) -> TriMesh:
    return parse_obj(_read(source))


def parse_ply(text: str) -> TriMesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshError("line 1: missing 'ply' magic")
    nv = nf = None
    k = 1
    while k < len(lines):
        tokens = lines[k].split()
        k += 1
        if not tokens:
            continue
        if tokens[0] == "format" and tokens[1:2] != ["ascii"]:
            raise MeshError(f"line {k}: only ASCII PLY is supported")
        if tokens[:2] == ["element", "vertex"]:
            nv = int(tokens[2])
        elif tokens[:2] == ["element", "face"]:
            nf = int(tokens[2])
        elif tokens[0] == "end_header":
            break
    if nv is None or nf is None:
        raise MeshError("PLY header lacks vertex or face element")
    verts, faces = [], []
    for m in range(nv):
        if k + m >= len(lines):
            raise MeshError(f"line {k + m + 1}: truncated vertex list")
        try:
            verts.append([float(t) for t in lines[k + m].split()[:3]])
        except ValueError:
            raise MeshError(f"line {k + m + 1}: bad vertex") from None
    k += nv
    for m in range(nf):
        if k + m >= len(lines):
            raise MeshError(f"line {k + m + 1}: truncated face list")
        tokens = lines[k + m].split()
        try:
            cnt = int(tokens[0])
            idx = [int(t) for t in tokens[1:1 + cnt]]
        except (ValueError, IndexError):
            raise MeshError(f"line {k + m + 1}: bad face") from None
        if len(idx) != cnt or cnt < 3 or any(not 0 <= i < nv for i in idx):
            raise MeshError(f"line {k + m + 1}: bad face")
        faces += [[idx[0], idx[j], idx[j + 1]] for j in range(1, cnt - 1)]
    return TriMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def import_ply(source) -> TriMesh:
    return parse_ply(_read(source))
