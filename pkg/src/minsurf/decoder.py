"""Skeleton to watertight surface: multi-tube field, isosurface, curvature relaxation.

Every skeleton edge becomes a tapered capsule whose radius interpolates the
endpoint node sizes. The capsules are combined with a polynomial smooth
minimum, so tubes fuse with fillets at shared nodes. Virtual-edge operators
change how a tube joins the rest:

* ``LINK``    the capsule enters the smooth minimum as is;
* ``MERGE``   spheres of the endpoint sizes are blended in as well, which only
  ever adds material around the joint;
* ``OFFLINK`` the capsule is shifted sideways, perpendicular to the edge, by
  ``offlink_offset`` before it is added.

These operator meanings are interpretations; the operators are named upstream
but their geometry is left open.

The zero set of the field is extracted with marching cubes and then relaxed by
explicit mean-curvature flow with cotangent weights. Vertices close to the
solid skeleton stay pinned within ``pin_tolerance`` of it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from skimage.measure import marching_cubes

from .mesh import MeshError, TriMesh, check_mesh, face_areas, mean_curvature_normal, vertex_normals
from .skeleton import Operator, Skeleton, SkeletonError, se_connected, validate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodeParams:
    grid_resolution: int = 64
    blend_smoothness: float | None = None   # None: 0.25 * mean node size
    offlink_offset: float | None = None     # None: size of the larger VE endpoint
    relax_step: float = 0.1
    relax_iters: int = 200
    pin_tolerance: float | None = None      # None: 0.05 * skeleton bbox diagonal
    radius_floor: float = 0.75              # fraction of the local tube radius; 0 disables
    early_stop: bool = True

    def __post_init__(self):
        if self.grid_resolution < 16:
            raise ValueError("grid_resolution must be at least 16")
        if self.blend_smoothness is not None and not self.blend_smoothness > 0:
            raise ValueError("blend_smoothness must be positive")
        if self.offlink_offset is not None and self.offlink_offset < 0:
            raise ValueError("offlink_offset must be non-negative")
        if not 0 < self.relax_step <= 1:
            raise ValueError("relax_step must lie in (0, 1]")
        if self.relax_iters < 0:
            raise ValueError("relax_iters must be non-negative")
        if self.pin_tolerance is not None and self.pin_tolerance < 0:
            raise ValueError("pin_tolerance must be non-negative")
        if not 0 <= self.radius_floor < 1:
            raise ValueError("radius_floor must lie in [0, 1)")


def smooth_min(a, b, k):
    """Polynomial smooth minimum; never above min(a, b), at most k/4 below it."""
    h = np.clip(0.5 + 0.5 * (b - a) / k, 0.0, 1.0)
    return b + (a - b) * h - k * h * (1.0 - h)


def capsule_distance(points, a, b, ra, rb):
    """Distance-like field of a capsule whose radius tapers linearly from ra to rb."""
    ba = b - a
    denom = float(ba @ ba)
    pa = points - a
    if denom == 0:
        t = np.zeros(len(points))
    else:
        t = np.clip(pa @ ba / denom, 0.0, 1.0)
    closest = pa - t[:, None] * ba
    return np.sqrt(np.einsum("ij,ij->i", closest, closest)) - (ra + t * (rb - ra))


def offlink_normal(a, b):
    """Unit vector perpendicular to segment ab, independent of endpoint order."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if tuple(b) < tuple(a):
        a, b = b, a
    d = b - a
    if not np.any(d):
        return np.array([1.0, 0.0, 0.0])
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(d)))] = 1.0
    n = np.cross(d, axis)
    return n / np.linalg.norm(n)


@dataclass(frozen=True)
class ScalarField:
    """Smooth union of tapered capsules; negative inside the surface."""

    starts: np.ndarray
    ends: np.ndarray
    r_start: np.ndarray
    r_end: np.ndarray
    k: float
    lo: np.ndarray
    hi: np.ndarray

    def __call__(self, points, chunk: int = 65536) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        out = np.empty(len(pts))
        for s in range(0, len(pts), chunk):
            p = pts[s:s + chunk]
            d = np.stack([capsule_distance(p, a, b, ra, rb) for a, b, ra, rb in
                          zip(self.starts, self.ends, self.r_start, self.r_end)], axis=1)
            # fold in ascending order so the result does not depend on edge order
            d.sort(axis=1)
            acc = d[:, 0]
            for e in range(1, d.shape[1]):
                acc = smooth_min(acc, d[:, e], self.k)
            out[s:s + chunk] = acc
        return out


def _check_decodable(skel: Skeleton):
    validate(skel).raise_if_invalid()
    small = [k for k, n in enumerate(skel.nodes) if not n.size > 0]
    if small:
        raise SkeletonError("zero node size", f"nodes {small} need a positive size to decode", small)
    if not se_connected(skel):
        raise SkeletonError("disconnected solid edges", "solid edges must connect every node")


def assemble_field(skel: Skeleton, params: DecodeParams = DecodeParams()) -> ScalarField:
    _check_decodable(skel)
    pos = skel.positions
    size = skel.sizes
    k = params.blend_smoothness if params.blend_smoothness is not None else 0.25 * float(size.mean())
    segs = []
    for i, j in skel.solid_edges:
        segs.append((pos[i], pos[j], size[i], size[j]))
    for e in skel.virtual_edges:
        a, b = pos[e.i], pos[e.j]
        if e.op is Operator.OFFLINK:
            off = params.offlink_offset if params.offlink_offset is not None else max(size[e.i], size[e.j])
            shift = off * offlink_normal(a, b)
            a, b = a + shift, b + shift
        segs.append((a, b, size[e.i], size[e.j]))
        if e.op is Operator.MERGE:
            segs.append((pos[e.i], pos[e.i], size[e.i], size[e.i]))
            segs.append((pos[e.j], pos[e.j], size[e.j], size[e.j]))
    if not segs:
        # lone node: a sphere
        segs = [(pos[m], pos[m], size[m], size[m]) for m in range(len(skel))]
    # orient every segment by coordinates so node labels cannot affect rounding
    segs = [(b, a, rb, ra) if tuple(b) < tuple(a) else (a, b, ra, rb) for a, b, ra, rb in segs]
    starts = np.array([s[0] for s in segs], dtype=float)
    ends = np.array([s[1] for s in segs], dtype=float)
    ra = np.array([s[2] for s in segs], dtype=float)
    rb = np.array([s[3] for s in segs], dtype=float)
    rad = np.maximum(ra, rb)[:, None]
    lo = np.minimum(starts - rad, ends - rad).min(axis=0) - k / 2
    hi = np.maximum(starts + rad, ends + rad).max(axis=0) + k / 2
    return ScalarField(starts, ends, ra, rb, float(k), lo, hi)


def _grid(field: ScalarField, resolution: int):
    ext = float((field.hi - field.lo).max())
    h = ext / (resolution - 5)
    lo = field.lo - 2 * h
    shape = tuple(int(math.ceil(e / h)) + 5 for e in (field.hi - field.lo))
    axes = [lo[d] + h * np.arange(shape[d]) for d in range(3)]
    return lo, h, shape, axes


def largest_component(mesh: TriMesh) -> TriMesh:
    f = mesh.faces
    nv = len(mesh.vertices)
    e = f[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(nv, nv))
    ncomp, labels = connected_components(g, directed=False)
    if ncomp > 1:
        face_label = labels[f[:, 0]]
        counts = np.bincount(face_label, minlength=ncomp)
        f = f[face_label == int(np.argmax(counts))]
    used = np.unique(f)
    remap = np.full(nv, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(mesh.vertices[used], remap[f])


def signed_volume(mesh: TriMesh) -> float:
    v, f = mesh.vertices, mesh.faces
    return float(np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum() / 6.0)


def extract_surface(field: ScalarField, params: DecodeParams = DecodeParams()) -> TriMesh:
    """Marching-cubes zero set of the field, outward oriented, largest component only."""
    lo, h, shape, axes = _grid(field, params.grid_resolution)
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    vol = field(np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)).reshape(shape)
    if not (vol < 0).any():
        raise MeshError("empty surface")
    # Samples very close to zero put vertices next to grid corners and produce
    # sliver triangles; nudging them off zero moves the surface by < snap.
    snap = 0.02 * h
    near = np.abs(vol) < snap
    vol[near] = np.where(vol[near] < 0, -snap, snap)
    verts, faces, _, _ = marching_cubes(vol, level=0.0, spacing=(h, h, h), method="lewiner",
                                        allow_degenerate=False)
    mesh = largest_component(TriMesh(verts + lo, faces))
    if signed_volume(mesh) < 0:
        mesh = TriMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh


def segment_distance(points, starts, ends):
    """Distance from each point to the nearest of a set of segments, with the nearest point."""
    best = np.full(len(points), np.inf)
    nearest = np.zeros_like(points)
    for a, b in zip(starts, ends):
        ba = b - a
        denom = float(ba @ ba)
        t = np.zeros(len(points)) if denom == 0 else np.clip((points - a) @ ba / denom, 0.0, 1.0)
        q = a + t[:, None] * ba
        d = np.linalg.norm(points - q, axis=1)
        closer = d < best
        best[closer] = d[closer]
        nearest[closer] = q[closer]
    return best, nearest


def _floor_projector(field: ScalarField, floor: float):
    """Push points that sink below ``floor`` times the local tube radius back out."""
    starts, ends = field.starts, field.ends
    ba = ends - starts
    denom = np.einsum("ij,ij->i", ba, ba)

    def project(x):
        best = np.full(len(x), np.inf)
        q = np.zeros_like(x)
        r = np.zeros(len(x))
        for e in range(len(starts)):
            t = np.zeros(len(x)) if denom[e] == 0 else np.clip((x - starts[e]) @ ba[e] / denom[e], 0.0, 1.0)
            qe = starts[e] + t[:, None] * ba[e]
            re = field.r_start[e] + t * (field.r_end[e] - field.r_start[e])
            d = np.linalg.norm(x - qe, axis=1) - re
            closer = d < best
            best[closer] = d[closer]
            q[closer] = qe[closer]
            r[closer] = re[closer]
        off = x - q
        dist = np.linalg.norm(off, axis=1)
        low = (dist < floor * r) & (dist > 0)
        if low.any():
            x[low] = q[low] + off[low] * (floor * r[low] / dist[low])[:, None]
        return x

    return project


def _shortest_incident_edge(v, edges):
    length = np.linalg.norm(v[edges[:, 0]] - v[edges[:, 1]], axis=1)
    out = np.full(len(v), np.inf)
    np.minimum.at(out, edges[:, 0], length)
    np.minimum.at(out, edges[:, 1], length)
    return out


def relax_curvature(mesh: TriMesh, skel: Skeleton, params: DecodeParams = DecodeParams(),
                    history: list | None = None) -> TriMesh:
    """Explicit mean-curvature flow ``v -= tau * e^2 * H n`` under skeletal constraints.

    ``e`` is the initial mean edge length. After every step, vertices that
    started within ``pin_tolerance`` of a solid edge are pulled back within that
    distance, and no vertex may sink below ``radius_floor`` times the local tube
    radius (this keeps thin tubes from pinching off). Each step is halved until
    the total area does not grow, so the area sequence is monotone. ``history``
    (if given) receives the area before the first and after every accepted step.
    """
    rep = check_mesh(mesh)
    if not (rep.edge_manifold and rep.vertex_manifold):
        raise MeshError("relaxation needs a manifold mesh")
    v = mesh.vertices.copy()
    f = mesh.faces
    if params.relax_iters == 0 or len(f) == 0:
        return TriMesh(v, f)
    edges = mesh.edges
    mean_edge = float(np.linalg.norm(v[edges[:, 0]] - v[edges[:, 1]], axis=1).mean())
    step = params.relax_step * mean_edge ** 2

    pos = skel.positions
    diag = float(np.linalg.norm(pos.max(axis=0) - pos.min(axis=0)))
    if diag == 0:
        diag = 2.0 * float(skel.sizes.max())
    pin_tol = params.pin_tolerance if params.pin_tolerance is not None else 0.05 * diag
    se = skel.solid_edges
    if se and pin_tol > 0:
        s0 = pos[[i for i, _ in se]]
        s1 = pos[[j for _, j in se]]
        dist, _ = segment_distance(v, s0, s1)
        pinned = np.flatnonzero(dist < pin_tol)
    else:
        pinned = np.zeros(0, dtype=np.int64)

    floor = _floor_projector(assemble_field(skel, params), params.radius_floor) if params.radius_floor > 0 else None

    def project(x):
        if floor is not None:
            x = floor(x)
        if len(pinned) == 0:
            return x
        d, q = segment_distance(x[pinned], s0, s1)
        far = d > pin_tol
        if far.any():
            idx = pinned[far]
            x[idx] = q[far] + (x[idx] - q[far]) * (pin_tol / d[far])[:, None]
        return x

    area = float(face_areas(v, f).sum())
    if history is not None:
        history.append(area)
    stop = 1e-6 * diag
    for _ in range(params.relax_iters):
        normals = vertex_normals(v, f)
        h = np.einsum("ij,ij->i", mean_curvature_normal(v, f, clamp=True), normals)
        disp = step * h[:, None] * normals
        # local stability limit: no vertex moves further than a quarter of its shortest edge
        limit = 0.25 * _shortest_incident_edge(v, edges)
        mag = np.linalg.norm(disp, axis=1)
        over = mag > limit
        disp[over] *= (limit[over] / mag[over])[:, None]
        scale = 1.0
        for _ in range(40):
            trial = project(v - scale * disp)
            new_area = float(face_areas(trial, f).sum())
            if new_area <= area:
                break
            scale *= 0.5
        else:
            log.debug("relaxation stalled: no area-decreasing step")
            break
        moved = float(np.abs(trial - v).max())
        v, area = trial, new_area
        if history is not None:
            history.append(area)
        if params.early_stop and moved < stop:
            break
    return TriMesh(v, f)


def decode(skel: Skeleton, params: DecodeParams = DecodeParams()) -> TriMesh:
    field = assemble_field(skel, params)
    mesh = extract_surface(field, params)
    return relax_curvature(mesh, skel, params)


def with_params(params: DecodeParams, **changes) -> DecodeParams:
    return replace(params, **changes)
