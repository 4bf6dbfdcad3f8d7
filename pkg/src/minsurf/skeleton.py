"""Topological skeleton model: nodes with a size, solid edges and virtual edges.

Solid edges (SE) run along pipe centerlines and form the main skeleton.
Virtual edges (VE) are auxiliary joins that carry a connection operator
(Link, Merge or OffLink). The geometric requirement that VE run perpendicular
to SE and never intersect is documented but not enforced here.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class EdgeKind(enum.Enum):
    SOLID = 1
    VIRTUAL = 2


class Operator(enum.Enum):
    LINK = "LINK"
    MERGE = "MERGE"
    OFFLINK = "OFFLINK"


class CoordSystem(enum.Enum):
    RELATIVE = "relative"
    CAMERA = "camera"


class SkeletonError(ValueError):
    """Structural problem with a skeleton or its adjacency encoding.

    ``rule`` is a short machine-readable id (``"self-loop"``,
    ``"invalid adjacency code"``, ...).
    """

    def __init__(self, rule: str, message: str, indices: Sequence[int] = ()):
        super().__init__(f"{rule}: {message}")
        self.rule = rule
        self.indices = tuple(indices)


class SkeletonNode(NamedTuple):
    id: int
    position: tuple[float, float, float]
    size: float


class VirtualEdge(NamedTuple):
    i: int
    j: int
    op: Operator = Operator.LINK


def _pair(i: int, j: int) -> tuple[int, int]:
    i, j = int(i), int(j)
    return (i, j) if i <= j else (j, i)


@dataclass(frozen=True)
class Skeleton:
    """Immutable skeleton value.

    Edge lists are normalised to ``i <= j`` and sorted, but duplicates and
    self-loops are kept so that :func:`validate` can report them.
    """

    nodes: tuple[SkeletonNode, ...]
    solid_edges: tuple[tuple[int, int], ...] = ()
    virtual_edges: tuple[VirtualEdge, ...] = ()
    coord_system: CoordSystem = CoordSystem.RELATIVE

    def __post_init__(self):
        nodes = tuple(
            SkeletonNode(int(n[0]), tuple(float(c) for c in n[1]), float(n[2]))
            for n in self.nodes
        )
        se = tuple(sorted(_pair(i, j) for i, j in self.solid_edges))
        ve = []
        for e in self.virtual_edges:
            if len(e) == 2:
                i, j = e
                op = Operator.LINK
            else:
                i, j, op = e
            i, j = _pair(i, j)
            ve.append(VirtualEdge(i, j, Operator(op)))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "solid_edges", se)
        object.__setattr__(self, "virtual_edges", tuple(sorted(ve, key=lambda e: (e.i, e.j, e.op.value))))
        object.__setattr__(self, "coord_system", CoordSystem(self.coord_system))

    @classmethod
    def from_arrays(cls, positions, sizes, solid_edges=(), virtual_edges=(),
                    coord_system=CoordSystem.RELATIVE) -> "Skeleton":
        nodes = tuple(SkeletonNode(k, tuple(p), s) for k, (p, s) in enumerate(zip(positions, sizes)))
        return cls(nodes, tuple(solid_edges), tuple(virtual_edges), coord_system)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes], dtype=float).reshape(-1, 3)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([n.size for n in self.nodes], dtype=float)

    def edge_set(self, kind: EdgeKind) -> frozenset[tuple[int, int]]:
        if kind is EdgeKind.SOLID:
            return frozenset(self.solid_edges)
        return frozenset((e.i, e.j) for e in self.virtual_edges)

    def operator(self, i: int, j: int) -> Operator | None:
        key = _pair(i, j)
        for e in self.virtual_edges:
            if (e.i, e.j) == key:
                return e.op
        return None

    def replace(self, **changes) -> "Skeleton":
        kw = dict(nodes=self.nodes, solid_edges=self.solid_edges,
                  virtual_edges=self.virtual_edges, coord_system=self.coord_system)
        kw.update(changes)
        return Skeleton(**kw)


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    indices: tuple[int, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {"rule": v.rule, "message": v.message, "indices": list(v.indices)}
                for v in self.violations
            ],
        }

    def raise_if_invalid(self):
        if self.violations:
            v = self.violations[0]
            raise SkeletonError(v.rule, v.message, v.indices)


def validate(skel: Skeleton) -> ValidationReport:
    """Check every structural rule and collect all violations."""
    out: list[Violation] = []
    n = len(skel.nodes)
    if n == 0:
        out.append(Violation("no nodes", "skeleton has no nodes"))
    for k, node in enumerate(skel.nodes):
        if node.id != k:
            out.append(Violation("node id", f"node at position {k} has id {node.id}", (k,)))
        if len(node.position) != 3:
            out.append(Violation("dimension mismatch", f"node {k} position is not a 3-vector", (k,)))
        elif not all(math.isfinite(c) for c in node.position):
            out.append(Violation("non-finite position", f"node {k} has a non-finite coordinate", (k,)))
        if not math.isfinite(node.size) or node.size < 0:
            out.append(Violation("negative size", f"node {k} has size {node.size!r}", (k,)))

    seen: dict[tuple[int, int], str] = {}
    conflicts = set()
    edges = [(p, "solid") for p in skel.solid_edges] + [((e.i, e.j), "virtual") for e in skel.virtual_edges]
    for (i, j), kind in edges:
        if not (0 <= i < n and 0 <= j < n):
            out.append(Violation("endpoint out of range", f"{kind} edge ({i}, {j}) references a missing node", (i, j)))
            continue
        if i == j:
            out.append(Violation("self-loop", f"{kind} edge ({i}, {j}) is a self-loop", (i,)))
            continue
        prev = seen.get((i, j))
        if prev == kind:
            out.append(Violation("duplicate edge", f"{kind} edge ({i}, {j}) appears more than once", (i, j)))
        elif prev is not None and (i, j) not in conflicts:
            conflicts.add((i, j))
            out.append(Violation("conflicting edge kind", f"pair ({i}, {j}) is both solid and virtual", (i, j)))
        else:
            seen[(i, j)] = kind
    return ValidationReport(tuple(out))


def to_adjacency(skel: Skeleton) -> np.ndarray:
    """Adjacency code matrix: 1 for a solid edge, 2 for a virtual edge, else 0."""
    validate(skel).raise_if_invalid()
    n = len(skel)
    adj = np.zeros((n, n), dtype=int)
    for i, j in skel.solid_edges:
        adj[i, j] = adj[j, i] = 1
    for e in skel.virtual_edges:
        adj[e.i, e.j] = adj[e.j, e.i] = 2
    return adj


def from_adjacency(adj, positions, sizes, coord_system=CoordSystem.RELATIVE,
                   operators: dict | None = None) -> Skeleton:
    """Inverse of :func:`to_adjacency`.

    Virtual edges get ``Operator.LINK`` unless ``operators`` maps the pair to
    something else.
    """
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SkeletonError("dimension mismatch", f"adjacency must be square, got shape {a.shape}")
    n = a.shape[0]
    if not np.all(np.isin(a, (0, 1, 2))):
        bad = np.argwhere(~np.isin(a, (0, 1, 2)))[0]
        raise SkeletonError("invalid adjacency code", f"entry {tuple(bad)} = {a[tuple(bad)]!r}", tuple(bad))
    a = a.astype(int)
    if not np.array_equal(a, a.T):
        bad = np.argwhere(a != a.T)[0]
        raise SkeletonError("asymmetric adjacency", f"entry {tuple(bad)} differs from its transpose", tuple(bad))
    if np.any(np.diag(a) != 0):
        k = int(np.flatnonzero(np.diag(a))[0])
        raise SkeletonError("self-loop", f"diagonal entry {k} is nonzero", (k,))
    if len(positions) != n or len(sizes) != n:
        raise SkeletonError("dimension mismatch",
                            f"{n} nodes but {len(positions)} positions and {len(sizes)} sizes")
    operators = {_pair(*k): Operator(v) for k, v in (operators or {}).items()}
    iu, ju = np.triu_indices(n, k=1)
    se = [(int(i), int(j)) for i, j in zip(iu, ju) if a[i, j] == 1]
    ve = [VirtualEdge(int(i), int(j), operators.get((int(i), int(j)), Operator.LINK))
          for i, j in zip(iu, ju) if a[i, j] == 2]
    return Skeleton.from_arrays(positions, sizes, se, ve, coord_system)


def combined_graph(skel: Skeleton, edges: str = "union") -> np.ndarray:
    """0/1 adjacency of the simple graph used for spectral comparison.

    ``edges`` selects ``"union"`` (SE and VE, the default), ``"solid"`` or
    ``"virtual"``.
    """
    n = len(skel)
    g = np.zeros((n, n), dtype=int)
    chosen: Iterable[tuple[int, int]]
    if edges == "union":
        chosen = list(skel.edge_set(EdgeKind.SOLID)) + list(skel.edge_set(EdgeKind.VIRTUAL))
    elif edges == "solid":
        chosen = skel.edge_set(EdgeKind.SOLID)
    elif edges == "virtual":
        chosen = skel.edge_set(EdgeKind.VIRTUAL)
    else:
        raise ValueError(f"unknown edge selection {edges!r}")
    for i, j in chosen:
        if i != j:
            g[i, j] = g[j, i] = 1
    return g


def normalize_bbox(positions) -> np.ndarray:
    """Min-max map each axis to [0, 1]; a zero-extent axis maps to 0."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise SkeletonError("no nodes", "cannot normalise an empty point set")
    lo = p.min(axis=0)
    ext = p.max(axis=0) - lo
    out = np.zeros_like(p)
    nz = ext > 0
    out[:, nz] = (p[:, nz] - lo[nz]) / ext[nz]
    return np.clip(out, 0.0, 1.0)


def se_connected(skel: Skeleton) -> bool:
    n = len(skel)
    if n == 0:
        return False
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in skel.solid_edges:
        parent[find(i)] = find(j)
    return len({find(k) for k in range(n)}) == 1


@dataclass(frozen=True)
class GeneratorConfig:
    min_nodes: int = 2
    max_nodes: int = 8
    ve_fraction: float = 0.5
    bbox: tuple[tuple[float, float, float], tuple[float, float, float]] = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    extra_edge_prob: float = 0.15
    size_range: tuple[float, float] = (0.04, 0.1)
    step: float | None = 2.0 ** -8
    coord_system: CoordSystem = CoordSystem.CAMERA


def random_skeleton(seed: int, cfg: GeneratorConfig | None = None, **overrides) -> Skeleton:
    """Seeded random valid skeleton with a connected solid-edge subgraph.

    A random spanning tree of solid edges comes first; every remaining pair
    then gets an extra edge with probability ``extra_edge_prob``, virtual with
    probability ``ve_fraction``. With ``step`` set, coordinates and sizes lie on
    a dyadic grid so coordinate differences are exact in floating point.
    Node sizes are given as fractions of the bounding-box diagonal.
    """
    cfg = cfg or GeneratorConfig()
    if overrides:
        cfg = GeneratorConfig(**{**cfg.__dict__, **overrides})
    if not 1 <= cfg.min_nodes <= cfg.max_nodes:
        raise ValueError(f"need 1 <= min_nodes <= max_nodes, got {cfg.min_nodes}, {cfg.max_nodes}")
    if cfg.ve_fraction > 0 and cfg.max_nodes < 2:
        raise ValueError("virtual edges need at least two nodes")
    if not 0 <= cfg.ve_fraction <= 1 or not 0 <= cfg.extra_edge_prob <= 1:
        raise ValueError("probabilities must lie in [0, 1]")
    lo = np.asarray(cfg.bbox[0], dtype=float)
    hi = np.asarray(cfg.bbox[1], dtype=float)
    if np.any(hi < lo):
        raise ValueError("bbox upper corner below lower corner")
    smin, smax = cfg.size_range
    if not 0 < smin <= smax:
        raise ValueError("size_range must satisfy 0 < min <= max")

    rng = np.random.default_rng(seed)
    n = int(rng.integers(cfg.min_nodes, cfg.max_nodes + 1))
    diag = float(np.linalg.norm(hi - lo)) or 1.0

    def snap(x):
        return np.round(x / cfg.step) * cfg.step if cfg.step else x

    pts: list[tuple[float, ...]] = []
    while len(pts) < n:
        p = tuple(float(v) for v in snap(lo + rng.random(3) * (hi - lo)))
        if p not in pts or np.all(hi == lo):
            pts.append(p)
    sizes = [max(float(snap(diag * rng.uniform(smin, smax))), cfg.step or smin * diag) for _ in range(n)]

    order = rng.permutation(n)
    se = set()
    for k in range(1, n):
        parent = order[int(rng.integers(0, k))]
        se.add(_pair(order[k], parent))
    ve = []
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) in se or rng.random() >= cfg.extra_edge_prob:
                continue
            if rng.random() < cfg.ve_fraction:
                ve.append(VirtualEdge(i, j, list(Operator)[int(rng.integers(0, 3))]))
            else:
                se.add((i, j))
    return Skeleton.from_arrays(pts, sizes, sorted(se), ve, cfg.coord_system)
