"""Text and JSON skeleton descriptions, coordinate systems and dataset records.

Canonical text layout::

    NODES: 3
    ADJ:
    0 1 0
    1 0 2
    0 2 0
    X: 0 1 1
    Y: 0 0 1
    Z: 0 0 0
    SIZE: 0.5 0.5 0.5
    VE_OPS:
    1 2 LINK

``VE_OPS`` is written only when some virtual edge uses a non-Link operator,
and a trailing ``COORDS: CAMERA`` line only for camera coordinates (relative
is the default). Both sections are extensions of the 0/1/2 matrix description.
"""
from __future__ import annotations

import enum
import json
import math
import re

import numpy as np

from .skeleton import (
    CoordSystem,
    Operator,
    Skeleton,
    SkeletonError,
    from_adjacency,
    to_adjacency,
    validate,
)

__all__ = [
    "ParseError", "PromptVariant", "PROMPTS", "format_real", "parse_text", "serialize_text",
    "to_json", "from_json", "convert_coords", "anchor_index", "make_dataset_record",
]

_HEADER = re.compile(r"^\s*([A-Z_]+)\s*:\s*(.*?)\s*$")
_INDEX = re.compile(r"^[0-9]+$")


class ParseError(ValueError):
    """Malformed description text. ``line`` is 1-based (0 when unknown)."""

    def __init__(self, message: str, line: int = 0, rule: str = "syntax"):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line
        self.rule = rule


def format_real(x: float) -> str:
    """Shortest decimal that round-trips; integral values print without '.0'."""
    x = float(x)
    if x == 0:
        return "-0" if math.copysign(1.0, x) < 0 else "0"
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _reals(tokens, lineno, what):
    out = []
    for t in tokens:
        try:
            v = float(t)
        except ValueError:
            raise ParseError(f"non-numeric token {t!r} in {what}", lineno) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite value {t!r} in {what}", lineno)
        out.append(v)
    return out


def parse_text(text: str) -> Skeleton:
    """Parse a description; lines before ``NODES:`` and after the last section are ignored."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from None
    lines = text.splitlines()
    k = 0
    while k < len(lines):
        m = _HEADER.match(lines[k])
        if m and m.group(1) == "NODES":
            break
        k += 1
    else:
        raise ParseError("missing section NODES", rule="missing section")

    def header(name):
        nonlocal k
        while k < len(lines) and not lines[k].strip():
            k += 1
        if k >= len(lines):
            raise ParseError(f"missing section {name}", k, rule="missing section")
        m = _HEADER.match(lines[k])
        if not m or m.group(1) != name:
            raise ParseError(f"expected section {name}, got {lines[k].strip()[:40]!r}", k + 1,
                             rule="missing section")
        k += 1
        return m.group(2), k

    rest, ln = header("NODES")
    try:
        n = int(rest)
    except ValueError:
        raise ParseError(f"node count {rest!r} is not an integer", ln) from None
    if n < 1:
        raise ParseError(f"node count must be positive, got {n}", ln, rule="no nodes")

    rest, ln = header("ADJ")
    if rest:
        raise ParseError("ADJ rows must start on the next line", ln)
    adj = []
    for r in range(n):
        if k >= len(lines):
            raise ParseError(f"ADJ has {r} rows, expected {n}", k, rule="count mismatch")
        tokens = lines[k].split()
        k += 1
        if len(tokens) != n:
            raise ParseError(f"ADJ row has {len(tokens)} entries, expected {n}", k, rule="count mismatch")
        row = []
        for t in tokens:
            if t not in ("0", "1", "2"):
                raise ParseError(f"invalid adjacency code {t!r}", k, rule="invalid adjacency code")
            row.append(int(t))
        adj.append(row)

    cols = {}
    for name in ("X", "Y", "Z", "SIZE"):
        rest, ln = header(name)
        vals = _reals(rest.split(), ln, name)
        if len(vals) != n:
            raise ParseError(f"{name} has {len(vals)} values, expected {n}", ln, rule="count mismatch")
        cols[name] = vals

    ops = {}
    coord = CoordSystem.RELATIVE

    def peek():
        j = k
        while j < len(lines) and not lines[j].strip():
            j += 1
        m = _HEADER.match(lines[j]) if j < len(lines) else None
        return (m.group(1), m.group(2), j) if m else (None, None, j)

    name, rest, j = peek()
    if name == "VE_OPS":
        k = j + 1
        while k < len(lines):
            tokens = lines[k].split()
            if len(tokens) != 3 or not _INDEX.match(tokens[0]) or not _INDEX.match(tokens[1]):
                break
            try:
                op = Operator(tokens[2].upper())
            except ValueError:
                raise ParseError(f"unknown operator {tokens[2]!r}", k + 1, rule="unknown operator") from None
            a, b = int(tokens[0]), int(tokens[1])
            if not (a < n and b < n) or adj[a][b] != 2:
                raise ParseError(f"VE_OPS pair ({a}, {b}) is not a virtual edge", k + 1, rule="operator on non-virtual edge")
            ops[(a, b)] = op
            k += 1
        name, rest, j = peek()
    if name == "COORDS":
        try:
            coord = CoordSystem(rest.lower())
        except ValueError:
            raise ParseError(f"unknown coordinate system {rest!r}", j + 1) from None
        k = j + 1

    adj_a = np.array(adj, dtype=int)
    bad = np.argwhere(adj_a != adj_a.T)
    if len(bad):
        i, jj = bad[0]
        raise ParseError(f"ADJ is not symmetric at ({i}, {jj})", int(max(i, jj)) + 3, rule="asymmetric adjacency")
    diag = np.flatnonzero(np.diag(adj_a))
    if len(diag):
        raise ParseError(f"ADJ diagonal entry {diag[0]} is nonzero", int(diag[0]) + 3, rule="self-loop")
    sizes = cols["SIZE"]
    for idx, s in enumerate(sizes):
        if s < 0:
            raise ParseError(f"node {idx} has negative size", 0, rule="negative size")
    positions = list(zip(cols["X"], cols["Y"], cols["Z"]))
    return from_adjacency(adj_a, positions, sizes, coord, ops)


def serialize_text(skel: Skeleton) -> str:
    validate(skel).raise_if_invalid()
    adj = to_adjacency(skel)
    pos = skel.positions
    out = [f"NODES: {len(skel)}", "ADJ:"]
    out += [" ".join(str(int(v)) for v in row) for row in adj]
    for axis, name in enumerate("XYZ"):
        out.append(f"{name}: " + " ".join(format_real(v) for v in pos[:, axis]))
    out.append("SIZE: " + " ".join(format_real(n.size) for n in skel.nodes))
    if any(e.op is not Operator.LINK for e in skel.virtual_edges):
        out.append("VE_OPS:")
        out += [f"{e.i} {e.j} {e.op.value}" for e in skel.virtual_edges]
    if skel.coord_system is CoordSystem.CAMERA:
        out.append("COORDS: CAMERA")
    return "\n".join(out) + "\n"


def to_json(skel: Skeleton) -> str:
    validate(skel).raise_if_invalid()
    pos = skel.positions
    doc = {
        "nodes": len(skel),
        "adjacency": to_adjacency(skel).tolist(),
        "x": pos[:, 0].tolist(),
        "y": pos[:, 1].tolist(),
        "z": pos[:, 2].tolist(),
        "sizes": [n.size for n in skel.nodes],
        "ve_ops": [[e.i, e.j, e.op.value] for e in skel.virtual_edges],
        "coord_system": skel.coord_system.value,
    }
    return json.dumps(doc)


def from_json(text: str) -> Skeleton:
    try:
        doc = json.loads(text)
        n = int(doc["nodes"])
        adj = np.array(doc["adjacency"], dtype=int).reshape(n, n)
        positions = list(zip(doc["x"], doc["y"], doc["z"], strict=True))
        ops = {(int(i), int(j)): Operator(op) for i, j, op in doc.get("ve_ops", [])}
        coord = CoordSystem(doc.get("coord_system", "relative"))
        sizes = [float(s) for s in doc["sizes"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed JSON description: {exc}") from None
    skel = from_adjacency(adj, positions, sizes, coord, ops)
    validate(skel).raise_if_invalid()
    return skel


def anchor_index(skel: Skeleton) -> int:
    """Upper-left node: smallest x, then largest y, then smallest z, then lowest index."""
    return min(range(len(skel)), key=lambda k: (skel.nodes[k].position[0], -skel.nodes[k].position[1],
                                                  skel.nodes[k].position[2], k))


def convert_coords(skel: Skeleton, target: CoordSystem | str) -> Skeleton:
    """Camera to relative subtracts the anchor node; relative to camera only re-tags."""
    target = CoordSystem(target)
    if target is skel.coord_system:
        return skel
    if target is CoordSystem.CAMERA:
        return skel.replace(coord_system=target)
    a = skel.nodes[anchor_index(skel)].position
    nodes = tuple(n._replace(position=tuple(p - q for p, q in zip(n.position, a))) for n in skel.nodes)
    return skel.replace(nodes=nodes, coord_system=target)


class PromptVariant(enum.Enum):
    TEXT_SIMPLE = "TextSimple"
    TEXT_EXACT = "TextExact"
    TEXT_DETAILED = "TextDetailed"


_SIMPLE = (
    "Please analyze this image and infer its possible topological structure. "
    "Output your answer in matrix form, including the adjacency matrix for connectivity, "
    "and the x, y, and z coordinate matrices."
)
_EXACT = (
    _SIMPLE + "\n"
    "Input: A line drawing representing the 2D planar projection of a contour, overlaid with "
    "shading, depicting an approximate minimal surface 3D model.\n"
    "Output: the node count as an integer; the connectivity as an adjacency matrix whose "
    "elements are 0 (no connection), 1 (solid edge), or 2 (void edge); the x, y and z "
    "coordinate matrices and the node sizes as 2D arrays, in a relative coordinate system "
    "with the top-left node as origin."
)
_DETAILED = (
    _SIMPLE + "\n"
    "Input: A line drawing representing the 2D planar projection of a contour, overlaid with "
    "shading, depicting an approximate minimal surface 3D model.\n"
    "Output: the node count as an integer; the connectivity as an adjacency matrix whose "
    "elements are 0 (no connection), 1 (solid edge), or 2 (void edge); the x, y and z "
    "coordinate matrices and the node sizes as 2D arrays, in camera coordinates "
    "(x horizontal right, y vertical up, z perpendicular outward from the image plane).\n"
    "Method:\n"
    "1. Segment the image into regions to find the surface patches and voids.\n"
    "2. Extract skeletons from the main regions; closed skeletons become void edges and the "
    "endpoints of linear skeletons become nodes.\n"
    "3. Add internal lines that are not part of the region segmentation as extra nodes joined "
    "by void edges.\n"
    "4. Make the skeleton fully connected, extending nodes along the z-axis where needed."
)

PROMPTS = {
    PromptVariant.TEXT_SIMPLE: _SIMPLE,
    PromptVariant.TEXT_EXACT: _EXACT,
    PromptVariant.TEXT_DETAILED: _DETAILED,
}

RECORD_VERSION = "minsurf-1"


def make_dataset_record(image_ref: str, variant: PromptVariant | str, skel: Skeleton) -> str:
    """One ShareGPT-style JSON line: a user turn with the image and an assistant answer."""
    variant = PromptVariant(variant)
    answer = serialize_text(skel)
    record = {
        "messages": [
            {"role": "user", "content": PROMPTS[variant] + "\n<image>"},
            {"role": "assistant", "content": answer},
        ],
        "images": [image_ref],
        "metadata": {
            "coord_system": skel.coord_system.value,
            "prompt_variant": variant.value,
            "version": RECORD_VERSION,
        },
    }
    return json.dumps(record, ensure_ascii=False, sort_keys=True)
