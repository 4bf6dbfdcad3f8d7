"""Reference implementations used as test oracles.

Nothing here imports the library's numerics: matching is exhaustive search,
eigenvalues come from a cyclic Jacobi rotation solver, and the metrics are
recomputed from their textbook definitions with plain floats.
"""
import itertools
import math


# ---------------------------------------------------------------- matching

def brute_force_assignment(cost, tol=1e-12):
    """Minimum-cost assignment of the smaller side by trying every injection.

    Returns ``(best_cost, pairs)``. Among assignments within ``tol`` of the
    optimum the lexicographically smallest row-sorted pair list wins.
    """
    nr = len(cost)
    nc = len(cost[0]) if nr else 0
    if nr == 0 or nc == 0:
        return 0.0, []
    candidates = []
    if nr <= nc:
        for cols in itertools.permutations(range(nc), nr):
            pairs = [(i, cols[i]) for i in range(nr)]
            candidates.append((math.fsum(cost[i][j] for i, j in pairs), pairs))
    else:
        for rows in itertools.permutations(range(nr), nc):
            pairs = sorted((rows[j], j) for j in range(nc))
            candidates.append((math.fsum(cost[i][j] for i, j in pairs), pairs))
    best = min(c for c, _ in candidates)
    tied = [p for c, p in candidates if c - best <= tol]
    return best, min(tied)


def normalize(points):
    out = [list(p) for p in points]
    for axis in range(3):
        col = [p[axis] for p in points]
        lo, hi = min(col), max(col)
        for row, v in zip(out, col):
            row[axis] = (v - lo) / (hi - lo) if hi > lo else 0.0
    return out


def euclid(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


# ---------------------------------------------------------------- spectra

def jacobi_eigenvalues(matrix, tol=1e-14, max_sweeps=100):
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations."""
    a = [list(map(float, row)) for row in matrix]
    n = len(a)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p][q]) < 1e-300:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
    return sorted(a[i][i] for i in range(n))


def laplacian(n, edges):
    lap = [[0.0] * n for _ in range(n)]
    for i, j in set(tuple(sorted(e)) for e in edges):
        lap[i][j] -= 1.0
        lap[j][i] -= 1.0
        lap[i][i] += 1.0
        lap[j][j] += 1.0
    return lap


def spectral_similarity(lam_a, lam_b):
    n = max(len(lam_a), len(lam_b))
    a = [0.0] * (n - len(lam_a)) + sorted(lam_a)
    b = [0.0] * (n - len(lam_b)) + sorted(lam_b)
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if max(na, nb) == 0:
        return 1.0
    d = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    return min(1.0, max(0.0, 1.0 - d / max(na, nb)))


# ---------------------------------------------------------------- metrics

def f1(pred_edges, gt_edges, mapping):
    pred_edges, gt_edges = set(pred_edges), set(gt_edges)
    if not pred_edges and not gt_edges:
        return 1.0
    if not pred_edges or not gt_edges:
        return 0.0
    tp = 0
    for i, j in pred_edges:
        if i in mapping and j in mapping and tuple(sorted((mapping[i], mapping[j]))) in gt_edges:
            tp += 1
    if tp == 0:
        return 0.0
    p, r = tp / len(pred_edges), tp / len(gt_edges)
    return 2 * p * r / (p + r)


def reference_report(pred, gt):
    """All five components and the aggregate, from plain Python lists.

    ``pred`` and ``gt`` are dicts with keys positions, sizes, se, ve.
    """
    npred, ngt = len(pred["positions"]), len(gt["positions"])
    pp, gp = normalize(pred["positions"]), normalize(gt["positions"])
    cost = [[euclid(a, b) for b in gp] for a in pp]
    _, pairs = brute_force_assignment(cost, tol=1e-9)
    mapping = dict(pairs)
    se = f1(pred["se"], gt["se"], mapping)
    ve = f1(pred["ve"], gt["ve"], mapping)
    connect = (se + ve) / 2
    topo = spectral_similarity(
        jacobi_eigenvalues(laplacian(npred, list(pred["se"]) + list(pred["ve"]))),
        jacobi_eigenvalues(laplacian(ngt, list(gt["se"]) + list(gt["ve"]))),
    )
    err = sum(sum((x - y) ** 2 for x, y in zip(pp[i], gp[j])) for i, j in pairs) / len(pairs)
    position = 1.0 / (1.0 + err)
    s_max = max(max(pred["sizes"]), max(gt["sizes"]))
    if s_max == 0:
        size = 1.0
    else:
        mae = sum(abs(pred["sizes"][i] - gt["sizes"][j]) for i, j in pairs) / len(pairs)
        size = max(0.0, 1.0 - mae / s_max)
    nn = 1.0 if npred == ngt else 0.0
    acc = nn * (0.3 * connect + 0.3 * topo + 0.2 * position + 0.2 * size)
    return dict(node_num_acc=nn, se_f1=se, ve_f1=ve, connect_acc=connect, topology_similarity=topo,
                position_acc=position, nodesize_acc=size, accuracy=acc)


def as_plain(skel):
    return dict(
        positions=[list(n.position) for n in skel.nodes],
        sizes=[n.size for n in skel.nodes],
        se=[tuple(e) for e in skel.solid_edges],
        ve=[(e.i, e.j) for e in skel.virtual_edges],
    )


# ---------------------------------------------------------------- meshes

def euler_characteristic(faces):
    """V - E + F from a face list, counting only referenced vertices."""
    verts = {v for f in faces for v in f}
    edges = {tuple(sorted((f[a], f[(a + 1) % 3]))) for f in faces for a in range(3)}
    return len(verts) - len(edges) + len(faces)
