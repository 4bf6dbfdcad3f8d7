"""Structural accuracy of a predicted skeleton against ground truth, and the loss multiplier.

Five components are combined into one score::

    accuracy = node_num_acc * (0.3 * connect_acc + 0.3 * topology_similarity
                               + 0.2 * position_acc + 0.2 * nodesize_acc)

and the score scales an externally computed cross-entropy by
``1 + beta * (1 - accuracy)``.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from .codec import ParseError, format_real, parse_text
from .matching import Matching, match_nodes
from .skeleton import EdgeKind, Skeleton, SkeletonError, combined_graph, normalize_bbox, validate

log = logging.getLogger(__name__)

WEIGHTS = {"connect_acc": 0.3, "topology_similarity": 0.3, "position_acc": 0.2, "nodesize_acc": 0.2}
STAGE_BETA = {1: 0.5, 2: 1.6}


@dataclass(frozen=True)
class MetricReport:
    node_num_acc: float = 0.0
    se_f1: float = 0.0
    ve_f1: float = 0.0
    connect_acc: float = 0.0
    topology_similarity: float = 0.0
    position_acc: float = 0.0
    nodesize_acc: float = 0.0
    accuracy: float = 0.0
    parse_failed: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


FIELDS = [f.name for f in fields(MetricReport)]


def node_num_acc(pred, gt) -> int:
    n_pred = pred if isinstance(pred, int) else len(pred)
    n_gt = gt if isinstance(gt, int) else len(gt)
    return int(n_pred == n_gt)


def edge_f1(pred: Skeleton, gt: Skeleton, matching: Matching, kind: EdgeKind) -> float:
    """F1 of predicted edges of one kind, mapped onto ground-truth indices.

    Predicted edges touching an unmatched node count as false positives.
    Both sets empty scores 1.0; exactly one empty scores 0.0.
    """
    pe = pred.edge_set(kind)
    ge = gt.edge_set(kind)
    if not pe and not ge:
        return 1.0
    if not pe or not ge:
        return 0.0
    m = matching.pred_to_gt()
    mapped = set()
    for i, j in pe:
        if i in m and j in m:
            a, b = m[i], m[j]
            mapped.add((a, b) if a < b else (b, a))
    tp = len(mapped & ge)
    if tp == 0:
        return 0.0
    precision = tp / len(pe)
    recall = tp / len(ge)
    return 2 * precision * recall / (precision + recall)


def connect_acc(se_f1: float, ve_f1: float) -> float:
    return (se_f1 + ve_f1) / 2


def laplacian_spectrum(adj) -> np.ndarray:
    a = np.asarray(adj, dtype=float)
    lap = np.diag(a.sum(axis=1)) - a
    return np.sort(np.linalg.eigvalsh(lap)) if len(a) else np.zeros(0)


def spectral_similarity(lam_a, lam_b) -> float:
    """1 - |a - b| / max(|a|, |b|) on zero-padded sorted spectra, clamped to [0, 1]."""
    a = np.sort(np.asarray(lam_a, dtype=float))
    b = np.sort(np.asarray(lam_b, dtype=float))
    n = max(len(a), len(b))
    # zeros are the smallest Laplacian eigenvalues, so pad at the front
    a = np.concatenate([np.zeros(n - len(a)), a])
    b = np.concatenate([np.zeros(n - len(b)), b])
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0:
        return 1.0
    return float(min(1.0, max(0.0, 1.0 - np.linalg.norm(a - b) / denom)))


def topology_similarity(pred: Skeleton, gt: Skeleton, edges: str = "union") -> float:
    return spectral_similarity(laplacian_spectrum(combined_graph(pred, edges)),
                               laplacian_spectrum(combined_graph(gt, edges)))


def position_acc(pred: Skeleton, gt: Skeleton, matching: Matching) -> float:
    if not matching.pairs:
        log.warning("position_acc: empty matching, reporting 0")
        return 0.0
    p = normalize_bbox(pred.positions)
    g = normalize_bbox(gt.positions)
    idx_p = [i for i, _ in matching.pairs]
    idx_g = [j for _, j in matching.pairs]
    err = float(np.mean(np.sum((p[idx_p] - g[idx_g]) ** 2, axis=1)))
    return 1.0 / (1.0 + err)


def nodesize_acc(pred: Skeleton, gt: Skeleton, matching: Matching) -> float:
    if not matching.pairs:
        log.warning("nodesize_acc: empty matching, reporting 0")
        return 0.0
    sp = pred.sizes
    sg = gt.sizes
    s_max = float(max(sp.max(), sg.max()))
    if s_max == 0:
        return 1.0
    mae = float(np.mean([abs(sp[i] - sg[j]) for i, j in matching.pairs]))
    return max(0.0, 1.0 - mae / s_max)


def aggregate_accuracy(node_num: float, connect: float, topology: float,
                       position: float, nodesize: float) -> float:
    return float(node_num) * (WEIGHTS["connect_acc"] * connect + WEIGHTS["topology_similarity"] * topology
                       + WEIGHTS["position_acc"] * position + WEIGHTS["nodesize_acc"] * nodesize)


def s2ms_multiplier(accuracy: float, beta: float) -> float:
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must lie in [0, 1], got {accuracy}")
    if not beta >= 0.0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    return 1.0 + beta * (1.0 - accuracy)


class LossInputs(NamedTuple):
    ce_loss: float
    accuracy: float
    beta: float


def s2ms_loss(ce_loss: float, accuracy: float, beta: float) -> float:
    """Cross-entropy scaled by the structural multiplier.

    The cross-entropy itself is computed by the caller's training loop;
    ``s2ms_loss(*LossInputs(...))`` also works.
    """
    if not ce_loss >= 0.0:
        raise ValueError(f"ce_loss must be non-negative, got {ce_loss}")
    return ce_loss * s2ms_multiplier(accuracy, beta)


def beta_for_stage(stage: int) -> float:
    try:
        return STAGE_BETA[int(stage)]
    except (KeyError, ValueError, TypeError):
        raise ValueError(f"training stage must be 1 or 2, got {stage!r}") from None


def score_skeletons(pred: Skeleton, gt: Skeleton, edges: str = "union") -> MetricReport:
    m = match_nodes(pred, gt)
    se = edge_f1(pred, gt, m, EdgeKind.SOLID)
    ve = edge_f1(pred, gt, m, EdgeKind.VIRTUAL)
    ca = connect_acc(se, ve)
    nn = node_num_acc(pred, gt)
    ts = topology_similarity(pred, gt, edges)
    pa = position_acc(pred, gt, m)
    sa = nodesize_acc(pred, gt, m)
    return MetricReport(float(nn), se, ve, ca, ts, pa, sa, aggregate_accuracy(nn, ca, ts, pa, sa))


def evaluate_pair(pred_text: str, gt_text: str, edges: str = "union") -> MetricReport:
    """Score one prediction. A prediction that does not parse scores 0 everywhere.

    Raises :class:`ParseError` or :class:`SkeletonError` if the ground truth is broken.
    """
    gt = parse_text(gt_text)
    validate(gt).raise_if_invalid()
    try:
        pred = parse_text(pred_text)
        validate(pred).raise_if_invalid()
    except (ParseError, SkeletonError) as exc:
        log.debug("prediction rejected: %s", exc)
        return MetricReport(parse_failed=True)
    return score_skeletons(pred, gt, edges)


class BatchError(ValueError):
    def __init__(self, index: int, cause: Exception):
        super().__init__(f"sample {index}: ground truth is invalid ({cause})")
        self.index = index
        self.cause = str(cause)

    def __reduce__(self):
        # worker processes send exceptions back pickled
        return (BatchError, (self.index, self.cause))


def _score_indexed(args):
    k, pred_text, gt_text, edges = args
    try:
        return evaluate_pair(pred_text, gt_text, edges)
    except (ParseError, SkeletonError) as exc:
        raise BatchError(k, exc) from None


@dataclass(frozen=True)
class BatchSummary:
    names: tuple[str, ...]
    reports: tuple[MetricReport, ...]
    means: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample"] + FIELDS)
        for name, r in zip(self.names, self.reports):
            w.writerow([name] + [_cell(getattr(r, f)) for f in FIELDS])
        w.writerow(["MEAN"] + [format_real(self.means[f]) for f in FIELDS])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "samples": [{"sample": n, **r.to_dict()} for n, r in zip(self.names, self.reports)],
            "mean": self.means,
        }
        return json.dumps(doc, indent=2)


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return format_real(v)


def evaluate_batch(pairs, names=None, parallel: int = 1, edges: str = "union") -> BatchSummary:
    """Score many (pred_text, gt_text) pairs; rows keep input order whatever ``parallel`` is."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty batch")
    names = tuple(names) if names is not None else tuple(str(k) for k in range(len(pairs)))
    jobs = [(k, p, g, edges) for k, (p, g) in enumerate(pairs)]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            reports = list(ex.map(_score_indexed, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))
    else:
        reports = [_score_indexed(j) for j in jobs]
    means = {f: math.fsum(float(getattr(r, f)) for r in reports) / len(reports) for f in FIELDS}
    return BatchSummary(names, tuple(reports), means)
