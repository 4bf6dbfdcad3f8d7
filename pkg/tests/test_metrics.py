import logging
import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minsurf import (
    BatchError,
    ParseError,
    Skeleton,
    VirtualEdge,
    evaluate_batch,
    evaluate_pair,
    random_skeleton,
    serialize_text,
)
from minsurf.matching import Matching, match_nodes
from minsurf.metrics import (
    FIELDS,
    LossInputs,
    MetricReport,
    aggregate_accuracy,
    beta_for_stage,
    connect_acc,
    edge_f1,
    laplacian_spectrum,
    node_num_acc,
    nodesize_acc,
    position_acc,
    s2ms_loss,
    s2ms_multiplier,
    score_skeletons,
    spectral_similarity,
    topology_similarity,
)
from minsurf.skeleton import EdgeKind

import oracles
from corpus import perturb

IDENTITY3 = Matching(((0, 0), (1, 1), (2, 2)), 0.0, (), ())


def line(n, se=(), ve=()):
    return Skeleton.from_arrays([(k, 0, 0) for k in range(n)], [1] * n, se, ve)


class TestComponents:
    def test_node_num(self):
        assert node_num_acc(5, 5) == 1 and node_num_acc(5, 6) == 0 and node_num_acc(0, 0) == 1
        assert node_num_acc(line(3), line(3)) == 1

    def test_edge_f1_examples(self):
        pred, gt = line(3, [(0, 1)]), line(3, [(0, 1), (1, 2)])
        assert edge_f1(pred, gt, IDENTITY3, EdgeKind.SOLID) == pytest.approx(2 / 3)
        assert edge_f1(gt, gt, IDENTITY3, EdgeKind.SOLID) == 1.0
        assert edge_f1(pred, gt, IDENTITY3, EdgeKind.VIRTUAL) == 1.0   # both empty
        assert edge_f1(line(3), gt, IDENTITY3, EdgeKind.SOLID) == 0.0  # one empty

    def test_edge_to_unmatched_node_is_false_positive(self):
        pred = line(3, [(0, 1), (1, 2)])
        gt = line(2, [(0, 1)])
        m = Matching(((0, 0), (1, 1)), 0.0, (2,), ())
        # TP 1, FP 1, FN 0
        assert edge_f1(pred, gt, m, EdgeKind.SOLID) == pytest.approx(2 / 3)

    def test_kinds_are_separate(self):
        pred = line(3, [(0, 1)], [VirtualEdge(1, 2)])
        gt = line(3, [(0, 1), (1, 2)])
        assert edge_f1(pred, gt, IDENTITY3, EdgeKind.VIRTUAL) == 0.0

    def test_connect(self):
        assert connect_acc(1, 1) == 1 and connect_acc(0, 0) == 0
        assert connect_acc(2 / 3, 1) == pytest.approx(5 / 6)

    def test_spectrum_examples(self):
        tri = line(3, [(0, 1), (1, 2), (0, 2)])
        path = line(3, [(0, 1), (1, 2)])
        assert np.allclose(laplacian_spectrum([[0, 1, 1], [1, 0, 1], [1, 1, 0]]), [0, 3, 3])
        assert topology_similarity(tri, path) == pytest.approx(1 - 2 / math.sqrt(18), abs=1e-12)
        assert topology_similarity(line(4), line(6)) == 1.0
        assert spectral_similarity([], []) == 1.0

    def test_spectrum_padding_uses_zeros(self):
        # K2 vs K2 plus an isolated vertex: spectra agree after padding
        assert topology_similarity(line(2, [(0, 1)]), line(3, [(0, 1)])) == pytest.approx(1.0)

    def test_spectrum_clamped(self):
        assert spectral_similarity([0, 10], [0, 0.0]) == 0.0

    def test_edge_selection(self):
        a = line(3, [(0, 1)], [VirtualEdge(1, 2)])
        b = line(3, [(0, 1), (1, 2)])
        assert topology_similarity(a, b) == pytest.approx(1.0)
        assert topology_similarity(a, b, "solid") < 1.0

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(1)
        for seed in range(50):
            a, b = random_skeleton(seed), random_skeleton(seed + 100)
            perm = rng.permutation(len(b))
            relabeled = Skeleton.from_arrays(b.positions[np.argsort(perm)], b.sizes[np.argsort(perm)],
                                             [(perm[i], perm[j]) for i, j in b.solid_edges],
                                             [VirtualEdge(perm[e.i], perm[e.j], e.op) for e in b.virtual_edges])
            assert topology_similarity(a, b) == pytest.approx(topology_similarity(a, relabeled), abs=1e-12)

    def test_position_examples(self):
        pred = Skeleton.from_arrays([(0, 0, 0), (1, 1, 1)], [1, 1])
        gt = Skeleton.from_arrays([(0, 0, 0), (1, 0, 0)], [1, 1])
        m = Matching(((0, 0), (1, 1)), 0.0, (), ())
        assert position_acc(pred, gt, m) == 0.5
        assert position_acc(gt, gt, m) == 1.0

    def test_position_similarity_invariance(self):
        for seed in range(50):
            a, b = random_skeleton(seed), random_skeleton(seed + 7)
            moved = Skeleton.from_arrays(a.positions * 3 - 2, a.sizes, a.solid_edges, a.virtual_edges)
            assert position_acc(moved, b, match_nodes(moved, b)) == pytest.approx(
                position_acc(a, b, match_nodes(a, b)), abs=1e-9)

    def test_nodesize_examples(self):
        m = Matching(((0, 0), (1, 1)), 0.0, (), ())
        a = Skeleton.from_arrays([(0, 0, 0), (1, 0, 0)], [1, 2])
        b = Skeleton.from_arrays([(0, 0, 0), (1, 0, 0)], [2, 2])
        zero = Skeleton.from_arrays([(0, 0, 0), (1, 0, 0)], [0, 0])
        assert nodesize_acc(a, b, m) == 0.75
        assert nodesize_acc(b, b, m) == 1.0
        assert nodesize_acc(zero, zero, m) == 1.0

    def test_empty_matching_is_flagged(self, caplog):
        empty = Matching((), 0.0, (), ())
        with caplog.at_level(logging.WARNING):
            assert position_acc(line(1), line(1), empty) == 0.0
            assert nodesize_acc(line(1), line(1), empty) == 0.0
        assert "empty matching" in caplog.text


class TestAggregateAndLoss:
    def test_aggregate(self):
        assert aggregate_accuracy(1, 1, 1, 1, 1) == pytest.approx(1.0)
        assert aggregate_accuracy(0, 1, 1, 1, 1) == 0.0
        assert aggregate_accuracy(1, 0.267, 0.844, 0.859, 0.8595) == pytest.approx(0.677, abs=5e-4)

    def test_multiplier(self):
        assert s2ms_multiplier(1, 3.0) == 1.0
        assert s2ms_multiplier(0, 1.6) == 2.6
        assert s2ms_multiplier(0.5, 0.5) == 1.25

    @pytest.mark.parametrize("acc,beta", [(-0.1, 1), (1.1, 1), (0.5, -1), (float("nan"), 1), (0.5, float("nan"))])
    def test_multiplier_range(self, acc, beta):
        with pytest.raises(ValueError):
            s2ms_multiplier(acc, beta)

    def test_loss(self):
        assert s2ms_loss(2.0, 1.0, 1.6) == 2.0
        assert s2ms_loss(2.0, 0.0, 1.6) == 5.2
        assert s2ms_loss(0.0, 0.3, 1.6) == 0.0
        assert s2ms_loss(*LossInputs(2.0, 0.0, 1.6)) == 5.2
        with pytest.raises(ValueError):
            s2ms_loss(-1.0, 0.5, 1.0)

    def test_stages(self):
        assert beta_for_stage(1) == 0.5 and beta_for_stage(2) == 1.6
        for bad in (0, 3, "x", None):
            with pytest.raises(ValueError):
                beta_for_stage(bad)

    @settings(max_examples=200)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 10), st.floats(0, 10))
    def test_multiplier_monotone(self, a1, a2, b1, b2):
        lo, hi = sorted((a1, a2))
        assert s2ms_multiplier(lo, b1) >= s2ms_multiplier(hi, b1)
        blo, bhi = sorted((b1, b2))
        assert s2ms_multiplier(a1, blo) <= s2ms_multiplier(a1, bhi)


class TestEvaluatePair:
    def test_identity(self):
        text = serialize_text(random_skeleton(3))
        rep = evaluate_pair(text, text)
        assert all(getattr(rep, f) == 1.0 for f in FIELDS if f != "parse_failed")

    def test_garbage_prediction(self):
        rep = evaluate_pair("garbage", serialize_text(random_skeleton(3)))
        assert rep.parse_failed and rep.accuracy == 0.0
        assert rep == MetricReport(parse_failed=True)

    def test_invalid_ground_truth(self):
        with pytest.raises(ParseError):
            evaluate_pair(serialize_text(random_skeleton(3)), "garbage")

    def test_report_invariants(self):
        rng = np.random.default_rng(2)
        for seed in range(300):
            gt = random_skeleton(seed)
            rep = score_skeletons(perturb(gt, rng), gt)
            assert rep.connect_acc == pytest.approx((rep.se_f1 + rep.ve_f1) / 2)
            assert rep.accuracy == pytest.approx(aggregate_accuracy(
                rep.node_num_acc, rep.connect_acc, rep.topology_similarity, rep.position_acc, rep.nodesize_acc))

    def test_against_reference_scorer(self):
        rng = np.random.default_rng(11)
        for seed in range(300):
            gt = random_skeleton(seed, max_nodes=6)
            pred = perturb(gt, rng)
            if len(pred) > 7:
                continue
            got = score_skeletons(pred, gt).to_dict()
            ref = oracles.reference_report(oracles.as_plain(pred), oracles.as_plain(gt))
            for key, val in ref.items():
                assert got[key] == pytest.approx(val, abs=1e-9), (seed, key)


class TestBatch:
    def test_identical_pairs(self):
        texts = [serialize_text(random_skeleton(k)) for k in range(100)]
        summary = evaluate_batch([(t, t) for t in texts])
        assert all(v == 1.0 for f, v in summary.means.items() if f != "parse_failed")
        assert summary.means["parse_failed"] == 0.0

    def test_single_and_mixed(self):
        t = serialize_text(random_skeleton(1))
        one = evaluate_batch([(t, t)], names=["x"])
        assert one.means == {f: float(v) for f, v in one.reports[0].to_dict().items()}
        two = evaluate_batch([(t, t), ("junk", t)])
        assert two.means["accuracy"] == 0.5

    def test_bad_ground_truth_names_index(self):
        t = serialize_text(random_skeleton(1))
        with pytest.raises(BatchError) as info:
            evaluate_batch([(t, t), (t, "junk")])
        assert info.value.index == 1

    def test_batch_error_pickles(self):
        err = pickle.loads(pickle.dumps(BatchError(4, ValueError("boom"))))
        assert err.index == 4 and "boom" in str(err)

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate_batch([])

    def test_csv_layout(self):
        t = serialize_text(random_skeleton(1))
        csv_text = evaluate_batch([(t, t), ("junk", t)], names=["a", "b"]).to_csv()
        rows = csv_text.splitlines()
        assert rows[0] == "sample," + ",".join(FIELDS)
        assert rows[1].endswith(",false") and rows[2].endswith(",true")
        assert rows[3].startswith("MEAN,0.5,")

    def test_parallel_matches_serial(self):
        rng = np.random.default_rng(5)
        pairs = []
        for k in range(40):
            gt = random_skeleton(k)
            pairs.append((serialize_text(perturb(gt, rng)), serialize_text(gt)))
        serial = evaluate_batch(pairs, parallel=1)
        parallel = evaluate_batch(pairs, parallel=3)
        assert serial.to_csv() == parallel.to_csv() and serial.to_json() == parallel.to_json()

    def test_parallel_error_propagates(self):
        t = serialize_text(random_skeleton(1))
        with pytest.raises(BatchError) as info:
            evaluate_batch([(t, t)] * 5 + [(t, "junk")], parallel=2)
        assert info.value.index == 5
