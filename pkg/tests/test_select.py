import logging
import math

import numpy as np
import pytest

from densepoint.detect import CandidatePrompt
from densepoint.raster import BoundingBox
from densepoint.select import (
    NORM_FACTOR,
    SimilarityField,
    adaptive_threshold,
    exceed_probability,
    select_prompts,
    selected_to_json,
)

from oracles import selection_transcription


def cand(x, y):
    return CandidatePrompt(float(x), float(y), "parent", 1.0)


def field_with(points_scores, shape=(32, 32), background=0.05):
    values = np.full(shape, background)
    for (x, y), s in points_scores:
        values[y, x] = s
    return SimilarityField(values)


class TestAdaptiveThreshold:
    def test_small_count(self):
        assert abs(adaptive_threshold(0.8, 2) - 0.5656854249492381) < 1e-12

    def test_high_density_is_permissive(self):
        assert abs(adaptive_threshold(0.9, 90) - 0.014142135623730952) < 1e-12

    def test_count_one_returns_sentinel(self):
        assert adaptive_threshold(0.7, 1) is None

    def test_count_zero_rejected(self):
        with pytest.raises(ValueError, match="no objects"):
            adaptive_threshold(0.7, 0)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            adaptive_threshold(0.7, 3, k=0.0)

    def test_strictly_decreasing_in_count(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            s_max = float(rng.uniform(0.05, 1.0))
            c = int(rng.integers(2, 500))
            assert adaptive_threshold(s_max, c + 1) < adaptive_threshold(s_max, c)


class TestExceedProbability:
    def test_at_mean(self):
        assert exceed_probability(0.4, 0.4, 0.1) == 0.5

    def test_one_sigma_above(self):
        assert abs(exceed_probability(0.5, 0.4, 0.1) - 0.15865525393145707) < 1e-9

    def test_monotone_in_density(self):
        s_max, mu, sigma = 0.9, 0.3, 0.12
        p10 = exceed_probability(adaptive_threshold(s_max, 10), mu, sigma)
        p50 = exceed_probability(adaptive_threshold(s_max, 50), mu, sigma)
        assert p50 > p10

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValueError):
            exceed_probability(0.5, 0.4, 0.0)


class TestSelectPrompts:
    def test_threshold_filters_low_scores(self):
        sim = field_with([((5, 5), 0.9), ((10, 10), 0.8), ((20, 20), 0.1)])
        cands = [cand(5, 5), cand(10, 10), cand(20, 20)]
        boxes = [BoundingBox(0, 0, 31, 31)]
        out = select_prompts(cands, sim, boxes, count=3)
        # threshold = 0.9 * sqrt(2) / 3 = 0.4243
        assert [(p.x, p.y) for p in out] == [(5.0, 5.0), (10.0, 10.0)]
        assert all(p.gate_box == 0 for p in out)

    def test_top_score_outside_boxes_rejected(self):
        sim = field_with([((5, 5), 0.95), ((20, 20), 0.7)])
        cands = [cand(5, 5), cand(20, 20)]
        boxes = [BoundingBox(15, 15, 25, 25)]
        out = select_prompts(cands, sim, boxes, count=2)
        assert [(p.x, p.y) for p in out] == [(20.0, 20.0)]

    def test_count_one_selects_single_best_in_box(self):
        sim = field_with([((5, 5), 0.95), ((20, 20), 0.7), ((22, 22), 0.6)])
        cands = [cand(20, 20), cand(22, 22), cand(5, 5)]
        boxes = [BoundingBox(0, 0, 31, 31)]
        out = select_prompts(cands, sim, boxes, count=1)
        assert len(out) == 1 and (out[0].x, out[0].y) == (5.0, 5.0)

    def test_count_one_respects_gate(self):
        sim = field_with([((5, 5), 0.95), ((20, 20), 0.7)])
        cands = [cand(5, 5), cand(20, 20)]
        boxes = [BoundingBox(15, 15, 25, 25)]
        out = select_prompts(cands, sim, boxes, count=1)
        assert [(p.x, p.y) for p in out] == [(20.0, 20.0)]

    def test_empty_boxes_warns_and_selects_nothing(self, caplog):
        sim = field_with([((5, 5), 0.9)])
        with caplog.at_level(logging.WARNING, logger="densepoint.select"):
            out = select_prompts([cand(5, 5)], sim, [], count=1)
        assert out == []
        assert any("box" in rec.message for rec in caplog.records)

    def test_no_candidates(self):
        sim = field_with([])
        assert select_prompts([], sim, [BoundingBox(0, 0, 5, 5)]) == []

    def test_point_in_two_boxes_emitted_once_with_first_box(self):
        sim = field_with([((10, 10), 0.9)])
        boxes = [BoundingBox(0, 0, 15, 15), BoundingBox(5, 5, 31, 31)]
        out = select_prompts([cand(10, 10)], sim, boxes, count=2)
        assert len(out) == 1 and out[0].gate_box == 0

    def test_same_pixel_candidates_deduplicated(self):
        sim = field_with([((10, 10), 0.9)])
        boxes = [BoundingBox(0, 0, 31, 31)]
        cands = [cand(10, 10), CandidatePrompt(10.2, 9.8, "child", 30.0)]
        out = select_prompts(cands, sim, boxes, count=2)
        assert len(out) == 1 and out[0].x == 10.0

    def test_box_edges_inclusive(self):
        sim = field_with([((15, 15), 0.9)])
        out = select_prompts([cand(15, 15)], sim, [BoundingBox(15, 15, 15, 15)], count=2)
        assert len(out) == 1

    def test_multiplicative_rescaling_keeps_selection(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            values = rng.uniform(0.0, 1.0, (16, 16))
            sim = SimilarityField(values)
            cands = [cand(int(rng.integers(0, 16)), int(rng.integers(0, 16)))
                     for _ in range(8)]
            boxes = [BoundingBox(0, 0, 11, 11), BoundingBox(4, 4, 15, 15)]
            count = int(rng.integers(2, 12))
            base = select_prompts(cands, sim, boxes, count=count)
            for c in (0.5, 2.0, 8.0):
                scaled = select_prompts(cands, SimilarityField(values * c),
                                        boxes, count=count)
                assert [(p.x, p.y, p.gate_box) for p in scaled] == \
                       [(p.x, p.y, p.gate_box) for p in base]

    def test_matches_literal_transcription(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            h = w = 24
            values = rng.uniform(0.0, 1.0, (h, w))
            n_cands = int(rng.integers(1, 21))
            points = [(float(rng.integers(0, w)), float(rng.integers(0, h)))
                      for _ in range(n_cands)]
            n_boxes = int(rng.integers(1, 6))
            boxes = []
            for _ in range(n_boxes):
                x0 = int(rng.integers(0, w - 4)); y0 = int(rng.integers(0, h - 4))
                boxes.append(BoundingBox(x0, y0, int(rng.integers(x0, w)),
                                         int(rng.integers(y0, h))))
            count = int(rng.integers(2, 25))
            sim = SimilarityField(values)
            ours = select_prompts([cand(x, y) for x, y in points], sim, boxes,
                                  count=count, k=NORM_FACTOR)
            expected = list(dict.fromkeys(
                selection_transcription(points, values, count, boxes)))
            assert [(p.x, p.y) for p in ours] == expected

    def test_json_wire_format(self):
        sim = field_with([((5, 5), 0.9)])
        out = select_prompts([cand(5, 5)], sim, [BoundingBox(0, 0, 31, 31)], count=2)
        assert selected_to_json(out) == [
            {"x": 5.0, "y": 5.0, "score": 0.9, "gate_box": 0}]
