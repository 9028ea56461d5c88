import math

import numpy as np
import pytest

from funduseg.errors import EmptyBoth, EmptyDisc, EmptyList, EmptySet, ShapeMismatch
from funduseg.metrics import (
    MetricsRecord,
    aggregate,
    compute_cdr,
    dice_score,
    hausdorff,
    hausdorff_one_sided,
    image_diagonal,
    read_records_csv,
    write_records_csv,
)


def one_sided_oracle(xs, ys):
    """Brute-force all-pairs double loop, independent of the KD-tree path."""
    best = 0.0
    for x in xs:
        nearest = min(math.dist(x, y) for y in ys)
        best = max(best, nearest)
    return best


class TestDice:
    def test_identical_nonempty(self):
        a = np.zeros((5, 5), dtype=np.uint8)
        a[1:3, 1:4] = 1
        assert dice_score(a, a) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), dtype=np.uint8)
        b = np.zeros((4, 4), dtype=np.uint8)
        a[0, 0] = 1
        b[3, 3] = 1
        assert dice_score(a, b) == 0.0

    def test_formula_case(self):
        # TP=50, FP=10, FN=10 -> 100/120
        pred = np.zeros(70, dtype=np.uint8)
        target = np.zeros(70, dtype=np.uint8)
        pred[:60] = 1          # 50 TP + 10 FP
        target[:50] = 1
        target[60:70] = 1      # 10 FN
        got = dice_score(pred.reshape(7, 10), target.reshape(7, 10))
        assert abs(got - 100 / 120) < 1e-12

    def test_empty_empty_is_one(self):
        z = np.zeros((3, 3), dtype=np.uint8)
        assert dice_score(z, z) == 1.0

    def test_symmetry_and_range(self, rng):
        for _ in range(30):
            a = (rng.random((6, 6)) < 0.4).astype(np.uint8)
            b = (rng.random((6, 6)) < 0.4).astype(np.uint8)
            d1, d2 = dice_score(a, b), dice_score(b, a)
            assert d1 == d2
            assert 0.0 <= d1 <= 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            dice_score(np.zeros((2, 2)), np.zeros((3, 3)))


class TestOneSided:
    def test_singleton_zero(self):
        assert hausdorff_one_sided([(0, 0)], [(0, 0)]) == 0.0

    def test_three_four_five(self):
        assert hausdorff_one_sided([(0, 0)], [(3, 4)]) == 5.0

    def test_asymmetry(self):
        x = [(0, 0), (1, 0)]
        y = [(0, 0)]
        assert hausdorff_one_sided(x, y) == 1.0
        assert hausdorff_one_sided(y, x) == 0.0

    def test_empty_raises(self):
        with pytest.raises(EmptySet):
            hausdorff_one_sided(np.empty((0, 2)), [(0, 0)])

    def test_oracle_equivalence_small_planes(self, rng):
        for _ in range(40):
            xs = rng.integers(0, 16, size=(int(rng.integers(1, 20)), 2))
            ys = rng.integers(0, 16, size=(int(rng.integers(1, 20)), 2))
            got = hausdorff_one_sided(xs, ys)
            want = one_sided_oracle(xs.tolist(), ys.tolist())
            assert abs(got - want) < 1e-9


class TestBidirectional:
    def test_identical_planes(self):
        m = np.zeros((6, 6), dtype=np.uint8)
        m[2:4, 2:5] = 1
        assert hausdorff(m, m) == 0.0

    def test_symmetric(self, rng):
        for _ in range(20):
            a = (rng.random((8, 8)) < 0.3).astype(np.uint8)
            b = (rng.random((8, 8)) < 0.3).astype(np.uint8)
            if not a.any() or not b.any():
                continue
            assert hausdorff(a, b) == hausdorff(b, a)

    def test_asymmetric_pair_resolves_to_max(self):
        a = np.zeros((3, 3), dtype=np.uint8)
        b = np.zeros((3, 3), dtype=np.uint8)
        a[0, 0] = a[1, 0] = 1
        b[0, 0] = 1
        assert hausdorff(a, b) == 1.0
        assert hausdorff(b, a) == 1.0

    def test_one_empty_gives_diagonal_sentinel(self):
        a = np.zeros((4, 7), dtype=np.uint8)
        b = np.zeros((4, 7), dtype=np.uint8)
        a[1, 1] = 1
        assert hausdorff(a, b) == image_diagonal((4, 7))
        assert hausdorff(b, a) == math.hypot(3, 6)

    def test_both_empty_raises(self):
        z = np.zeros((3, 3), dtype=np.uint8)
        with pytest.raises(EmptyBoth):
            hausdorff(z, z)

    def test_triangle_inequality(self, rng):
        for _ in range(60):
            planes = []
            for _ in range(3):
                p = (rng.random((8, 8)) < 0.3).astype(np.uint8)
                if not p.any():
                    p[rng.integers(0, 8), rng.integers(0, 8)] = 1
                planes.append(p)
            a, b, c = planes
            hab, hbc, hac = hausdorff(a, b), hausdorff(b, c), hausdorff(a, c)
            assert hac <= hab + hbc + 1e-9

    def test_boundary_mode_matches_region_mode_on_thin_sets(self):
        a = np.zeros((6, 6), dtype=np.uint8)
        b = np.zeros((6, 6), dtype=np.uint8)
        a[2, 1:5] = 1  # 1-px line: its boundary is itself
        b[4, 1:5] = 1
        assert hausdorff(a, b, boundary_only=True) == hausdorff(a, b)


class TestCdr:
    def test_cup_equals_disc(self):
        m = np.zeros((10, 10), dtype=np.uint8)
        m[3:7, 2:8] = 1
        assert compute_cdr(m, m) == 1.0

    def test_empty_cup(self):
        m = np.ones((4, 4), dtype=np.uint8)
        assert compute_cdr(m, np.zeros_like(m)) == 0.0

    def test_row_span_ratio(self):
        disc = np.zeros((40, 10), dtype=np.uint8)
        cup = np.zeros((40, 10), dtype=np.uint8)
        disc[10:30, 4] = 1  # rows 10..29 -> 20 px
        cup[15:25, 4] = 1   # rows 15..24 -> 10 px
        assert compute_cdr(disc, cup) == 0.5

    def test_empty_disc_raises(self):
        with pytest.raises(EmptyDisc):
            compute_cdr(np.zeros((3, 3)), np.zeros((3, 3)))


class TestAggregate:
    def rec(self, i, v):
        return MetricsRecord(f"im{i}", v, v, v, v, v)

    def test_single_record(self):
        agg = aggregate([self.rec(0, 0.5)])
        assert agg["dice_disc"] == {"mean": 0.5, "median": 0.5}

    def test_odd_count(self):
        agg = aggregate([self.rec(i, v) for i, v in enumerate((1.0, 2.0, 3.0))])
        assert agg["cdr"]["mean"] == 2.0
        assert agg["cdr"]["median"] == 2.0

    def test_even_count_median_averages_central_pair(self):
        agg = aggregate([self.rec(i, v) for i, v in enumerate((1.0, 2.0, 3.0, 10.0))])
        assert agg["hausdorff_cup"]["mean"] == 4.0
        assert agg["hausdorff_cup"]["median"] == 2.5

    def test_empty_raises(self):
        with pytest.raises(EmptyList):
            aggregate([])


class TestCsv:
    def test_round_trip_with_summary(self, tmp_path, rng):
        records = [
            MetricsRecord(f"img{i:02d}", *rng.random(5).tolist()) for i in range(5)
        ]
        path = tmp_path / "m.csv"
        write_records_csv(path, records)
        header = path.read_text().splitlines()[0]
        assert header == "image_id,dice_disc,hausdorff_disc,dice_cup,hausdorff_cup,cdr"
        back = read_records_csv(path)
        assert back == sorted(records, key=lambda r: r.image_id)
        assert "mean," in path.read_text() and "median," in path.read_text()
