import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dicomp.rdo import (RatePoint, pareto_front, read_rate_points, select_model,
                        write_rate_points)


def brute_force_front(points):
    """O(n^2) oracle: keep points not dominated by any other, dedupe ties."""
    kept = []
    for p in points:
        if any(q.dominates(p) for q in points):
            continue
        kept.append(p)
    # spec tie rule: identical (bpp, quality) keeps the lowest model id
    by_coord = {}
    for p in kept:
        key = (p.bpp, p.quality)
        if key not in by_coord or p.model_id < by_coord[key].model_id:
            by_coord[key] = p
    return sorted(by_coord.values(), key=lambda p: p.bpp)


def random_points(rng, n):
    return [RatePoint(bpp=float(rng.uniform(0, 4)),
                      quality=float(rng.uniform(0.5, 1.0)),
                      model_id=i) for i in range(n)]


class TestParetoFront:
    def test_single_point(self):
        p = RatePoint(bpp=1.0, quality=0.9, model_id=0)
        assert pareto_front([p]) == [p]

    def test_documented_example(self):
        pts = [RatePoint(1.0, 0.90, 0), RatePoint(1.0, 0.95, 1), RatePoint(2.0, 0.93, 2)]
        assert pareto_front(pts) == [RatePoint(1.0, 0.95, 1)]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pareto_front([])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(50)                 :
            pts = random_points(rng, 100)
            assert pareto_front(pts) == brute_force_front(pts)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        pts = random_points(rng, 50)
        front = pareto_front(pts)
        assert pareto_front(front) == front

    def test_every_point_dominated_by_or_in_front(self):
        rng = np.random.default_rng(2)
        pts = random_points(rng, 80)
        front = pareto_front(pts)
        for p in pts:
            assert p in front or any(f.dominates(p) for f in front)

    def test_output_sorted_quality_strictly_increasing(self):
        rng = np.random.default_rng(3)
        front = pareto_front(random_points(rng, 60))
        for a, b in zip(front[:-1], front[1:]):
            assert a.bpp < b.bpp or (a.bpp == b.bpp and a.quality < b.quality)
            assert a.quality < b.quality

    def test_duplicate_points_keep_lowest_model_id(self):
        pts = [RatePoint(1.0, 0.9, 5), RatePoint(1.0, 0.9, 2), RatePoint(1.0, 0.9, 7)]
        assert pareto_front(pts) == [RatePoint(1.0, 0.9, 2)]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 10, allow_nan=False),
                              st.floats(0, 1, allow_nan=False)),
                    min_size=1, max_size=40))
    def test_fuzz_against_brute_force(self, coords):
        pts = [RatePoint(bpp=b, quality=q, model_id=i) for i, (b, q) in enumerate(coords)]
        assert pareto_front(pts) == brute_force_front(pts)


class TestSelectModel:
    @pytest.fixture
    def front(self):
        return pareto_front([RatePoint(0.25, 0.80, 0), RatePoint(0.5, 0.90, 1),
                             RatePoint(1.0, 0.95, 2), RatePoint(2.0, 0.99, 3)])

    def test_target_above_all(self, front):
        assert select_model(front, 10.0) == 3

    def test_target_below_all_warns(self, front):
        with pytest.warns(UserWarning, match="cheapest"):
            assert select_model(front, 0.1) == 0

    def test_target_between_points(self, front):
        assert select_model(front, 0.75) == 1

    def test_exact_budget_is_affordable(self, front):
        assert select_model(front, 0.5) == 1

    def test_monotone_in_target(self, front):
        quality = {p.model_id: p.quality for p in front}
        last = -1.0
        for target in np.linspace(0.05, 3.0, 60):
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                q = quality[select_model(front, float(target))]
            assert q >= last
            last = q

    def test_empty_front_rejected(self):
        with pytest.raises(ValueError):
            select_model([], 1.0)


class TestCsv:
    def test_round_trip(self, tmp_path):
        pts = [RatePoint(0.123456789, 0.987654321, 3), RatePoint(1.5, 0.5, 0)]
        path = tmp_path / "points.csv"
        write_rate_points(pts, path)
        assert read_rate_points(path) == pts

    def test_header_line_present(self, tmp_path):
        path = tmp_path / "points.csv"
        write_rate_points([RatePoint(1.0, 0.9, 0)], path)
        assert path.read_text().splitlines()[0] == "model_id,bpp,quality"

    def test_reads_headerless_files(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("2,0.5,0.91\n4,1.5,0.97\n")
        pts = read_rate_points(path)
        assert pts == [RatePoint(0.5, 0.91, 2), RatePoint(1.5, 0.97, 4)]


class TestRatePoint:
    def test_validation(self):
        with pytest.raises(ValueError):
            RatePoint(bpp=-1.0, quality=0.5, model_id=0)
        with pytest.raises(ValueError):
            RatePoint(bpp=1.0, quality=1.5, model_id=0)

    def test_domination(self):
        a = RatePoint(1.0, 0.9, 0)
        assert RatePoint(0.5, 0.9, 1).dominates(a)
        assert RatePoint(1.0, 0.95, 1).dominates(a)
        assert not a.dominates(a)
        assert not RatePoint(0.5, 0.8, 1).dominates(a)
