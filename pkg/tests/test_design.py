import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpdoe.design import (
    Design,
    generate_hammersley,
    generate_lhs,
    generate_srs,
    is_lhs,
    load_design,
    make_rng,
    project,
    save_design,
    scale_to_domain,
    spawn_rngs,
    to_physical,
    to_unit,
    unscale_to_unit,
)
from gpdoe.errors import ArgumentError, DataError

from oracles import radical_inverse_digits


class TestSRS:
    def test_single_point_in_unit_interval(self):
        d = generate_srs(1, 1, make_rng(3))
        assert d.points.shape == (1, 1)
        assert 0.0 <= d.points[0, 0] <= 1.0
        assert d.kind == "SRS"

    def test_same_seed_is_bit_identical(self):
        a = generate_srs(10, 2, make_rng(42))
        b = generate_srs(10, 2, make_rng(42))
        assert np.array_equal(a.points, b.points)

    def test_large_sample_mean(self):
        d = generate_srs(10000, 1, make_rng(7))
        assert abs(d.points.mean() - 0.5) < 0.02

    @pytest.mark.parametrize("n,d", [(0, 2), (3, 0), (-1, 1), (2.5, 1)])
    def test_invalid_sizes(self, n, d):
        with pytest.raises(ArgumentError):
            generate_srs(n, d, make_rng(0))


class TestLHS:
    def test_single_point(self):
        d = generate_lhs(1, 3, make_rng(1))
        assert d.points.shape == (1, 3)
        assert np.all((d.points >= 0) & (d.points < 1))
        assert is_lhs(d)

    def test_strata_are_permutations(self):
        d = generate_lhs(10, 2, make_rng(5))
        strata = np.floor(d.points * 10).astype(int)
        for k in range(2):
            assert sorted(strata[:, k]) == list(range(10))

    def test_column_means_bounded(self):
        n = 10
        # extremes of the column mean: every point at the bottom / top of its stratum
        lowest = np.mean([j / n for j in range(n)])
        highest = np.mean([(j + 1) / n for j in range(n)])
        assert (lowest, highest) == pytest.approx((0.45, 0.55))
        d = generate_lhs(n, 2, make_rng(11))
        assert np.all(d.points.mean(axis=0) >= lowest)
        assert np.all(d.points.mean(axis=0) <= highest)

    @given(n=st.integers(1, 60), d=st.integers(1, 6), seed=st.integers(0, 2**32))
    @settings(max_examples=60, deadline=None)
    def test_invariant_always_holds(self, n, d, seed):
        assert is_lhs(generate_lhs(n, d, make_rng(seed)))

    def test_is_lhs_rejects_srs_with_collision(self):
        pts = np.array([[0.05], [0.07], [0.5]])
        assert not is_lhs(pts)


class TestHammersley:
    def test_radical_inverse_base2(self):
        d = generate_hammersley(4, 2)
        assert d.points[:, 1].tolist() == [0.5, 0.25, 0.75, 0.125]
        assert [radical_inverse_digits(i, 2) for i in range(1, 5)] == [0.5, 0.25, 0.75, 0.125]

    def test_first_coordinate_is_i_over_n(self):
        assert generate_hammersley(4, 2).points[:, 0].tolist() == [0.25, 0.5, 0.75, 1.0]

    def test_higher_bases_match_digit_oracle(self):
        d = generate_hammersley(50, 5)
        for col, base in zip(range(1, 5), (2, 3, 5, 7)):
            expected = [radical_inverse_digits(i, base) for i in range(1, 51)]
            np.testing.assert_allclose(d.points[:, col], expected, rtol=0, atol=1e-15)

    def test_deterministic(self):
        assert np.array_equal(generate_hammersley(37, 4).points, generate_hammersley(37, 4).points)

    def test_coordinates_in_half_open_interval(self):
        p = generate_hammersley(500, 6).points
        assert np.all(p > 0) and np.all(p <= 1)


class TestProjectAndScale:
    def test_project_all_dims_is_identity(self, rng):
        d = generate_lhs(8, 3, rng)
        assert np.array_equal(project(d, [0, 1, 2]).points, d.points)

    def test_project_keeps_lhs(self, rng):
        d = generate_lhs(20, 5, rng)
        p = project(d, [0, 1])
        assert p.kind == "LHS" and is_lhs(p)

    def test_project_selects_columns_in_order(self, rng):
        d = generate_srs(6, 3, rng)
        assert np.array_equal(project(d, [0, 2]).points, d.points[:, [0, 2]])

    @pytest.mark.parametrize("dims", [[], [3], [-1], [0, 5]])
    def test_project_bad_index(self, rng, dims):
        with pytest.raises(ArgumentError):
            project(generate_srs(4, 3, rng), dims)

    @given(st.data())
    @settings(max_examples=40, deadline=None)
    def test_nested_projection(self, data):
        d = data.draw(st.integers(1, 6))
        design = generate_srs(5, d, make_rng(data.draw(st.integers(0, 100))))
        a = data.draw(st.lists(st.integers(0, d - 1), min_size=1, max_size=6))
        b = data.draw(st.lists(st.integers(0, len(a) - 1), min_size=1, max_size=6))
        lhs = project(project(design, a), b)
        rhs = project(design, [a[i] for i in b])
        assert np.array_equal(lhs.points, rhs.points)
        assert np.array_equal(lhs.bounds, rhs.bounds)

    def test_scale_unit_corner(self):
        d = scale_to_domain(Design([[0.0, 1.0]]), [(-1, 1), (-1, 1)])
        assert d.physical.tolist() == [[-1.0, 1.0]]

    def test_scale_midpoint(self):
        assert scale_to_domain(Design([[0.5]]), [(-1, 1)]).physical[0, 0] == 0.0

    def test_round_trip(self, rng):
        u = rng.random((50, 4))
        lo = rng.uniform(-100, 100, 4)
        bounds = np.column_stack([lo, lo + rng.uniform(1e-3, 50, 4)])
        back = to_unit(to_physical(u, bounds), bounds)
        assert np.max(np.abs(back - u)) < 1e-12
        d = unscale_to_unit(scale_to_domain(Design(u), bounds))
        assert np.max(np.abs(d.points - u)) < 1e-12

    @pytest.mark.parametrize("bounds", [[(0, 0)], [(1, 0)], [(0, np.inf)]])
    def test_degenerate_interval(self, bounds):
        with pytest.raises(ArgumentError):
            scale_to_domain(Design([[0.3]]), bounds)


class TestDesignType:
    def test_points_are_read_only(self):
        d = Design([[0.1, 0.2]])
        with pytest.raises(ValueError):
            d.points[0, 0] = 0.5

    def test_rejects_outside_unit_cube(self):
        with pytest.raises(DataError):
            Design([[1.2]])

    def test_unknown_kind(self):
        with pytest.raises(ArgumentError):
            Design([[0.1]], kind="Sobol")


def test_spawned_streams_independent_of_order():
    a = [r.random() for r in spawn_rngs(9, 4)]
    b = [r.random() for r in reversed(spawn_rngs(9, 4))][::-1]
    assert a == b
    assert len(set(a)) == 4


def test_csv_round_trip(tmp_path, rng):
    design = scale_to_domain(generate_lhs(12, 3, rng), [(-1, 1), (0, 10), (5, 6)])
    path = tmp_path / "d.csv"
    save_design(design, path)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,x3"
    meta = json.loads((tmp_path / "d.csv.json").read_text())
    assert meta["kind"] == "LHS" and meta["n"] == 12 and meta["d"] == 3
    back = load_design(path)
    np.testing.assert_allclose(back.physical, design.physical, rtol=0, atol=1e-15 * 10)
    np.testing.assert_allclose(back.points, design.points, rtol=0, atol=1e-14)
    assert back.kind == "LHS"
