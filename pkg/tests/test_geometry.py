import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wrsharp.geometry import (
    Configuration,
    Window,
    cube_partition,
    neighbors_within,
    uncovered_ball_volume,
    union_volume,
    unit_ball_volume,
    volume_tolerance,
)

TOL2 = volume_tolerance(2)
LENS = 2 * math.acos(0.5) - 0.5 * math.sqrt(3.0)  # overlap of two unit disks at distance 1


def lens_area(delta):
    return 2 * math.acos(delta / 2) - (delta / 2) * math.sqrt(4 - delta * delta)


def test_unit_ball_volume():
    assert unit_ball_volume(2) == pytest.approx(math.pi)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_window_basics():
    w = Window.box(2.0)
    assert w.volume == pytest.approx(16.0)
    assert w.contains(np.array([[2.0, 0.0], [-2.0, 0.0]])).tolist() == [True, False]
    assert w.shrink(1.0) == Window.box(1.0)
    assert w.shrink(2.0) is None
    assert w.boundary_distance(np.array([[0.0, 0.0], [3.0, 0.0]])).tolist() == [2.0, 1.0]


def test_neighbors_within():
    assert len(neighbors_within(Configuration.empty(), (0, 0), 2)) == 0
    cfg = Configuration([(0, 0)])
    assert neighbors_within(cfg, (0, 0), 2).tolist() == [[0.0, 0.0]]
    cfg = Configuration([(0, 0), (3, 0)])
    assert neighbors_within(cfg, (0, 0), 2).tolist() == [[0.0, 0.0]]


def test_neighbors_match_brute_force():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-5, 5, size=(300, 2))
    cfg = Configuration(pts)
    for x in rng.uniform(-6, 6, size=(30, 2)):
        for radius in (0.3, 1.0, 2.5):
            got = neighbors_within(cfg, x, radius)
            want = cfg.points[np.linalg.norm(cfg.points - x, axis=1) <= radius]
            assert np.array_equal(got, want)


def test_configuration_is_lexicographic_and_immutable():
    cfg = Configuration([(1, 0), (0, 5), (0, 1)])
    assert cfg.points.tolist() == [[0, 1], [0, 5], [1, 0]]
    with pytest.raises(ValueError):
        cfg.points[0, 0] = 9.0


def test_isolated_ball_is_full_disk():
    assert uncovered_ball_volume((0, 0), Configuration([(5, 0)])) == pytest.approx(math.pi, abs=TOL2)


def test_self_covered_ball_is_zero():
    assert uncovered_ball_volume((0.3, 0.2), Configuration([(0.3, 0.2)])) == pytest.approx(0.0, abs=TOL2)


def test_lens_oracle():
    assert LENS == pytest.approx(1.2284, abs=1e-4)
    assert uncovered_ball_volume((0, 0), Configuration([(1, 0)])) == pytest.approx(math.pi - LENS, abs=TOL2)
    assert math.pi - LENS == pytest.approx(1.9132, abs=1e-4)


def test_lens_against_grid_integration():
    h = 2e-3
    g = np.arange(-1 + h / 2, 1, h)
    xx, yy = np.meshgrid(g, g)
    inside = (xx**2 + yy**2 <= 1) & ((xx - 1) ** 2 + yy**2 > 1)
    assert inside.sum() * h * h == pytest.approx(math.pi - LENS, abs=5e-3)


@pytest.mark.parametrize("delta", [0.25, 0.8, 1.5, 1.99])
def test_lens_formula_at_other_distances(delta):
    got = uncovered_ball_volume((0, 0), np.array([[delta, 0.0]]))
    assert got == pytest.approx(math.pi - lens_area(delta), abs=TOL2)


def test_union_volume_examples():
    assert union_volume(Configuration.empty(), Window.box(10)) == 0.0
    assert union_volume(Configuration([(0, 0)]), Window.box(10)) == pytest.approx(math.pi, abs=TOL2)
    two = Configuration([(0, 0), (1, 0)])
    assert union_volume(two, Window.box(10)) == pytest.approx(2 * math.pi - LENS, abs=2 * TOL2)
    assert 2 * math.pi - LENS == pytest.approx(5.0548, abs=1e-4)


def test_union_volume_clipped():
    # half disk inside the upper half plane box
    got = union_volume(Configuration([(0, 0)]), Window((-5, 0), (5, 5)))
    assert got == pytest.approx(math.pi / 2, abs=TOL2)


def test_three_dimensional_ball():
    tol = volume_tolerance(3)
    assert uncovered_ball_volume((0, 0, 0), np.empty((0, 3))) == pytest.approx(4 * math.pi / 3, abs=tol)
    # spherical cap overlap of two unit balls at distance 1: 5 pi / 12
    got = uncovered_ball_volume((0, 0, 0), np.array([[1.0, 0, 0]]))
    assert got == pytest.approx(4 * math.pi / 3 - 5 * math.pi / 12, abs=tol)


def test_cube_partition_tiles_window():
    w = Window((0, 0), (2, 3))
    cubes = cube_partition(w, (2, 3))
    assert len(cubes) == 6
    assert sum(c.volume for c in cubes) == pytest.approx(w.volume)
    pts = w.sample_uniform(np.random.default_rng(1), 500)
    hits = np.sum([c.contains(pts) for c in cubes], axis=0)
    assert np.all(hits == 1)


coords = st.floats(-2.0, 2.0, allow_nan=False)
point = st.tuples(coords, coords)


@settings(max_examples=40, deadline=None)
@given(st.lists(point, min_size=1, max_size=6))
def test_telescoping(pts):
    region = Window.box(2.5)
    total = union_volume(np.array(pts), region)
    parts = sum(
        uncovered_ball_volume(p, np.array(pts[:i]).reshape(-1, 2), region) for i, p in enumerate(pts)
    )
    assert total == pytest.approx(parts, abs=(len(pts) + 1) * TOL2)


@settings(max_examples=40, deadline=None)
@given(point, st.lists(point, max_size=5), st.lists(point, max_size=5))
def test_monotone_and_bounded(x, cfg, extra):
    small = np.array(cfg).reshape(-1, 2)
    large = np.vstack([small, np.array(extra).reshape(-1, 2)])
    a = uncovered_ball_volume(x, small)
    b = uncovered_ball_volume(x, large)
    assert -TOL2 <= b <= a + 2 * TOL2
    assert a <= math.pi + TOL2


@settings(max_examples=30, deadline=None)
@given(point, st.lists(point, max_size=5), point)
def test_translation_invariance(x, cfg, shift):
    pts = np.array(cfg).reshape(-1, 2)
    s = np.array(shift)
    region = Window((-1.5, -2.0), (2.0, 1.0))
    a = uncovered_ball_volume(x, pts, region)
    b = uncovered_ball_volume(np.array(x) + s, pts + s, region.translate(s))
    assert a == pytest.approx(b, abs=2 * TOL2)
