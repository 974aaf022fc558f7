import math

import numpy as np
import pytest

from wrsharp.geometry import Window
from wrsharp.model import ModelParams
from wrsharp.osss import (
    CubeGrid,
    check_derivative_covariance,
    check_osss,
    connected_cubes,
    estimate_revealment,
    run_exploration_T_s,
    sample_wired,
)
from wrsharp.percolation import origin_connected
from wrsharp.rng import stream

N, R = 3, 0.5
GRID = CubeGrid.for_box(N + R + 1, 36)


def poisson_box(z, s, rng):
    box = Window.box(s)
    return box.sample_uniform(rng, rng.poisson(z * box.volume))


def test_grid_tiles_window():
    g = CubeGrid.for_box(2.0, 8)
    assert g.t == 64 and g.epsilon == 0.5
    assert np.allclose(g.highs - g.lows, 0.5)
    pts = g.window.sample_uniform(np.random.default_rng(0), 2000)
    cube = g.cube_of(pts)
    assert np.all(cube >= 0)
    assert np.all((pts > g.lows[cube]) & (pts <= g.highs[cube]))
    assert g.counts(pts).sum() == 2000
    assert g.cube_of(np.array([[5.0, 0.0]]))[0] == -1


def test_grid_rejects_misaligned_window():
    with pytest.raises(ValueError):
        CubeGrid(Window((0.0, 0.0), (1.0, 1.0)), 0.3)


@pytest.mark.parametrize("s", [0, 1, 2, 3])
def test_empty_configuration_sweeps_frontier(s):
    tr = run_exploration_T_s(np.empty((0, 2)), GRID, s, N, R)
    frontier = GRID.distance_to_surface(s) <= R
    assert tr.value == 0
    assert tr.tau == frontier.sum()
    assert set(tr.visited.tolist()) == set(np.nonzero(frontier)[0].tolist())


def test_chain_is_found():
    chain = np.array([[0.9 * k, 0.0] for k in range(5)])
    for s in (0, 1, 2, 3):
        tr = run_exploration_T_s(chain, GRID, s, N, R)
        assert tr.value == 1 == int(origin_connected(chain, R, N))


def test_exploration_value_matches_percolation():
    rng = stream(1, "explore")
    for i in range(150):
        pts = poisson_box(1.2, N + R + 1, rng)
        truth = origin_connected(pts, R, N)
        for s in (0, 1, 2, 3):
            assert run_exploration_T_s(pts, GRID, s, N, R).value == truth


def test_trace_determines_value():
    rng = stream(2, "trace")
    for _ in range(40):
        pts = poisson_box(1.2, N + R + 1, rng)
        tr = run_exploration_T_s(pts, GRID, 1, N, R)
        visited = np.zeros(GRID.t, dtype=bool)
        visited[tr.visited] = True
        keep = pts[visited[GRID.cube_of(pts)]]
        fresh = poisson_box(1.2, N + R + 1, rng)
        fresh = fresh[~visited[GRID.cube_of(fresh)]]
        other = np.vstack([keep, fresh])
        assert origin_connected(other, R, N) == bool(tr.value)
        assert run_exploration_T_s(other, GRID, 1, N, R).value == tr.value


def test_visited_cubes_are_connected():
    rng = stream(3, "vis")
    for _ in range(60):
        pts = poisson_box(1.0, N + R + 1, rng)
        for s in (1, 2):
            tr = run_exploration_T_s(pts, GRID, s, N, R)
            con = connected_cubes(pts, GRID, s, R)
            assert np.all(con[tr.visited])


def test_revealment_vanishes_outside_domain():
    big = CubeGrid.for_box(N + R + 2, 44)
    est = estimate_revealment(big, 2, N, ModelParams(1.0, 0.0), 200, stream(4, "rev"))
    outside = big.distance_to_box(N + R + 1) > 0
    assert outside.any()
    assert np.all(est.delta[outside] == 0.0)
    assert np.all(est.delta[big.distance_to_box(N + R) > 0] == 0.0)
    assert est.bound_holds()


def test_revealment_empty_measure_limit():
    s = 2
    est = estimate_revealment(GRID, s, N, ModelParams(1.0, 0.0), 5, samples=[np.empty((0, 2))] * 5)
    frontier = GRID.distance_to_surface(s) <= R
    assert np.all(est.delta[frontier] == 1.0)
    assert np.all(est.delta[~frontier] == 0.0)


def test_osss_poisson_small_box():
    grid = CubeGrid.for_box(2 + R + 1, 28)
    rep = check_osss(grid, 1, 2, ModelParams(1.0, 0.0), 600, stream(5, "osss"))
    assert rep.holds
    assert rep.fkg_violations == 0
    assert rep.discretization == pytest.approx(grid.epsilon**2)
    assert rep.replicates == 600


def test_osss_constant_function():
    grid = CubeGrid.for_box(1.5, 12)
    rep = check_osss(grid, 0, 0, ModelParams(1.0, 0.0), 50, stream(6, "const"))
    assert rep.var_f == 0.0
    assert rep.var_f <= rep.rhs + 1e-12


def test_sample_wired_window():
    pts = sample_wired(1, ModelParams(0.5, 0.0), 3, 1)
    assert len(pts) == 3
    assert all(np.all(Window.box(5).contains(p)) for p in pts)
    chains = sample_wired(1, ModelParams(0.5, 1.0), 2, 1)
    assert all(np.all(Window.box(5).contains(p)) for p in chains)


def test_derivative_constant_function():
    rep = check_derivative_covariance(1, ModelParams(1.0, 1.0), f=lambda p: 1.0, replicates=300, rng=1)
    assert rep.derivative == 0.0 and rep.covariance == 0.0


def test_derivative_poisson_count():
    bound = 50.0
    n = 1
    rep = check_derivative_covariance(n, ModelParams(1.0, 0.0), f=lambda p: len(p) / bound, h=0.05,
                                      replicates=20000, rng=stream(7, "count"))
    target = Window.box(n).volume / bound
    assert rep.covariance == pytest.approx(target, abs=4 * rep.covariance_stderr)
    assert rep.derivative == pytest.approx(target, abs=4 * rep.derivative_stderr)


def test_derivative_connection_indicator():
    rep = check_derivative_covariance(1, ModelParams(1.0, 1.0), h=0.1, replicates=5000, rng=stream(8, "conn"))
    assert rep.agrees(3.0)


def test_derivative_rejects_large_step():
    with pytest.raises(ValueError):
        check_derivative_covariance(1, ModelParams(0.1, 1.0), h=0.2, replicates=10)
