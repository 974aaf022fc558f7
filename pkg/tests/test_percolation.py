import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wrsharp import _clusters
from wrsharp.geometry import Configuration, Window
from wrsharp.model import ModelParams
from wrsharp.percolation import (
    ThresholdError,
    box_boundary,
    closed_box,
    crossing,
    estimate_theta,
    estimate_threshold,
    face,
    fit_decay,
    is_connected,
    label_clusters,
    origin,
    origin_connected,
    poisson_critical_activities,
    regions_touch,
    theta_table,
)
from wrsharp.rng import stream


def brute_force_components(pts, r):
    n = len(pts)
    adj = np.linalg.norm(pts[:, None] - pts[None], axis=2) <= 2 * r
    reach = adj.copy()
    for k in range(n):  # Warshall transitive closure
        reach |= reach[:, k : k + 1] & reach[k : k + 1, :]
    return reach


def same_partition(labels, reach):
    return np.array_equal(labels[:, None] == labels[None, :], reach)


def test_empty_labeling():
    assert label_clusters(Configuration.empty(), 0.5).n_components == 0


def test_adjacency_boundary():
    r = 0.35
    assert label_clusters(np.array([[0.0, 0.0], [2 * r, 0.0]]), r).n_components == 1
    assert label_clusters(np.array([[0.0, 0.0], [2 * r + 1e-9, 0.0]]), r).n_components == 2


def test_labeling_matches_transitive_closure_random():
    rng = np.random.default_rng(1)
    for n in (10, 50, 200):
        for r in (0.2, 0.5, 1.0):
            pts = rng.uniform(0, 6, size=(n, 2))
            lab = label_clusters(pts, r)
            assert same_partition(lab.labels, brute_force_components(lab.points, r))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 4), st.floats(0, 4)), min_size=1, max_size=40), st.floats(0.05, 1.5))
def test_labeling_property(pts, r):
    lab = label_clusters(np.array(pts), r)
    assert same_partition(lab.labels, brute_force_components(lab.points, r))
    assert lab.sizes().sum() == len(pts)


def test_is_connected_examples():
    assert not origin_connected(np.empty((0, 2)), 0.5, 1)
    assert origin_connected(np.array([[0.0, 0.0]]), 1.2, 1)
    r = 0.5
    chain = np.array([[1.9 * r * k, 0.0] for k in range(4)])
    assert origin_connected(chain, r, 3.0)
    assert not origin_connected(np.delete(chain, 2, axis=0), r, 3.0)


def test_theta_zero_convention():
    assert origin_connected(np.empty((0, 2)), 0.5, 0)
    assert estimate_theta(0, ModelParams(1.0, 0.0), 10).theta == 1.0


def test_boundary_contact_is_euclidean():
    # near a corner of ∂Λ_1 the sup-norm gap is 0.3 but the Euclidean gap is 0.3 * sqrt(2)
    p = np.array([[1.3, 1.3]])
    assert box_boundary(1).distance(p)[0] == pytest.approx(math.hypot(0.3, 0.3))
    assert not label_clusters(p, 0.4).touching(box_boundary(1))[0]
    assert label_clusters(p, 0.43).touching(box_boundary(1))[0]


def test_regions_touch():
    assert regions_touch(origin(), closed_box(1))
    assert not regions_touch(origin(), box_boundary(1))
    assert regions_touch(box_boundary(1), closed_box(2))
    assert not regions_touch(box_boundary(3), closed_box(1))
    w = Window.box(1)
    assert not regions_touch(face(w, 0, False), face(w, 0, True))


def test_crossing():
    w = Window.box(1.0)
    line = np.array([[x, 0.0] for x in np.linspace(-0.9, 0.9, 5)])
    assert crossing(line, 0.25, w)
    assert not crossing(line[:-1], 0.25, w)
    assert not crossing(line, 0.25, w, axis=1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), max_size=30),
       st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
def test_connection_is_increasing(pts, extra):
    a = np.array(pts).reshape(-1, 2)
    b = np.vstack([a, [extra]])
    for n in (1.0, 2.0):
        if origin_connected(a, 0.5, n):
            assert origin_connected(b, 0.5, n)


def test_theta_table_paired_monotone():
    tab = theta_table([0, 1, 2, 3, 4], [0.4, 0.8, 1.2], 0.5, 300, stream(1, "tt"))
    assert tab[:, :, 0].all()
    # sample by sample: decreasing in n, increasing in z
    assert np.all(tab[:, :, 1:] <= tab[:, :, :-1])
    assert np.all(tab[:, 1:, :] >= tab[:, :-1, :])


def test_theta_table_agrees_with_direct_estimate():
    params = ModelParams(0.6, 0.0)
    tab = theta_table([2], [0.6], 0.5, 6000, stream(2, "tt")).mean(axis=0)[0, 0]
    direct = estimate_theta(2, params, 6000, stream(2, "direct"))
    assert abs(tab - direct.theta) <= 3 * math.sqrt(2) * direct.stderr + 1e-3


def test_theta_area_model_small():
    est = estimate_theta(1, ModelParams(0.8, 0.5), 100, stream(3, "area"))
    assert 0 <= est.theta <= 1 and est.replicates == 100


def test_fit_decay_exact():
    ns = np.arange(1, 7)
    fit = fit_decay(ns, np.exp(-0.7 * ns))
    assert fit.alpha1 == pytest.approx(0.7, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0)
    flat = fit_decay(ns, np.full(6, 0.5))
    assert flat.alpha1 == pytest.approx(0.0, abs=1e-9)


def test_fit_decay_weighted_recovers_rate():
    rng = np.random.default_rng(4)
    ns = np.arange(1, 8)
    th = np.exp(-0.3 - 0.5 * ns) * np.exp(rng.normal(0, 0.01, size=7))
    fit = fit_decay(ns, th, 0.01 * th)
    lo, hi = fit.ci()
    assert lo <= 0.5 <= hi
    assert fit.r_squared > 0.99


def test_fit_decay_errors():
    with pytest.raises(ValueError):
        fit_decay([1, 2, 3, 4], [0, 0, 0, 0])
    with pytest.raises(ValueError):
        fit_decay([1, 2, 3, 4], [0.5, 0.2, 0, 0])


def test_critical_activities_decide_crossing():
    crit = poisson_critical_activities(3.0, 0.5, 3.0, 20, stream(5, "crit"))
    assert np.all((crit > 0) & ((crit <= 3.0) | np.isinf(crit)))


def test_critical_mark_is_exact_threshold():
    rng = stream(6, "crit")
    box = Window.box(2.0)
    for _ in range(40):
        pts = box.sample_uniform(rng, rng.poisson(3.0 * box.volume))
        marks = rng.random(len(pts))
        ta = face(box, 0, False).distance(pts) <= 0.5
        tb = face(box, 0, True).distance(pts) <= 0.5
        c = _clusters.critical_marks(pts, marks, 1.0, ta, tb)
        if np.isfinite(c):
            assert crossing(pts[marks <= c], 0.5, box)
            assert not crossing(pts[marks < c], 0.5, box)
        else:
            assert not crossing(pts, 0.5, box)


def test_threshold_poisson_small():
    est = estimate_threshold(ModelParams(1.0, 0.0, r=1.0), [3, 5], 300, stream(7, "thr"))
    assert est.ci_low <= est.z_hat <= est.ci_high
    assert 0.2 < est.z_hat < 0.6
    assert len(est.per_box) == 2


def test_threshold_bracket_errors():
    with pytest.raises(ThresholdError):
        estimate_threshold(ModelParams(1.0, 0.0, r=1.0), [3, 5], 100, stream(8, "thr"), z_range=(0.01, 0.05))
    with pytest.raises(ValueError):
        estimate_threshold(ModelParams(1.0, 0.0), [3], 100)
