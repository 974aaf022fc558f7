import math

import numpy as np
import pytest

from conftest import count_tv
from wrsharp.coupling import (
    REACH,
    CouplingError,
    disagreement_coupling,
    monotone_coupling,
    saturated_shell,
    uniqueness_diagnostic,
    _reaches_inner,
)
from wrsharp.geometry import Configuration, Window
from wrsharp.model import FREE, BoundaryCondition, ModelParams
from wrsharp.rng import stream
from wrsharp.samplers import marked_tuple, sample_rejection_many

WINDOW = Window((0.0, 0.0), (2.0, 2.0))
PARAMS = ModelParams(1.0, 1.0)
B2 = np.array([[-0.5, 0.5], [-0.5, 1.5], [2.5, 1.0], [1.0, -0.6]])
BC1 = BoundaryCondition.explicit(B2[:2])
BC2 = BoundaryCondition.explicit(B2)


def test_monotone_equal_boundaries():
    m = marked_tuple(WINDOW, 1.0, 1, 1)
    pair = monotone_coupling(WINDOW, BC2, BC2, PARAMS, marked=m)
    assert pair.xi1 == pair.xi2


def test_monotone_beta_zero_keeps_dominating_points():
    m = marked_tuple(WINDOW, 1.0, 1, 2)
    pair = monotone_coupling(WINDOW, BC1, BC2, PARAMS.with_(beta=0), marked=m)
    assert pair.xi1 == pair.xi2 == Configuration(m[0].points)


def test_monotone_nested_every_draw():
    for i in range(100):
        pair = monotone_coupling(WINDOW, BC1, BC2, PARAMS, stream(i, "mono"))
        assert pair.nested()


def test_monotone_rejects_unnested_boundaries():
    with pytest.raises(ValueError):
        monotone_coupling(WINDOW, BC2, BC1, PARAMS, 1)


def test_disagreement_without_boundary():
    pair = disagreement_coupling(WINDOW, FREE, FREE, PARAMS, 3)
    assert pair.rounds == [] and pair.xi1 == pair.xi2


def test_disagreement_equal_boundaries():
    for i in range(30):
        pair = disagreement_coupling(WINDOW, BC2, BC2, PARAMS, stream(i, "eq"))
        assert pair.xi1 == pair.xi2


def test_disagreement_invariants_and_peeling():
    rng = np.random.default_rng(0)
    for i in range(100):
        pair = disagreement_coupling(WINDOW, BC1, BC2, PARAMS, stream(i, "dis"))
        assert pair.nested() and pair.disagreement_connected()
        for k, rnd in enumerate(pair.rounds):
            # points kept in round k lie in zone k, and zones are disjoint
            assert np.all(pair.round_of(rnd.xi2) == k)
            assert np.all(pair.round_of(rnd.xi1) == k)
        probe = WINDOW.sample_uniform(rng, 200)
        zones = pair.round_of(probe)
        assert np.all((zones >= 0) & (zones <= len(pair.rounds)))
        for k, rnd in enumerate(pair.rounds):
            near = np.any(np.linalg.norm(probe[:, None] - rnd.centers[None], axis=2) <= REACH, axis=1)
            assert np.all(zones[near] <= k)


def test_disagreement_round_cap():
    with pytest.raises(CouplingError):
        disagreement_coupling(WINDOW, BC1, BC2, PARAMS, 1, max_rounds=0)


def test_disagreement_marginals():
    runs = [disagreement_coupling(WINDOW, BC1, BC2, PARAMS, stream(i, "marg")) for i in range(600)]
    for side, bc in ((1, BC1), (2, BC2)):
        ref = [len(c) for c in sample_rejection_many(WINDOW, bc, PARAMS, 20000, stream(side, "ref"))]
        got = [len(p.xi1 if side == 1 else p.xi2) for p in runs]
        assert count_tv(got, ref) <= 0.06


def test_saturated_shell():
    shell = saturated_shell(2.0)
    assert np.all(np.abs(shell).max(axis=1) > 2.0)
    assert np.all(np.abs(shell).max(axis=1) <= 3.0)
    # spacing 1/2 on [-3, 3]^2 minus [-2, 2]^2
    assert len(shell) == 13**2 - 9**2
    assert np.array_equal(np.sort(shell, axis=0), np.sort(-shell, axis=0))


def test_reaches_inner():
    shell = saturated_shell(2.0)
    assert not _reaches_inner(np.empty((0, 2)), shell, 1.0)
    bridge = np.array([[1.8, 0.0], [1.0, 0.0]])
    assert _reaches_inner(bridge, shell, 1.0)
    # the nearest shell point to the origin is 2.5 away
    assert not _reaches_inner(np.array([[0.0, 0.0]]), shell, 0.5)


def test_uniqueness_bound_decreases():
    curve = uniqueness_diagnostic([2, 3, 4], ModelParams(0.3, 1.0), 150, stream(1, "uniq"))
    assert curve.probability[0] >= curve.probability[-1]
    assert np.all(curve.stderr > 0)


def test_uniqueness_poisson_cross_check():
    params = ModelParams(0.5, 0.0)
    n = 2.5
    curve = uniqueness_diagnostic([n], params, 2000, stream(2, "uniq"))
    rng = stream(3, "direct")
    shell = saturated_shell(n)
    box = Window.box(n)
    hits = [_reaches_inner(box.sample_uniform(rng, rng.poisson(params.z * box.volume)), shell, 1.0)
            for _ in range(2000)]
    p = np.mean(hits)
    assert abs(p - curve.probability[0]) <= 3 * math.hypot(curve.stderr[0], math.sqrt(p * (1 - p) / 2000))


def test_uniqueness_coupling_below_bound():
    params = ModelParams(0.3, 1.0)
    c = uniqueness_diagnostic([2.0], params, 60, stream(4, "c"), method="coupling")
    b = uniqueness_diagnostic([2.0], params, 300, stream(4, "b"))
    assert c.probability[0] <= b.probability[0] + 3 * math.hypot(c.stderr[0], b.stderr[0])


def test_uniqueness_rejects_small_n():
    with pytest.raises(ValueError):
        uniqueness_diagnostic([1.0], PARAMS, 5, 1)
