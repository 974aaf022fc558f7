import numpy as np
import pytest

from conftest import count_tv, tv_to_law
from wrsharp.geometry import Configuration, Window
from wrsharp.model import ModelParams
from wrsharp.multicolor import (
    WINDOW_CLIPPED,
    BicolorConfiguration,
    CrcmState,
    boundary_clusters,
    crcm_count_oracle,
    crcm_weight_ratio_birth,
    fk_color,
    sample_bicolor_from_area,
    sample_crcm_chain,
    sample_crcm_mcmc,
    thinned_measure_experiment,
)
from wrsharp.rng import stream
from wrsharp.samplers import sample_rejection_many

TINY = Window((0.0, 0.0), (2.0, 2.0))


def test_bicolor_validity():
    ok = BicolorConfiguration(Configuration([(0, 0)]), Configuration([(1.01, 0)]))
    bad = BicolorConfiguration(Configuration([(0, 0)]), Configuration([(1.0, 0)]))
    assert ok.is_valid() and not bad.is_valid()
    assert ok.swapped().omega1 == ok.omega2


def test_bicolor_from_area_examples():
    area = Configuration([(1.0, 1.0)])
    assert len(sample_bicolor_from_area(area, TINY, 0.0, 1).omega2) == 0
    g = stream(1, "bi")
    k = [len(sample_bicolor_from_area(Configuration.empty(), TINY, 1.5, g).omega2) for _ in range(4000)]
    assert np.mean(k) == pytest.approx(1.5 * TINY.volume, abs=4 * np.sqrt(6.0 / 4000))
    for i in range(200):
        pair = sample_bicolor_from_area(TINY.sample_uniform(g, 3), TINY, 2.0, g)
        assert pair.is_valid()


def test_weight_ratio_two_state():
    # a single point forms one component: weight 2z against 1 for the empty state
    assert crcm_weight_ratio_birth(0.7, 1) == pytest.approx(1.4)
    assert crcm_weight_ratio_birth(0.7, 0) == pytest.approx(0.7)
    assert crcm_weight_ratio_birth(0.7, -1) == pytest.approx(0.35)


def test_crcm_chain_matches_oracle():
    z = 0.5
    law = crcm_count_oracle(TINY, z, max_points=12, quadrature_points=2048, rng=1)
    counts = []
    mismatches = 0
    for i in range(10):
        run = sample_crcm_chain(TINY, z, 600, stream(i, "crcm"))
        counts += [len(s.cfg) for s in run.states]
        mismatches += run.mismatches
        assert run.checks > 0
    assert mismatches == 0
    assert tv_to_law(counts, law) <= 0.05


def test_crcm_states_consistent_and_bounded():
    run = sample_crcm_chain(TINY, 2.0, 200, stream(2, "crcm"))
    for st in run.states:
        assert st.consistent()
        assert st.bounds_hold()
        assert st.n_cc <= len(st.cfg)


def test_crcm_small_activity_is_empty():
    states = [sample_crcm_mcmc(TINY, 1e-4, rng=stream(i, "tiny")) for i in range(20)]
    assert sum(len(s.cfg) for s in states) <= 1


def test_fk_color_examples():
    empty = fk_color(CrcmState.of(Configuration.empty()), 1)
    assert len(empty.omega1) == len(empty.omega2) == 0
    run = sample_crcm_chain(TINY, 1.5, 300, stream(3, "fk"))
    g = stream(3, "color")
    for st in run.states:
        pair = fk_color(st, g)
        assert pair.is_valid()
        assert len(pair.omega1) + len(pair.omega2) == len(st.cfg)


def test_fk_first_marginal():
    z = 1.0
    g = stream(4, "fkm")
    firsts = []
    for i in range(5):
        for st in sample_crcm_chain(TINY, z, 1000, stream(i, "fk-chain")).states:
            firsts.append(len(fk_color(st, g).omega1))
    ref = [len(c) for c in sample_rejection_many(TINY, WINDOW_CLIPPED, ModelParams(z, z), 10000, stream(4, "ref"))]
    assert count_tv(firsts, ref) <= 0.05


def test_duality():
    z, beta = 1.2, 0.6
    g = stream(5, "dual")
    area = sample_rejection_many(TINY, WINDOW_CLIPPED, ModelParams(z, beta), 6000, g)
    second = [len(sample_bicolor_from_area(c, TINY, beta, g).omega2) for c in area]
    dual = [len(c) for c in sample_rejection_many(TINY, WINDOW_CLIPPED, ModelParams(beta, z), 6000, stream(5, "ref"))]
    assert count_tv(second, dual) <= 0.05


def test_boundary_clusters():
    w = Window.box(3.0)
    st = CrcmState.of(Configuration([(2.8, 0.0), (2.0, 0.0), (0.0, 0.0)]))
    assert boundary_clusters(st, w).tolist() == [False, True, True]


def test_thinned_experiment_trends():
    w = Window((0.0, 0.0), (5.0, 5.0))
    rows = thinned_measure_experiment(w, [0.02, 4.0], 0.75, sweeps=30, replicates=60, rng=stream(6, "thin"))
    low, high = rows
    assert all(r.thinned_crossing <= r.raw_crossing for r in rows)
    assert low.thinned_crossing == low.raw_crossing
    assert high.removed_fraction > 0.9
    assert high.thinned_crossing <= 0.05


def test_thinned_experiment_requires_large_radius():
    with pytest.raises(ValueError):
        thinned_measure_experiment(TINY, [1.0], 0.5)
