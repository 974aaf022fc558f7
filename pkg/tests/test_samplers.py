import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conftest import count_tv, tv_to_law
from wrsharp.geometry import Configuration, Window, volume_tolerance
from wrsharp.model import FREE, BoundaryCondition, ModelParams, papangelou, partition_oracle
from wrsharp.rng import stream
from wrsharp.samplers import (
    MarkedConfiguration,
    Region,
    SamplerError,
    SamplerStats,
    birth_acceptance,
    death_acceptance,
    marked_poisson,
    marked_tuple,
    sample_by_thinning,
    sample_mcmc,
    sample_mcmc_chain,
    sample_poisson,
    sample_rejection,
    sample_rejection_many,
    thin_region,
    thinning_probability,
    tuple_issubset,
)

UNIT = Window((0.0, 0.0), (1.0, 1.0))
PARAMS = ModelParams(1.0, 1.0)


def counts(cfgs):
    return np.array([len(c) for c in cfgs])


def test_poisson_zero_intensity():
    assert len(sample_poisson(UNIT, 0.0, 1)) == 0


def test_poisson_mean_and_fano():
    g = stream(1, "poisson")
    k = np.array([len(sample_poisson(UNIT, 3.0, g)) for _ in range(10**5)])
    assert abs(k.mean() - 3.0) <= 3 * math.sqrt(3.0 / 1e5)
    assert k.var() / k.mean() == pytest.approx(1.0, abs=0.05)


def test_poisson_points_in_window():
    cfg = sample_poisson(Window((2, 3), (4, 4)), 5.0, 2)
    assert np.all(Window((2, 3), (4, 4)).contains(cfg.points))


def test_rejection_beta_zero_always_accepts():
    st_ = SamplerStats()
    sample_rejection_many(UNIT, FREE, PARAMS.with_(beta=0), 200, 3, stats=st_)
    assert st_.proposals == st_.acceptances == 200


def test_rejection_matches_partition_oracle():
    law = partition_oracle(UNIT, FREE, PARAMS).count_probabilities()
    k = counts(sample_rejection_many(UNIT, FREE, PARAMS, 20000, stream(2, "rej")))
    assert tv_to_law(k, law) <= 0.02


def test_rejection_error_reports_rate():
    with pytest.raises(SamplerError) as info:
        sample_rejection(Window.box(3.0), FREE, ModelParams(2.0, 3.0), 1, max_attempts=20)
    assert info.value.acceptance_rate == 0.0


def test_wired_dominates_free():
    # the clipped Hamiltonian penalizes less, so the wired measure carries more points
    w = Window.box(1.0)
    free = counts(sample_rejection_many(w, FREE, PARAMS, 4000, stream(4, "free")))
    wired = counts(sample_rejection_many(w, BoundaryCondition.wired(0.5), PARAMS, 4000, stream(4, "wired")))
    se = math.hypot(free.std() / math.sqrt(4000), wired.std() / math.sqrt(4000))
    assert wired.mean() - free.mean() > 3 * se


def test_sampler_reproducibility():
    a = sample_rejection(UNIT, FREE, PARAMS, stream(7, "r"))
    b = sample_rejection(UNIT, FREE, PARAMS, stream(7, "r"))
    assert a == b
    w = Window.box(2.0)
    assert sample_mcmc(w, FREE, PARAMS, stream(7, "m")) == sample_mcmc(w, FREE, PARAMS, stream(7, "m"))
    m = marked_tuple(UNIT, 1.0, 1, stream(7, "t"))
    assert sample_by_thinning(UNIT, FREE, PARAMS, [UNIT], m) == sample_by_thinning(UNIT, FREE, PARAMS, [UNIT], m)


def test_detailed_balance_algebra():
    rng = np.random.default_rng(0)
    w = Window.box(1.5)
    for _ in range(50):
        n = int(rng.integers(0, 6))
        cfg = w.sample_uniform(rng, n)
        x = w.sample_uniform(rng, 1)[0]
        gamma = papangelou(x, cfg, w, FREE, PARAMS)
        birth = birth_acceptance(gamma, n, w.volume)
        death = death_acceptance(gamma, n + 1, w.volume)
        # π(ω) q(ω → ω + x) a_birth = π(ω + x) q(ω + x → ω) a_death, with π(ω + x) / π(ω) = γ
        assert birth / death == pytest.approx(gamma * w.volume / (n + 1), rel=1e-12)


def test_mcmc_beta_zero_is_poisson():
    w = Window((0.0, 0.0), (2.0, 1.0))
    lam = 1.5 * w.volume
    k = counts(sample_mcmc_chain(w, FREE, ModelParams(1.5, 0.0), 4000, stream(5, "mc")))
    top = 9
    obs = np.bincount(np.minimum(k, top), minlength=top + 1)
    pmf = stats.poisson.pmf(np.arange(top), lam)
    exp = np.append(pmf, 1 - pmf.sum()) * len(k)
    assert stats.chisquare(obs, exp).pvalue > 0.01
    assert k.mean() == pytest.approx(lam, rel=0.05)
    assert k.var() / k.mean() == pytest.approx(1.0, abs=0.1)


def test_mcmc_matches_rejection():
    ref = counts(sample_rejection_many(UNIT, FREE, PARAMS, 10000, stream(6, "ref")))
    chains = []
    for i in range(20):
        chains.extend(sample_mcmc_chain(UNIT, FREE, PARAMS, 250, stream(6, "chain", i)))
    assert count_tv(counts(chains), ref) <= 0.03


def test_mcmc_stats():
    st_ = SamplerStats()
    sample_mcmc_chain(Window.box(1.0), FREE, PARAMS, 3, stream(1, "s"), stats=st_)
    assert st_.proposals > 0 and 0 <= st_.acceptances <= st_.proposals
    assert st_.sweeps == pytest.approx(50 + 2 * 5)


def test_sandwich_single_cell():
    w = Window.box(2.0)
    params = ModelParams(0.8, 0.5)
    k = counts(sample_rejection_many(w, BoundaryCondition.wired(), params, 10000, stream(8, "sw")))
    se = k.std() / math.sqrt(len(k))
    assert params.z * math.exp(-params.beta * math.pi) * w.volume <= k.mean() + 2.576 * se
    assert k.mean() - 2.576 * se <= params.z * w.volume


def test_thinning_probability_beta_zero():
    p, err = thinning_probability((0.5, 0.5), np.empty((0, 2)), Region(UNIT), FREE, PARAMS.with_(beta=0))
    assert (p, err) == (1.0, 0.0)


def test_thinning_probability_empty_remaining_region():
    w = Window.box(5.0)
    nothing = Region(w, excluded_boxes=(w,))
    p, _ = thinning_probability((0, 0), np.empty((0, 2)), nothing, FREE, PARAMS, oracle_budget=4, rng=1)
    assert p == pytest.approx(math.exp(-math.pi), rel=volume_tolerance(2) * 1.01)


def test_thinning_probability_monotone_in_kept():
    rng = np.random.default_rng(11)
    w = Window((0.0, 0.0), (2.0, 2.0))
    for trial in range(5):
        kept = w.sample_uniform(rng, 2)
        more = np.vstack([kept, w.sample_uniform(rng, 2)])
        x = w.sample_uniform(rng, 1)[0]
        region = Region(w).beyond(x)
        a, ea = thinning_probability(x, kept, region, FREE, PARAMS, 40, stream(trial, "p"))
        b, eb = thinning_probability(x, more, region, FREE, PARAMS, 40, stream(trial, "p"))
        assert b >= a - 3 * math.hypot(ea, eb)


def test_thinning_beta_zero_keeps_everything():
    m = marked_tuple(UNIT, 3.0, 1, 4)
    out = sample_by_thinning(UNIT, FREE, PARAMS.with_(beta=0), [UNIT], m)
    assert out == Configuration(m[0].points)


def test_thinning_output_is_subset():
    w = Window((0.0, 0.0), (2.0, 1.0))
    cubes = [Window((0.0, 0.0), (1.0, 1.0)), Window((1.0, 0.0), (2.0, 1.0))]
    for i in range(20):
        m = marked_tuple(w, 1.0, 2, stream(i, "sub"))
        out = sample_by_thinning(w, FREE, PARAMS, cubes, m)
        dominating = Configuration(np.vstack([c.points[cube.contains(c.points)] for c, cube in zip(m, cubes)]))
        assert out.issubset(dominating)


def test_thinning_matches_rejection():
    g = stream(9, "thin")
    k = [len(sample_by_thinning(UNIT, FREE, PARAMS, [UNIT], marked_tuple(UNIT, 1.0, 1, g))) for _ in range(10**4)]
    ref = counts(sample_rejection_many(UNIT, FREE, PARAMS, 10**4, stream(9, "ref")))
    assert count_tv(k, ref) <= 0.03


def _shrink(m: MarkedConfiguration, rng) -> MarkedConfiguration:
    return m.subset(rng.random(len(m)) < 0.6)


def test_thinning_monotone_in_marked_tuple():
    w = Window((0.0, 0.0), (2.0, 1.0))
    cubes = [Window((0.0, 0.0), (1.0, 1.0)), Window((1.0, 0.0), (2.0, 1.0))]
    rng = np.random.default_rng(12)
    for i in range(30):
        big = marked_tuple(w, 1.5, 2, stream(i, "mono"))
        small = [_shrink(c, rng) for c in big]
        assert tuple_issubset(small, big)
        a = sample_by_thinning(w, FREE, PARAMS, cubes, small)
        b = sample_by_thinning(w, FREE, PARAMS, cubes, big)
        assert a.issubset(b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.tuples(st.floats(-1.5, 2.5), st.floats(-1.5, 2.5)), max_size=4))
def test_thinning_monotone_in_boundary(seed, extra):
    w = Window((0.0, 0.0), (1.5, 1.0))
    pts = np.array(extra).reshape(-1, 2)
    outside = pts[~w.contains(pts)]
    bc1 = BoundaryCondition.explicit(outside[: len(outside) // 2])
    bc2 = BoundaryCondition.explicit(outside)
    m = marked_poisson(w, 1.5, seed)
    a = thin_region(Region(w), bc1, PARAMS, m)
    b = thin_region(Region(w), bc2, PARAMS, m)
    assert Configuration(a).issubset(Configuration(b))


def test_marked_configuration_validation():
    with pytest.raises(ValueError):
        MarkedConfiguration(np.zeros((1, 2)), [1.5], [0])
    with pytest.raises(ValueError):
        MarkedConfiguration(np.zeros((2, 2)), [0.5], [0])


def test_region_excludes_balls_and_boxes():
    r = Region(Window.box(2.0), excluded_boxes=(Window.box(0.5),), excluded_centers=np.array([[1.5, 1.5]]),
               excluded_radius=0.4)
    pts = np.array([[0.0, 0.0], [1.5, 1.6], [-1.5, 1.5]])
    assert r.contains(pts).tolist() == [False, False, True]
    assert r.beyond(np.array([0.0, 0.0])).contains(pts).tolist() == [False, False, False]
    sample = r.poisson(5.0, np.random.default_rng(1))
    assert np.all(r.contains(sample))
