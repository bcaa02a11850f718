import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semmap.bayes_filter import (EXACT, FilterConfig, InconsistentEvidence, PlaceFilter,
                                 count_switches, init_filter, map_label, ml_label)
from semmap.catalog import new_catalog


def cat(n):
    return new_catalog([f"l{i}" for i in range(n)])


def test_uniform_prior_uniform_likelihood():
    f = init_filter(cat(2), [0.5, 0.5], EXACT)
    np.testing.assert_allclose(f.update([0.5, 0.5]), [0.5, 0.5])


def test_three_confident_frames():
    f = init_filter(cat(2), [0.5, 0.5], EXACT)
    for _ in range(3):
        b = f.update([0.9, 0.1])
    np.testing.assert_allclose(b, [0.998630137, 0.001369863], atol=1e-6)


def test_masked_prior_stays_zero():
    f = init_filter(cat(3), [0.5, 0.5, 0.0], EXACT)
    b = f.update([0.1, 0.1, 0.8])
    np.testing.assert_allclose(b, [0.5, 0.5, 0.0])
    assert b[2] == 0.0


def test_disjoint_support_raises_and_keeps_state():
    f = init_filter(cat(3), [0.5, 0.5, 0.0], EXACT)
    f.update([0.3, 0.7, 0.0])
    before = f.belief.copy()
    with pytest.raises(InconsistentEvidence) as err:
        f.update([0.0, 0.0, 1.0], frame=17)
    assert err.value.frame == 17 and "17" in str(err.value)
    np.testing.assert_array_equal(f.belief, before)


def test_rejects_bad_likelihoods():
    f = init_filter(cat(2), [0.5, 0.5])
    for bad in ([0.5], [np.nan, 1.0], [-0.1, 1.0], [np.inf, 1.0]):
        with pytest.raises(ValueError):
            f.update(bad)


def test_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(forgetting=1.5)
    with pytest.raises(ValueError):
        FilterConfig(prior_mode="sometimes")
    with pytest.raises(ValueError):
        FilterConfig(epsilon_floor=0.0)


def test_epsilon_floor_keeps_labels_alive():
    f = init_filter(cat(2), [0.5, 0.5], EXACT)
    for _ in range(200):
        f.update([1.0, 1e-3])
    assert f.belief[1] >= 1e-12 * 0.99
    # and the filter can still come back
    for _ in range(20):
        f.update([1e-3, 1.0])
    assert f.map_label()[0] == 1


def test_every_step_prior_multiplies_in():
    f = init_filter(cat(2), [0.75, 0.25], FilterConfig(forgetting=0.0))
    b = f.update([0.5, 0.5])
    np.testing.assert_allclose(b, [0.9, 0.1])


def test_forgetting_mixes_toward_prior():
    f = init_filter(cat(2), [0.5, 0.5], FilterConfig(forgetting=0.5, prior_mode="at_init_only"))
    f.belief = np.array([1.0, 0.0]) + [0.0, 1e-12]
    b = f.update([0.5, 0.5])
    np.testing.assert_allclose(b, [0.75, 0.25], atol=1e-9)


def test_forgetting_speeds_up_switching():
    def steps_to_switch(cfg):
        f = init_filter(cat(2), [0.5, 0.5], cfg)
        for _ in range(100):
            f.update([0.7, 0.3])
        n = 0
        while f.map_label()[0] == 0:
            f.update([0.3, 0.7])
            n += 1
        return n
    assert steps_to_switch(FilterConfig(0.1, prior_mode="at_init_only")) < steps_to_switch(EXACT)


def test_ties_resolve_to_lowest_index():
    assert map_label([0.25, 0.5, 0.25, 0.5])[0] == 1
    assert ml_label([0.2, 0.4, 0.4]) == 1


def test_count_switches():
    assert count_switches([0, 0, 1, 1, 0, 2]) == 3
    assert count_switches([]) == 0 and count_switches([4]) == 0


def test_reset_and_grow():
    c = cat(2)
    f = init_filter(c, [0.5, 0.5], EXACT)
    f.update([0.9, 0.1])
    c.append_label("door")
    f.grow([0.4, 0.4, 0.2])
    assert f.size == 3 and abs(f.belief.sum() - 1) < 1e-12
    assert abs(f.belief[2] - 0.2) < 1e-12
    f.reset()
    np.testing.assert_array_equal(f.belief, [0.4, 0.4, 0.2])


lik_strategy = st.lists(st.floats(1e-3, 1.0), min_size=4, max_size=4)


@settings(max_examples=150, deadline=None)
@given(st.lists(lik_strategy, min_size=1, max_size=30),
       st.sampled_from([EXACT, FilterConfig(), FilterConfig(0.2, prior_mode="at_init_only")]))
def test_belief_is_distribution(liks, cfg):
    f = PlaceFilter(cat(4), [0.4, 0.3, 0.3, 0.0], cfg)
    for lik in liks:
        b = f.update(lik)
        assert abs(b.sum() - 1) <= 1e-9 and b.min() >= 0 and b[3] == 0.0


@settings(max_examples=150, deadline=None)
@given(st.lists(lik_strategy, min_size=1, max_size=20), st.floats(0.01, 100.0))
def test_likelihood_scale_invariance(liks, alpha):
    a = PlaceFilter(cat(4), [0.25] * 4, EXACT)
    b = PlaceFilter(cat(4), [0.25] * 4, EXACT)
    for lik in liks:
        np.testing.assert_allclose(a.update(lik), b.update(np.multiply(lik, alpha)),
                                   rtol=1e-9, atol=1e-15)
