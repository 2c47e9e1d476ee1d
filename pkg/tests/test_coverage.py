import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from evidence_select import coverage
from evidence_select.errors import ContractError, UndefinedCurvatureError
from evidence_select.oracles import exhaustive_max, numerical_gradient, random_instance, relative_error


unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def instances(draw, max_n=7, max_m=4):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_m))
    R = draw(arrays(np.float64, (n, m), elements=unit))
    alpha = draw(arrays(np.float64, (m,), elements=st.floats(0.0, 3.0)))
    return R, alpha


@given(instances(), st.data())
@settings(max_examples=200, deadline=None)
def test_diminishing_returns(instance, data):
    R, alpha = instance
    n = R.shape[0]
    T = data.draw(st.sets(st.integers(0, n - 1)))
    S = data.draw(st.sets(st.sampled_from(sorted(T)))) if T else set()
    outside = [i for i in range(n) if i not in T]
    if not outside:
        return
    i = data.draw(st.sampled_from(outside))
    assert coverage.gain(i, S, R, alpha) >= coverage.gain(i, T, R, alpha) - 1e-12
    assert coverage.gain(i, T, R, alpha) >= -1e-12


@given(instances())
@settings(max_examples=100, deadline=None)
def test_utility_is_permutation_invariant(instance):
    R, alpha = instance
    perm = np.random.default_rng(0).permutation(R.shape[0])
    pi = np.linspace(0.0, 1.0, R.shape[0])
    a = coverage.class_utility(pi, R, alpha)
    b = coverage.class_utility(pi[perm], R[perm], alpha)
    assert a == pytest.approx(b, abs=1e-12)


@given(instances())
@settings(max_examples=100, deadline=None)
def test_coverage_bounds(instance):
    R, _ = instance
    v = coverage.coverage(np.ones(R.shape[0]), R)
    assert np.all((v >= 0.0) & (v <= 1.0))
    assert np.all(coverage.coverage(np.zeros(R.shape[0]), R) == 0.0)


def test_coverage_matches_direct_product(gen):
    R, alpha = random_instance(gen, 6, 3)
    pi = gen.uniform(size=6)
    direct = 1.0 - np.prod(1.0 - pi[:, None] * R, axis=0)
    assert np.allclose(coverage.coverage(pi, R), direct, atol=1e-14)


def test_saturated_factor_gives_exact_one():
    R = np.array([[1.0, 0.2], [0.5, 0.3]])
    v = coverage.coverage(np.array([1.0, 0.5]), R)
    assert v[0] == 1.0


def test_marginal_matches_finite_differences(gen):
    R, alpha = random_instance(gen, 6, 4)
    pi = gen.uniform(0.05, 0.95, 6)
    numeric = numerical_gradient(lambda: coverage.class_utility(pi, R, alpha), pi)
    assert relative_error(coverage.marginal(pi, R, alpha), numeric) < 1e-6


def test_marginal_with_saturated_factor():
    R = np.array([[1.0], [0.5], [0.25]])
    pi = np.array([1.0, 0.5, 0.0])
    marg = coverage.marginal(pi, R, np.array([1.0]))
    # leave-one-out products: without 0 -> 0.75, with 0 kept -> 0
    assert marg[0] == pytest.approx(0.75)
    assert marg[1:].tolist() == [0.0, 0.0]


def test_marginal_at_zero_is_singleton_value(gen):
    R, alpha = random_instance(gen, 5, 3)
    marg = coverage.marginal(np.zeros(5), R, alpha)
    singles = [coverage.subset_utility([i], R, alpha) for i in range(5)]
    assert np.allclose(marg, singles)


@pytest.mark.parametrize("seed", range(5))
def test_greedy_meets_approximation_bounds(seed):
    gen = np.random.default_rng(seed)
    R, alpha = random_instance(gen, 8, 3)
    for k in (1, 2, 3):
        greedy = coverage.subset_utility(coverage.greedy_max(R, alpha, k), R, alpha)
        best = exhaustive_max(R, alpha, k)
        assert greedy >= (1 - 1 / np.e) * best - 1e-12
        try:
            kappa = coverage.curvature(R, alpha)
        except UndefinedCurvatureError:
            continue
        assert greedy >= coverage.curvature_factor(kappa) * best - 1e-12


def test_greedy_breaks_ties_by_lowest_index():
    R = np.full((4, 1), 0.5)
    assert coverage.greedy_max(R, np.array([1.0]), 2) == [0, 1]


def test_greedy_respects_candidates_and_start(gen):
    R, alpha = random_instance(gen, 6, 3)
    picks = coverage.greedy_max(R, alpha, 2, candidates=[1, 3, 5], start=[3])
    assert len(picks) == 2
    assert set(picks) <= {1, 5}


def test_greedy_budget_too_large():
    with pytest.raises(ContractError):
        coverage.greedy_max(np.full((2, 1), 0.5), np.array([1.0]), 3)


def test_greedy_picks_exhaustive_optimum_on_small_bags():
    R = np.array([[0.9, 0.0], [0.8, 0.0], [0.0, 0.7]])
    assert sorted(coverage.greedy_max(R, np.array([1.0, 1.0]), 2)) == [0, 2]


def test_modular_utility_has_zero_curvature():
    R = np.array([[0.5, 0.0], [0.0, 0.4]])
    assert coverage.curvature(R, np.array([1.0, 1.0])) == pytest.approx(0.0)
    assert coverage.curvature_factor(0.0) == 1.0


def test_duplicate_saturated_items_have_full_curvature():
    R = np.array([[1.0], [1.0]])
    assert coverage.curvature(R, np.array([1.0])) == pytest.approx(1.0)
    assert coverage.curvature_factor(1.0) == pytest.approx(1 - np.exp(-1.0))


def test_curvature_undefined_when_nothing_covers():
    with pytest.raises(UndefinedCurvatureError):
        coverage.curvature(np.zeros((3, 2)), np.array([1.0, 1.0]))


def test_init_weights_prior():
    weights = coverage.init_weights(2, 4, [0, 1, 0, 1])
    assert weights.raw[0].tolist() == [1.0, -3.0, 1.0, -3.0]
    assert np.all(weights.alpha > 0.0)
    assert np.all(coverage.init_weights(2, 4).raw == 0.0)


def test_shape_mismatch_rejected():
    with pytest.raises(ContractError):
        coverage.coverage(np.ones(3), np.ones((2, 2)))


def test_exhaustive_reference_agrees_with_enumeration(gen):
    R, alpha = random_instance(gen, 5, 2)
    values = [coverage.subset_utility(s, R, alpha) for s in itertools.combinations(range(5), 2)]
    assert exhaustive_max(R, alpha, 2) == max(values)
