import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from krflab.errors import HypothesisViolated, NegativeKappa, NonPositiveTrace
from krflab.royden_estimates import (
    check_royden,
    random_negative_tensor,
    royden_bound,
    run_trial,
    run_trials,
    trial_seeds,
)
from krflab.tensor_core import HermitianForm, KahlerCurvature, constant_hsc_tensor, hsc_sup

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_bound_examples():
    assert royden_bound(0.0, 3, 2.5) == 0.0
    assert royden_bound(1.0, 1, 1.0) == pytest.approx(-1.0)
    assert royden_bound(2.0, 2, 3.0) == pytest.approx(-13.5)


def test_bound_rejects_bad_input():
    with pytest.raises(NegativeKappa):
        royden_bound(-0.1, 2, 1.0)
    with pytest.raises(NonPositiveTrace):
        royden_bound(1.0, 2, 0.0)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_equality_for_space_form(n):
    g = HermitianForm.random(np.random.default_rng(n), n)
    c = 1.7
    rep = check_royden(g, g, constant_hsc_tensor(g, c), c)
    assert rep.lhs == pytest.approx(-c * n * (n + 1) / 2, rel=1e-12)
    assert abs(rep.margin) < 1e-10
    assert rep.holds


def test_flat_case():
    g = HermitianForm.identity(2)
    rep = check_royden(g, g, KahlerCurvature.zero(2), 0.0)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.holds


def test_hypothesis_violation_is_reported():
    g = HermitianForm.identity(2)
    with pytest.raises(HypothesisViolated):
        check_royden(g, g, constant_hsc_tensor(g, 0.5), 1.0)
    with pytest.raises(NegativeKappa):
        check_royden(g, g, KahlerCurvature.zero(2), -1.0)


def test_unperturbed_tensor_is_space_form():
    g = HermitianForm.random(np.random.default_rng(3), 2)
    R, sup = random_negative_tensor(7, 2, 1.25, 0.0, g)
    assert np.allclose(R.entries, constant_hsc_tensor(g, 1.25).entries)
    assert sup == pytest.approx(-1.25, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=3))
def test_generated_tensor_satisfies_hypothesis(seed, n):
    g = HermitianForm.random(np.random.default_rng(seed), n)
    R, sup = random_negative_tensor(seed, n, 1.0, 0.5, g)
    assert sup <= -1.0
    assert R.symmetry_defect() < 1e-10
    # independent sampler never beats the reported sup
    rng = np.random.default_rng(seed + 1)
    xis = rng.standard_normal((5000, n)) + 1j * rng.standard_normal((5000, n))
    assert oracles.hsc_values(R.entries, g.entries, xis).max() <= sup + 1e-10


@settings(max_examples=200, deadline=None)
@given(seeds, st.floats(min_value=0.1, max_value=5.0), st.floats(min_value=0.0, max_value=2.0))
def test_inequality_is_equality_in_dimension_one(seed, kappa, bump):
    # n = 1: lhs = R/g^2, rhs = -kappa (ghat/g)^2, and R = -kappa' ghat^2
    rng = np.random.default_rng(seed)
    g, gh = HermitianForm.random(rng, 1), HermitianForm.random(rng, 1)
    c = kappa + bump
    rep = check_royden(g, gh, constant_hsc_tensor(gh, c), kappa)
    assert rep.holds
    a = (gh.entries[0, 0] / g.entries[0, 0]).real
    assert rep.margin == pytest.approx(bump * a * a, rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=3))
def test_random_trials_hold(seed, n):
    rec = run_trial(seed, n, 1.0, 0.5)
    assert rec.holds
    assert rec.lhs == pytest.approx(rec.rhs - rec.margin)


def test_brute_force_lhs_agrees():
    rng = np.random.default_rng(17)
    gh = HermitianForm.random(rng, 3)
    g = HermitianForm.random(rng, 3, 1.5)
    R, sup = random_negative_tensor(17, 3, 1.0, 0.3, gh)
    rep = check_royden(g, gh, R, 1.0, measured_sup=sup)
    assert rep.lhs == pytest.approx(oracles.bicontraction(g.entries, R.entries), rel=1e-10)


def test_trials_are_deterministic():
    a = run_trials(5, 20, [1, 2], 1.0, 0.5)
    b = run_trials(5, 20, [1, 2], 1.0, 0.5)
    assert a == b
    assert len(a) == 40
    assert trial_seeds(5, 3) == trial_seeds(5, 3)
    assert trial_seeds(5, 3) != trial_seeds(6, 3)


def test_measured_sup_matches_recomputation():
    rec = run_trial(99, 2, 1.0, 0.5)
    rng = np.random.default_rng(99)
    gh = HermitianForm.random(rng, 2)
    HermitianForm.random(rng, 2, spread=1.5)
    R, _ = random_negative_tensor(int(rng.integers(2**63)), 2, 1.0, 0.5, gh)
    assert hsc_sup(R, gh) == pytest.approx(rec.measured_sup, abs=1e-9)
