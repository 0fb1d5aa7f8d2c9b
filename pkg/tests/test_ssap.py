"""Threshold tables and the single-carrier deploy/skip rule.

The independent oracle here is a plain backward-induction value table
(no thresholds involved); thresholds must match its value differences
and the threshold policy must achieve its optimum.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marsupial.prior import INF, explicit_prior, poisson_prior
from marsupial.ssap import (DEPLOY, SKIP, compute_thresholds, decide,
                            policy_value_single_robot)

BERN = explicit_prior([0, 1], [0.5, 0.5])


def dp_value_table(prior, n_max, d_max):
    """Backward-induction optimum V[n][k]: n stages remaining, k to deploy.

    Independent of the threshold recurrence: at each stage the better of
    (deploy: x + V[n-1][k-1]) and (skip: V[n-1][k]) is taken in expectation,
    with deployment forced when k = n.
    """
    mean = prior.mean()
    v = [[0.0] * (d_max + 1)]
    for n in range(1, n_max + 1):
        row = [0.0] * (d_max + 1)
        for k in range(1, d_max + 1):
            if k >= n:
                row[k] = n * mean
                continue
            acc = 0.0
            for x, p in zip(prior.support, prior.probs):
                acc += p * max(x + v[n - 1][k - 1], v[n - 1][k])
            row[k] = acc
        v.append(row)
    return v


def seeded_prior_family(count, max_size=5, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        size = int(rng.integers(1, max_size + 1))
        support = np.sort(rng.uniform(0.0, 10.0, size=size))
        while len(set(support.tolist())) != size:
            support = np.sort(rng.uniform(0.0, 10.0, size=size))
        weights = rng.uniform(0.05, 1.0, size=size)
        out.append(explicit_prior(support.tolist(), (weights / weights.sum()).tolist()))
    return out


class TestThresholdValues:
    def test_two_stage_threshold_is_mean(self):
        for prior in (BERN, poisson_prior(2.0), poisson_prior(4.0),
                      explicit_prior([2, 4, 6], [0.25, 0.5, 0.25])):
            t = compute_thresholds(prior, 2)
            assert t.threshold(1, 2) == pytest.approx(prior.mean(), abs=1e-9)

    def test_bernoulli_three_stage_row(self):
        t = compute_thresholds(BERN, 3)
        assert t.threshold(1, 3) == pytest.approx(0.25, abs=1e-9)
        assert t.threshold(2, 3) == pytest.approx(0.75, abs=1e-9)

    def test_poisson_two_stage_equals_rate(self):
        t = compute_thresholds(poisson_prior(2.0), 2)
        assert t.threshold(1, 2) == pytest.approx(2.0, abs=1e-9)

    def test_sentinels(self):
        t = compute_thresholds(BERN, 5)
        for n in range(1, 6):
            assert t.threshold(0, n) == -INF
            assert t.threshold(n, n) == INF

    def test_interior_thresholds_match_dp_differences(self):
        # a[i, n] must equal the continuation-value gap V[n-1][k] - V[n-1][k-1]
        # for k = n - i; this ties the recurrence to the independent oracle.
        for prior in seeded_prior_family(8) + [poisson_prior(2.0), BERN]:
            n_max = 8
            t = compute_thresholds(prior, n_max)
            v = dp_value_table(prior, n_max, n_max)
            for n in range(2, n_max + 1):
                for i in range(1, n):
                    k = n - i
                    expected = v[n - 1][k] - v[n - 1][k - 1]
                    assert t.threshold(i, n) == pytest.approx(expected, abs=1e-9), (
                        f"a[{i},{n}] mismatch for {prior.kind}"
                    )

    def test_atom_at_threshold_prior(self):
        # mean 4 sits on the support; the recurrence must not drop that mass
        t = compute_thresholds(explicit_prior([2, 4, 6], [0.25, 0.5, 0.25]), 3)
        assert t.threshold(1, 3) == pytest.approx(3.5, abs=1e-12)
        assert t.threshold(2, 3) == pytest.approx(4.5, abs=1e-12)

    def test_degenerate_prior_rows_sorted(self):
        t = compute_thresholds(explicit_prior([5], [1.0]), 4)
        for n in range(1, 5):
            row = t.rows[n]
            assert all(row[i] <= row[i + 1] for i in range(n))


class TestTableProperties:
    def test_rows_nondecreasing(self):
        for prior in seeded_prior_family(10):
            t = compute_thresholds(prior, 12)
            for n in range(1, 13):
                row = t.rows[n]
                assert all(row[i] <= row[i + 1] + 1e-12 for i in range(n))

    def test_threshold_monotone_in_stages_for_fixed_deployments(self):
        # with k deployments left, waiting is worth more when more stages remain
        for prior in (poisson_prior(1.0), poisson_prior(2.0), poisson_prior(4.0), BERN):
            t = compute_thresholds(prior, 20)
            for k in (1, 2, 3):
                prev = -INF
                for n in range(k + 1, 21):
                    a = t.threshold(n - k, n)
                    assert a >= prev - 1e-12
                    prev = a

    @given(st.floats(min_value=0.1, max_value=10.0))
    @settings(max_examples=25, deadline=None)
    def test_scale_equivariance(self, gamma):
        base = explicit_prior([0.0, 1.0, 3.0], [0.2, 0.5, 0.3])
        scaled = explicit_prior([gamma * x for x in base.support], base.probs)
        t0 = compute_thresholds(base, 6)
        t1 = compute_thresholds(scaled, 6)
        for n in range(1, 7):
            for i in range(1, n):
                assert t1.threshold(i, n) == pytest.approx(
                    gamma * t0.threshold(i, n), rel=1e-9, abs=1e-12)

    def test_bad_n_max(self):
        with pytest.raises(ValueError):
            compute_thresholds(BERN, 0)


class TestDecide:
    def test_no_deployments_left_skips(self):
        t = compute_thresholds(BERN, 4)
        for n in range(1, 5):
            assert decide(t, 100.0, n, 0) is SKIP

    def test_last_stage_forces_deploy(self):
        t = compute_thresholds(BERN, 4)
        assert decide(t, 0.0, 1, 1) is DEPLOY

    def test_more_deployments_than_stages_forces_deploy(self):
        t = compute_thresholds(BERN, 4)
        assert decide(t, 0.0, 3, 3) is DEPLOY
        assert decide(t, 0.0, 3, 5) is DEPLOY

    def test_bernoulli_two_stage_rule(self):
        t = compute_thresholds(BERN, 2)
        assert decide(t, 1.0, 2, 1) is DEPLOY
        assert decide(t, 0.0, 2, 1) is SKIP

    def test_tie_skips(self):
        t = compute_thresholds(BERN, 2)
        assert decide(t, 0.5, 2, 1) is SKIP

    def test_out_of_range_stage_count(self):
        t = compute_thresholds(BERN, 2)
        with pytest.raises(ValueError):
            decide(t, 1.0, 0, 1)
        with pytest.raises(ValueError):
            decide(t, 1.0, 3, 1)


class TestPolicyValue:
    def test_forced_single_stage(self):
        assert policy_value_single_robot(BERN, 1, 1) == pytest.approx(0.5)

    def test_two_stage_one_deployment(self):
        assert policy_value_single_robot(BERN, 2, 1) == pytest.approx(0.75)

    def test_all_stages_forced(self):
        for prior in (BERN, poisson_prior(3.0)):
            for n in (1, 2, 4):
                assert policy_value_single_robot(prior, n, n) == pytest.approx(
                    n * prior.mean(), abs=1e-9)

    def test_matches_backward_induction(self):
        for prior in seeded_prior_family(6):
            v = dp_value_table(prior, 6, 6)
            for n in range(1, 7):
                for d in range(1, n + 1):
                    assert policy_value_single_robot(prior, n, d) == pytest.approx(
                        v[n][d], abs=1e-9)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            policy_value_single_robot(BERN, 2, 0)
        with pytest.raises(ValueError):
            policy_value_single_robot(BERN, 2, 3)
