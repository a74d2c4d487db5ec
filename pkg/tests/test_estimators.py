import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rachsim.estimators import (
    BacklogEstimate,
    DAState,
    EstimationError,
    da_update,
    mle_estimate,
    mle_outcome_distribution,
    mom_closed_form,
    mom_full,
)
from rachsim.rng import RngStream
from rachsim.sim import ControlAction, Device, Observation, expected_moments, run_frame

from oracles import exhaustive_outcome_distribution


def obs_of(idle, success, collision, p=1.0, r=None, w=0):
    r = r if r is not None else idle + success + collision
    action = ControlAction(acb_factor=p, backoff_window=w, num_channels=r)
    return Observation(frame=0, idle=idle, success=success, collision=collision, action=action)


class TestBacklogEstimate:
    def test_rejects_negative_and_nonfinite(self):
        with pytest.raises(ValueError):
            BacklogEstimate(-1.0, "MLE")
        with pytest.raises(ValueError):
            BacklogEstimate(float("nan"), "MLE")
        with pytest.raises(ValueError):
            BacklogEstimate(1.0, "magic")


class TestDriftAnalysis:
    def test_documented_recursion_case(self):
        # oracle: recompute from the published recursion pieces
        state = DAState(100.0, 2.39, 15.0)
        obs = obs_of(idle=18, success=20, collision=16, p=0.5, r=54)
        _, _, e_coll = expected_moments(100.0 * 0.5, 54)
        expected = max(0.0, 100.0 - 20) + 15.0 + 2.39 * (16 - e_coll)
        new = da_update(state, obs)
        assert new.current_estimate == pytest.approx(expected, abs=1e-12)
        assert e_coll == pytest.approx(12.78, abs=0.01)
        assert new.current_estimate == pytest.approx(102.7, abs=0.1)

    def test_zero_fixed_point(self):
        state = DAState(0.0, 2.39, 0.0)
        obs = obs_of(idle=54, success=0, collision=0, p=1.0)
        assert da_update(state, obs).current_estimate == 0.0

    def test_pure_bookkeeping_when_collisions_match(self):
        state = DAState(80.0, 2.39, 7.0)
        _, _, e_coll = expected_moments(80.0 * 0.5, 54)
        matched = int(round(e_coll))
        # tweak the previous estimate so the expectation is integral
        lo, hi = 60.0, 100.0
        for _ in range(80):  # bisect on the expected-collision curve
            mid = (lo + hi) / 2
            _, _, ec = expected_moments(mid * 0.5, 54)
            if ec < matched:
                lo = mid
            else:
                hi = mid
        state = DAState(lo, 2.39, 7.0)
        obs = obs_of(idle=54 - 10 - matched, success=10, collision=matched, p=0.5, r=54)
        new = da_update(state, obs)
        assert new.current_estimate == pytest.approx(lo - 10 + 7.0, abs=1e-6)

    def test_never_negative(self):
        state = DAState(1.0, 2.39, 0.0)
        obs = obs_of(idle=53, success=1, collision=0, p=1.0)
        assert da_update(state, obs).current_estimate >= 0.0

    def test_state_validation(self):
        with pytest.raises(ValueError):
            DAState(-1.0)
        with pytest.raises(ValueError):
            DAState(1.0, drift_coefficient=0.0)


class TestMomClosedForm:
    def test_all_idle_gives_zero(self):
        assert mom_closed_form(obs_of(54, 0, 0)).value == 0.0

    def test_log_formula(self):
        est = mom_closed_form(obs_of(20, 20, 14))
        assert est.value == pytest.approx(math.log(20 / 54) / math.log(53 / 54))
        assert est.value == pytest.approx(53.1, abs=0.1)
        assert not est.saturated

    def test_debarred_by_p(self):
        est = mom_closed_form(obs_of(20, 20, 14, p=0.5))
        assert est.value == pytest.approx(2 * math.log(20 / 54) / math.log(53 / 54))
        assert est.value == pytest.approx(106.3, abs=0.1)

    def test_saturated_fallback(self):
        est = mom_closed_form(obs_of(0, 10, 44))
        assert est.saturated
        assert est.value == pytest.approx(math.log(0.5 / 54) / math.log(53 / 54))

    def test_needs_two_channels(self):
        with pytest.raises(EstimationError):
            mom_closed_form(obs_of(1, 0, 0, r=1))

    def test_inverse_of_idle_moment(self):
        for idle in range(1, 54):
            m = mom_closed_form(obs_of(idle, 0, 54 - idle)).value
            e_idle, _, _ = expected_moments(m, 54)
            assert e_idle == pytest.approx(idle, abs=1e-9)


class TestMomFull:
    def test_recovers_expected_observations(self):
        # rounding the expected counts to integers can legitimately move the
        # discrepancy argmin by one (it does at m=50), so compare against an
        # independent scan of the discrepancy and require closeness to m*
        for true_m in (5, 50):
            e_idle, e_succ, _ = expected_moments(true_m, 54)
            idle, succ = int(round(e_idle)), int(round(e_succ))
            coll = 54 - idle - succ
            obs = obs_of(idle, succ, coll)
            best, best_d = None, None
            for m in range(succ, 541):
                e = expected_moments(m, 54)
                d = (e[0] - idle) ** 2 + (e[1] - succ) ** 2 + (e[2] - coll) ** 2
                if best_d is None or d < best_d:
                    best, best_d = m, d
            got = mom_full(obs, 540).value
            assert got == best
            assert abs(got - true_m) <= 1

    def test_all_idle(self):
        assert mom_full(obs_of(54, 0, 0), 540).value == 0.0

    def test_matches_exhaustive_scan_oracle(self):
        # every observation reachable by placing m <= 8 balls in 4 bins
        r = 4
        seen = set()
        for m in range(9):
            for key in exhaustive_outcome_distribution(m, r):
                seen.add(key)
        for idle, succ in sorted(seen):
            obs = obs_of(idle, succ, r - idle - succ)
            best, best_d = None, None
            for m in range(succ, 41):
                e = expected_moments(m, r)
                d = (e[0] - idle) ** 2 + (e[1] - succ) ** 2 + (e[2] - (r - idle - succ)) ** 2
                if best_d is None or d < best_d:
                    best, best_d = m, d
            assert mom_full(obs, 40).value == best

    def test_search_max_below_successes_rejected(self):
        with pytest.raises(EstimationError):
            mom_full(obs_of(34, 20, 0), search_max=10)


class TestMleDistribution:
    def test_two_on_two(self):
        dist = mle_outcome_distribution(2, 2)
        assert dist == {(1, 0): pytest.approx(0.5), (0, 2): pytest.approx(0.5)}

    def test_zero_devices(self):
        assert mle_outcome_distribution(0, 7) == {(7, 0): pytest.approx(1.0)}

    def test_three_on_two(self):
        dist = mle_outcome_distribution(3, 2)
        assert dist == {(1, 0): pytest.approx(0.25), (0, 1): pytest.approx(0.75)}

    def test_matches_exhaustive_enumeration(self):
        for r in range(1, 5):
            for m in range(7):
                dist = mle_outcome_distribution(m, r)
                oracle = exhaustive_outcome_distribution(m, r)
                assert set(dist) == set(oracle)
                for key in oracle:
                    assert dist[key] == pytest.approx(oracle[key], abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=50), st.integers(min_value=1, max_value=8))
    def test_sums_to_one(self, m, r):
        dist = mle_outcome_distribution(m, r)
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)

    def test_caps_enforced(self):
        with pytest.raises(ValueError):
            mle_outcome_distribution(301, 8)
        with pytest.raises(ValueError):
            mle_outcome_distribution(4, 0)


class TestMleEstimate:
    def test_matches_exhaustive_scan(self):
        obs = obs_of(1, 0, 1, r=2)
        likelihoods = {
            m: exhaustive_outcome_distribution(m, 2).get((1, 0), 0.0) for m in range(2, 11)
        }
        oracle = min(m for m, lik in likelihoods.items() if lik == max(likelihoods.values()))
        assert mle_estimate(obs, 10).value == oracle

    def test_all_idle_gives_zero(self):
        assert mle_estimate(obs_of(54, 0, 0), 300).value == 0.0

    def test_debar(self):
        full = mle_estimate(obs_of(20, 20, 14, p=1.0), 300).value
        half = mle_estimate(obs_of(20, 20, 14, p=0.5), 300).value
        assert half == pytest.approx(2 * full)

    def test_lower_bound_above_search_rejected(self):
        with pytest.raises(EstimationError):
            mle_estimate(obs_of(0, 0, 54), search_max=50)

    def test_beats_closed_form_at_small_scale(self):
        # R=4, true m=6: MLE should track at least as well as idle matching
        rng = RngStream(42)
        action = ControlAction(1.0, 0, 4)
        mle_err = []
        mom_err = []
        for _ in range(10_000):
            devices = [Device(id=k, arrival_frame=0) for k in range(6)]
            report, _ = run_frame(devices, action, 10, rng)
            obs = report.observation
            mle_err.append(abs(mle_estimate(obs, 60).value - 6))
            mom_err.append(abs(mom_closed_form(obs).value - 6))
        assert np.mean(mle_err) <= np.mean(mom_err)


class TestMonotonicity:
    def test_fewer_idle_never_decreases_estimates(self):
        # shift channels from idle to collision at fixed success count
        values = {"mom_idle": [], "mom_full": [], "mle": []}
        for idle in range(54, -1, -1):
            obs = obs_of(idle, 0, 54 - idle)
            values["mom_idle"].append(mom_closed_form(obs).value)
            values["mom_full"].append(mom_full(obs, 540).value)
            values["mle"].append(mle_estimate(obs, 300).value)
        for name, series in values.items():
            diffs = np.diff(series)
            assert (diffs >= -1e-9).all(), name

    def test_da_monotone_in_collisions(self):
        state = DAState(50.0, 2.39, 5.0)
        low = da_update(state, obs_of(30, 14, 10, p=1.0)).current_estimate
        high = da_update(state, obs_of(26, 14, 14, p=1.0)).current_estimate
        assert high > low


def test_estimators_are_pure():
    obs = obs_of(20, 20, 14, p=0.5)
    assert mom_full(obs, 540) == mom_full(obs, 540)
    assert mle_estimate(obs, 300) == mle_estimate(obs, 300)
    assert mom_closed_form(obs) == mom_closed_form(obs)
