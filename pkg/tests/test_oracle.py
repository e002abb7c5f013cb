# tests/test_oracle.py

import pytest

from src.config import config
from src.domain import AgentProfile, SocialNetwork
from src.exceptions import OracleSizeError, UnsupportedMechanismError, ValidationError
from src.mechanisms import EquilibriumProfile, equilibrium_profile
from src.oracle import (GridGame, MonotonicityContext, check_monotonicity, check_psne, check_sgpe, contains_profile,
                        find_psne, sample_contexts)


def game_on(spec, network, step):
    return GridGame(spec, tuple(network.agents), step)


class TestGridGame:
    def test_step_must_divide_h0(self, make_spec, pair):
        with pytest.raises(ValidationError, match="divide"):
            game_on(make_spec("PPR"), pair, 0.3)

    def test_agent_limit(self, make_spec):
        agents = tuple(AgentProfile(i, 1.0) for i in range(1, 8))
        with pytest.raises(ValidationError, match="at most"):
            GridGame(make_spec("PPR"), agents, 1.0)

    def test_late_arrival_rejected(self, make_spec):
        with pytest.raises(ValidationError, match="deadline"):
            GridGame(make_spec("PPR"), (AgentProfile(1, 1.0, 11.0),), 1.0)

    def test_grid_and_options(self, make_spec, pair):
        game = GridGame(make_spec("REPP_S"), tuple(pair.agents), 1.0, time_step=2.5)
        assert list(game.grid) == [0.0, 1.0, 2.0, 3.0, 4.0]
        assert game.referral_options == (True, False)
        assert game.time_options(pair.agent(2)) == [1.0, 3.5, 6.0, 8.5, 10.0]
        assert game_on(make_spec("PPR"), pair, 1.0).profile_count() == 25

    def test_enumeration_limit(self, make_spec, pair, monkeypatch):
        monkeypatch.setattr(config, "ORACLE_MAX_PROFILES", 10)
        with pytest.raises(OracleSizeError) as err:
            find_psne(game_on(make_spec("PPR"), pair, 0.1))
        assert err.value.count == 41 * 41


class TestPsne:
    def test_ppr_equilibria_are_exactly_the_funded_splits(self, make_spec, pair):
        profiles = find_psne(game_on(make_spec("PPR"), pair, 0.1))
        assert len(profiles) == 9
        assert all(p.funded for p in profiles)
        assert all(p.total == pytest.approx(4.0) for p in profiles)
        firsts = sorted(p.contributions[0] for p in profiles)
        assert firsts[0] == pytest.approx(1.6) and firsts[-1] == pytest.approx(2.4)

    def test_canonical_ppr_profile_is_found(self, make_spec, pair):
        spec = make_spec("PPR")
        profiles = find_psne(game_on(spec, pair, 0.1))
        assert contains_profile(profiles, equilibrium_profile(spec, pair))

    def test_large_budget_leaves_no_funded_equilibrium(self, make_spec, pair):
        profiles = find_psne(game_on(make_spec("PPR", B=3.0), pair, 0.1))
        assert not any(p.funded for p in profiles)

    @pytest.mark.parametrize("sigma", [0.2, 0.4])
    def test_repp_r_canonical_profile_holds(self, make_spec, pair, sigma):
        spec = make_spec("REPP_R", sigma=sigma)
        profile = equilibrium_profile(spec, pair)
        assert profile.contributions == pytest.approx({1: 2.0, 2: 2.0})
        verdict = check_psne(game_on(spec, pair, 0.1), profile)
        assert verdict.holds
        assert verdict.checked == 2 * 41 * 2

    def test_repp_r_above_the_sigma_bound(self, make_spec, pair):
        spec = make_spec("REPP_R", sigma=0.8)
        assert equilibrium_profile(spec, pair) is None
        forced = EquilibriumProfile({1: 2.0, 2: 2.0}, {1: 0.0, 2: 1.0}, {1: frozenset({2}), 2: frozenset({1})})
        verdict = check_psne(game_on(spec, pair, 0.1), forced)
        assert not verdict.holds
        assert verdict.counterexample["agent"] == 1
        assert verdict.counterexample["deviation"]["amount"] < 2.0
        assert verdict.counterexample["gain"] > 0

    def test_sequential_mechanisms_rejected(self, make_spec, pair):
        with pytest.raises(UnsupportedMechanismError):
            find_psne(game_on(make_spec("PPS"), pair, 1.0))

    def test_ppb_has_both_zero_and_funded_equilibria(self, make_spec, pair):
        profiles = find_psne(game_on(make_spec("PPB"), pair, 0.5))
        assert any(p.total == 0.0 and not p.funded for p in profiles)
        funded = [p for p in profiles if p.funded]
        assert funded
        assert all(p.total == pytest.approx(4.0) for p in funded)
        assert all(max(p.contributions) <= 3.0 for p in funded)

    def test_relabeling_agents_permutes_the_equilibria(self, make_spec):
        spec = make_spec("REPP_R", sigma=0.2)
        agents = [AgentProfile(1, 3.0, 0.0, frozenset({2})), AgentProfile(2, 2.5, 1.0, frozenset({1}))]
        swapped = [AgentProfile(1, 2.5, 1.0, frozenset({2})), AgentProfile(2, 3.0, 0.0, frozenset({1}))]

        def outcomes(profiles, flip):
            return sorted(
                (tuple(reversed(p.contributions)) if flip else p.contributions,
                 tuple(reversed(p.refers)) if flip else p.refers)
                for p in profiles
            )

        original = find_psne(GridGame(spec, tuple(agents), 0.5))
        relabeled = find_psne(GridGame(spec, tuple(swapped), 0.5))
        assert original
        assert outcomes(original, False) == outcomes(relabeled, True)


class TestSgpe:
    def test_repp_s_pair(self, make_spec, pair):
        spec = make_spec("REPP_S")
        verdict = check_sgpe(game_on(spec, pair, 0.2), equilibrium_profile(spec, pair))
        assert verdict.holds, verdict.counterexample
        assert verdict.notes == ["histories summarized by (remaining h, outstanding q)"]

    def test_repp_s_path(self, make_spec, path3):
        spec = make_spec("REPP_S", sigma=0.2)
        verdict = check_sgpe(game_on(spec, path3, 0.2), equilibrium_profile(spec, path3))
        assert verdict.holds, verdict.counterexample

    def test_delaying_the_first_mover_is_rejected(self, make_spec, pair):
        spec = make_spec("REPP_S")
        delayed = equilibrium_profile(spec, pair).with_time(1, 10.0)
        verdict = check_sgpe(game_on(spec, pair, 0.2), delayed)
        assert not verdict.holds
        assert verdict.counterexample["agent"] == 1
        assert verdict.counterexample["prescribed"]["time"] == 10.0

    def test_delaying_a_middle_agent_is_rejected(self, make_spec, path3):
        spec = make_spec("REPP_S", sigma=0.2)
        delayed = equilibrium_profile(spec, path3).with_time(2, 10.0)
        verdict = check_sgpe(game_on(spec, path3, 0.2), delayed)
        assert not verdict.holds
        assert verdict.counterexample["agent"] == 2
        assert set(verdict.counterexample["history"]) == {"remaining", "outstanding"}

    def test_all_histories_reach_states_off_the_path(self, make_spec, pair):
        spec = make_spec("REPP_S")
        game = game_on(spec, pair, 0.5)
        profile = equilibrium_profile(spec, pair)
        on_path = check_sgpe(game, profile)
        assert on_path.holds
        verdict = check_sgpe(game, profile, histories="all")
        assert not verdict.holds
        assert verdict.notes[-1] == "all grid histories; off-path agents play min(cap(q), remaining)"
        example = verdict.counterexample
        assert example["agent"] == 2
        assert not example["on_path"]
        assert example["history"]["remaining"] == pytest.approx(4.0)
        assert example["history"]["outstanding"] == pytest.approx(0.0)
        assert example["prescribed"]["amount"] == pytest.approx(1.978497511, abs=1e-9)
        assert example["deviation"]["amount"] > example["prescribed"]["amount"]
        assert example["gain"] > 0

    def test_single_agent_has_only_the_root_history(self, make_spec):
        spec = make_spec("REPP_S", h0=2.0)
        solo = SocialNetwork([AgentProfile(1, 5.0)])
        profile = equilibrium_profile(spec, solo)
        assert profile.contributions[1] == pytest.approx(2.0)
        game = game_on(spec, solo, 0.5)
        path, everything = check_sgpe(game, profile), check_sgpe(game, profile, histories="all")
        assert path.holds and everything.holds
        assert path.checked == everything.checked == 5 * 2 * 2

    def test_unknown_history_mode(self, make_spec, pair):
        spec = make_spec("REPP_S")
        with pytest.raises(ValidationError, match="histories"):
            check_sgpe(game_on(spec, pair, 1.0), equilibrium_profile(spec, pair), histories="some")

    def test_simultaneous_mechanisms_rejected(self, make_spec, pair):
        spec = make_spec("PPR")
        with pytest.raises(UnsupportedMechanismError):
            check_sgpe(game_on(spec, pair, 1.0), equilibrium_profile(spec, pair))


class TestMonotonicity:
    @pytest.mark.parametrize("kind", ["PPR", "REPP_R", "PPS", "REPP_S"])
    def test_refunds_reward_contributing_more(self, make_spec, kind):
        spec = make_spec(kind)
        report = check_monotonicity(spec, sample_contexts(spec, 170, seed=5))
        assert report.points == 1020
        assert report.incentivizing
        assert report.min_slope > 0

    def test_ppb_does_not(self, make_spec):
        spec = make_spec("PPB")
        report = check_monotonicity(spec, sample_contexts(spec, 20, seed=5))
        assert not report.incentivizing
        assert report.max_slope == 0.0

    def test_markets_keep_selling_more_than_one_security_per_unit(self, make_spec):
        for kind in ["PPS", "REPP_S"]:
            report = check_monotonicity(make_spec(kind), [MonotonicityContext(0.5)], n=2, d=1)
            assert report.marginal_at_q_max > 1.0
        assert check_monotonicity(make_spec("PPR"), [MonotonicityContext(0.5)]).marginal_at_q_max is None

    def test_funding_states_are_skipped(self, make_spec):
        report = check_monotonicity(make_spec("PPR"), [MonotonicityContext(3.9)], grid=[0.2])
        assert report.points == 0
        assert not report.incentivizing

    def test_contexts_are_seeded(self, make_spec):
        spec = make_spec("REPP_R")
        assert sample_contexts(spec, 5, seed=1) == sample_contexts(spec, 5, seed=1)
        assert all(c.referred == 0.0 for c in sample_contexts(make_spec("PPS"), 5))
