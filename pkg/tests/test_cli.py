# tests/test_cli.py

import csv
import json
import math

import pytest

from src.cli import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_VERIFICATION_FAILED, main, parse_params, table1_rows
from src.exceptions import ConfigError

PAIR = [
    {"id": 1, "theta": 3.0, "arrival": 0.0, "neighbors": [2]},
    {"id": 2, "theta": 3.0, "arrival": 1.0, "neighbors": [1]},
]


def write_experiment(tmp_path, runs=(), games=(), **extra):
    path = tmp_path / "experiment.json"
    payload = {"version": "1", "runs": list(runs), "games": list(games), **extra}
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return str(path)


def run_block(name="ppr_pair", mechanism=None, **extra):
    return {
        "name": name,
        "mechanism": mechanism or {"kind": "PPR", "h0": 4.0, "T": 10.0, "B": 1.0},
        "network": {"agents": PAIR},
        "initial_aware": [1, 2],
        **extra,
    }


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


class TestTable1:
    GOLDEN = {
        "PPR": ("2.400000", "5.000000", "B ∈ (0, 2.000000)"),
        "REPP-R": ("2.080000", "5.800000", "B ∈ (0, 1.200000)"),
        "PPS": ("2.355440", "4.683947", "dr/dx > 1 at q_max=4.683947"),
        "REPP-S": ("1.978498", "5.483947", "dr/dx > 1 at q_max=5.483947"),
        "LMSR-PPS": ("2.355440", "4.693147", "b ∈ (0, 2.885390)"),
        "LMSR-REPP-S": ("1.978498", "5.493147", "b ∈ (0, 1.731234)"),
    }

    def test_default_parameters(self, tmp_path):
        assert main(["table1", "--quiet", "--out", str(tmp_path)]) == EXIT_OK
        rows = read_csv(tmp_path / "table1.csv")
        assert [r["row"] for r in rows] == list(self.GOLDEN)
        for row in rows:
            contribution, threshold, condition = self.GOLDEN[row["row"]]
            assert row["contribution"] == contribution
            assert row["threshold"] == threshold
            assert row["condition"] == condition
            assert row["condition_holds"] == "true"
            assert row["status"] == "ok"
        html = (tmp_path / "table1.html").read_text(encoding="utf-8")
        assert all(name in html for name in self.GOLDEN)
        assert "table1 | table1.csv" in (tmp_path / "actions.log").read_text(encoding="utf-8")

    def test_partial_parameters(self):
        rows = {r["row"]: r for r in table1_rows(parse_params(["theta=3", "h0=4", "B=1", "n=2"]))}
        assert rows["PPR"]["status"] == "ok"
        assert rows["PPR"]["contribution"] == "2.400000"
        assert rows["REPP-R"]["status"] == "insufficient params"
        assert rows["PPS"]["status"] == "insufficient params"
        assert rows["REPP-R"]["contribution"] == ""

    def test_zero_sigma_reduces_to_plain_refunds(self):
        params = parse_params(["theta=3", "sigma=0", "h0=4", "B=1", "b=1", "n=2", "d=1", "q=0"])
        rows = {r["row"]: r for r in table1_rows(params)}
        assert rows["REPP-R"]["contribution"] == rows["PPR"]["contribution"]
        assert rows["REPP-R"]["threshold"] == rows["PPR"]["threshold"]
        assert rows["REPP-S"]["contribution"] == rows["PPS"]["contribution"]

    def test_low_values_contribute_nothing_under_referrals(self):
        params = parse_params(["theta=0.3", "sigma=0.4", "h0=4", "B=1", "b=1", "n=2", "d=1", "q=0"])
        rows = {r["row"]: r for r in table1_rows(params)}
        assert rows["REPP-R"]["contribution"] == "0.000000"
        assert rows["REPP-S"]["contribution"] == "0.000000"
        assert rows["PPR"]["condition_holds"] == "false"

    def test_bad_parameters(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_params(["alpha=1"])
        with pytest.raises(ConfigError):
            parse_params(["theta=high"])
        assert main(["table1", "--quiet", "--out", str(tmp_path), "--params", "theta"]) == EXIT_CONFIG_ERROR


class TestSimulate:
    def test_pair_is_funded(self, tmp_path):
        path = write_experiment(tmp_path, runs=[run_block()])
        out = tmp_path / "out"
        assert main(["simulate", path, "--quiet", "--out", str(out)]) == EXIT_OK
        (row,) = read_csv(out / "summary.csv")
        assert row["name"] == "ppr_pair"
        assert row["funded"] == "true"
        assert row["equilibrium_exists"] == "true"
        assert row["mean_chi"] == "4.000000"
        trace = read_json(out / "trace_ppr_pair_0.json")
        assert trace["settlement"]["funded"] is True

    def test_reruns_are_byte_identical(self, tmp_path):
        network = {"random": {"n": 10, "p": 0.2}}
        mechanism = {"kind": "REPP_S", "h0": 6.0, "T": 10.0, "market": {"b": 1.0}, "rbf": {"cap": 0.2}}
        path = write_experiment(tmp_path, runs=[run_block("rand", mechanism, initial_aware=[1])])
        payload = read_json(path)
        payload["runs"][0]["network"] = network
        (tmp_path / "experiment.json").write_text(json.dumps(payload), encoding="utf-8")

        first, second = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", path, "--quiet", "--seed", "7", "--out", str(first)]) == EXIT_OK
        assert main(["simulate", path, "--quiet", "--seed", "7", "--out", str(second)]) == EXIT_OK
        for name in ("summary.csv", "trace_rand_0.json", "actions.log"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_replicates_flag(self, tmp_path):
        path = write_experiment(tmp_path, runs=[run_block()])
        assert main(["simulate", path, "--quiet", "--replicates", "3", "--out", str(tmp_path / "out")]) == EXIT_OK
        (row,) = read_csv(tmp_path / "out" / "summary.csv")
        assert row["replicates"] == "3"
        assert (tmp_path / "out" / "trace_ppr_pair_2.json").exists()

    def test_sigma_above_the_bound(self, tmp_path):
        mechanism = {"kind": "REPP_R", "h0": 4.0, "T": 10.0, "B": 1.0, "rbf": {"cap": 0.8}}
        path = write_experiment(tmp_path, runs=[run_block("high", mechanism, initial_aware=[1])])
        assert main(["simulate", path, "--quiet", "--out", str(tmp_path / "out")]) == EXIT_OK
        (row,) = read_csv(tmp_path / "out" / "summary.csv")
        assert row["equilibrium_exists"] == "false"

    def test_invalid_experiment(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"version": "1", "runs": [}', encoding="utf-8")
        assert main(["simulate", str(path), "--quiet", "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR

    def test_experiment_without_runs(self, tmp_path):
        path = write_experiment(tmp_path)
        assert main(["simulate", path, "--quiet", "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR


class TestBounds:
    def test_repp_r_pair(self, tmp_path):
        mechanism = {"kind": "REPP_R", "h0": 4.0, "T": 10.0, "B": 1.0, "rbf": {"cap": 0.4}}
        path = write_experiment(tmp_path, runs=[run_block("r", mechanism)], reports=["summary", "html"])
        assert main(["bounds", path, "--quiet", "--out", str(tmp_path / "out")]) == EXIT_OK
        block = read_json(tmp_path / "out" / "bounds.json")["r"]
        assert block["threshold"] == pytest.approx(5.8)
        assert block["sigma_bound"] == pytest.approx(0.5)
        assert block["worst_case"]["chain_per_contributor"]["bound"] == pytest.approx(0.8)
        assert block["socially_desirable"] is True
        assert block["condition"]["holds"] is True
        assert (tmp_path / "out" / "bounds.html").exists()

    def test_lmsr_repp_s_security_bound(self, tmp_path):
        mechanism = {"kind": "REPP_S", "h0": 4.0, "T": 10.0, "market": {"b": 1.0}, "rbf": {"cap": 0.4}}
        path = write_experiment(tmp_path, runs=[run_block("s", mechanism)])
        assert main(["bounds", path, "--quiet", "--out", str(tmp_path / "out")]) == EXIT_OK
        block = read_json(tmp_path / "out" / "bounds.json")["s"]
        assert block["q_max"] == pytest.approx(math.log(2 * math.exp(4) - 1) + 0.8, abs=1e-9)
        assert block["funding_condition"]["lhs"] == pytest.approx(4 + math.log(2) + 0.8)
        assert block["funding_condition"]["holds"] is True

    def test_ppb_has_no_bounds(self, tmp_path):
        mechanism = {"kind": "PPB", "h0": 4.0, "T": 10.0}
        path = write_experiment(tmp_path, runs=[run_block("b", mechanism)])
        assert main(["bounds", path, "--quiet", "--out", str(tmp_path / "out")]) == EXIT_CONFIG_ERROR


class TestVerifyEquilibrium:
    def game(self, name, mechanism, **extra):
        return {"name": name, "mechanism": mechanism, "agents": PAIR, "contribution_step": 0.5, **extra}

    def test_canonical_profile_holds(self, tmp_path):
        mechanism = {"kind": "REPP_R", "h0": 4.0, "T": 10.0, "B": 1.0, "rbf": {"cap": 0.4}}
        path = write_experiment(tmp_path, games=[self.game("g", mechanism)])
        assert main(["verify-equilibrium", path, "--quiet", "--out", str(tmp_path / "out")]) == EXIT_OK
        verdict = read_json(tmp_path / "out" / "verdict.json")["g"]
        assert verdict["holds"] is True
        assert verdict["counterexample"] is None

    def test_delayed_contribution_is_rejected(self, tmp_path):
        mechanism = {"kind": "REPP_S", "h0": 4.0, "T": 10.0, "market": {"b": 1.0}, "rbf": {"cap": 0.4}}
        path = write_experiment(tmp_path, games=[self.game("late", mechanism, delays={"1": 10.0})])
        assert main(["verify-equilibrium", path, "--quiet", "--out", str(tmp_path / "out")]) == EXIT_VERIFICATION_FAILED
        verdict = read_json(tmp_path / "out" / "verdict.json")["late"]
        assert verdict["holds"] is False
        assert verdict["counterexample"]["agent"] == 1

    def test_missing_equilibrium_is_reported(self, tmp_path):
        mechanism = {"kind": "REPP_R", "h0": 4.0, "T": 10.0, "B": 1.0, "rbf": {"cap": 0.8}}
        path = write_experiment(tmp_path, games=[self.game("none", mechanism)])
        assert main(["verify-equilibrium", path, "--quiet", "--out", str(tmp_path / "out")]) == EXIT_VERIFICATION_FAILED
        verdict = read_json(tmp_path / "out" / "verdict.json")["none"]
        assert verdict["checked"] == 0
        assert "verdict | verdict.json | failed: none" in (tmp_path / "out" / "actions.log").read_text(encoding="utf-8")


class TestChecks:
    def test_check_rbf(self, tmp_path):
        assert main(["check-rbf", "--quiet", "--out", str(tmp_path)]) == EXIT_OK
        assert read_json(tmp_path / "rbf_check.json")["passed"] is True

    def test_check_rbf_rejects_a_bad_cap(self, tmp_path):
        assert main(["check-rbf", "--quiet", "--cap", "-1", "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR

    def test_check_market(self, tmp_path):
        assert main(["check-market", "--quiet", "--b", "2", "--out", str(tmp_path)]) == EXIT_OK
        payload = read_json(tmp_path / "market_check.json")
        assert payload["passed"] is True
        assert payload["liquidity"] is True

    def test_settle_replays_a_trace(self, tmp_path):
        path = write_experiment(tmp_path, runs=[run_block()])
        out = tmp_path / "out"
        assert main(["simulate", path, "--quiet", "--out", str(out)]) == EXIT_OK
        trace = str(out / "trace_ppr_pair_0.json")
        assert main(["settle", "--quiet", "--replay", trace, "--out", str(tmp_path / "settle")]) == EXIT_OK
        assert read_json(tmp_path / "settle" / "settlement_ppr_pair_0.json")["holds"] is True

    def test_settle_rejects_a_missing_trace(self, tmp_path):
        missing = str(tmp_path / "absent.json")
        assert main(["settle", "--quiet", "--replay", missing, "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR
