# src/cli.py

"""
Command-line interface for Pledgepoint.
Batch front door: experiment files in, traces, summaries, verdicts and
reports out.
"""

import argparse
import json
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from rich.console import Console

from src.config import config
from src.domain import ProjectSpec, SocialNetwork, diameter, net_value
from src.exceptions import ConfigError, CrowdfundingError, UnsupportedMechanismError
from src.logger import ReportLogger
from src.market import LMSR, check_cost_function, check_eppS_liquidity
from src.mechanisms import (LN2, WORST_CASES, MechanismKind, MechanismSpec, desirability_threshold, equilibrium_cap,
                            key_result_condition, key_result_condition_value, q_max_bound, sigma_bound_value,
                            socially_desirable, worst_case_bonus)
from src.oracle import check_psne, check_sgpe
from src.rbf import RbfSpec, rbf_check_conditions
from src.reporter import Reporter, print_bounds, print_summary, print_table1
from src.schema import load_experiment
from src.simulation import RunTrace, replay, run_all, summarize
from src.utils import Utils

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_CONFIG_ERROR = 2

TABLE1_DEFAULTS = {"theta": 3.0, "sigma": 0.4, "h0": 4.0, "B": 1.0, "b": 1.0, "n": 2, "d": 1, "q": 0.0}

# (row, kind, parameters needed, LMSR closed forms)
TABLE1_ROWS = (
    ("PPR", MechanismKind.PPR, ("theta", "h0", "B", "n"), False),
    ("REPP-R", MechanismKind.REPP_R, ("theta", "h0", "B", "sigma", "n", "d"), False),
    ("PPS", MechanismKind.PPS, ("theta", "h0", "b", "n", "q"), False),
    ("REPP-S", MechanismKind.REPP_S, ("theta", "h0", "b", "sigma", "n", "d", "q"), False),
    ("LMSR-PPS", MechanismKind.PPS, ("theta", "h0", "b", "n", "q"), True),
    ("LMSR-REPP-S", MechanismKind.REPP_S, ("theta", "h0", "b", "sigma", "n", "d", "q"), True),
)

AGENT_SETS = {MechanismKind.PPR: "M∩N", MechanismKind.REPP_R: "N", MechanismKind.PPS: "M∩N", MechanismKind.REPP_S: "N"}


def parse_params(items: Optional[Sequence[str]]) -> Dict[str, float]:
    """Parse k=v pairs; without any pair the default parameter set is used."""
    if not items:
        return dict(TABLE1_DEFAULTS)
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or key not in TABLE1_DEFAULTS:
            raise ConfigError(f"bad parameter {item!r}, expected k=v with k in {sorted(TABLE1_DEFAULTS)}")
        try:
            params[key] = int(value) if key in ("n", "d") else float(value)
        except ValueError:
            raise ConfigError(f"parameter {key} needs a number, got {value!r}") from None
    return params


def _table1_spec(kind: MechanismKind, params: Mapping[str, float]) -> MechanismSpec:
    # sigma = 0 reduces a REPP row to its non-referral counterpart
    if kind.uses_referrals and params["sigma"] == 0:
        kind = MechanismKind.PPR if kind is MechanismKind.REPP_R else MechanismKind.PPS
    return MechanismSpec(
        kind=kind,
        project=ProjectSpec(params["h0"], 1.0),
        refund_budget=params["B"] if kind.uses_budget else None,
        cost_function=LMSR(liquidity=params["b"]) if kind.uses_market else None,
        rbf=RbfSpec("tanh", params["sigma"]) if kind.uses_referrals else None,
    )


def table1_rows(params: Mapping[str, float]) -> List[Dict[str, str]]:
    """
    Numeric instantiation of the key-results table, every agent holding the
    same value theta. Values are formatted with six decimals.
    """
    rows = []
    for label, kind, needed, specialize in TABLE1_ROWS:
        row = {"row": label, "contribution": "", "agent_set": AGENT_SETS[kind], "threshold": "",
               "condition": "", "condition_holds": "", "status": "ok"}
        missing = [k for k in needed if k not in params]
        if missing:
            row["status"] = "insufficient params"
            rows.append(row)
            continue
        spec = _table1_spec(kind, params)
        n, d = int(params["n"]), int(params.get("d", 0))
        value = n * params["theta"]
        q = params["q"] if kind.uses_market else None
        _, threshold = desirability_threshold(spec, n, d, specialize)
        condition, holds = key_result_condition_value(spec, value, value, n, d, specialize)
        row.update({
            "contribution": Utils.format_amount(equilibrium_cap(spec, params["theta"], q)),
            "threshold": Utils.format_amount(threshold),
            "condition": condition,
            "condition_holds": Utils.format_amount(holds),
        })
        rows.append(row)
    return rows


def build_bounds(spec: MechanismSpec, network: SocialNetwork) -> Dict:
    """
    Thresholds, sigma bound, worst-case payouts and market bounds of a
    mechanism on a network.

    Raises:
        UnsupportedMechanismError: for PPB, which pays no bonuses
    """
    if spec.kind is MechanismKind.PPB:
        raise UnsupportedMechanismError("no bonus bounds for PPB")
    n, value = network.n, net_value(network.agents)
    d = diameter(network)
    agent_set, threshold = desirability_threshold(spec, n, d)
    label, holds = key_result_condition(spec, network)
    block = {
        "mechanism": spec.to_dict(),
        "n": n,
        "d": d,
        "net_value": value,
        "agent_set": agent_set,
        "threshold": threshold,
        "socially_desirable": socially_desirable(network.agents, threshold),
        "condition": {"label": label, "holds": holds},
    }
    reach = d if spec.kind.uses_referrals else 0
    if spec.kind.uses_referrals:
        block["sigma_bound"] = sigma_bound_value(spec, value, n, d)
        block["worst_case"] = {
            case: worst_case_bonus(spec, n, max(d, 1), case)._asdict() for case in WORST_CASES
        }
    if spec.kind.uses_market:
        block["q_max"] = q_max_bound(spec, n, reach)
        cf = spec.cost_function
        if isinstance(cf, LMSR):
            lhs = spec.h0 + cf.liquidity * LN2 + n * reach * spec.sigma
            block["funding_condition"] = {"lhs": lhs, "rhs": value, "holds": lhs < value}
    return block


class CLIConsole:
    """
    Runs one subcommand. Results go to the output directory through
    ReportLogger; messages and tables go to the terminal through rich.
    """

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.console = Console(quiet=config.QUIET)
        self.errors = Console(stderr=True)

    def out_dir(self, experiment_dir: Optional[str] = None) -> str:
        return self.args.out or experiment_dir or config.OUTPUT_DIR

    def cmd_simulate(self) -> int:
        experiment = load_experiment(self.args.path)
        if not experiment.runs:
            raise ConfigError("experiment has no run blocks")
        logger = ReportLogger(self.out_dir(experiment.output_dir))

        grouped = []
        for block in experiment.runs:
            replicates = self.args.replicates or block.replicates
            cfg = block.to_run_config(self.args.seed)
            grouped.extend(run_all([cfg], replicates))

        if "traces" in experiment.reports:
            for traces in grouped:
                for trace in traces:
                    logger.write_trace(trace)
        summary = summarize(grouped)
        if "summary" in experiment.reports:
            logger.write_summary(summary)
        if "bounds" in experiment.reports:
            self._write_bounds(logger, experiment, "html" in experiment.reports)

        print_summary(summary, self.console)
        self.console.print(f"✅ [green]{len(grouped)} run block(s) written to {logger.out_dir}[/green]")
        return EXIT_OK

    def cmd_verify_equilibrium(self) -> int:
        experiment = load_experiment(self.args.path)
        if not experiment.games:
            raise ConfigError("experiment has no game blocks")
        logger = ReportLogger(self.out_dir(experiment.output_dir))

        verdicts = {}
        for block in experiment.games:
            game = block.to_game()
            profile = block.to_profile(game)
            if profile is None:
                verdicts[block.name] = {
                    "holds": False, "checked": 0, "counterexample": None,
                    "notes": ["no canonical equilibrium: the existence condition fails"],
                }
            elif game.mechanism.kind.is_sequential:
                verdicts[block.name] = check_sgpe(game, profile, block.histories).to_dict()
            else:
                verdicts[block.name] = check_psne(game, profile).to_dict()

            verdict = verdicts[block.name]
            if verdict["holds"]:
                self.console.print(f"✅ [green]{block.name}: equilibrium verified ({verdict['checked']} deviations)[/green]")
            else:
                self.console.print(f"❌ [red]{block.name}: equilibrium rejected[/red]")
                if verdict["counterexample"]:
                    self.console.print(json.dumps(verdict["counterexample"], sort_keys=True))

        logger.write_verdicts(verdicts)
        return EXIT_OK if all(v["holds"] for v in verdicts.values()) else EXIT_VERIFICATION_FAILED

    def _collect_bounds(self, experiment) -> Dict[str, Dict]:
        bounds = {}
        for block in experiment.runs:
            cfg = block.to_run_config(self.args.seed)
            bounds[block.name] = build_bounds(cfg.mechanism, cfg.network)
        for block in experiment.games:
            game = block.to_game()
            bounds[block.name] = build_bounds(game.mechanism, game.network)
        return bounds

    def _write_bounds(self, logger: ReportLogger, experiment, html: bool) -> Dict[str, Dict]:
        bounds = self._collect_bounds(experiment)
        logger.write_bounds(bounds)
        if html:
            logger.write_html("bounds.html", Reporter().render_bounds(bounds))
        return bounds

    def cmd_bounds(self) -> int:
        experiment = load_experiment(self.args.path)
        if not experiment.runs and not experiment.games:
            raise ConfigError("experiment has no mechanism blocks")
        logger = ReportLogger(self.out_dir(experiment.output_dir))
        bounds = self._write_bounds(logger, experiment, "html" in experiment.reports)
        print_bounds(bounds, self.console)
        return EXIT_OK

    def cmd_table1(self) -> int:
        params = parse_params(self.args.params)
        rows = table1_rows(params)
        logger = ReportLogger(self.out_dir())
        logger.write_table1(rows)
        logger.write_html("table1.html", Reporter().render_table1(rows, params))
        print_table1(rows, self.console)
        return EXIT_OK

    def cmd_check_rbf(self) -> int:
        spec = RbfSpec(self.args.family, self.args.cap, self.args.scale)
        report = rbf_check_conditions(spec, self.args.grid_max, self.args.grid_step)
        payload = {"rbf": spec.to_dict(), **report.to_dict()}
        ReportLogger(self.out_dir()).write_check("rbf_check", payload)
        if report.passed:
            self.console.print(f"✅ [green]{spec.family.value} RBF satisfies the conditions[/green]")
            return EXIT_OK
        failed = [k for k in ("zero_at_origin", "increasing", "concave", "bounded", "tight_supremum")
                  if not getattr(report, k)]
        self.console.print(f"❌ [red]RBF conditions fail: {', '.join(failed)}[/red]")
        return EXIT_VERIFICATION_FAILED

    def cmd_check_market(self) -> int:
        cf = LMSR(liquidity=self.args.b)
        grid = np.linspace(0.0, self.args.q_max, self.args.points)
        seed = self.args.seed if self.args.seed is not None else config.DEFAULT_SEED
        report = check_cost_function(cf, grid, seed=seed)
        liquidity = check_eppS_liquidity(cf, self.args.q_max)
        payload = {"market": cf.to_dict(), "q_max": self.args.q_max, "liquidity": liquidity, **report.to_dict()}
        payload["passed"] = report.passed and liquidity
        ReportLogger(self.out_dir()).write_check("market_check", payload)
        if payload["passed"]:
            self.console.print(f"✅ [green]LMSR b={Utils.format_amount(cf.liquidity)} passes the cost-function checks[/green]")
            return EXIT_OK
        self.console.print("❌ [red]cost-function checks failed[/red]")
        return EXIT_VERIFICATION_FAILED

    def cmd_settle(self) -> int:
        try:
            with open(self.args.replay, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read trace {self.args.replay}: {e}") from None
        try:
            trace = RunTrace.from_dict(payload)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed trace {self.args.replay}: {e}") from None

        report = replay(trace)
        identical = report == trace.report
        name = f"settlement_{trace.name}_{trace.replicate}"
        ReportLogger(self.out_dir()).write_check(name, {"holds": identical, "settlement": report.to_dict()})
        if identical:
            self.console.print(f"✅ [green]{trace.name}#{trace.replicate} re-settles identically[/green]")
            return EXIT_OK
        self.console.print(f"❌ [red]{trace.name}#{trace.replicate} settles differently on replay[/red]")
        return EXIT_VERIFICATION_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed overriding the experiment file")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--quiet", action="store_true", help="silence informational messages")
    common.add_argument("--verbose", action="store_true", help="print diagnostic messages")

    parser = argparse.ArgumentParser(prog="pledgepoint", description="Provision point mechanisms for crowdfunding")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the simulation blocks of an experiment")
    p.add_argument("path")
    p.add_argument("--replicates", type=int, default=None)

    p = sub.add_parser("verify-equilibrium", parents=[common], help="check the game blocks with the oracle")
    p.add_argument("path")

    p = sub.add_parser("bounds", parents=[common], help="thresholds, sigma bounds and worst-case payouts")
    p.add_argument("path")

    p = sub.add_parser("table1", parents=[common], help="numeric instantiation of the key-results table")
    p.add_argument("--params", nargs="*", metavar="K=V")

    p = sub.add_parser("check-rbf", parents=[common], help="check the referral bonus function conditions")
    p.add_argument("--family", default="tanh")
    p.add_argument("--cap", type=float, default=0.4)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--grid-max", type=float, default=10.0)
    p.add_argument("--grid-step", type=float, default=0.01)

    p = sub.add_parser("check-market", parents=[common], help="check the LMSR cost-function conditions")
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--q-max", type=float, default=10.0)
    p.add_argument("--points", type=int, default=101)

    p = sub.add_parser("settle", parents=[common], help="re-settle a stored trace")
    p.add_argument("--replay", required=True, metavar="TRACE")
    return parser


COMMANDS = {
    "simulate": CLIConsole.cmd_simulate,
    "verify-equilibrium": CLIConsole.cmd_verify_equilibrium,
    "bounds": CLIConsole.cmd_bounds,
    "table1": CLIConsole.cmd_table1,
    "check-rbf": CLIConsole.cmd_check_rbf,
    "check-market": CLIConsole.cmd_check_market,
    "settle": CLIConsole.cmd_settle,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run the subcommand and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    config.QUIET = args.quiet
    config.VERBOSE_LOGGING = args.verbose and not args.quiet
    cli = CLIConsole(args)
    try:
        return COMMANDS[args.command](cli)
    except CrowdfundingError as e:
        cli.errors.print(f"❌ [bold red]{type(e).__name__}: {e}[/bold red]")
        return EXIT_CONFIG_ERROR
    except KeyboardInterrupt:
        cli.errors.print("\n[bold yellow]Interrupted by the user.[/bold yellow]")
        return EXIT_CONFIG_ERROR
