"""Campaign runner and CLI entry point.

A campaign is (scenario x model x trials) under a master seed.  The seed
fully determines every output byte: settings come from a dedicated stream,
each trial owns a fixed window of its model stream, and reports carry no
timestamps.  Trials may execute in parallel chunks with identical results.

Outputs: a per-run CSV (``trial,X,Y,A,B,C,D,lambda_tag``) and a summary JSON
with the correlators, CHSH statistics, polytope certificate and assumption
verdicts.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import assumptions as assumptions_mod
from . import inequality
from .models import (
    MODEL_LHV,
    MODEL_NAMES,
    MODEL_TOY,
    LhvOptions,
    RunLog,
    ToyOptions,
    run_trials,
    run_trials_parallel,
)
from .scenario import (
    BRUKNER_EWFS,
    STANDARD_BELL,
    ScenarioSpec,
    SettingsSampler,
    default_scenario,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_OUTPUT = 3

__all__ = [
    "CampaignConfig",
    "CampaignResult",
    "run_campaign",
    "compare_models",
    "format_comparison",
    "config_from_dict",
    "parse_settings_spec",
    "main",
]


@dataclass
class CampaignConfig:
    scenario: ScenarioSpec
    model: str
    seed: int = 0
    k: float = 3.0
    check_assumptions: bool = True
    model_options: object | None = None
    out_dir: Path | None = None
    formats: tuple[str, ...] = ("json", "csv")
    label: str = ""

    def echo(self) -> dict:
        return {
            "scenario": {
                "kind": self.scenario.kind,
                "alice_settings": list(self.scenario.alice_settings),
                "bob_settings": list(self.scenario.bob_settings),
                "trials": self.scenario.trials,
                "friend_axis": self.scenario.friend_axis,
            },
            "model": self.model,
            "seed": self.seed,
            "k": self.k,
            "model_options": _options_echo(self.model_options),
            "label": self.label,
        }


def _options_echo(options) -> dict | None:
    if options is None:
        return None
    if isinstance(options, ToyOptions):
        return {
            "alice_angles": list(options.alice_angles),
            "bob_angles": list(options.bob_angles),
            "theta_after_plus": options.theta_after_plus,
            "theta_after_minus": options.theta_after_minus,
        }
    if isinstance(options, LhvOptions):
        return {"weights": list(options.weights)}
    return {"repr": repr(options)}


@dataclass
class CampaignResult:
    config: CampaignConfig
    log: RunLog
    inequality: inequality.InequalityReport
    assumptions: assumptions_mod.AssumptionReport | None
    report: dict = field(default_factory=dict)


def _report_dict(config: CampaignConfig, log: RunLog, ineq, assum) -> dict:
    table = inequality.tabulate(log)
    e = inequality.expectations(table)
    counts = {}
    expect = {}
    for x in range(2):
        for y in range(2):
            key = f"x{x + 1}y{y + 1}"
            counts[key] = int(e.n[x, y])
            expect[key] = {
                "E": None if math.isnan(e.values[x, y]) else float(e.values[x, y]),
                "SE": None if math.isnan(e.errors[x, y]) else float(e.errors[x, y]),
                "n": int(e.n[x, y]),
            }
    report = {
        "config_echo": config.echo(),
        "per_setting_counts": counts,
        "expectations": expect,
        "verdict": "violated" if ineq.violated else "satisfied",
        "assumptions": None if assum is None else assum.to_dict(),
    }
    report.update(ineq.to_dict())
    return report


def _write_csv(path: Path, log: RunLog) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["trial", "X", "Y", "A", "B", "C", "D", "lambda_tag"])
        for i in range(len(log)):
            rec = log.record(i)
            writer.writerow(
                [
                    rec.trial, rec.x, rec.y, rec.a, rec.b,
                    "" if rec.c is None else rec.c,
                    "" if rec.d is None else rec.d,
                    rec.lam,
                ]
            )


def run_campaign(
    config: CampaignConfig,
    parallel: bool = False,
    chunk_size: int = 100_000,
) -> CampaignResult:
    """Execute every trial, analyse the log, and write any requested files."""
    runner = run_trials_parallel if parallel else run_trials
    kwargs = {"chunk_size": chunk_size} if parallel else {}
    log = runner(
        config.scenario,
        config.model,
        config.seed,
        sampler=SettingsSampler(seed=config.seed),
        options=config.model_options,
        **kwargs,
    )
    ineq = inequality.evaluate(log, k=config.k)
    assum = assumptions_mod.check_all(log, k=config.k) if config.check_assumptions else None
    report = _report_dict(config, log, ineq, assum)
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in config.formats:
            _write_csv(out / "runs.csv", log)
        if "json" in config.formats:
            with (out / "report.json").open("w") as handle:
                json.dump(report, handle, indent=2, sort_keys=True)
                handle.write("\n")
    return CampaignResult(config, log, ineq, assum, report)


def compare_models(configs: list[CampaignConfig]) -> list[dict]:
    """One row per campaign: CHSH statistics plus assumption flags."""
    if len(configs) < 2:
        raise ValueError("comparison needs at least two campaigns")
    rows = []
    for config in configs:
        result = run_campaign(config)
        flags = {}
        if result.assumptions is not None:
            for name in ("aoe_i", "aoe_ii", "aoe_iii", "nsd", "locality"):
                passed = result.assumptions.passed(name)
                flags[name] = "-" if passed is None else ("pass" if passed else "fail")
        rows.append(
            {
                "label": config.label or f"{config.model}@{config.scenario.kind}",
                "model": config.model,
                "scenario": config.scenario.kind,
                "S": result.inequality.s,
                "SE": result.inequality.se,
                "S_max": result.inequality.s_max,
                "violated": result.inequality.violated,
                **flags,
            }
        )
    return rows


def format_comparison(rows: list[dict]) -> str:
    columns = [
        "label", "model", "scenario", "S", "SE", "S_max", "violated",
        "aoe_i", "aoe_ii", "aoe_iii", "nsd", "locality",
    ]
    rendered = [
        {
            col: (
                f"{row[col]:+.4f}"
                if isinstance(row.get(col), float)
                else str(row.get(col, "-"))
            )
            for col in columns
        }
        for row in rows
    ]
    widths = {
        col: max(len(col), *(len(r[col]) for r in rendered)) for col in columns
    }
    lines = [
        "  ".join(col.ljust(widths[col]) for col in columns),
        "  ".join("-" * widths[col] for col in columns),
    ]
    for r in rendered:
        lines.append("  ".join(r[col].ljust(widths[col]) for col in columns))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# config parsing

_ANGLE_RE = re.compile(r"^(?P<sign>-)?(?P<coef>\d+(?:\.\d+)?)?pi(?:/(?P<div>\d+))?$")


def parse_angle(token: str) -> float:
    """Angle token: a float, or pi fractions like 'pi/4', '3pi/4', '-pi/2'."""
    token = token.strip()
    match = _ANGLE_RE.match(token)
    if match:
        value = math.pi * float(match.group("coef") or 1.0)
        if match.group("div"):
            value /= float(match.group("div"))
        return -value if match.group("sign") else value
    return float(token)


def parse_settings_spec(spec: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Parse 'a1,a2:b1,b2' into per-party angle tuples."""
    try:
        alice_part, bob_part = spec.split(":")
        alice = tuple(parse_angle(t) for t in alice_part.split(","))
        bob = tuple(parse_angle(t) for t in bob_part.split(","))
    except ValueError as exc:
        raise ValueError(f"bad settings spec {spec!r}: expected 'a1,a2:b1,b2'") from exc
    if len(alice) < 2 or len(bob) < 2:
        raise ValueError("each party needs at least two settings")
    return alice, bob


def config_from_dict(data: dict) -> CampaignConfig:
    """Build a campaign from a plain config mapping (the --compare format)."""
    kind = data["scenario"]
    trials = int(data.get("trials", 10_000))
    if "alice_settings" in data or "bob_settings" in data:
        scenario = ScenarioSpec(
            kind,
            tuple(data["alice_settings"]),
            tuple(data["bob_settings"]),
            trials,
        )
    else:
        scenario = default_scenario(kind, trials)
    model = data["model"]
    options = None
    raw_options = data.get("model_options")
    if raw_options:
        if model == MODEL_TOY:
            options = ToyOptions(
                alice_angles=tuple(raw_options.get("alice_angles", (0.0, math.pi / 2))),
                bob_angles=tuple(raw_options.get("bob_angles", (0.0, math.pi / 2))),
            )
        elif model == MODEL_LHV:
            options = LhvOptions(weights=tuple(raw_options["weights"]))
        else:
            raise ValueError(f"model {model!r} takes no options")
    return CampaignConfig(
        scenario=scenario,
        model=model,
        seed=int(data.get("seed", 0)),
        k=float(data.get("k", 3.0)),
        check_assumptions=bool(data.get("check_assumptions", True)),
        model_options=options,
        label=str(data.get("label", "")),
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ewfs",
        description="Simulate Bell and extended Wigner's-friend scenarios and "
        "analyse CHSH statistics and assumption compliance.",
    )
    parser.add_argument("--scenario", choices=(STANDARD_BELL, BRUKNER_EWFS))
    parser.add_argument("--model", choices=MODEL_NAMES)
    parser.add_argument("--trials", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--settings",
        help="angle spec 'a1,a2:b1,b2' (bell settings, or toy-theta "
        "superobserver angles in the EWFS); tokens like 'pi/4' are accepted",
    )
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--format", choices=("json", "csv", "both"), default="both")
    parser.add_argument("--check-assumptions", action="store_true")
    parser.add_argument("--compare", type=Path, help="JSON file with a list of campaigns")
    return parser


def _single_config(args) -> CampaignConfig:
    if args.scenario is None or args.model is None:
        raise ValueError("--scenario and --model are required (or use --compare)")
    options = None
    if args.settings:
        alice, bob = parse_settings_spec(args.settings)
        if args.scenario == STANDARD_BELL:
            scenario = ScenarioSpec(args.scenario, alice, bob, args.trials)
        elif args.model == MODEL_TOY:
            scenario = default_scenario(args.scenario, args.trials)
            options = ToyOptions(alice_angles=alice, bob_angles=bob)
        else:
            raise ValueError(
                "--settings applies to bell scenarios or the toy-theta model"
            )
    else:
        scenario = default_scenario(args.scenario, args.trials)
    formats = ("json", "csv") if args.format == "both" else (args.format,)
    return CampaignConfig(
        scenario=scenario,
        model=args.model,
        seed=args.seed,
        check_assumptions=args.check_assumptions,
        model_options=options,
        out_dir=args.out,
        formats=formats,
    )


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.compare:
            with args.compare.open() as handle:
                configs = [config_from_dict(d) for d in json.load(handle)]
            if args.out:
                for config in configs:
                    config.out_dir = args.out / (config.label or config.model)
            rows = compare_models(configs)
            print(format_comparison(rows))
            return EXIT_OK
        config = _single_config(args)
    except (ValueError, KeyError) as exc:
        parser.error(str(exc))  # exits 2
    try:
        result = run_campaign(config)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    ineq = result.inequality
    print(
        f"model={config.model} scenario={config.scenario.kind} "
        f"trials={config.scenario.trials} seed={config.seed}"
    )
    print(
        f"S={ineq.s:+.4f} SE={ineq.se:.4f} S_max={ineq.s_max:+.4f} "
        f"(variant {ineq.s_max_variant}) bound={ineq.bound} verdict={result.report['verdict']}"
    )
    if result.assumptions is not None:
        flags = ", ".join(
            f"{name}={'-' if chk.passed is None else ('pass' if chk.passed else 'fail')}"
            for name, chk in result.assumptions.checks.items()
        )
        print(f"assumptions: {flags}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
