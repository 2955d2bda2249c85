import csv
import json
import math
from pathlib import Path

import pytest

from ewfs.harness import (
    EXIT_OK,
    EXIT_OUTPUT,
    CampaignConfig,
    compare_models,
    config_from_dict,
    format_comparison,
    main,
    parse_angle,
    parse_settings_spec,
    run_campaign,
)
from ewfs.models import MODEL_COLLAPSE, MODEL_LHV, MODEL_TOY, LhvOptions, ToyOptions
from ewfs.scenario import BRUKNER_EWFS, STANDARD_BELL, default_scenario


# --- parsing ---------------------------------------------------------------


@pytest.mark.parametrize(
    "token,expected",
    [
        ("pi/4", math.pi / 4),
        ("3pi/4", 3 * math.pi / 4),
        ("-pi/2", -math.pi / 2),
        ("2pi", 2 * math.pi),
        ("pi", math.pi),
        ("0.75", 0.75),
        ("1.5pi/3", 1.5 * math.pi / 3),
    ],
)
def test_parse_angle(token, expected):
    assert parse_angle(token) == pytest.approx(expected)


def test_parse_settings_spec():
    alice, bob = parse_settings_spec("0,pi/2:pi/4,3pi/4")
    assert alice == pytest.approx((0.0, math.pi / 2))
    assert bob == pytest.approx((math.pi / 4, 3 * math.pi / 4))
    with pytest.raises(ValueError):
        parse_settings_spec("0,1")
    with pytest.raises(ValueError):
        parse_settings_spec("0:1,2")


def test_config_from_dict_builds_options():
    toy = config_from_dict(
        {
            "scenario": "ewfs",
            "model": "toy-theta",
            "trials": 500,
            "model_options": {"bob_angles": [0.0, 1.0]},
            "label": "t",
        }
    )
    assert isinstance(toy.model_options, ToyOptions)
    assert toy.model_options.bob_angles == (0.0, 1.0)
    lhv = config_from_dict(
        {
            "scenario": "bell",
            "model": "lhv",
            "model_options": {"weights": [1.0 / 16] * 16},
        }
    )
    assert isinstance(lhv.model_options, LhvOptions)
    with pytest.raises(ValueError):
        config_from_dict(
            {"scenario": "bell", "model": "collapse", "model_options": {"x": 1}}
        )


# --- campaign execution and report schema ----------------------------------


def test_run_campaign_writes_report_and_csv(tmp_path):
    config = CampaignConfig(
        scenario=default_scenario(BRUKNER_EWFS, 2_000),
        model=MODEL_LHV,
        seed=5,
        out_dir=tmp_path,
    )
    result = run_campaign(config)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report == result.report
    assert report["config_echo"]["seed"] == 5
    assert report["config_echo"]["scenario"]["kind"] == "ewfs"
    assert set(report["per_setting_counts"]) == {"x1y1", "x1y2", "x2y1", "x2y2"}
    assert sum(report["per_setting_counts"].values()) == 2_000
    for cell in report["expectations"].values():
        assert {"E", "SE", "n"} <= set(cell)
    assert report["verdict"] == "satisfied"
    assert report["certificate"]["member"] is True
    assert report["assumptions"]["aoe_ii"]["passed"] is True

    with (tmp_path / "runs.csv").open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["trial", "X", "Y", "A", "B", "C", "D", "lambda_tag"]
    assert len(rows) == 2_001
    first = result.log.record(0)
    assert rows[1][:5] == [str(v) for v in
                           (first.trial, first.x, first.y, first.a, first.b)]


def test_csv_leaves_undefined_outcomes_blank(tmp_path):
    config = CampaignConfig(
        scenario=default_scenario(BRUKNER_EWFS, 300),
        model="unitary-qm",
        out_dir=tmp_path,
        check_assumptions=False,
    )
    result = run_campaign(config)
    with (tmp_path / "runs.csv").open() as handle:
        rows = list(csv.reader(handle))[1:]
    for row, x in zip(rows, result.log.x):
        assert (row[5] == "") == (x == 2)


def test_format_selection(tmp_path):
    config = CampaignConfig(
        scenario=default_scenario(BRUKNER_EWFS, 200),
        model=MODEL_LHV,
        out_dir=tmp_path,
        formats=("json",),
        check_assumptions=False,
    )
    run_campaign(config)
    assert (tmp_path / "report.json").exists()
    assert not (tmp_path / "runs.csv").exists()


def test_compare_models_rows_and_formatting():
    base = dict(scenario=default_scenario(BRUKNER_EWFS, 3_000))
    rows = compare_models(
        [
            CampaignConfig(model=MODEL_LHV, label="local", **base),
            CampaignConfig(model=MODEL_COLLAPSE, label="objective", **base),
        ]
    )
    assert [r["label"] for r in rows] == ["local", "objective"]
    assert all("aoe_ii" in r for r in rows)
    text = format_comparison(rows)
    assert "local" in text and "S_max" in text
    with pytest.raises(ValueError):
        compare_models([CampaignConfig(model=MODEL_LHV, **base)])


# --- CLI -------------------------------------------------------------------


def test_cli_basic_run(tmp_path, capsys):
    code = main(
        [
            "--scenario", "ewfs", "--model", "lhv", "--trials", "1000",
            "--seed", "1", "--out", str(tmp_path), "--check-assumptions",
        ]
    )
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "S_max" in out and "assumptions:" in out
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "runs.csv").exists()


def test_cli_settings_flag_for_bell(tmp_path, capsys):
    code = main(
        [
            "--scenario", "bell", "--model", "collapse", "--trials", "500",
            "--settings", "0,pi/2:pi/4,3pi/4",
        ]
    )
    assert code == EXIT_OK
    assert "scenario=bell" in capsys.readouterr().out


def test_cli_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--scenario", "ewfs"])  # missing --model
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["--scenario", "ewfs", "--model", "nope"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        # --settings is meaningless for a non-toy EWFS model
        main(["--scenario", "ewfs", "--model", "collapse", "--settings", "0,1:0,1"])
    assert exc.value.code == 2


def test_cli_unwritable_output_exits_3(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(
        [
            "--scenario", "ewfs", "--model", "lhv", "--trials", "100",
            "--out", str(blocker / "sub"),
        ]
    )
    assert code == EXIT_OUTPUT
    assert "cannot write" in capsys.readouterr().err


def test_cli_compare(tmp_path, capsys):
    campaigns = [
        {"scenario": "ewfs", "model": "lhv", "trials": 2000, "label": "local"},
        {"scenario": "ewfs", "model": "collapse", "trials": 2000, "label": "collapse"},
    ]
    path = tmp_path / "campaigns.json"
    path.write_text(json.dumps(campaigns))
    code = main(["--compare", str(path)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "local" in out and "collapse" in out and "S_max" in out
