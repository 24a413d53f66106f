import json
import math
import os
from pathlib import Path

import pytest

from ppmqkd.cli import (CSV_COLUMNS, emit_report, main, read_report_csv, reports_csv,
                        scenario_points)
from ppmqkd.config import (FIG2_N, FIG3_N, ConfigError, config_from_dict, dump_config,
                           load_config, resolve_config_path, shipped_config_path)
from ppmqkd.keyrate import sweep

GOLDEN = Path(__file__).parent / "data" / "keyrate_header.golden"
SHIPPED = ("paper_defaults", "calibrated", "extension")


def test_empty_file_is_a_parse_error(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("   \n")
    with pytest.raises(ConfigError, match="empty"):
        load_config(p)
    p.write_text("[frame\nN = ")
    with pytest.raises(ConfigError, match="parse error"):
        load_config(p)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_load_and_round_trip(tmp_path, name):
    cfg = load_config(shipped_config_path(name))
    out = tmp_path / "rt.toml"
    dump_config(cfg, out)
    again = load_config(out)
    assert again.digest() == cfg.digest()
    assert again.point == cfg.point


def test_defaults_match_the_experiment():
    cfg = config_from_dict({})
    p = cfg.point
    assert p.frame.tau == pytest.approx(1 / 1.26e9)
    assert p.detector.efficiency == 0.18
    assert p.source.mu_ppm == 0.5 and p.source.nu_bin == 0.005 and p.source.p_os == 0.7
    assert cfg.pa.eps_EC == cfg.pa.eps_PA == cfg.pa.eps_bar == 1e-10
    assert p.security.eps_pe == 1e-5 and p.security.m_visibility == 100
    assert p.eps_decoy == 1e-6


def test_decoy_violation_is_named():
    with pytest.raises(ConfigError) as ei:
        config_from_dict({"frame": {"N": 256}})
    assert any(msg.startswith("decoy:") and "nu1 + nu2 < mu" in msg for msg in ei.value.problems)


def test_every_problem_is_reported():
    doc = {"frame": {"N": 6}, "source": {"mu_ppm": -1.0}, "detector": {"split": 1.5, "bogus": 1},
           "channel": {"length_km": -3}, "nonsense": {}}
    with pytest.raises(ConfigError) as ei:
        config_from_dict(doc)
    text = "\n".join(ei.value.problems)
    for needle in ("frame:", "source:", "detector.split", "detector.bogus: unknown key",
                   "channel.length_km", "nonsense: unknown section"):
        assert needle in text


def test_gate_wider_than_bin_rejected():
    with pytest.raises(ConfigError, match="gate_width"):
        config_from_dict({"detector": {"gate_width": 1e-9}})


def test_resolve_shipped_name_and_missing_file():
    assert resolve_config_path("paper_defaults").endswith("paper_defaults.toml")
    with pytest.raises(ConfigError, match="not found"):
        resolve_config_path("no_such_config")


def test_scenarios_expand_in_axis_order():
    cfg = load_config(shipped_config_path("calibrated"))
    fig2 = scenario_points(cfg, "fig2")
    assert [p.N for p in fig2] == list(FIG2_N)
    fig3 = scenario_points(cfg, "fig3")
    assert sorted({p.N for p in fig3}) == list(FIG3_N)
    assert len(fig3) == 3 * 21
    assert [p.length_km for p in fig3[:3]] == [0.0, 5.0, 10.0]
    both = scenario_points(cfg.with_overrides(mode="both"), "fig2")
    assert [p.mode for p in both] == ["analytic"] * 7 + ["montecarlo"] * 7


def test_csv_header_matches_golden_file():
    cfg = load_config(shipped_config_path("calibrated"))
    text = reports_csv(sweep(scenario_points(cfg, "fig2")[:1]))
    assert text.splitlines()[0] + "\n" == GOLDEN.read_text()
    assert ",".join(CSV_COLUMNS) + "\n" == GOLDEN.read_text()


def test_csv_round_trip(tmp_path):
    cfg = load_config(shipped_config_path("calibrated"))
    reps = sweep(scenario_points(cfg, "fig2"))
    csv_path, json_path = emit_report(reps, str(tmp_path), "rt", cfg)
    rows = read_report_csv(csv_path)
    assert len(rows) == len(reps)
    for row, r in zip(rows, reps):
        assert row["N"] == r.N and row["seed"] == r.seed and row["mode"] == r.mode
        for col, val in (("Q_mu", r.Q_mu), ("chi_E", r.chi_E), ("pie", r.pie),
                         ("key_rate_bps", r.R), ("I_AB", r.I_AB)):
            # fixed 9-significant-digit format: exact at that precision
            assert row[col] == float(f"{val:.9g}")
            assert row[col] == pytest.approx(val, rel=5e-9, abs=0.0)
    summary = json.loads(Path(json_path).read_text())
    assert summary["config_hash"] == cfg.digest()
    assert summary["rows"] == len(reps)
    assert [f["N"] for f in summary["failures"]] == [128]


def test_one_report_gives_one_row_and_empty_list_rejected(tmp_path):
    cfg = load_config(shipped_config_path("calibrated"))
    rep = sweep(scenario_points(cfg, "fig2")[:1])
    csv_path, _ = emit_report(rep, str(tmp_path), "one")
    assert len(Path(csv_path).read_text().splitlines()) == 2
    with pytest.raises(ValueError):
        emit_report([], str(tmp_path), "none")


def test_cli_keyrate_ok(tmp_path, capsys):
    assert main(["keyrate", "--config", "calibrated", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "keyrate.csv").exists()
    assert "PIE=" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[frame]\nN = 256\n")
    assert main(["keyrate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "decoy" in capsys.readouterr().err
    assert main(["keyrate", "--config", "missing_file.toml"]) == 2


def test_cli_point_failures_exit_code(tmp_path):
    code = main(["sweep", "--config", "calibrated", "--scenario", "fig2",
                 "--out", str(tmp_path)])
    assert code == 3
    rows = read_report_csv(str(tmp_path / "sweep_fig2.csv"))
    assert [r["N"] for r in rows] == list(FIG2_N)
    assert rows[-1]["error"] and not rows[0]["error"]


def test_cli_sweep_fig3_has_three_curves(tmp_path):
    assert main(["sweep", "--config", "calibrated", "--scenario", "fig3",
                 "--out", str(tmp_path)]) == 0
    rows = read_report_csv(str(tmp_path / "sweep_fig3.csv"))
    assert sorted({r["N"] for r in rows}) == [2, 8, 32]


def test_cli_sweep_identical_seeds_identical_bytes(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / str(k)
        main(["sweep", "--config", "calibrated", "--scenario", "fig3", "--seed", "5",
              "--out", str(d)])
        outs.append((d / "sweep_fig3.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_simulate_with_ledger(tmp_path):
    led = tmp_path / "frames.csv"
    assert main(["simulate", "--config", "paper_defaults", "--frames", "5000",
                 "--out", str(tmp_path), "--ledger", str(led)]) == 0
    out = json.loads((tmp_path / "simulate.json").read_text())
    assert out["frames"] == 5000 and out["n_ase"] + out["n_spdc"] == 5000
    assert led.read_text().startswith("# ppmqkd-ledger v1\n")


def test_cli_decoy_bounds(capsys):
    assert main(["decoy-bounds", "--config", "paper_defaults", "--q-mu", "0.04401251816690009",
                 "--q-nu1", "0.0018", "--q-nu2", "0.0009"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["nu1"] == pytest.approx(0.02) and out["nu2"] == pytest.approx(0.01)
    assert 0 <= out["Y1_low"] <= 1
    assert main(["decoy-bounds", "--config", "paper_defaults", "--q-mu", "0.001",
                 "--q-nu1", "1e-5", "--q-nu2", "1e-5", "--q-nu", "1e-5"]) == 3


def test_cli_holevo(capsys):
    assert main(["holevo", "--config", "calibrated"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert 0.2 <= out["chi"] <= 0.6
    assert main(["holevo", "--config", "calibrated", "--visibility-ratio", "1.0"]) == 0
    assert json.loads(capsys.readouterr().out)["chi"] == pytest.approx(0.0, abs=1e-9)


def test_cli_rejects_bad_workers():
    assert main(["sweep", "--config", "paper_defaults", "--workers", "0"]) == 2


def test_console_script_is_declared():
    text = (Path(__file__).parents[1] / "pyproject.toml").read_text()
    assert 'ppmqkd = "ppmqkd.cli:main"' in text
