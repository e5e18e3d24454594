import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import sentkit as sk
from sentkit import cli
from sentkit.errors import SchemaViolation
from sentkit.io import read_panel_csv
from sentkit.manifest import MANIFEST_NAME, load_manifest, sha256_file


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def _sim_config(tmp_path, extra="", stages='["simulate", "shocks", "irf", "fit"]',
                seed="seed = 7"):
    return _write(tmp_path / "run.toml", f"""
{seed}
out = "{(tmp_path / 'out').as_posix()}"
stages = {stages}

[simulate]
kappa_bps = 1.06
rho = 0.94
T = 180
start_month = "1990-01"
burn_in = 60
{extra}
""")


def _panel_csv(tmp_path, n_firms=8, n_months=15, name="panel.csv"):
    rng = np.random.default_rng(3)
    rows = []
    for i in range(n_firms):
        for t in range(n_months):
            rows.append({
                "firm_id": f"F{i:02d}",
                "month": sk.month_label(24000 + t),
                "ret": rng.normal(0, 0.04),
                "sig": rng.normal(),
                "me": float(1 + i),
            })
    path = tmp_path / name
    pd.DataFrame(rows).to_csv(path, index=False)
    return path


# --- config validation: every rejection must exit 2 --------------------------------

def test_unknown_top_level_key_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.toml", 'sede = 42\nstages = ["irf"]\n')
    assert cli.main(["pipeline", "--config", str(cfg)]) == 2
    assert "sede" in capsys.readouterr().err


def test_unknown_stage_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.toml", 'seed = 1\nstages = ["simulate", "warp"]\n')
    assert cli.main(["pipeline", "--config", str(cfg)]) == 2
    assert "warp" in capsys.readouterr().err


def test_missing_seed_for_stochastic_stage_exits_2(tmp_path, capsys):
    cfg = _sim_config(tmp_path, seed="")
    assert cli.main(["pipeline", "--config", str(cfg)]) == 2
    assert "seed" in capsys.readouterr().err


def test_missing_input_file_exits_2(tmp_path):
    cfg = _write(tmp_path / "bad.toml", """
stages = ["irf"]
[inputs]
sentiment = "does-not-exist.csv"
market = "also-missing.csv"
""")
    assert cli.main(["pipeline", "--config", str(cfg)]) == 2


def test_malformed_toml_exits_2(tmp_path):
    cfg = _write(tmp_path / "bad.toml", "stages = [unclosed\n")
    assert cli.main(["pipeline", "--config", str(cfg)]) == 2


def test_nonexistent_config_exits_2(tmp_path):
    assert cli.main(["pipeline", "--config", str(tmp_path / "ghost.toml")]) == 2


# --- ingest details ------------------------------------------------------------------

def test_panel_csv_bps_units_divide_once(tmp_path):
    path = _write(tmp_path / "p.csv",
                  "firm_id,month,ret\nA,2020-01,50\nA,2020-02,-25\n")
    panel = read_panel_csv(path, ret_units="bps")
    np.testing.assert_allclose(panel.df["ret"].to_numpy(), [0.005, -0.0025])


def test_panel_csv_duplicate_row_number_in_message(tmp_path):
    path = _write(tmp_path / "p.csv",
                  "firm_id,month,ret\nA,2020-01,0.01\nA,2020-01,0.02\n")
    with pytest.raises(SchemaViolation, match=r"row"):
        read_panel_csv(path)


def test_panel_csv_nonfinite_return_reports_row(tmp_path):
    path = _write(tmp_path / "p.csv",
                  "firm_id,month,ret\nA,2020-01,0.01\nA,2020-02,nan\n")
    with pytest.raises(SchemaViolation, match=r"3"):
        read_panel_csv(path)


def test_quarterly_carry_fills_all_three_months(tmp_path):
    # breadth reported once per quarter; the other two months inherit it
    lines = ["firm_id,month,ret,breadth"]
    for t, m in enumerate(["2020-01", "2020-02", "2020-03",
                           "2020-04", "2020-05", "2020-06"]):
        b = {0: "0.4", 3: "0.7"}.get(t, "")
        lines.append(f"A,{m},0.01,{b}")
    path = _write(tmp_path / "p.csv", "\n".join(lines) + "\n")
    panel = read_panel_csv(path, quarterly_carry=("breadth",))
    got = panel.df.sort_values("month")["breadth"].to_numpy()
    np.testing.assert_allclose(got, [0.4, 0.4, 0.4, 0.7, 0.7, 0.7])


def test_quarterly_carry_respects_quarter_boundaries(tmp_path):
    # a quarter with no report stays missing instead of borrowing a neighbor
    lines = ["firm_id,month,ret,breadth"]
    for t, m in enumerate(["2020-01", "2020-02", "2020-03",
                           "2020-04", "2020-05", "2020-06"]):
        b = "0.4" if t == 0 else ""
        lines.append(f"A,{m},0.01,{b}")
    path = _write(tmp_path / "p.csv", "\n".join(lines) + "\n")
    panel = read_panel_csv(path, quarterly_carry=("breadth",))
    got = panel.df.sort_values("month")["breadth"].to_numpy()
    np.testing.assert_allclose(got[:3], 0.4)
    assert np.isnan(got[3:]).all()


# --- stage scheduling and outputs ----------------------------------------------------

def test_stage_filter_emits_exactly_requested_outputs(tmp_path):
    months = [sk.month_label(24000 + t) for t in range(60)]
    rng = np.random.default_rng(11)
    sent = tmp_path / "sentiment.csv"
    pd.DataFrame({"month": months, "value": rng.normal(size=60)}).to_csv(
        sent, index=False)
    cfg = _write(tmp_path / "run.toml", f"""
out = "{(tmp_path / 'out').as_posix()}"
stages = ["shocks"]
[inputs]
sentiment = "{sent.as_posix()}"
""")
    assert cli.main(["shocks", "--config", str(cfg)]) == 0
    produced = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert produced == [MANIFEST_NAME, "shocks.csv"]


def test_subcommand_pulls_upstream_closure(tmp_path):
    cfg = _sim_config(tmp_path, stages='["simulate", "shocks", "irf", "fit"]')
    assert cli.main(["fit", "--config", str(cfg)]) == 0
    produced = {p.name for p in (tmp_path / "out").iterdir()}
    # fit needs the impulse responses, which need the simulated series
    assert {"returns.csv", "shocks.csv", "irf.csv", "fit.csv"} <= produced


def _sentiment_csv(tmp_path, n_months=30, seed=5):
    months = [sk.month_label(24000 + t) for t in range(n_months)]
    rng = np.random.default_rng(seed)
    path = tmp_path / "sentiment.csv"
    pd.DataFrame({"month": months, "value": rng.normal(size=n_months)}).to_csv(
        path, index=False)
    return path


def test_panel_stage_defaults_run_end_to_end(tmp_path):
    panel = _panel_csv(tmp_path, n_firms=10, n_months=30)
    sent = _sentiment_csv(tmp_path, n_months=30)
    cfg = _write(tmp_path / "run.toml", f"""
out = "{(tmp_path / 'out').as_posix()}"
stages = ["panel"]
[inputs]
sentiment = "{sent.as_posix()}"
panel = "{panel.as_posix()}"
[panel]
horizons = [1, 3]
""")
    assert cli.main(["panel", "--config", str(cfg)]) == 0
    table = pd.read_csv(tmp_path / "out" / "panel_fits.csv")
    assert sorted(table["horizon"].unique()) == [1, 3]
    # attached innovations are month-level, so the default spec identifies
    # their mains with firm effects only
    assert set(table["regressor"]) == {"eps_pos", "eps_neg"}


def test_panel_stage_month_fe_absorbs_common_shock_exits_3(tmp_path, capsys):
    panel = _panel_csv(tmp_path, n_firms=10, n_months=30)
    sent = _sentiment_csv(tmp_path, n_months=30)
    cfg = _write(tmp_path / "run.toml", f"""
out = "{(tmp_path / 'out').as_posix()}"
stages = ["panel"]
[inputs]
sentiment = "{sent.as_posix()}"
panel = "{panel.as_posix()}"
[panel]
fixed_effects = ["firm_id", "month_code"]
horizons = [1]
""")
    assert cli.main(["panel", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert "panel" in err
    assert "within" in err


def test_in_stage_failure_exits_3(tmp_path, capsys):
    panel = _panel_csv(tmp_path)
    cfg = _write(tmp_path / "run.toml", f"""
out = "{(tmp_path / 'out').as_posix()}"
stages = ["sorts"]
[inputs]
panel = "{panel.as_posix()}"
[sort]
signal = "zig"
""")
    assert cli.main(["sort", "--config", str(cfg)]) == 3
    assert "sorts" in capsys.readouterr().err


def test_missing_sort_signal_is_preflight_exit_2(tmp_path):
    panel = _panel_csv(tmp_path)
    cfg = _write(tmp_path / "run.toml", f"""
out = "{(tmp_path / 'out').as_posix()}"
stages = ["sorts"]
[inputs]
panel = "{panel.as_posix()}"
""")
    assert cli.main(["sort", "--config", str(cfg)]) == 2
    # pre-flight failures must not leave stage outputs behind
    outdir = tmp_path / "out"
    assert not outdir.exists() or not any(outdir.iterdir())


def test_manifest_hashes_every_output(tmp_path):
    cfg = _sim_config(tmp_path)
    assert cli.main(["pipeline", "--config", str(cfg)]) == 0
    outdir = tmp_path / "out"
    manifest = load_manifest(outdir)
    on_disk = {p.name for p in outdir.iterdir()} - {MANIFEST_NAME}
    assert set(manifest["outputs"]) == on_disk
    for rel, digest in manifest["outputs"].items():
        assert sha256_file(outdir / rel) == digest
    assert manifest["master_seed"] == 7
    ran = [s["name"] for s in manifest["stages"]]
    assert ran == ["simulate", "shocks", "irf", "fit"]


def test_rerun_is_byte_identical(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    cfg1 = _sim_config(tmp_path / "a", stages='["simulate", "shocks", "irf"]')
    cfg2 = _sim_config(tmp_path / "b", stages='["simulate", "shocks", "irf"]')
    assert cli.main(["pipeline", "--config", str(cfg1)]) == 0
    assert cli.main(["pipeline", "--config", str(cfg2)]) == 0
    out1, out2 = tmp_path / "a" / "out", tmp_path / "b" / "out"
    names1 = sorted(p.name for p in out1.iterdir())
    assert names1 == sorted(p.name for p in out2.iterdir())
    for name in names1:
        if name == MANIFEST_NAME:
            continue  # wall times differ
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_seed_flag_overrides_config(tmp_path):
    cfg = _sim_config(tmp_path, stages='["simulate"]')
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    baseline = (tmp_path / "out" / "returns.csv").read_bytes()
    assert cli.main(["simulate", "--config", str(cfg), "--seed", "8",
                     "--out", str(tmp_path / "out2")]) == 0
    assert (tmp_path / "out2" / "returns.csv").read_bytes() != baseline


def test_success_message_counts_files(tmp_path, capsys):
    cfg = _sim_config(tmp_path, stages='["simulate"]')
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    msg = capsys.readouterr().out
    n = len(list((tmp_path / "out").iterdir())) - 1  # manifest not self-counted
    assert f"wrote {n} file(s)" in msg
