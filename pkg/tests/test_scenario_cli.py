import csv
import json
from decimal import Decimal
from pathlib import Path

import pytest

from bakup_sim import scenario as scen
from bakup_sim.cli import main
from bakup_sim.errors import ConfigError

REPO = Path(__file__).resolve().parents[1]

BASE = """\
schema_version: 1
contract:
  epsilon: 0.01
  fee: 0
  expiration: 100000
  events: [depeg]
feeds:
  - id: pool
    samples: [[0, 1.0], [3600, 0.94]]
  - id: ext
    samples: [[0, 1.0], [3600, 0.93]]
assertions:
  - id: depeg
    kind: depeg
    pool_feed: pool
    external_feed: ext
    threshold: 0.95
    window: 3600
"""

DEPEG_TIMELINE = """\
timeline:
  - {t: 0, op: fund, account: alice, amount: 10}
  - {t: 0, op: mint, account: alice, amount: 10}
  - {t: 3600, op: trigger}
  - {t: 7200, op: trigger}
  - {t: 7201, op: redeem_p, account: alice, amount: 10}
"""


def write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_depeg_scenario_fires_and_pays():
    sc = scen.loads(BASE + DEPEG_TIMELINE)
    res = scen.run(sc)
    fired = [e["fired"] for e in res.log if e["op"] == "trigger"]
    assert fired == [False, True]
    assert Decimal(res.log[-1]["payout"]) == Decimal("9.9")


def test_empty_timeline_echoes_state():
    res = scen.run(scen.loads(BASE + "timeline: []\n"))
    assert res.log == [] and res.initial == res.final


def test_unknown_feed_reports_line():
    text = BASE.replace("external_feed: ext", "external_feed: nope")
    with pytest.raises(ConfigError) as exc:
        scen.loads(text)
    assert exc.value.field == "external_feed"
    assert exc.value.line == text.splitlines().index("    external_feed: nope") + 1


@pytest.mark.parametrize("text,field", [
    (BASE.replace("schema_version: 1", "schema_version: 2"), "schema_version"),
    (BASE.replace("expiration: 100000", "expiration: soon"), "expiration"),
    (BASE.replace("epsilon: 0.01", "epsilon: abc"), "epsilon"),
    (BASE + "timeline:\n  - {t: 5, op: fund, account: a, amount: 1}\n  - {t: 4, op: fund, account: a, amount: 1}\n", "t"),
    (BASE + "timeline:\n  - {t: 5, op: explode}\n", "op"),
    (BASE + "bogus: 1\n", "bogus"),
    (BASE.replace("events: [depeg]", "events: [ghost]"), "events"),
])
def test_config_errors(text, field):
    with pytest.raises(ConfigError) as exc:
        scen.loads(text)
    assert exc.value.field == field
    assert exc.value.line is not None


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as exc:
        scen.loads("schema_version: 1\ncontract: [\n")
    assert exc.value.line is not None


def test_runtime_error_names_step():
    text = BASE + "timeline:\n  - {t: 0, op: redeem_p, account: a, amount: 1}\n"
    with pytest.raises(scen.ScenarioError) as exc:
        scen.run(scen.loads(text))
    assert exc.value.step == 0 and exc.value.op == "redeem_p"


def test_csv_feeds_relative_to_config(tmp_path):
    (tmp_path / "p.csv").write_text("timestamp,price\n0,1.0\n3600,0.94\n")
    (tmp_path / "e.csv").write_text("timestamp,price\n0,0.93\n")
    text = BASE.replace("    samples: [[0, 1.0], [3600, 0.94]]", "    csv: p.csv").replace(
        "    samples: [[0, 1.0], [3600, 0.93]]", "    csv: e.csv")
    sc = scen.load(write(tmp_path, text + DEPEG_TIMELINE))
    assert scen.run(sc).log[3]["fired"] is True
    missing = text.replace("csv: e.csv", "csv: gone.csv")
    with pytest.raises(ConfigError) as exc:
        scen.load(write(tmp_path, missing, "m.yaml"))
    assert exc.value.field == "csv"


def test_vault_and_market_ops():
    text = BASE + """\
pools:
  - {event: 1, price: 1, slippage: 0.05}
vault: {event: 1, tranche: B}
timeline:
  - {t: 0, op: fund, account: lp, amount: 1000}
  - {t: 0, op: mint, account: lp, amount: 500}
  - {t: 0, op: add_liquidity, account: lp, lower: 0.25, upper: 4, amount_p: 100, amount_u: 100}
  - {t: 1, op: sell_policy, account: lp, amount: 5}
  - {t: 2, op: vault_deposit, account: lp, token: P, amount: 100}
  - {t: 2, op: vault_deposit, account: lp, token: U, amount: 80}
  - {t: 3, op: vault_invest}
  - {t: 4, op: vault_divest, recovery: 0.8}
  - {t: 5, op: remove_liquidity, account: lp, position: 1}
  - {t: 6, op: check}
"""
    res = scen.run(scen.loads(text))
    div = next(e for e in res.log if e["op"] == "vault_divest")
    # DRT recovers 0.8: B tranche gets 0.3 of its 0.5 share
    assert Decimal(div["recovered"]) == Decimal(48)
    assert res.final["vault"]["phase"] == "Divested"
    assert res.final["pools"]["1"]["positions"] == 0


def test_cli_run_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, BASE + DEPEG_TIMELINE)
    assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--scenario", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("events.jsonl", "final_state.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    final = json.loads((tmp_path / "a" / "final_state.json").read_text())
    assert final["final"]["contract"]["events"][0]["state"] is True


def test_cli_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, BASE.replace("pool_feed: pool", "pool_feed: zzz"), "bad.yaml")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "pool_feed" in capsys.readouterr().err
    boom = write(tmp_path, BASE + "timeline:\n  - {t: 0, op: burn, account: a, amount: 1}\n", "boom.yaml")
    assert main(["run", "--scenario", str(boom), "--out", str(tmp_path / "o")]) == 3
    assert main(["run", "--scenario", str(tmp_path / "absent.yaml"), "--out", str(tmp_path / "o")]) == 2


def test_shipped_scenario_runs(tmp_path):
    assert main(["run", "--scenario", str(REPO / "scenarios" / "depeg.yaml"), "--out", str(tmp_path)]) == 0
    log = [json.loads(line) for line in (tmp_path / "events.jsonl").read_text().splitlines()]
    assert [e["fired"] for e in log if e["op"] == "trigger"] == [False, True]


def test_lp_loss_command(capsys):
    assert main(["lp-loss", "--strategy", "uniform", "--epsilon", "0.01", "--entry-norm", "1.0",
                 "--scenario", "no-cat"]) == 0
    out = capsys.readouterr().out
    assert "closed_form_loss=0.98 " in out
    assert main(["lp-loss", "--strategy", "edges", "--epsilon", "0.19", "--entry-norm", "1.0",
                 "--width", "0.3", "--scenario", "no-cat"]) == 0
    assert "closed_form_loss=0.516456" in capsys.readouterr().out


def test_lp_loss_rejects_bad_entry():
    with pytest.raises(SystemExit) as exc:
        main(["lp-loss", "--strategy", "uniform", "--epsilon", "0.01", "--entry-norm", "1.5", "--scenario", "cat"])
    assert exc.value.code == 2


def test_sweep_outputs(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path / "a")]) == 0
    assert main(["sweep", "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(["bands.csv", "summary.csv"] + [f"{k}_{s}.csv" for k in ("uniform", "around-entry", "edges")
                                                            for s in ("no-cat", "cat")])
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with open(tmp_path / "a" / "uniform_cat.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["strategy", "epsilon", "x_entry", "width", "scenario", "terminal_value", "loss"]
    with open(tmp_path / "a" / "summary.csv") as fh:
        rows = {(r["strategy"], r["epsilon"]): r for r in csv.DictReader(fh)}
    assert float(rows[("uniform", "0.01")]["worst_loss"]) == pytest.approx(0.98)
    assert float(rows[("edges", "0.19")]["worst_loss"]) == pytest.approx(0.5165, abs=1e-4)
    assert float(rows[("edges", "0.19")]["reduction_vs_uniform_min_eps"]) > 0.47


def test_sweep_rejects_empty_epsilons(tmp_path, capsys):
    assert main(["sweep", "--out", str(tmp_path), "--epsilons", ""]) == 2
