import json

import pytest

from langevin_coupling import cli, config


def test_emit_parse_round_trip():
    cfg = config.parse_config("[model]\nW = harmonic_attract\nL_W = 0.03125\n[sim]\nseed = 7\nxi = 2.5\n")
    again = config.parse_config(config.emit_config(cfg))
    assert again == cfg
    assert again.sim.xi == 2.5 and again.sim.seed == 7
    assert again.pot_W.L_W == 0.03125


def test_defaults_document_parses_to_defaults():
    cfg = config.parse_config(config.defaults_document())
    assert cfg == config.parse_config("")
    assert cfg.sim.xi is None and cfg.sim.seed is None


def test_interaction_at_lambda_is_rejected_by_key():
    with pytest.raises(config.ConfigError) as exc:
        config.parse_config("[model]\nW = harmonic_attract\nL_W = 0.5\n")
    assert "model.L_W" in [k for k, _ in exc.value.errors]


def test_all_errors_reported_together():
    text = "[model]\nbogus = 1\nd = 2.5\n[nowhere]\nx = 1\n[sim]\ndt = -1\n"
    with pytest.raises(config.ConfigError) as exc:
        config.parse_config(text)
    keys = [k for k, _ in exc.value.errors]
    assert "model.bogus" in keys and "nowhere" in keys and "model.d" in keys


def test_semantic_errors_are_keyed():
    with pytest.raises(config.ConfigError) as exc:
        config.parse_config("[model]\nL_W = 0.01\n[sim]\ndt = 0\n[experiment]\ninit_mean_x = 1,2\n")
    keys = [k for k, _ in exc.value.errors]
    assert "model.L_W" in keys and "experiment.init_mean_x" in keys
    assert any(k.startswith("sim.") for k in keys)


def test_overrides_win():
    cfg = config.parse_config("[sim]\nseed = 1\n", overrides={("sim", "seed"): 9, ("sim", "dt"): None})
    assert cfg.sim.seed == 9 and cfg.sim.dt == 1e-3


def _run(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


def test_constants_from_config_file(tmp_path, capsys):
    path = tmp_path / "one.ini"
    path.write_text("[model]\nfixture = custom\nU = quadratic\nlambda = 1.0\nA = 0.0\ntilde_A = 0.0\nL_U = 2.0\n")
    code, doc = _run(capsys, ["constants", "--config", str(path)])
    assert code == 0 and doc["passed"]
    assert doc["derived"]["gamma"] == 0.25
    assert doc["derived"]["B"] == 24.0
    assert doc["ledger"]["all_pass"]


def test_contract_rejects_inadmissible_interaction(tmp_path, capsys):
    code, doc = _run(capsys, ["contract", "--seed", "1", "--out", str(tmp_path),
                              "--config", str(_write(tmp_path, "[model]\nW = harmonic_attract\nL_W = 0.03\n"))])
    assert code == 1 and not doc["passed"]
    assert "admissible_interaction_bound" in doc["error"]
    assert float(doc["admissible_interaction_bound"]) < 0.03


def _write(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text)
    return path


def test_missing_seed_is_a_config_failure(tmp_path, capsys):
    code, doc = _run(capsys, ["drift", "--out", str(tmp_path)])
    assert code == 2
    assert doc["errors"][0]["key"] == "sim.seed"


def test_bad_config_exit_code(tmp_path, capsys):
    code, doc = _run(capsys, ["constants", "--config", str(_write(tmp_path, "[model]\nlambda = -1\n"))])
    assert code == 2
    assert any(e["key"] == "model.lambda" for e in doc["errors"])


def test_defaults_flag_prints_document(capsys):
    assert cli.main(["constants", "--defaults"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("; run configuration, defaults table")
    assert config.parse_config(text) == config.parse_config("")


def test_drift_writes_csv_and_summary(tmp_path, capsys):
    path = _write(tmp_path, "[sim]\nt_final = 0.5\nn_replicas = 64\nrecord_every = 100\n")
    code, doc = _run(capsys, ["drift", "--config", str(path), "--seed", "3", "--out", str(tmp_path / "o")])
    assert doc["command"] == "drift" and code in (0, 1)
    header = (tmp_path / "o" / "drift.csv").read_text().splitlines()[0]
    assert header.startswith("t,")
    on_disk = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert "elapsed_s" not in on_disk and on_disk["passed"] == doc["passed"]
